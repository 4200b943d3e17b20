#pragma once

// Thin RAII layer over FFTW. Plans are created once per (size, direction)
// and shared; plan creation is serialized, execution is thread-safe.

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <utility>
#include <vector>

#include "darkfringe/units.hpp"

namespace darkfringe::fft {

enum class Direction { forward, backward };

namespace detail {

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

inline fftw_plan plan_for(std::size_t n, Direction dir) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, int>, Plan> cache;
  const int sign = dir == Direction::forward ? FFTW_FORWARD : FFTW_BACKWARD;
  std::lock_guard lock(mu);
  auto it = cache.find({n, sign});
  if (it != cache.end()) return it->second.get();
  std::vector<cplx> a(n), b(n);
  fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(a.data()),
                                 reinterpret_cast<fftw_complex*>(b.data()), sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (p == nullptr) throw std::runtime_error("fftw plan creation failed");
  cache.emplace(std::pair{n, sign}, Plan(p));
  return p;
}

}  // namespace detail

/// Unnormalized DFT: forward uses exp(-2 pi i jk/n), backward exp(+2 pi i jk/n).
inline std::vector<cplx> transform(const std::vector<cplx>& in, Direction dir) {
  std::vector<cplx> out(in.size());
  if (in.empty()) return out;
  std::vector<cplx> work = in;  // fftw may not preserve the input for some plans
  fftw_execute_dft(detail::plan_for(in.size(), dir), reinterpret_cast<fftw_complex*>(work.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

}  // namespace darkfringe::fft
