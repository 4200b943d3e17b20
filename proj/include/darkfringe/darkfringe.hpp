#pragma once

// Umbrella header.

#include "darkfringe/units.hpp"
#include "darkfringe/errors.hpp"
#include "darkfringe/series.hpp"
#include "darkfringe/hyperfine.hpp"
#include "darkfringe/jones.hpp"
#include "darkfringe/fft.hpp"
#include "darkfringe/timedomain.hpp"
#include "darkfringe/stochastics.hpp"
#include "darkfringe/acoustics.hpp"
#include "darkfringe/experiment.hpp"
#include "darkfringe/fit.hpp"
#include "darkfringe/csv.hpp"
#include "darkfringe/config.hpp"
#include "darkfringe/commands.hpp"
