#pragma once

// Umbrella header (excludes live_backend.hpp, which drags in HTTP support;
// include that one explicitly where needed).

#include "sc2/aspect.hpp"
#include "sc2/bench.hpp"
#include "sc2/compare.hpp"
#include "sc2/config.hpp"
#include "sc2/core.hpp"
#include "sc2/errors.hpp"
#include "sc2/predict.hpp"
#include "sc2/prompt.hpp"
#include "sc2/provider.hpp"
#include "sc2/rng.hpp"
#include "sc2/text.hpp"
