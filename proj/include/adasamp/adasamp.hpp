#pragma once

#include "adasamp/config.hpp"
#include "adasamp/data.hpp"
#include "adasamp/error.hpp"
#include "adasamp/experiment.hpp"
#include "adasamp/metrics.hpp"
#include "adasamp/optimizer_state.hpp"
#include "adasamp/optimizers.hpp"
#include "adasamp/problems.hpp"
#include "adasamp/rng.hpp"
#include "adasamp/samplers.hpp"
#include "adasamp/verify.hpp"
