#pragma once

// Umbrella header for the defer-lab library.

#include "deferlab/error.hpp"
#include "deferlab/estimators.hpp"
#include "deferlab/io.hpp"
#include "deferlab/metrics.hpp"
#include "deferlab/model_train.hpp"
#include "deferlab/oracle.hpp"
#include "deferlab/parallel.hpp"
#include "deferlab/rng.hpp"
#include "deferlab/runner.hpp"
#include "deferlab/surrogates.hpp"
#include "deferlab/types.hpp"
#include "deferlab/verify.hpp"
