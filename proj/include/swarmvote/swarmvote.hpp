#pragma once

// Weighted-vote ensemble of base learners tuned by the whale optimization
// algorithm under stratified K-fold cross-validation.

#include "dataset.hpp"
#include "ensemble.hpp"
#include "error.hpp"
#include "learners.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "rng.hpp"
#include "woa.hpp"
