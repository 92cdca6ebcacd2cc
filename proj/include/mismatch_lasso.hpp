#pragma once

#include "mismatch_lasso/errors.hpp"
#include "mismatch_lasso/rng.hpp"
#include "mismatch_lasso/quadrature.hpp"
#include "mismatch_lasso/model_gen.hpp"
#include "mismatch_lasso/hypothesis_set.hpp"
#include "mismatch_lasso/geometry.hpp"
#include "mismatch_lasso/mismatch.hpp"
#include "mismatch_lasso/solver.hpp"
#include "mismatch_lasso/io.hpp"
#include "mismatch_lasso/experiment.hpp"
