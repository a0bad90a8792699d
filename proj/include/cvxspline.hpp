#pragma once

#include "cvxspline/banded.hpp"
#include "cvxspline/design.hpp"
#include "cvxspline/error.hpp"
#include "cvxspline/estimator.hpp"
#include "cvxspline/hypotheses.hpp"
#include "cvxspline/io.hpp"
#include "cvxspline/parallel.hpp"
#include "cvxspline/piecewise.hpp"
#include "cvxspline/qp.hpp"
#include "cvxspline/rng.hpp"
#include "cvxspline/selection.hpp"
#include "cvxspline/simulation.hpp"
