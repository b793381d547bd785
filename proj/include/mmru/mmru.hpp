#pragma once

#include "mmru/chi_square.hpp"
#include "mmru/errors.hpp"
#include "mmru/estimators.hpp"
#include "mmru/harness.hpp"
#include "mmru/inference.hpp"
#include "mmru/linalg.hpp"
#include "mmru/matrix.hpp"
#include "mmru/rng.hpp"
#include "mmru/sampling.hpp"
#include "mmru/scenarios.hpp"
#include "mmru/stats.hpp"
#include "mmru/urn.hpp"
