#pragma once

// Nearest-neighbor-ratio divergence estimation: umbrella include.

#include "nnr/csv.hpp"
#include "nnr/density.hpp"
#include "nnr/distributions.hpp"
#include "nnr/ensemble.hpp"
#include "nnr/estimator.hpp"
#include "nnr/harness.hpp"
#include "nnr/kdtree.hpp"
#include "nnr/oracle.hpp"
#include "nnr/points.hpp"
#include "nnr/pooled_index.hpp"
#include "nnr/rng.hpp"
#include "nnr/svg.hpp"
