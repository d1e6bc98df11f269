#pragma once

#include "roe/baselines.hpp"
#include "roe/comparison_graph.hpp"
#include "roe/datagen.hpp"
#include "roe/experiment.hpp"
#include "roe/gram_ops.hpp"
#include "roe/io.hpp"
#include "roe/rank_reduction.hpp"
#include "roe/rng.hpp"
#include "roe/solver.hpp"
