#pragma once

#include "cmap/bench.hpp"
#include "cmap/contraction_solver.hpp"
#include "cmap/errors.hpp"
#include "cmap/fusion_metrics.hpp"
#include "cmap/io.hpp"
#include "cmap/losses.hpp"
#include "cmap/pipeline.hpp"
#include "cmap/prior_init.hpp"
#include "cmap/structure_graph.hpp"
#include "cmap/synthetic.hpp"
#include "cmap/tensor.hpp"
