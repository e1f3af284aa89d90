#pragma once

#include "spchol/core.hpp"
#include "spchol/hetero_sim.hpp"
#include "spchol/kernels.hpp"
#include "spchol/matrix_market.hpp"
#include "spchol/ordering.hpp"
#include "spchol/panel_store.hpp"
#include "spchol/runtime.hpp"
#include "spchol/solve.hpp"
#include "spchol/solver.hpp"
#include "spchol/sparse_matrix.hpp"
#include "spchol/symbolic.hpp"
#include "spchol/taskgraph.hpp"
