#pragma once

#include "merge_planner/csv.hpp"
#include "merge_planner/gmm/audit.hpp"
#include "merge_planner/gmm/cluster.hpp"
#include "merge_planner/gmm/mixture.hpp"
#include "merge_planner/gmm/mixture_io.hpp"
#include "merge_planner/gmm/moe.hpp"
#include "merge_planner/linear_op.hpp"
#include "merge_planner/parallel.hpp"
#include "merge_planner/pareto_dp.hpp"
#include "merge_planner/plan.hpp"
#include "merge_planner/report/config.hpp"
#include "merge_planner/report/experiments.hpp"
#include "merge_planner/report/svg.hpp"
#include "merge_planner/report/sweep.hpp"
#include "merge_planner/schedule.hpp"
#include "merge_planner/verification/acceptance.hpp"
#include "merge_planner/verification/oracles.hpp"
