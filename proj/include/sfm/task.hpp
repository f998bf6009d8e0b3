#pragma once

#include <cstddef>
#include <vector>

#include "sfm/numerics.hpp"
#include "sfm/pac_bayes.hpp"
#include "sfm/posterior_sampler.hpp"

namespace sfm {

/// One row of training telemetry.
struct IterationRecord {
  std::size_t iteration = 0;
  RiskReport risks;
  double acceptance_rate = 0.0;
  double C = 0.0;
  std::size_t degraded = 0;
};

/// Everything needed to classify new inputs, plus the training trace.
template <class Backend>
struct TrainedTask {
  Backend backend;
  ModelPair<Backend> models;
  Vector u0;
  Vector u;
  double C = 1.0;
  double delta = 0.05;
  /// C was tuned on the training data, so the reported bound is heuristic.
  bool c_adapted = false;
  bool converged = false;
  std::vector<IterationRecord> history;
  std::size_t degraded_total = 0;
};

}  // namespace sfm
