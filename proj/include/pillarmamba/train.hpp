#pragma once

#include <functional>
#include <vector>

#include "pillarmamba/config.hpp"

namespace pillarmamba {

/// First-order update over every parameter of a store. Moment buffers are kept per parameter.
template <typename Scalar>
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& config) : config_(config) {}
  void step(ParamStore<Scalar>& store);

 private:
  TrainConfig config_;
  std::int64_t t_ = 0;
  std::vector<Vector<Scalar>> m_, v_;
};

struct TrainStep {
  int step = 0;  // 1-based
  double total = 0, heatmap = 0, regression = 0;
};

struct TrainResult {
  std::vector<TrainStep> history;  // loss before each update
  TrainStep final;                 // loss after the last update
};

/// Repeated full-batch steps on one scene.
template <typename Scalar>
TrainResult train_on_scene(Model<Scalar>& model, const Scene& scene, const TrainConfig& config,
                           const std::function<void(const TrainStep&)>& on_step = {});

}  // namespace pillarmamba
