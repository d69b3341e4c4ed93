#include "pillarmamba/train.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pillarmamba {

template <typename Scalar>
void Optimizer<Scalar>::step(ParamStore<Scalar>& store) {
  if (m_.empty())
    for (std::size_t i = 0; i < store.size(); ++i) {
      m_.push_back(Vector<Scalar>::Zero(store[i].value.size()));
      v_.push_back(Vector<Scalar>::Zero(store[i].value.size()));
    }
  require(m_.size() == store.size(), "optimizer: parameter store changed size");
  ++t_;
  const auto lr = static_cast<Scalar>(config_.learning_rate);
  const auto b1 = static_cast<Scalar>(config_.momentum), b2 = static_cast<Scalar>(config_.beta2);
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& w = store[i].value.values();
    const auto& g = store[i].grad.values();
    switch (config_.optimizer) {
      case OptimizerKind::sgd:
        w -= lr * g;
        break;
      case OptimizerKind::momentum:
        m_[i] = b1 * m_[i] + g;
        w -= lr * m_[i];
        break;
      case OptimizerKind::adam: {
        m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
        v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
        const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(t_));
        const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(t_));
        const auto eps = static_cast<Scalar>(config_.epsilon);
        w.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
        break;
      }
    }
  }
}

template <typename Scalar>
TrainResult train_on_scene(Model<Scalar>& model, const Scene& scene, const TrainConfig& config,
                           const std::function<void(const TrainStep&)>& on_step) {
  const auto targets = model.targets(scene.boxes);
  Optimizer<Scalar> opt(config);
  TrainResult result;
  for (int s = 1; s <= config.steps; ++s) {
    Tape<Scalar> tape;
    model.store().zero_grad();
    auto terms = model.loss(tape, scene.cloud, targets);
    tape.backward(terms.total);
    TrainStep rec{s, static_cast<double>(terms.total.value()[0]), terms.heatmap, terms.regression};
    if (!std::isfinite(rec.total))
      throw std::runtime_error("train: loss became non-finite at step " + std::to_string(s));
    result.history.push_back(rec);
    if (on_step) on_step(rec);
    opt.step(model.store());
  }
  Tape<Scalar> tape(false);
  auto terms = model.loss(tape, scene.cloud, targets);
  result.final = {config.steps, static_cast<double>(terms.total.value()[0]), terms.heatmap, terms.regression};
  return result;
}

template class Optimizer<float>;
template class Optimizer<double>;
template TrainResult train_on_scene(Model<float>&, const Scene&, const TrainConfig&,
                                    const std::function<void(const TrainStep&)>&);
template TrainResult train_on_scene(Model<double>&, const Scene&, const TrainConfig&,
                                    const std::function<void(const TrainStep&)>&);

}  // namespace pillarmamba
