#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "barsctr/ndgrad/tensor.hpp"

namespace barsctr::ndgrad {

struct Parameter {
  std::string name;  // unique within a model, e.g. "embedding.field3"
  Tensor tensor;
  double l2_weight = 0.0;
  // Row 0 is a padding row: kept at zero and never updated.
  bool frozen_padding_row = false;

  std::size_t row_width() const { return tensor.rank() == 0 ? 1 : tensor.numel() / tensor.dim(0); }
  std::size_t trainable_count() const { return tensor.numel() - (frozen_padding_row ? row_width() : 0); }
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update. L2 enters as l2_weight * value added to the
// gradient before the moments (no decoupled decay). Zeroes the gradient.
inline void adam_step(Parameter& param, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  Tensor& t = param.tensor;
  if (!t.has_grad()) throw ContractError("adam_step: parameter '" + param.name + "' has no gradient");
  const std::size_t n = t.numel();
  if (state.first_moment.size() != n) {
    if (state.step_count != 0) throw StateError("adam_step: moment buffers do not match '" + param.name + "'");
    state.first_moment.assign(n, 0.0);
    state.second_moment.assign(n, 0.0);
  }
  ++state.step_count;
  const double t_step = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(state.beta1, t_step);
  const double bias2 = 1.0 - std::pow(state.beta2, t_step);
  auto values = t.mutable_values();
  auto grad = t.mutable_grad();
  const std::size_t skip = param.frozen_padding_row ? param.row_width() : 0;
  for (std::size_t i = skip; i < n; ++i) {
    const double g = grad[i] + param.l2_weight * values[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  t.zero_grad();
}

// Adam over a fixed parameter list; states line up with parameter order.
class Adam {
 public:
  explicit Adam(std::size_t count, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : states_(count) {
    for (auto& s : states_) {
      s.beta1 = beta1;
      s.beta2 = beta2;
      s.epsilon = epsilon;
    }
  }

  void step(std::span<Parameter> params, double lr) {
    if (params.size() != states_.size()) throw StateError("Adam: parameter list changed size");
    for (std::size_t i = 0; i < params.size(); ++i) adam_step(params[i], states_[i], lr);
  }

  const std::vector<AdamState>& states() const { return states_; }

 private:
  std::vector<AdamState> states_;
};

inline void zero_grads(std::span<Parameter> params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace barsctr::ndgrad
