#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "barsctr/ndgrad/optim.hpp"
#include "barsctr/ndgrad/tensor.hpp"

namespace barsctr::ndgrad {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool flagged = false;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  bool passed() const {
    return std::none_of(entries.begin(), entries.end(), [](const auto& e) { return e.flagged; });
  }
  double max_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
};

// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero up
// to finite-difference roundoff from reading as large relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

// Compares backward() against central differences for every scalar of every
// parameter. `loss_fn` must rebuild the graph on each call.
inline GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, std::span<Parameter> params, double tol,
                                  double step = 1e-5) {
  zero_grads(params);
  for (auto& p : params) p.tensor.clear_grad();
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss at the unperturbed point");
  backward(loss);

  GradCheckReport report;
  report.tolerance = tol;
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    std::vector<double> analytic(p.tensor.numel(), 0.0);
    if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());
    auto values = p.tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double up = loss_fn().item();
      values[i] = original - step;
      const double down = loss_fn().item();
      values[i] = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss perturbing " + p.name + "[" + std::to_string(i) + "]");
      }
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[i], numeric);
      if (i == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = analytic[i];
        entry.numeric = numeric;
      }
    }
    entry.flagged = entry.max_rel_error > tol;
    report.entries.push_back(std::move(entry));
  }
  zero_grads(params);
  return report;
}

template <class BatchT>
GradCheckReport grad_check(const std::function<Tensor(const BatchT&)>& model_forward, std::span<Parameter> params,
                           const BatchT& batch, double tol) {
  return grad_check([&] { return model_forward(batch); }, params, tol);
}

}  // namespace barsctr::ndgrad
