#pragma once

#include <span>
#include <string>
#include <vector>

#include "barsctr/models/zoo.hpp"
#include "barsctr/ndgrad/gradcheck.hpp"

namespace barsctr::models {

// Small mixed layout: four categorical fields and one mean-pooled sequence.
inline std::vector<FieldLayout> probe_layout() {
  using data::FieldKind;
  using data::Pooling;
  return {{"c0", FieldKind::categorical, 7, 0, Pooling::mean},
          {"c1", FieldKind::categorical, 5, 0, Pooling::mean},
          {"c2", FieldKind::categorical, 9, 0, Pooling::mean},
          {"c3", FieldKind::categorical, 6, 0, Pooling::mean},
          {"s0", FieldKind::sequence, 8, 3, Pooling::mean}};
}

// Random in-range indices; the first row fills every sequence slot and the
// labels alternate 0/1.
inline Batch probe_batch(const std::vector<FieldLayout>& fields, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  b.size = size;
  b.columns.resize(fields.size());
  for (std::size_t f = 0; f < fields.size(); ++f) {
    const FieldLayout& l = fields[f];
    for (std::size_t r = 0; r < size; ++r) {
      if (!l.is_sequence()) {
        b.columns[f].push_back(1 + static_cast<std::uint32_t>(rng.below(l.vocab_size - 1)));
        continue;
      }
      const std::size_t n = r == 0 ? l.max_len : rng.below(l.max_len + 1);
      for (std::size_t k = 0; k < l.max_len; ++k)
        b.columns[f].push_back(k < n ? 1 + static_cast<std::uint32_t>(rng.below(l.vocab_size - 1)) : 0);
    }
  }
  for (std::size_t r = 0; r < size; ++r) {
    b.labels.push_back(static_cast<double>(r % 2));
    b.rows.push_back(r);
  }
  return b;
}

struct ModelGradCheck {
  std::string model;
  std::size_t param_count = 0;
  ndgrad::GradCheckReport report;
};

// Central-difference check of a freshly built model on a 4-sample batch
// (d = 4, hidden [8]). Eval mode, so dropout is off and batch norm, if
// enabled, uses running statistics. A larger init_std keeps gradients well
// away from zero.
inline ModelGradCheck model_grad_check(const std::string& name, std::uint64_t seed = 7, double tol = 1e-4,
                                       double init_std = 0.3) {
  ModelConfig cfg = default_config(name, 4, {8});
  cfg.init_std = init_std;
  const auto layout = probe_layout();
  auto model = build_model(cfg, layout, seed);
  const Batch batch = probe_batch(layout, 4, mix_seed(seed, 2));
  auto loss = [&] { return ndgrad::bce_with_logits(model->forward(batch, false), batch.labels); };
  ModelGradCheck out;
  out.model = name;
  out.param_count = model->count_params();
  out.report = ndgrad::grad_check(loss, model->parameters(), tol);
  return out;
}

}  // namespace barsctr::models
