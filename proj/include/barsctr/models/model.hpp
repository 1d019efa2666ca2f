#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "barsctr/data/batches.hpp"
#include "barsctr/data/dataset.hpp"
#include "barsctr/models/config.hpp"
#include "barsctr/models/interactions.hpp"
#include "barsctr/ndgrad/ndgrad.hpp"
#include "barsctr/rng.hpp"

namespace barsctr::models {

using data::Batch;
using data::FieldLayout;
using ndgrad::Parameter;

inline void check_finite(const Tensor& t, const std::string& layer) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw NumericError("non-finite activation in layer '" + layer + "'");
  }
}

// Parameter store plus the building blocks shared by every model. Parameters
// are created (and drawn from the init stream) in a fixed order per model.
class CtrModel {
 public:
  CtrModel(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : cfg_(std::move(cfg)), fields_(std::move(fields)), seed_(seed), init_rng_(mix_seed(seed, 1)) {
    if (fields_.empty()) throw ConfigError("model needs at least one field");
  }
  virtual ~CtrModel() = default;
  CtrModel(const CtrModel&) = delete;
  CtrModel& operator=(const CtrModel&) = delete;

  // Logits, shape [B]. Sigmoid is left to the loss and metrics.
  virtual Tensor forward(const Batch& batch, bool train_mode) = 0;

  const ModelConfig& config() const { return cfg_; }
  const std::vector<FieldLayout>& fields() const { return fields_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<ndgrad::BatchNormState>& batch_norm_states() { return bn_states_; }
  const std::vector<ndgrad::BatchNormState>& batch_norm_states() const { return bn_states_; }

  Parameter& parameter(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p;
    throw ConfigError("model has no parameter '" + name + "'");
  }

  // Learnable scalars, frozen padding rows excluded.
  std::size_t count_params() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.trainable_count();
    return n;
  }

  Tensor predict_logits(const Batch& batch) { return forward(batch, false); }

 protected:
  enum class Init { normal, zeros, ones };

  std::size_t add_param(const std::string& name, Shape shape, Init init, double l2, bool padding_row = false) {
    std::vector<double> v(ndgrad::shape_numel(shape));
    for (double& x : v) {
      switch (init) {
        case Init::normal: x = init_rng_.normal(0.0, cfg_.init_std); break;
        case Init::zeros: x = 0.0; break;
        case Init::ones: x = 1.0; break;
      }
    }
    if (padding_row) std::fill_n(v.begin(), v.size() / shape[0], 0.0);
    for (const auto& p : params_)
      if (p.name == name) throw ConfigError("duplicate parameter name '" + name + "'");
    params_.push_back(Parameter{name, Tensor::from_values(std::move(shape), std::move(v), true), l2, padding_row});
    return params_.size() - 1;
  }

  const Tensor& P(std::size_t idx) const { return params_[idx].tensor; }

  std::uint64_t next_dropout_seed() { return mix_seed(seed_, 1000 + ++dropout_calls_); }

  // ------------------------------------------------------------ embeddings

  // One table per field, [vocab, dim]; sequence tables freeze row 0.
  struct Embeddings {
    std::vector<std::size_t> tables;
    std::size_t dim = 0;
  };

  Embeddings make_embeddings(const std::string& prefix, std::size_t dim, double l2) {
    Embeddings e;
    e.dim = dim;
    for (const auto& f : fields_) {
      e.tables.push_back(add_param(prefix + "." + f.name, {f.vocab_size, dim}, Init::normal, l2, f.is_sequence()));
    }
    return e;
  }

  // [B, dim] for field f; sequences are pooled (sum or mean over non-padding).
  Tensor embed_field(const Embeddings& e, std::size_t f, const Batch& batch) const {
    using namespace ndgrad;
    const FieldLayout& layout = fields_[f];
    const auto& col = batch.columns[f];
    if (!layout.is_sequence()) return embedding_lookup(P(e.tables[f]), col, {batch.size});
    const std::size_t len = layout.width();
    Tensor pooled = sum(embedding_lookup(P(e.tables[f]), col, {batch.size, len}, true), 1);
    if (layout.pooling == data::Pooling::sum) return pooled;
    std::vector<double> scale(batch.size);
    for (std::size_t r = 0; r < batch.size; ++r) {
      std::size_t n = 0;
      for (std::size_t k = 0; k < len; ++k) n += col[r * len + k] != data::kPaddingIndex;
      scale[r] = 1.0 / static_cast<double>(std::max<std::size_t>(n, 1));
    }
    return mul(pooled, Tensor::from_values({batch.size, 1}, std::move(scale)));
  }

  FieldStack embed(const Embeddings& e, const Batch& batch) const {
    std::vector<Tensor> parts;
    for (std::size_t f = 0; f < fields_.size(); ++f) {
      parts.push_back(ndgrad::reshape(embed_field(e, f, batch), {batch.size, 1, e.dim}));
    }
    return FieldStack::of(parts.size() == 1 ? parts[0] : ndgrad::concat(parts, 1));
  }

  // ------------------------------------------------------------ linear part

  struct Linear {
    Embeddings weights;
    std::size_t bias = 0;
  };

  Linear make_linear() {
    Linear l;
    l.weights = make_embeddings("linear", 1, cfg_.l2);
    l.bias = add_param("linear.bias", {1}, Init::zeros, 0.0);
    return l;
  }

  // bias + sum over fields of w[index]; [B].
  Tensor apply_linear(const Linear& l, const Batch& batch) const {
    using namespace ndgrad;
    Tensor acc;
    for (std::size_t f = 0; f < fields_.size(); ++f) {
      Tensor w = reshape(embed_field(l.weights, f, batch), {batch.size});
      acc = f == 0 ? w : add(acc, w);
    }
    return add(acc, P(l.bias));
  }

  // ------------------------------------------------------------ dense layers

  struct Dense {
    std::size_t W = 0, b = 0;
    bool has_bias = true;
  };

  Dense make_dense(const std::string& name, std::size_t in, std::size_t out, bool bias = true) {
    Dense d;
    d.W = add_param(name + ".W", {in, out}, Init::normal, cfg_.l2);
    d.has_bias = bias;
    if (bias) d.b = add_param(name + ".b", {out}, Init::zeros, 0.0);
    return d;
  }

  Tensor apply_dense(const Dense& d, const Tensor& x) const {
    Tensor y = ndgrad::matmul(x, P(d.W));
    return d.has_bias ? ndgrad::add(y, P(d.b)) : y;
  }

  struct Tower {
    std::vector<Dense> layers;
    std::vector<std::size_t> gamma, beta, bn_state;
    std::size_t out_dim = 0;
  };

  // dense -> [batch norm] -> relu -> dropout, once per hidden size.
  Tower make_tower(std::size_t in_dim) {
    Tower t;
    std::size_t width = in_dim;
    for (std::size_t k = 0; k < cfg_.hidden_units.size(); ++k) {
      const std::string name = "tower." + std::to_string(k);
      t.layers.push_back(make_dense(name, width, cfg_.hidden_units[k]));
      if (cfg_.use_batch_norm) {
        t.gamma.push_back(add_param(name + ".bn.gamma", {cfg_.hidden_units[k]}, Init::ones, 0.0));
        t.beta.push_back(add_param(name + ".bn.beta", {cfg_.hidden_units[k]}, Init::zeros, 0.0));
        t.bn_state.push_back(bn_states_.size());
        bn_states_.emplace_back(cfg_.hidden_units[k]);
      }
      width = cfg_.hidden_units[k];
    }
    t.out_dim = width;
    return t;
  }

  Tensor apply_tower(const Tower& t, Tensor x, bool train_mode) {
    using namespace ndgrad;
    for (std::size_t k = 0; k < t.layers.size(); ++k) {
      x = apply_dense(t.layers[k], x);
      if (cfg_.use_batch_norm) x = batch_norm(x, P(t.gamma[k]), P(t.beta[k]), bn_states_[t.bn_state[k]], train_mode);
      x = relu(x);
      check_finite(x, "tower." + std::to_string(k));
      if (train_mode && cfg_.dropout > 0.0) x = dropout(x, cfg_.dropout, true, next_dropout_seed());
    }
    return x;
  }

  // [B, 1] -> [B]
  static Tensor squeeze(const Tensor& x) { return ndgrad::reshape(x, {x.dim(0)}); }

  std::size_t field_count() const { return fields_.size(); }

  ModelConfig cfg_;
  std::vector<FieldLayout> fields_;
  std::uint64_t seed_;
  Rng init_rng_;
  std::vector<Parameter> params_;
  std::vector<ndgrad::BatchNormState> bn_states_;
  std::uint64_t dropout_calls_ = 0;
};

}  // namespace barsctr::models
