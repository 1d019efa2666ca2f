#pragma once

#include <memory>
#include <string>
#include <vector>

#include "barsctr/models/model.hpp"

namespace barsctr::models {

class LR final : public CtrModel {
 public:
  LR(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed), linear_(make_linear()) {}

  Tensor forward(const Batch& batch, bool) override {
    Tensor y = apply_linear(linear_, batch);
    check_finite(y, "linear");
    return y;
  }

 private:
  Linear linear_;
};

class FM final : public CtrModel {
 public:
  FM(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed),
        linear_(make_linear()),
        emb_(make_embeddings("embedding", cfg_.embedding_dim, cfg_.l2)) {}

  Tensor forward(const Batch& batch, bool) override {
    Tensor y = ndgrad::add(apply_linear(linear_, batch), fm_pairwise_sum(embed(emb_, batch)));
    check_finite(y, "fm");
    return y;
  }

 private:
  Linear linear_;
  Embeddings emb_;
};

// Each feature carries one d-vector per other field, packed in a
// [vocab, (m-1)*d] table.
class FFM final : public CtrModel {
 public:
  FFM(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed), linear_(make_linear()) {
    if (field_count() >= 2) tables_ = make_embeddings("ffm", (field_count() - 1) * cfg_.embedding_dim, cfg_.l2);
  }

  Tensor forward(const Batch& batch, bool) override {
    const std::size_t m = field_count(), d = cfg_.embedding_dim;
    Tensor y = apply_linear(linear_, batch);
    if (m >= 2) {
      std::vector<Tensor> parts;
      for (std::size_t f = 0; f < m; ++f) parts.push_back(ndgrad::reshape(embed_field(tables_, f, batch), {batch.size, m - 1, d}));
      y = ndgrad::add(y, field_aware_interaction(ndgrad::concat(parts, 1), batch.size, m));
    }
    check_finite(y, "ffm");
    return y;
  }

 private:
  Linear linear_;
  Embeddings tables_;
};

class HOFM final : public CtrModel {
 public:
  HOFM(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed),
        linear_(make_linear()),
        emb_(make_embeddings("embedding", cfg_.embedding_dim, cfg_.l2)),
        emb3_(make_embeddings("embedding3", *cfg_.order3_dim, cfg_.l2)) {}

  Tensor forward(const Batch& batch, bool) override {
    using namespace ndgrad;
    Tensor y = add(add(apply_linear(linear_, batch), fm_pairwise_sum(embed(emb_, batch))),
                   hofm_third_order(embed(emb3_, batch)));
    check_finite(y, "hofm");
    return y;
  }

 private:
  Linear linear_;
  Embeddings emb_, emb3_;
};

class FwFM final : public CtrModel {
 public:
  FwFM(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed),
        linear_(make_linear()),
        emb_(make_embeddings("embedding", cfg_.embedding_dim, cfg_.l2)) {
    const std::size_t m = field_count();
    if (m >= 2) r_ = add_param("fwfm.r", {m * (m - 1) / 2}, Init::ones, 0.0);
  }

  Tensor forward(const Batch& batch, bool) override {
    Tensor y = apply_linear(linear_, batch);
    if (field_count() >= 2) y = ndgrad::add(y, fwfm_interaction(embed(emb_, batch), P(r_)));
    check_finite(y, "fwfm");
    return y;
  }

 private:
  Linear linear_;
  Embeddings emb_;
  std::size_t r_ = 0;
};

class DNN final : public CtrModel {
 public:
  DNN(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed),
        emb_(make_embeddings("embedding", cfg_.embedding_dim, cfg_.l2)),
        tower_(make_tower(field_count() * cfg_.embedding_dim)),
        out_(make_dense("out", tower_.out_dim, 1)) {}

  Tensor forward(const Batch& batch, bool train_mode) override {
    Tensor y = squeeze(apply_dense(out_, apply_tower(tower_, embed(emb_, batch).flat(), train_mode)));
    check_finite(y, "out");
    return y;
  }

 private:
  Embeddings emb_;
  Tower tower_;
  Dense out_;
};

// Wide side is LR over the same encoded fields.
class WideDeep final : public CtrModel {
 public:
  WideDeep(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed),
        emb_(make_embeddings("embedding", cfg_.embedding_dim, cfg_.l2)),
        linear_(make_linear()),
        tower_(make_tower(field_count() * cfg_.embedding_dim)),
        out_(make_dense("out", tower_.out_dim, 1)) {}

  Tensor forward(const Batch& batch, bool train_mode) override {
    Tensor deep = squeeze(apply_dense(out_, apply_tower(tower_, embed(emb_, batch).flat(), train_mode)));
    Tensor y = ndgrad::add(apply_linear(linear_, batch), deep);
    check_finite(y, "out");
    return y;
  }

 private:
  Embeddings emb_;
  Linear linear_;
  Tower tower_;
  Dense out_;
};

// DNN over [flattened embeddings | pairwise inner products].
class IPNN final : public CtrModel {
 public:
  IPNN(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed),
        emb_(make_embeddings("embedding", cfg_.embedding_dim, cfg_.l2)),
        tower_(make_tower(field_count() * cfg_.embedding_dim + field_count() * (field_count() - 1) / 2)),
        out_(make_dense("out", tower_.out_dim, 1)) {
    if (field_count() < 2) throw ConfigError("IPNN needs at least 2 fields");
  }

  Tensor forward(const Batch& batch, bool train_mode) override {
    FieldStack e = embed(emb_, batch);
    Tensor x = ndgrad::concat({e.flat(), inner_product_features(e)}, 1);
    Tensor y = squeeze(apply_dense(out_, apply_tower(tower_, x, train_mode)));
    check_finite(y, "out");
    return y;
  }

 private:
  Embeddings emb_;
  Tower tower_;
  Dense out_;
};

class NFM final : public CtrModel {
 public:
  NFM(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed),
        linear_(make_linear()),
        emb_(make_embeddings("embedding", cfg_.embedding_dim, cfg_.l2)),
        tower_(make_tower(cfg_.embedding_dim)),
        out_(make_dense("out", tower_.out_dim, 1)) {}

  Tensor forward(const Batch& batch, bool train_mode) override {
    Tensor bi = bi_interaction_pool(embed(emb_, batch));
    Tensor deep = squeeze(apply_dense(out_, apply_tower(tower_, bi, train_mode)));
    Tensor y = ndgrad::add(apply_linear(linear_, batch), deep);
    check_finite(y, "out");
    return y;
  }

 private:
  Linear linear_;
  Embeddings emb_;
  Tower tower_;
  Dense out_;
};

class AFM final : public CtrModel {
 public:
  AFM(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed),
        linear_(make_linear()),
        emb_(make_embeddings("embedding", cfg_.embedding_dim, cfg_.l2)) {
    if (field_count() < 2) throw ConfigError("AFM needs at least 2 fields");
    const std::size_t d = cfg_.embedding_dim, a = *cfg_.attention_dim;
    W_ = add_param("attention.W", {d, a}, Init::normal, cfg_.l2);
    b_ = add_param("attention.b", {a}, Init::zeros, 0.0);
    h_ = add_param("attention.h", {a}, Init::normal, cfg_.l2);
    p_ = add_param("attention.p", {d}, Init::normal, cfg_.l2);
  }

  Tensor forward(const Batch& batch, bool train_mode) override {
    const std::uint64_t seed = train_mode && cfg_.attention_dropout > 0.0 ? next_dropout_seed() : 0;
    Tensor att = afm_attention_pool(embed(emb_, batch), {P(W_), P(b_), P(h_), P(p_)}, cfg_.attention_dropout,
                                    train_mode, seed);
    Tensor y = ndgrad::add(apply_linear(linear_, batch), att);
    check_finite(y, "attention");
    return y;
  }

 private:
  Linear linear_;
  Embeddings emb_;
  std::size_t W_ = 0, b_ = 0, h_ = 0, p_ = 0;
};

// FM and DNN share one embedding table.
class DeepFM final : public CtrModel {
 public:
  DeepFM(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed),
        linear_(make_linear()),
        emb_(make_embeddings("embedding", cfg_.embedding_dim, cfg_.l2)),
        tower_(make_tower(field_count() * cfg_.embedding_dim)),
        out_(make_dense("out", tower_.out_dim, 1)) {}

  Tensor forward(const Batch& batch, bool train_mode) override {
    using namespace ndgrad;
    FieldStack e = embed(emb_, batch);
    Tensor deep = squeeze(apply_dense(out_, apply_tower(tower_, e.flat(), train_mode)));
    Tensor y = add(add(apply_linear(linear_, batch), fm_pairwise_sum(e)), deep);
    check_finite(y, "out");
    return y;
  }

 private:
  Linear linear_;
  Embeddings emb_;
  Tower tower_;
  Dense out_;
};

// Cross network beside a DNN tower; the head reads [x_L | tower]. With zero
// cross layers the model is exactly DNN.
class DCN final : public CtrModel {
 public:
  DCN(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed),
        emb_(make_embeddings("embedding", cfg_.embedding_dim, cfg_.l2)),
        tower_(make_tower(field_count() * cfg_.embedding_dim)) {
    const std::size_t dim = field_count() * cfg_.embedding_dim;
    for (std::size_t l = 0; l < *cfg_.cross_layers; ++l) {
      const std::string name = "cross." + std::to_string(l);
      cross_.push_back({add_param(name + ".w", {dim}, Init::normal, cfg_.l2), add_param(name + ".b", {dim}, Init::zeros, 0.0)});
    }
    out_ = make_dense("out", tower_.out_dim + (cross_.empty() ? 0 : dim), 1);
  }

  Tensor forward(const Batch& batch, bool train_mode) override {
    Tensor x0 = embed(emb_, batch).flat();
    Tensor deep = apply_tower(tower_, x0, train_mode);
    if (!cross_.empty()) {
      Tensor xl = x0;
      for (std::size_t l = 0; l < cross_.size(); ++l) {
        xl = cross_layer(x0, xl, P(cross_[l].first), P(cross_[l].second));
        check_finite(xl, "cross." + std::to_string(l));
      }
      deep = ndgrad::concat({xl, deep}, 1);
    }
    Tensor y = squeeze(apply_dense(out_, deep));
    check_finite(y, "out");
    return y;
  }

 private:
  Embeddings emb_;
  Tower tower_;
  std::vector<std::pair<std::size_t, std::size_t>> cross_;
  Dense out_;
};

// Linear + DNN + CIN. Each CIN map is sum-pooled over the embedding axis and
// a bias-free head maps the pooled vector to a logit. An empty CIN leaves
// exactly the Wide&Deep sum.
class XDeepFM final : public CtrModel {
 public:
  XDeepFM(ModelConfig cfg, std::vector<FieldLayout> fields, std::uint64_t seed)
      : CtrModel(std::move(cfg), std::move(fields), seed),
        emb_(make_embeddings("embedding", cfg_.embedding_dim, cfg_.l2)),
        linear_(make_linear()),
        tower_(make_tower(field_count() * cfg_.embedding_dim)),
        out_(make_dense("out", tower_.out_dim, 1)) {
    const auto& sizes = *cfg_.cin_layer_sizes;
    std::size_t prev = field_count(), pooled = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      cin_.push_back(add_param("cin." + std::to_string(k) + ".W", {prev * field_count(), sizes[k]}, Init::normal, cfg_.l2));
      if (cfg_.cin_pool_all_layers || k + 1 == sizes.size()) pooled += sizes[k];
      prev = sizes[k];
    }
    if (!sizes.empty()) cin_out_ = make_dense("cin.out", pooled, 1, false);
  }

  Tensor forward(const Batch& batch, bool train_mode) override {
    using namespace ndgrad;
    FieldStack e = embed(emb_, batch);
    Tensor deep = squeeze(apply_dense(out_, apply_tower(tower_, e.flat(), train_mode)));
    Tensor y = add(apply_linear(linear_, batch), deep);
    if (!cin_.empty()) {
      std::vector<Tensor> pooled;
      Tensor x = e.stacked;
      for (std::size_t k = 0; k < cin_.size(); ++k) {
        x = cin_layer(x, e.stacked, P(cin_[k]));
        check_finite(x, "cin." + std::to_string(k));
        if (cfg_.cin_pool_all_layers || k + 1 == cin_.size()) pooled.push_back(sum(x, 2));
      }
      Tensor p = pooled.size() == 1 ? pooled[0] : concat(pooled, 1);
      y = add(y, squeeze(apply_dense(cin_out_, p)));
    }
    check_finite(y, "out");
    return y;
  }

 private:
  Embeddings emb_;
  Linear linear_;
  Tower tower_;
  Dense out_;
  std::vector<std::size_t> cin_;
  Dense cin_out_;
};

inline std::unique_ptr<CtrModel> build_model(const ModelConfig& cfg, const std::vector<FieldLayout>& fields,
                                             std::uint64_t seed) {
  validate(cfg);
  const std::string& m = cfg.model;
  if (m == "LR") return std::make_unique<LR>(cfg, fields, seed);
  if (m == "FM") return std::make_unique<FM>(cfg, fields, seed);
  if (m == "FFM") return std::make_unique<FFM>(cfg, fields, seed);
  if (m == "HOFM") return std::make_unique<HOFM>(cfg, fields, seed);
  if (m == "FwFM") return std::make_unique<FwFM>(cfg, fields, seed);
  if (m == "DNN") return std::make_unique<DNN>(cfg, fields, seed);
  if (m == "WideDeep") return std::make_unique<WideDeep>(cfg, fields, seed);
  if (m == "IPNN") return std::make_unique<IPNN>(cfg, fields, seed);
  if (m == "NFM") return std::make_unique<NFM>(cfg, fields, seed);
  if (m == "AFM") return std::make_unique<AFM>(cfg, fields, seed);
  if (m == "DeepFM") return std::make_unique<DeepFM>(cfg, fields, seed);
  if (m == "DCN") return std::make_unique<DCN>(cfg, fields, seed);
  if (m == "xDeepFM") return std::make_unique<XDeepFM>(cfg, fields, seed);
  throw ConfigError("unknown model '" + m + "'");
}

inline std::unique_ptr<CtrModel> build_model(const ModelConfig& cfg, const data::FeatureMap& map, std::uint64_t seed) {
  return build_model(cfg, data::layout_of(map), seed);
}

// A model config with sensible knobs for `name`; used by gradcheck and tests.
inline ModelConfig default_config(const std::string& name, std::size_t d = 4, std::vector<std::size_t> hidden = {8}) {
  ModelConfig c;
  c.model = name;
  c.embedding_dim = d;
  if (uses_tower(name)) c.hidden_units = std::move(hidden);
  if (name == "DCN") c.cross_layers = 2;
  if (name == "xDeepFM") c.cin_layer_sizes = std::vector<std::size_t>{3, 2};
  if (name == "AFM") c.attention_dim = 4;
  if (name == "HOFM") c.order3_dim = d;
  validate(c);
  return c;
}

}  // namespace barsctr::models
