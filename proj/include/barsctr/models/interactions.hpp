#pragma once

#include <utility>
#include <vector>

#include "barsctr/ndgrad/ops.hpp"

// Feature-interaction kernels. Embeddings arrive as a FieldStack: one
// d-vector per field and sample, stacked to [B, m, d].
namespace barsctr::models {

using ndgrad::Shape;
using ndgrad::Tensor;

struct FieldStack {
  Tensor stacked;  // [B, m, d]; undefined when m == 0
  std::size_t batch = 0;
  std::size_t fields = 0;
  std::size_t dim = 0;

  static FieldStack of(const Tensor& t) {
    if (t.rank() != 3) throw DimensionError("FieldStack needs a [B, m, d] tensor, got " + ndgrad::shape_str(t.shape()));
    return FieldStack{t, t.dim(0), t.dim(1), t.dim(2)};
  }
  static FieldStack empty(std::size_t batch, std::size_t dim) { return FieldStack{Tensor{}, batch, 0, dim}; }

  // [B, m*d]
  Tensor flat() const { return ndgrad::reshape(stacked, {batch, fields * dim}); }
};

// (i, j) for i < j in lexicographic order.
inline std::vector<std::pair<std::size_t, std::size_t>> field_pairs(std::size_t m) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) out.emplace_back(i, j);
  return out;
}

namespace detail {

inline Tensor zeros_b(std::size_t batch) { return Tensor::zeros({batch}); }

// [B, P, d]: v_i * v_j for every pair.
inline Tensor pair_products(const FieldStack& e) {
  std::vector<std::size_t> left, right;
  for (auto [i, j] : field_pairs(e.fields)) {
    left.push_back(i);
    right.push_back(j);
  }
  return ndgrad::mul(ndgrad::gather(e.stacked, 1, left), ndgrad::gather(e.stacked, 1, right));
}

}  // namespace detail

// sum_{i<j} <v_i, v_j> by 1/2 (|sum v|^2 - sum |v|^2); returns [B].
inline Tensor fm_pairwise_sum(const FieldStack& e) {
  if (e.fields < 2) return detail::zeros_b(e.batch);
  using namespace ndgrad;
  Tensor s = sum(e.stacked, 1);                       // [B, d]
  Tensor square_of_sum = sum(square(s), 1);           // [B]
  Tensor sum_of_squares = sum(sum(square(e.stacked), 2), 1);  // [B]
  return scalar_mul(sub(square_of_sum, sum_of_squares), 0.5);
}

// sum_{i<j} v_i * v_j by 1/2 ((sum v)^2 - sum v^2); returns [B, d].
inline Tensor bi_interaction_pool(const FieldStack& e) {
  if (e.fields < 2) return Tensor::zeros({e.batch, e.dim});
  using namespace ndgrad;
  Tensor s = sum(e.stacked, 1);
  return scalar_mul(sub(square(s), sum(square(e.stacked), 1)), 0.5);
}

// All <v_i, v_j>, i < j, in lexicographic order; returns [B, m(m-1)/2].
inline Tensor inner_product_features(const FieldStack& e) {
  if (e.fields < 2) throw ConfigError("inner products need at least 2 fields, got " + std::to_string(e.fields));
  return ndgrad::sum(detail::pair_products(e), 2);
}

// Position of target field g inside feature i's packed field-aware block.
inline std::size_t ffm_slot(std::size_t i, std::size_t g) { return g < i ? g : g - 1; }

// Field-aware pairs. `packed` is [B, m*(m-1), d]: feature i's vector aimed at
// field g sits at row i*(m-1) + ffm_slot(i, g). Returns [B] with
// sum_{i<j} <v_{i,f(j)}, v_{j,f(i)}>.
inline Tensor field_aware_interaction(const Tensor& packed, std::size_t batch, std::size_t m) {
  if (m < 2) return detail::zeros_b(batch);
  if (packed.rank() != 3 || packed.dim(0) != batch || packed.dim(1) != m * (m - 1)) {
    throw DimensionError("field_aware_interaction: expected [" + std::to_string(batch) + ", " +
                         std::to_string(m * (m - 1)) + ", d], got " + ndgrad::shape_str(packed.shape()));
  }
  std::vector<std::size_t> left, right;
  for (auto [i, j] : field_pairs(m)) {
    left.push_back(i * (m - 1) + ffm_slot(i, j));
    right.push_back(j * (m - 1) + ffm_slot(j, i));
  }
  using namespace ndgrad;
  return sum(sum(mul(gather(packed, 1, left), gather(packed, 1, right)), 2), 1);
}

// sum_{i<j} r_{ij} <v_i, v_j> with r holding one weight per unordered pair in
// field_pairs order; returns [B].
inline Tensor fwfm_interaction(const FieldStack& e, const Tensor& r) {
  if (e.fields < 2) return detail::zeros_b(e.batch);
  const std::size_t pairs = e.fields * (e.fields - 1) / 2;
  if (r.numel() != pairs) {
    throw DimensionError("fwfm_interaction: " + std::to_string(pairs) + " field pairs but r has shape " +
                         ndgrad::shape_str(r.shape()));
  }
  return ndgrad::sum(ndgrad::mul(inner_product_features(e), ndgrad::reshape(r, {pairs})), 1);
}

// sum_{i<j<k} sum_t v_i[t] v_j[t] v_k[t] over order-3 embeddings; returns [B].
inline Tensor hofm_third_order(const FieldStack& e3) {
  if (e3.fields < 3) return detail::zeros_b(e3.batch);
  std::vector<std::size_t> a, b, c;
  for (std::size_t i = 0; i < e3.fields; ++i)
    for (std::size_t j = i + 1; j < e3.fields; ++j)
      for (std::size_t k = j + 1; k < e3.fields; ++k) {
        a.push_back(i);
        b.push_back(j);
        c.push_back(k);
      }
  using namespace ndgrad;
  Tensor prod = mul(mul(gather(e3.stacked, 1, a), gather(e3.stacked, 1, b)), gather(e3.stacked, 1, c));
  return sum(sum(prod, 2), 1);
}

struct AttentionParams {
  Tensor W;  // [d, attention_dim]
  Tensor b;  // [attention_dim]
  Tensor h;  // [attention_dim]
  Tensor p;  // [d]
};

// AFM pooling: a_ij = softmax over pairs of h . relu(W^T (v_i*v_j) + b), then
// sum a_ij <p, v_i*v_j>; returns [B]. Attention weights may be dropped out.
inline Tensor afm_attention_pool(const FieldStack& e, const AttentionParams& att, double attention_dropout = 0.0,
                                 bool train_mode = false, std::uint64_t seed = 0) {
  if (e.fields < 2) return detail::zeros_b(e.batch);
  using namespace ndgrad;
  const std::size_t pairs = e.fields * (e.fields - 1) / 2;
  const std::size_t a = att.b.numel();
  Tensor q = detail::pair_products(e);                      // [B, P, d]
  Tensor hidden = relu(add(matmul(q, att.W), att.b));       // [B, P, a]
  Tensor score = reshape(matmul(hidden, reshape(att.h, {a, 1})), {e.batch, pairs});
  Tensor alpha = dropout(softmax(score, 1), attention_dropout, train_mode, seed);
  Tensor pooled = sum(mul(q, reshape(alpha, {e.batch, pairs, 1})), 1);  // [B, d]
  return reshape(matmul(pooled, reshape(att.p, {e.dim, 1})), {e.batch});
}

// x_{l+1} = x0 (xl . w) + b + xl on [B, D] inputs.
inline Tensor cross_layer(const Tensor& x0, const Tensor& xl, const Tensor& w, const Tensor& b) {
  if (x0.shape() != xl.shape() || x0.rank() != 2 || w.numel() != x0.dim(1) || b.numel() != x0.dim(1)) {
    throw DimensionError("cross_layer: x0 " + ndgrad::shape_str(x0.shape()) + ", xl " + ndgrad::shape_str(xl.shape()) +
                         ", w " + ndgrad::shape_str(w.shape()) + ", b " + ndgrad::shape_str(b.shape()));
  }
  using namespace ndgrad;
  const std::size_t dim = x0.dim(1);
  Tensor s = matmul(xl, reshape(w, {dim, 1}));  // [B, 1]
  return add(add(mul(x0, s), reshape(b, {dim})), xl);
}

// One CIN layer. prev [B, H, d], x0 [B, m, d], W [H*m, H_next] where row
// i*m + j holds the weights of the (prev_i, x0_j) product. Returns
// [B, H_next, d] with X_next[h,t] = sum_{i,j} W[i*m+j, h] prev[i,t] x0[j,t].
inline Tensor cin_layer(const Tensor& prev, const Tensor& x0, const Tensor& W) {
  if (prev.rank() != 3 || x0.rank() != 3 || prev.dim(0) != x0.dim(0) || prev.dim(2) != x0.dim(2) || W.rank() != 2 ||
      W.dim(0) != prev.dim(1) * x0.dim(1)) {
    throw DimensionError("cin_layer: prev " + ndgrad::shape_str(prev.shape()) + ", x0 " + ndgrad::shape_str(x0.shape()) +
                         ", W " + ndgrad::shape_str(W.shape()));
  }
  using namespace ndgrad;
  const std::size_t batch = prev.dim(0), h = prev.dim(1), m = x0.dim(1), d = x0.dim(2);
  Tensor z = mul(reshape(prev, {batch, h, 1, d}), reshape(x0, {batch, 1, m, d}));  // [B, H, m, d]
  Tensor zt = transpose(reshape(z, {batch, h * m, d}), 1, 2);                    // [B, d, H*m]
  return transpose(matmul(zt, W), 1, 2);                                         // [B, H_next, d]
}

}  // namespace barsctr::models
