#pragma once

// Check suites shared by the unit tests and the acceptance runner.

#include <cmath>
#include <algorithm>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "barsctr/models/diagnostics.hpp"
#include "barsctr/models/interactions.hpp"
#include "barsctr/models/zoo.hpp"
#include "support/oracles.hpp"

namespace suites {

using barsctr::ndgrad::Tensor;
namespace m = barsctr::models;

struct KernelResult {
  std::string kernel;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
};

namespace detail {

inline oracle::Vec normals(std::size_t n, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  oracle::Vec v(n);
  for (double& x : v) x = nd(gen);
  return v;
}

inline std::size_t pick(std::mt19937_64& gen, std::size_t lo, std::size_t hi) { return lo + gen() % (hi - lo + 1); }

// rows[b][i] is a d-vector -> Tensor [B, m, d]
inline Tensor stack(const std::vector<oracle::Mat>& rows, std::size_t m, std::size_t d) {
  std::vector<double> flat;
  for (const auto& r : rows)
    for (const auto& v : r) flat.insert(flat.end(), v.begin(), v.end());
  return Tensor::from_values({rows.size(), m, d}, flat);
}

inline m::FieldStack field_stack(const std::vector<oracle::Mat>& rows, std::size_t m, std::size_t d) {
  if (m == 0) return m::FieldStack::empty(rows.size(), d);
  return m::FieldStack::of(stack(rows, m, d));
}

inline double rel(double a, double b) { return oracle::rel_err(a, b, 1e-6); }

}  // namespace detail

// Each interaction kernel against its brute-force formula on random small
// instances (m <= 10, d <= 8; H, m, d <= 5 for CIN).
inline std::vector<KernelResult> kernel_oracle_suite(std::size_t instances = 200, std::uint64_t seed = 2024) {
  using detail::pick;
  std::mt19937_64 gen(seed);
  std::vector<KernelResult> out;
  auto run = [&](const std::string& name, const std::function<double()>& one) {
    KernelResult r{name, instances, 0.0};
    for (std::size_t i = 0; i < instances; ++i) r.max_rel_error = std::max(r.max_rel_error, one());
    out.push_back(r);
  };
  // random batch of B samples with m vectors of dim d
  auto sample = [&](std::size_t B, std::size_t mm, std::size_t d) {
    std::vector<oracle::Mat> rows(B);
    for (auto& r : rows)
      for (std::size_t i = 0; i < mm; ++i) r.push_back(detail::normals(d, gen));
    return rows;
  };

  run("fm_pairwise_sum", [&] {
    const std::size_t B = pick(gen, 1, 3), mm = pick(gen, 0, 10), d = pick(gen, 1, 8);
    const auto rows = sample(B, mm, d);
    const Tensor y = m::fm_pairwise_sum(detail::field_stack(rows, mm, d));
    double e = 0;
    for (std::size_t b = 0; b < B; ++b) e = std::max(e, detail::rel(y.values()[b], oracle::fm_pairs(rows[b])));
    return e;
  });
  run("bi_interaction_pool", [&] {
    const std::size_t B = pick(gen, 1, 3), mm = pick(gen, 0, 10), d = pick(gen, 1, 8);
    const auto rows = sample(B, mm, d);
    const Tensor y = m::bi_interaction_pool(detail::field_stack(rows, mm, d));
    double e = 0;
    for (std::size_t b = 0; b < B; ++b) {
      const auto ref = oracle::bi_interaction(rows[b], d);
      for (std::size_t t = 0; t < d; ++t) e = std::max(e, detail::rel(y.values()[b * d + t], ref[t]));
    }
    return e;
  });
  run("field_aware_interaction", [&] {
    const std::size_t B = pick(gen, 1, 3), mm = pick(gen, 0, 10), d = pick(gen, 1, 8);
    std::vector<std::vector<oracle::Mat>> ffm(B, std::vector<oracle::Mat>(mm, oracle::Mat(mm)));
    std::vector<double> packed;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < mm; ++i)
        for (std::size_t g = 0; g < mm; ++g) {
          if (g == i) continue;
          ffm[b][i][g] = detail::normals(d, gen);
          packed.insert(packed.end(), ffm[b][i][g].begin(), ffm[b][i][g].end());
        }
    Tensor y = mm < 2 ? m::field_aware_interaction(Tensor{}, B, mm)
                      : m::field_aware_interaction(Tensor::from_values({B, mm * (mm - 1), d}, packed), B, mm);
    double e = 0;
    for (std::size_t b = 0; b < B; ++b) e = std::max(e, detail::rel(y.values()[b], oracle::ffm_pairs(ffm[b])));
    return e;
  });
  run("fwfm_interaction", [&] {
    const std::size_t B = pick(gen, 1, 3), mm = pick(gen, 0, 10), d = pick(gen, 1, 8);
    const auto rows = sample(B, mm, d);
    oracle::Mat r(mm, oracle::Vec(mm, 0.0));
    std::vector<double> flat_r;
    for (auto [i, j] : m::field_pairs(mm)) {
      r[i][j] = r[j][i] = detail::normals(1, gen)[0];
      flat_r.push_back(r[i][j]);
    }
    Tensor rt = flat_r.empty() ? Tensor::zeros({1}) : Tensor::from_values({flat_r.size()}, flat_r);
    const Tensor y = m::fwfm_interaction(detail::field_stack(rows, mm, d), rt);
    double e = 0;
    for (std::size_t b = 0; b < B; ++b) e = std::max(e, detail::rel(y.values()[b], oracle::fwfm_pairs(rows[b], r)));
    return e;
  });
  run("hofm_third_order", [&] {
    const std::size_t B = pick(gen, 1, 3), mm = pick(gen, 0, 10), d = pick(gen, 1, 8);
    const auto rows = sample(B, mm, d);
    const Tensor y = m::hofm_third_order(detail::field_stack(rows, mm, d));
    double e = 0;
    for (std::size_t b = 0; b < B; ++b) e = std::max(e, detail::rel(y.values()[b], oracle::third_order(rows[b])));
    return e;
  });
  run("afm_attention_pool", [&] {
    const std::size_t B = pick(gen, 1, 3), mm = pick(gen, 2, 10), d = pick(gen, 1, 8), a = pick(gen, 1, 6);
    const auto rows = sample(B, mm, d);
    oracle::Mat W(a);  // oracle layout: a x d
    for (auto& w : W) w = detail::normals(d, gen);
    const auto bias = detail::normals(a, gen), h = detail::normals(a, gen), p = detail::normals(d, gen);
    std::vector<double> w_lib(d * a);  // library layout: d x a
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t t = 0; t < d; ++t) w_lib[t * a + i] = W[i][t];
    m::AttentionParams att{Tensor::from_values({d, a}, w_lib), Tensor::from_values({a}, bias), Tensor::from_values({a}, h),
                           Tensor::from_values({d}, p)};
    const Tensor y = m::afm_attention_pool(detail::field_stack(rows, mm, d), att);
    double e = 0;
    for (std::size_t b = 0; b < B; ++b) e = std::max(e, detail::rel(y.values()[b], oracle::afm(rows[b], W, bias, h, p)));
    return e;
  });
  run("cross_layer", [&] {
    const std::size_t B = pick(gen, 1, 3), D = pick(gen, 1, 40);
    std::vector<oracle::Vec> x0(B), xl(B);
    std::vector<double> f0, fl;
    for (std::size_t b = 0; b < B; ++b) {
      x0[b] = detail::normals(D, gen);
      xl[b] = detail::normals(D, gen);
      f0.insert(f0.end(), x0[b].begin(), x0[b].end());
      fl.insert(fl.end(), xl[b].begin(), xl[b].end());
    }
    const auto w = detail::normals(D, gen), bias = detail::normals(D, gen);
    const Tensor y = m::cross_layer(Tensor::from_values({B, D}, f0), Tensor::from_values({B, D}, fl),
                                    Tensor::from_values({D}, w), Tensor::from_values({D}, bias));
    double e = 0;
    for (std::size_t b = 0; b < B; ++b) {
      const auto ref = oracle::cross(x0[b], xl[b], w, bias);
      for (std::size_t t = 0; t < D; ++t) e = std::max(e, detail::rel(y.values()[b * D + t], ref[t]));
    }
    return e;
  });
  run("cin_layer", [&] {
    const std::size_t B = pick(gen, 1, 3), H = pick(gen, 1, 5), mm = pick(gen, 1, 5), d = pick(gen, 1, 5),
                      Hn = pick(gen, 1, 5);
    const auto prev = sample(B, H, d), x0 = sample(B, mm, d);
    std::vector<oracle::Mat> W(Hn, oracle::Mat(H, oracle::Vec(mm)));
    std::vector<double> w_lib(H * mm * Hn);
    for (std::size_t h = 0; h < Hn; ++h)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < mm; ++j) {
          W[h][i][j] = detail::normals(1, gen)[0];
          w_lib[(i * mm + j) * Hn + h] = W[h][i][j];
        }
    const Tensor y = m::cin_layer(detail::stack(prev, H, d), detail::stack(x0, mm, d), Tensor::from_values({H * mm, Hn}, w_lib));
    double e = 0;
    for (std::size_t b = 0; b < B; ++b) {
      const auto ref = oracle::cin(prev[b], x0[b], W);
      for (std::size_t h = 0; h < Hn; ++h)
        for (std::size_t t = 0; t < d; ++t) e = std::max(e, detail::rel(y.values()[(b * Hn + h) * d + t], ref[h][t]));
    }
    return e;
  });
  return out;
}

// ---------------------------------------------------------------- degeneracies

struct DegeneracyResult {
  std::string name;
  bool bitwise_equal = false;
  double max_abs_diff = 0.0;
};

inline bool bitwise(const Tensor& a, const Tensor& b) {
  return a.numel() == b.numel() && std::memcmp(a.values().data(), b.values().data(), a.numel() * sizeof(double)) == 0;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double e = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) e = std::max(e, std::abs(a.values()[i] - b.values()[i]));
  return e;
}

// Rounds every parameter to a multiple of 2^-4 so that sums and products of
// a few of them are exact in double arithmetic.
inline void quantize(m::CtrModel& model) {
  for (auto& p : model.parameters())
    for (double& v : p.tensor.mutable_values()) v = std::round(v * 16.0) / 16.0;
}

inline std::vector<barsctr::data::FieldLayout> degeneracy_layout() {
  auto l = m::probe_layout();
  l.back().pooling = barsctr::data::Pooling::sum;
  return l;
}

inline DegeneracyResult compare(const std::string& name, m::CtrModel& a, m::CtrModel& b, const barsctr::data::Batch& batch,
                                bool train_mode) {
  const Tensor ya = a.forward(batch, train_mode), yb = b.forward(batch, train_mode);
  return {name, bitwise(ya, yb), max_abs_diff(ya, yb)};
}

// Architecture degeneracies under equal seeds. The FM-family comparisons put
// parameters on a dyadic grid first: the linear-time FM identity and the
// explicit pair sums agree only up to rounding for arbitrary doubles.
inline std::vector<DegeneracyResult> degeneracy_suite(std::uint64_t seed = 99) {
  std::vector<DegeneracyResult> out;
  const auto layout = degeneracy_layout();
  const auto batch = m::probe_batch(layout, 16, seed + 1);

  for (bool train : {false, true}) {
    const std::string mode = train ? " (train mode, dropout 0.2)" : " (eval mode)";
    auto dnn_cfg = m::default_config("DNN", 4, {8, 4});
    dnn_cfg.dropout = 0.2;
    auto dcn_cfg = dnn_cfg;
    dcn_cfg.model = "DCN";
    dcn_cfg.cross_layers = 0;
    auto dnn = m::build_model(dnn_cfg, layout, seed), dcn = m::build_model(dcn_cfg, layout, seed);
    out.push_back(compare("DCN(L=0) == DNN" + mode, *dcn, *dnn, batch, train));

    auto wd_cfg = m::default_config("WideDeep", 4, {8, 4});
    wd_cfg.dropout = 0.2;
    auto xd_cfg = wd_cfg;
    xd_cfg.model = "xDeepFM";
    xd_cfg.cin_layer_sizes = std::vector<std::size_t>{};
    auto wd = m::build_model(wd_cfg, layout, seed), xd = m::build_model(xd_cfg, layout, seed);
    out.push_back(compare("xDeepFM(empty CIN) == Wide&Deep" + mode, *xd, *wd, batch, train));
  }

  auto fm_cfg = m::default_config("FM", 4);
  fm_cfg.init_std = 0.5;
  auto fw_cfg = fm_cfg;
  fw_cfg.model = "FwFM";
  auto fm = m::build_model(fm_cfg, layout, seed), fw = m::build_model(fw_cfg, layout, seed);
  quantize(*fm);
  quantize(*fw);
  const auto& r = fw->parameter("fwfm.r").tensor;
  bool ones = std::all_of(r.values().begin(), r.values().end(), [](double v) { return v == 1.0; });
  auto res = compare("FwFM(r=1) == FM", *fw, *fm, batch, false);
  res.bitwise_equal = res.bitwise_equal && ones;
  out.push_back(res);

  auto ffm_cfg = fm_cfg;
  ffm_cfg.model = "FFM";
  auto ffm = m::build_model(ffm_cfg, layout, seed);
  // tie: every field-aware vector of feature k equals FM's v_k
  for (std::size_t f = 0; f < layout.size(); ++f) {
    const auto& name = layout[f].name;
    auto src = fm->parameter("embedding." + name).tensor.values();
    auto dst = ffm->parameter("ffm." + name).tensor.mutable_values();
    const std::size_t d = 4, slots = layout.size() - 1;
    for (std::size_t row = 0; row < layout[f].vocab_size; ++row)
      for (std::size_t s = 0; s < slots; ++s)
        for (std::size_t t = 0; t < d; ++t) dst[(row * slots + s) * d + t] = src[row * d + t];
    auto lin = fm->parameter("linear." + name).tensor.values();
    auto lin_dst = ffm->parameter("linear." + name).tensor.mutable_values();
    std::copy(lin.begin(), lin.end(), lin_dst.begin());
  }
  ffm->parameter("linear.bias").tensor.mutable_values()[0] = fm->parameter("linear.bias").tensor.values()[0];
  out.push_back(compare("FFM(tied) == FM", *ffm, *fm, batch, false));
  return out;
}

}  // namespace suites
