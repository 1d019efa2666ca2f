#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "barsctr/ndgrad/tensor.hpp"
#include "barsctr/rng.hpp"

namespace barsctr::ndgrad {

namespace detail {

[[noreturn]] inline void shape_fail(std::string_view op, const std::string& detail) {
  throw DimensionError(std::string(op) + ": " + detail);
}

inline std::size_t norm_axis(std::string_view op, long axis, std::size_t rank) {
  const long r = static_cast<long>(rank);
  if (axis < -r || axis >= r) {
    shape_fail(op, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

// Splits a shape around one axis into (outer, length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Numpy-style broadcast of two shapes, right-aligned.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_stride, b_stride;  // per output dim, 0 where broadcast
  bool same = false;
};

inline std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> st(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
  return st;
}

inline Broadcast plan_broadcast(std::string_view op, const Shape& a, const Shape& b) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  plan.a_stride.assign(rank, 0);
  plan.b_stride.assign(rank, 0);
  const auto sa = strides_of(a);
  const auto sb = strides_of(b);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t ia = k + a.size() >= rank ? k + a.size() - rank : SIZE_MAX;
    const std::size_t ib = k + b.size() >= rank ? k + b.size() - rank : SIZE_MAX;
    const std::size_t da = ia == SIZE_MAX ? 1 : a[ia];
    const std::size_t db = ib == SIZE_MAX ? 1 : b[ib];
    if (da != db && da != 1 && db != 1) {
      shape_fail(op, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    plan.out[k] = std::max(da, db);
    if (da != 1) plan.a_stride[k] = sa[ia];
    if (db != 1) plan.b_stride[k] = sb[ib];
  }
  return plan;
}

// Visits every output element with the matching flat offsets into a and b,
// in row-major output order.
template <class F>
void for_each_broadcast(const Broadcast& plan, F&& f) {
  const std::size_t n = shape_numel(plan.out);
  if (plan.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = plan.out.size();
  std::vector<std::size_t> counter(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t k = rank; k-- > 0;) {
      ++counter[k];
      ia += plan.a_stride[k];
      ib += plan.b_stride[k];
      if (counter[k] < plan.out[k]) break;
      ia -= plan.a_stride[k] * plan.out[k];
      ib -= plan.b_stride[k] * plan.out[k];
      counter[k] = 0;
    }
  }
}

inline bool wants(const Node& out, std::size_t i) { return out.inputs[i]->requires_grad; }
inline std::vector<double>& grad_of(Node& out, std::size_t i) { return out.inputs[i]->ensure_grad(); }

template <class F>
Tensor unary(std::string name, const Tensor& x, F&& fwd_and_deriv) {
  const auto xs = x.values();
  std::vector<double> y(xs.size()), dy(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto [v, d] = fwd_and_deriv(xs[i]);
    y[i] = v;
    dy[i] = d;
  }
  return custom_op(std::move(name), x.shape(), std::move(y), {x}, [dy = std::move(dy)](Node& out) {
    auto& gx = grad_of(out, 0);
    for (std::size_t i = 0; i < dy.size(); ++i) gx[i] += out.grad[i] * dy[i];
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  auto plan = detail::plan_broadcast("add", a.shape(), b.shape());
  std::vector<double> y(shape_numel(plan.out));
  const auto av = a.values();
  const auto bv = b.values();
  detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { y[o] = av[i] + bv[j]; });
  return custom_op("add", plan.out, std::move(y), {a, b}, [plan](detail::Node& out) {
    const bool ga = detail::wants(out, 0), gb = detail::wants(out, 1);
    auto* da = ga ? &detail::grad_of(out, 0) : nullptr;
    auto* db = gb ? &detail::grad_of(out, 1) : nullptr;
    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (da) (*da)[i] += out.grad[o];
      if (db) (*db)[j] += out.grad[o];
    });
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  auto plan = detail::plan_broadcast("sub", a.shape(), b.shape());
  std::vector<double> y(shape_numel(plan.out));
  const auto av = a.values();
  const auto bv = b.values();
  detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { y[o] = av[i] - bv[j]; });
  return custom_op("sub", plan.out, std::move(y), {a, b}, [plan](detail::Node& out) {
    const bool ga = detail::wants(out, 0), gb = detail::wants(out, 1);
    auto* da = ga ? &detail::grad_of(out, 0) : nullptr;
    auto* db = gb ? &detail::grad_of(out, 1) : nullptr;
    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (da) (*da)[i] += out.grad[o];
      if (db) (*db)[j] -= out.grad[o];
    });
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  auto plan = detail::plan_broadcast("elementwise_mul", a.shape(), b.shape());
  std::vector<double> y(shape_numel(plan.out));
  const auto av = a.values();
  const auto bv = b.values();
  detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { y[o] = av[i] * bv[j]; });
  return custom_op("elementwise_mul", plan.out, std::move(y), {a, b}, [plan](detail::Node& out) {
    const auto& av = out.inputs[0]->value;
    const auto& bv = out.inputs[1]->value;
    const bool ga = detail::wants(out, 0), gb = detail::wants(out, 1);
    auto* da = ga ? &detail::grad_of(out, 0) : nullptr;
    auto* db = gb ? &detail::grad_of(out, 1) : nullptr;
    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (da) (*da)[i] += out.grad[o] * bv[j];
      if (db) (*db)[j] += out.grad[o] * av[i];
    });
  });
}

inline Tensor scalar_mul(const Tensor& x, double s) {
  return detail::unary("scalar_mul", x, [s](double v) { return std::pair{v * s, s}; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary("sigmoid", x, [](double v) {
    const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return std::pair{s, s * (1.0 - s)};
  });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary("relu", x, [](double v) { return std::pair{v > 0 ? v : 0.0, v > 0 ? 1.0 : 0.0}; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary("square", x, [](double v) { return std::pair{v * v, 2.0 * v}; });
}

// sqrt(max(x, 0) + 1e-12); zero slope on the clamped side.
inline Tensor sqrt_safe(const Tensor& x) {
  return detail::unary("sqrt_safe", x, [](double v) {
    const double r = std::sqrt(std::max(v, 0.0) + 1e-12);
    return std::pair{r, v > 0 ? 0.5 / r : 0.0};
  });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary("exp", x, [](double v) {
    const double e = std::exp(v);
    return std::pair{e, e};
  });
}

// ---------------------------------------------------------------- linear algebra

// a: [..., k], b: [k, n] -> [..., n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    detail::shape_fail("matmul", "cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const std::size_t k = b.dim(0), n = b.dim(1);
  const std::size_t rows = a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> y(rows * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y.data() + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double arp = av[r * k + p];
      const double* bp = bv.data() + p * n;
      for (std::size_t c = 0; c < n; ++c) yr[c] += arp * bp[c];
    }
  }
  return custom_op("matmul", std::move(out_shape), std::move(y), {a, b}, [rows, k, n](detail::Node& out) {
    const auto& av = out.inputs[0]->value;
    const auto& bv = out.inputs[1]->value;
    const auto& g = out.grad;
    if (detail::wants(out, 0)) {
      auto& da = detail::grad_of(out, 0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t c = 0; c < n; ++c) acc += g[r * n + c] * bv[p * n + c];
          da[r * k + p] += acc;
        }
      }
    }
    if (detail::wants(out, 1)) {
      auto& db = detail::grad_of(out, 1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t p = 0; p < k; ++p) {
          const double arp = av[r * k + p];
          for (std::size_t c = 0; c < n; ++c) db[p * n + c] += arp * g[r * n + c];
        }
      }
    }
  });
}

// ---------------------------------------------------------------- reductions

// Sums out one axis (the axis is removed from the shape).
inline Tensor sum(const Tensor& x, long axis) {
  const std::size_t ax = detail::norm_axis("sum_reduce", axis, x.rank());
  const auto s = detail::split_axis(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<long>(ax));
  std::vector<double> y(s.outer * s.inner, 0.0);
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.length; ++l)
      for (std::size_t i = 0; i < s.inner; ++i) y[o * s.inner + i] += xv[(o * s.length + l) * s.inner + i];
  return custom_op("sum_reduce", std::move(out_shape), std::move(y), {x}, [s](detail::Node& out) {
    auto& gx = detail::grad_of(out, 0);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.length; ++l)
        for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.length + l) * s.inner + i] += out.grad[o * s.inner + i];
  });
}

inline Tensor mean(const Tensor& x, long axis) {
  const std::size_t ax = detail::norm_axis("mean_reduce", axis, x.rank());
  const double inv = 1.0 / static_cast<double>(x.dim(ax));
  Tensor total = sum(x, axis);
  Tensor out = scalar_mul(total, inv);
  out.node().op = "mean_reduce";
  return out;
}

// Sum over every element, left to right; result has shape [].
inline Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return custom_op("sum_all", {}, {acc}, {x}, [](detail::Node& out) {
    auto& gx = detail::grad_of(out, 0);
    const double g = out.grad[0];
    for (double& v : gx) v += g;
  });
}

// ---------------------------------------------------------------- structure

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    detail::shape_fail("reshape", "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> y(x.values().begin(), x.values().end());
  return custom_op("reshape", std::move(shape), std::move(y), {x}, [](detail::Node& out) {
    auto& gx = detail::grad_of(out, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i];
  });
}

inline Tensor concat(const std::vector<Tensor>& parts, long axis) {
  if (parts.empty()) detail::shape_fail("concat", "no inputs");
  const std::size_t rank = parts[0].rank();
  const std::size_t ax = detail::norm_axis("concat", axis, rank);
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  std::vector<std::size_t> lengths;
  for (const Tensor& p : parts) {
    bool ok = p.rank() == rank;
    for (std::size_t i = 0; ok && i < rank; ++i) ok = i == ax || p.dim(i) == parts[0].dim(i);
    if (!ok) {
      detail::shape_fail("concat", "shape " + shape_str(p.shape()) + " does not match " + shape_str(parts[0].shape()) +
                                       " outside axis " + std::to_string(ax));
    }
    lengths.push_back(p.dim(ax));
    out_shape[ax] += p.dim(ax);
  }
  const auto s = detail::split_axis(out_shape, ax);
  std::vector<double> y(shape_numel(out_shape));
  std::size_t start = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].values();
    const std::size_t len = lengths[k];
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pv.data() + o * len * s.inner, len * s.inner, y.data() + (o * s.length + start) * s.inner);
    start += len;
  }
  return custom_op("concat", out_shape, std::move(y), parts, [s, lengths](detail::Node& out) {
    std::size_t start = 0;
    for (std::size_t k = 0; k < lengths.size(); ++k) {
      const std::size_t len = lengths[k];
      if (detail::wants(out, k)) {
        auto& gk = detail::grad_of(out, k);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t i = 0; i < len * s.inner; ++i)
            gk[o * len * s.inner + i] += out.grad[(o * s.length + start) * s.inner + i];
      }
      start += len;
    }
  });
}

// Contiguous range [begin, end) along one axis.
inline Tensor slice(const Tensor& x, long axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = detail::norm_axis("slice", axis, x.rank());
  if (begin >= end || end > x.dim(ax)) {
    detail::shape_fail("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                                    shape_str(x.shape()) + " axis " + std::to_string(ax));
  }
  const auto s = detail::split_axis(x.shape(), ax);
  const std::size_t len = end - begin;
  Shape out_shape = x.shape();
  out_shape[ax] = len;
  std::vector<double> y(s.outer * len * s.inner);
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xv.data() + (o * s.length + begin) * s.inner, len * s.inner, y.data() + o * len * s.inner);
  return custom_op("slice", std::move(out_shape), std::move(y), {x}, [s, begin, len](detail::Node& out) {
    auto& gx = detail::grad_of(out, 0);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < len * s.inner; ++i)
        gx[(o * s.length + begin) * s.inner + i] += out.grad[o * len * s.inner + i];
  });
}

// Selects entries along one axis; repeated indices accumulate on backward.
inline Tensor gather(const Tensor& x, long axis, std::vector<std::size_t> indices) {
  const std::size_t ax = detail::norm_axis("gather", axis, x.rank());
  if (indices.empty()) detail::shape_fail("gather", "empty index list");
  for (std::size_t idx : indices) {
    if (idx >= x.dim(ax)) {
      detail::shape_fail("gather", "index " + std::to_string(idx) + " out of range for " + shape_str(x.shape()));
    }
  }
  const auto s = detail::split_axis(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = indices.size();
  const std::size_t len = indices.size();
  std::vector<double> y(s.outer * len * s.inner);
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      std::copy_n(xv.data() + (o * s.length + indices[l]) * s.inner, s.inner, y.data() + (o * len + l) * s.inner);
  return custom_op("gather", std::move(out_shape), std::move(y), {x},
                   [s, len, indices = std::move(indices)](detail::Node& out) {
                     auto& gx = detail::grad_of(out, 0);
                     for (std::size_t o = 0; o < s.outer; ++o)
                       for (std::size_t l = 0; l < len; ++l)
                         for (std::size_t i = 0; i < s.inner; ++i)
                           gx[(o * s.length + indices[l]) * s.inner + i] += out.grad[(o * len + l) * s.inner + i];
                   });
}

// Swaps two axes.
inline Tensor transpose(const Tensor& x, long axis0, long axis1) {
  const std::size_t a0 = detail::norm_axis("transpose", axis0, x.rank());
  const std::size_t a1 = detail::norm_axis("transpose", axis1, x.rank());
  Shape out_shape = x.shape();
  std::swap(out_shape[a0], out_shape[a1]);
  // Offset in x for each output element.
  const auto in_strides = detail::strides_of(x.shape());
  std::vector<std::size_t> perm_strides = in_strides;
  std::swap(perm_strides[a0], perm_strides[a1]);
  const std::size_t n = x.numel();
  std::vector<std::size_t> src(n);
  {
    std::vector<std::size_t> counter(out_shape.size(), 0);
    std::size_t off = 0;
    for (std::size_t o = 0; o < n; ++o) {
      src[o] = off;
      for (std::size_t k = out_shape.size(); k-- > 0;) {
        ++counter[k];
        off += perm_strides[k];
        if (counter[k] < out_shape[k]) break;
        off -= perm_strides[k] * out_shape[k];
        counter[k] = 0;
      }
    }
  }
  std::vector<double> y(n);
  const auto xv = x.values();
  for (std::size_t o = 0; o < n; ++o) y[o] = xv[src[o]];
  return custom_op("transpose", std::move(out_shape), std::move(y), {x}, [src = std::move(src)](detail::Node& out) {
    auto& gx = detail::grad_of(out, 0);
    for (std::size_t o = 0; o < src.size(); ++o) gx[src[o]] += out.grad[o];
  });
}

// Softmax along one axis, max-shifted.
inline Tensor softmax(const Tensor& x, long axis) {
  const std::size_t ax = detail::norm_axis("softmax", axis, x.rank());
  const auto s = detail::split_axis(x.shape(), ax);
  const auto xv = x.values();
  std::vector<double> y(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t l) { return (o * s.length + l) * s.inner + i; };
      double mx = xv[at(0)];
      for (std::size_t l = 1; l < s.length; ++l) mx = std::max(mx, xv[at(l)]);
      double z = 0.0;
      for (std::size_t l = 0; l < s.length; ++l) {
        y[at(l)] = std::exp(xv[at(l)] - mx);
        z += y[at(l)];
      }
      for (std::size_t l = 0; l < s.length; ++l) y[at(l)] /= z;
    }
  }
  return custom_op("softmax", x.shape(), std::move(y), {x}, [s](detail::Node& out) {
    auto& gx = detail::grad_of(out, 0);
    const auto& yv = out.value;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        auto at = [&](std::size_t l) { return (o * s.length + l) * s.inner + i; };
        double dot = 0.0;
        for (std::size_t l = 0; l < s.length; ++l) dot += out.grad[at(l)] * yv[at(l)];
        for (std::size_t l = 0; l < s.length; ++l) gx[at(l)] += yv[at(l)] * (out.grad[at(l)] - dot);
      }
    }
  });
}

// ---------------------------------------------------------------- embeddings

// Rows of `table` ([V, d]) picked by `indices` laid out as `index_shape`;
// output shape is index_shape + [d]. Backward scatter-adds, so duplicate
// indices accumulate. With `freeze_row0`, index 0 reads as zeros and row 0
// never receives gradient.
inline Tensor embedding_lookup(const Tensor& table, std::span<const std::uint32_t> indices, Shape index_shape,
                               bool freeze_row0 = false) {
  if (table.rank() != 2) detail::shape_fail("embedding_lookup", "table must be rank 2, got " + shape_str(table.shape()));
  if (shape_numel(index_shape) != indices.size()) {
    detail::shape_fail("embedding_lookup", "index shape " + shape_str(index_shape) + " does not hold " +
                                               std::to_string(indices.size()) + " indices");
  }
  const std::size_t rows = table.dim(0), d = table.dim(1);
  const auto tv = table.values();
  std::vector<double> y(indices.size() * d);
  std::vector<std::uint32_t> idx(indices.begin(), indices.end());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) {
      detail::shape_fail("embedding_lookup", "index " + std::to_string(idx[r]) + " out of range for table " +
                                                 shape_str(table.shape()));
    }
    if (freeze_row0 && idx[r] == 0) continue;  // padding reads as zeros
    std::copy_n(tv.data() + idx[r] * d, d, y.data() + r * d);
  }
  Shape out_shape = std::move(index_shape);
  out_shape.push_back(d);
  return custom_op("embedding_lookup", std::move(out_shape), std::move(y), {table},
                   [idx = std::move(idx), d, freeze_row0](detail::Node& out) {
                     auto& gt = detail::grad_of(out, 0);
                     for (std::size_t r = 0; r < idx.size(); ++r) {
                       if (freeze_row0 && idx[r] == 0) continue;
                       for (std::size_t c = 0; c < d; ++c) gt[idx[r] * d + c] += out.grad[r * d + c];
                     }
                   });
}

// ---------------------------------------------------------------- regularizers

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;  // weight on the previous running value
  double epsilon = 1e-5;

  explicit BatchNormState(std::size_t features = 0) : running_mean(features, 0.0), running_var(features, 1.0) {}
};

// x: [N, F]. Train mode normalizes with batch statistics and updates the
// running ones; eval mode uses the running statistics.
inline Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                         bool train_mode) {
  if (x.rank() != 2 || gamma.numel() != x.dim(1) || beta.numel() != x.dim(1) ||
      state.running_mean.size() != x.dim(1)) {
    detail::shape_fail("batch_norm", "input " + shape_str(x.shape()) + " with gamma " + shape_str(gamma.shape()) +
                                         " and beta " + shape_str(beta.shape()));
  }
  const std::size_t n = x.dim(0), f = x.dim(1);
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<double> mu(f, 0.0), inv_std(f, 0.0);
  if (train_mode) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c) mu[c] += xv[r * f + c];
    for (double& m : mu) m /= static_cast<double>(n);
    std::vector<double> var(f, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c) {
        const double dlt = xv[r * f + c] - mu[c];
        var[c] += dlt * dlt;
      }
    for (std::size_t c = 0; c < f; ++c) {
      const double biased = var[c] / static_cast<double>(n);
      const double unbiased = n > 1 ? var[c] / static_cast<double>(n - 1) : biased;
      inv_std[c] = 1.0 / std::sqrt(biased + state.epsilon);
      state.running_mean[c] = state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mu[c];
      state.running_var[c] = state.momentum * state.running_var[c] + (1.0 - state.momentum) * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < f; ++c) {
      mu[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.epsilon);
    }
  }
  std::vector<double> xhat(n * f), y(n * f);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < f; ++c) {
      xhat[r * f + c] = (xv[r * f + c] - mu[c]) * inv_std[c];
      y[r * f + c] = gv[c] * xhat[r * f + c] + bv[c];
    }
  return custom_op("batch_norm", x.shape(), std::move(y), {x, gamma, beta},
                   [n, f, train_mode, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& out) {
                     const auto& gv = out.inputs[1]->value;
                     const auto& g = out.grad;
                     std::vector<double> sum_g(f, 0.0), sum_gx(f, 0.0);
                     for (std::size_t r = 0; r < n; ++r)
                       for (std::size_t c = 0; c < f; ++c) {
                         sum_g[c] += g[r * f + c];
                         sum_gx[c] += g[r * f + c] * xhat[r * f + c];
                       }
                     if (detail::wants(out, 1)) {
                       auto& dg = detail::grad_of(out, 1);
                       for (std::size_t c = 0; c < f; ++c) dg[c] += sum_gx[c];
                     }
                     if (detail::wants(out, 2)) {
                       auto& db = detail::grad_of(out, 2);
                       for (std::size_t c = 0; c < f; ++c) db[c] += sum_g[c];
                     }
                     if (detail::wants(out, 0)) {
                       auto& dx = detail::grad_of(out, 0);
                       const double nn = static_cast<double>(n);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < f; ++c) {
                           const std::size_t i = r * f + c;
                           if (train_mode) {
                             dx[i] += gv[c] * inv_std[c] / nn * (nn * g[i] - sum_g[c] - xhat[i] * sum_gx[c]);
                           } else {
                             dx[i] += g[i] * gv[c] * inv_std[c];
                           }
                         }
                     }
                   });
}

// Inverted dropout with a mask drawn from `seed`. Identity when not training
// or when rate is 0.
inline Tensor dropout(const Tensor& x, double rate, bool train_mode, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (!train_mode || rate == 0.0) return x;
  Rng rng(seed);
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = rng.uniform() >= rate ? scale : 0.0;
  const auto xv = x.values();
  std::vector<double> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  return custom_op("dropout", x.shape(), std::move(y), {x}, [mask = std::move(mask)](detail::Node& out) {
    auto& gx = detail::grad_of(out, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += out.grad[i] * mask[i];
  });
}

// ---------------------------------------------------------------- loss

// Mean binary cross-entropy on raw logits, softplus form.
inline Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels) {
  if (labels.size() != logits.numel()) {
    detail::shape_fail("bce_with_logits", std::to_string(labels.size()) + " labels for logits " +
                                              shape_str(logits.shape()));
  }
  const auto z = logits.values();
  const double n = static_cast<double>(z.size());
  double acc = 0.0;
  std::vector<double> dz(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double v = z[i];
    acc += std::max(v, 0.0) - v * labels[i] + std::log1p(std::exp(-std::abs(v)));
    const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    dz[i] = (s - labels[i]) / n;
  }
  return custom_op("bce_with_logits", {}, {acc / n}, {logits}, [dz = std::move(dz)](detail::Node& out) {
    auto& gz = detail::grad_of(out, 0);
    const double g = out.grad[0];
    for (std::size_t i = 0; i < dz.size(); ++i) gz[i] += g * dz[i];
  });
}

// ---------------------------------------------------------------- dispatch

enum class OpKind {
  matmul,
  add,
  sub,
  elementwise_mul,
  scalar_mul,
  sum_reduce,
  mean_reduce,
  concat,
  sigmoid,
  relu,
  square,
  sqrt_safe,
  embedding_lookup,
  slice,
  reshape,
  batch_norm,
  dropout,
  softmax,
  gather,
  transpose,
};

inline OpKind op_kind_from_name(std::string_view name) {
  static constexpr std::pair<std::string_view, OpKind> kNames[] = {
      {"matmul", OpKind::matmul},
      {"add", OpKind::add},
      {"sub", OpKind::sub},
      {"elementwise_mul", OpKind::elementwise_mul},
      {"scalar_mul", OpKind::scalar_mul},
      {"sum_reduce", OpKind::sum_reduce},
      {"mean_reduce", OpKind::mean_reduce},
      {"concat", OpKind::concat},
      {"sigmoid", OpKind::sigmoid},
      {"relu", OpKind::relu},
      {"square", OpKind::square},
      {"sqrt_safe", OpKind::sqrt_safe},
      {"embedding_lookup", OpKind::embedding_lookup},
      {"slice", OpKind::slice},
      {"reshape", OpKind::reshape},
      {"batch_norm", OpKind::batch_norm},
      {"dropout", OpKind::dropout},
      {"softmax", OpKind::softmax},
      {"gather", OpKind::gather},
      {"transpose", OpKind::transpose},
  };
  for (const auto& [n, k] : kNames)
    if (n == name) return k;
  throw ConfigError("unknown operation kind '" + std::string(name) + "'");
}

struct OpAttrs {
  long axis = 0;
  long axis1 = 1;  // second axis for transpose
  double scalar = 1.0;
  double rate = 0.0;
  bool train_mode = false;
  std::uint64_t seed = 0;
  std::size_t begin = 0, end = 0;
  Shape shape;  // reshape target, or index shape for embedding_lookup
  std::vector<std::uint32_t> indices;
  std::vector<std::size_t> positions;  // gather
  bool freeze_row0 = false;
  BatchNormState* bn_state = nullptr;
};

inline Tensor op_forward(OpKind kind, const std::vector<Tensor>& in, const OpAttrs& attrs = {}) {
  auto need = [&](std::size_t n, const char* name) {
    if (in.size() != n) {
      throw DimensionError(std::string(name) + ": expected " + std::to_string(n) + " inputs, got " +
                           std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::matmul: need(2, "matmul"); return matmul(in[0], in[1]);
    case OpKind::add: need(2, "add"); return add(in[0], in[1]);
    case OpKind::sub: need(2, "sub"); return sub(in[0], in[1]);
    case OpKind::elementwise_mul: need(2, "elementwise_mul"); return mul(in[0], in[1]);
    case OpKind::scalar_mul: need(1, "scalar_mul"); return scalar_mul(in[0], attrs.scalar);
    case OpKind::sum_reduce: need(1, "sum_reduce"); return sum(in[0], attrs.axis);
    case OpKind::mean_reduce: need(1, "mean_reduce"); return mean(in[0], attrs.axis);
    case OpKind::concat: return concat(in, attrs.axis);
    case OpKind::sigmoid: need(1, "sigmoid"); return sigmoid(in[0]);
    case OpKind::relu: need(1, "relu"); return relu(in[0]);
    case OpKind::square: need(1, "square"); return square(in[0]);
    case OpKind::sqrt_safe: need(1, "sqrt_safe"); return sqrt_safe(in[0]);
    case OpKind::embedding_lookup:
      need(1, "embedding_lookup");
      return embedding_lookup(in[0], attrs.indices, attrs.shape.empty() ? Shape{attrs.indices.size()} : attrs.shape,
                              attrs.freeze_row0);
    case OpKind::slice: need(1, "slice"); return slice(in[0], attrs.axis, attrs.begin, attrs.end);
    case OpKind::reshape: need(1, "reshape"); return reshape(in[0], attrs.shape);
    case OpKind::batch_norm:
      need(3, "batch_norm");
      if (attrs.bn_state == nullptr) throw ConfigError("batch_norm: missing running-statistics state");
      return batch_norm(in[0], in[1], in[2], *attrs.bn_state, attrs.train_mode);
    case OpKind::dropout: need(1, "dropout"); return dropout(in[0], attrs.rate, attrs.train_mode, attrs.seed);
    case OpKind::softmax: need(1, "softmax"); return softmax(in[0], attrs.axis);
    case OpKind::gather: need(1, "gather"); return gather(in[0], attrs.axis, attrs.positions);
    case OpKind::transpose: need(1, "transpose"); return transpose(in[0], attrs.axis, attrs.axis1);
  }
  throw ConfigError("unknown operation kind");
}

inline Tensor op_forward(std::string_view kind, const std::vector<Tensor>& in, const OpAttrs& attrs = {}) {
  return op_forward(op_kind_from_name(kind), in, attrs);
}

}  // namespace barsctr::ndgrad
