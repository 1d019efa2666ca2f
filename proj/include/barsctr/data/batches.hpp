#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "barsctr/data/dataset.hpp"
#include "barsctr/rng.hpp"

namespace barsctr::data {

// A slice of an EncodedDataset. columns[f] holds size * width(f) indices.
struct Batch {
  std::size_t size = 0;
  std::vector<std::vector<std::uint32_t>> columns;
  std::vector<double> labels;
  std::vector<std::size_t> rows;  // positions in the source dataset
};

inline Batch gather_batch(const EncodedDataset& ds, std::span<const std::size_t> rows) {
  Batch b;
  b.size = rows.size();
  b.rows.assign(rows.begin(), rows.end());
  b.columns.resize(ds.fields.size());
  for (std::size_t f = 0; f < ds.fields.size(); ++f) {
    const std::size_t w = ds.fields[f].width();
    auto& out = b.columns[f];
    out.resize(rows.size() * w);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy_n(ds.columns[f].begin() + static_cast<std::ptrdiff_t>(rows[i] * w), w, out.begin() + static_cast<std::ptrdiff_t>(i * w));
  }
  b.labels.reserve(rows.size());
  for (std::size_t r : rows) b.labels.push_back(ds.labels[r]);
  return b;
}

// Batches over a dataset for one epoch. Without a shuffle seed the storage
// order is kept; with one, the order is a permutation seeded by
// mix_seed(seed, epoch). The last partial batch is kept.
class BatchStream {
 public:
  BatchStream(const EncodedDataset& ds, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed = std::nullopt,
              std::uint64_t epoch = 0)
      : ds_(ds), batch_size_(batch_size) {
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (shuffle_seed) {
      Rng rng(mix_seed(*shuffle_seed, epoch));
      order_ = rng.permutation(ds.size());
    } else {
      order_.resize(ds.size());
      for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    }
  }

  std::size_t batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

  bool next(Batch& out) {
    if (pos_ >= order_.size()) return false;
    const std::size_t end = std::min(pos_ + batch_size_, order_.size());
    out = gather_batch(ds_, std::span<const std::size_t>(order_).subspan(pos_, end - pos_));
    pos_ = end;
    return true;
  }

  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const EncodedDataset& ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace barsctr::data
