#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "barsctr/digest.hpp"
#include "barsctr/error.hpp"
#include "barsctr/rng.hpp"

namespace barsctr::data {

struct SplitIndices {
  std::vector<std::size_t> train, validation, test;
  std::uint64_t seed = 0;
  std::array<std::uint32_t, 3> ratios{8, 1, 1};

  const std::vector<std::size_t>& part(std::size_t k) const { return k == 0 ? train : k == 1 ? validation : test; }
};

// round(n * num / den) with halves rounded up, in exact integer arithmetic.
inline std::size_t round_share(std::size_t n, std::uint64_t num, std::uint64_t den) {
  return static_cast<std::size_t>((2 * static_cast<std::uint64_t>(n) * num + den) / (2 * den));
}

// Seeded permutation of 0..n-1, cut by prefix: train gets round(r0/S * n),
// validation round(r1/S * n), test the rest.
inline SplitIndices split_dataset(std::size_t n, std::uint64_t seed, std::array<std::uint32_t, 3> ratios = {8, 1, 1}) {
  if (n < 10) throw DataError("split_dataset: need at least 10 samples, got " + std::to_string(n));
  const std::uint64_t total = std::uint64_t{ratios[0]} + ratios[1] + ratios[2];
  if (total == 0) throw ConfigError("split_dataset: ratios sum to zero");
  const std::size_t n_train = round_share(n, ratios[0], total);
  const std::size_t n_val = std::min(round_share(n, ratios[1], total), n - n_train);

  Rng rng(seed);
  const auto perm = rng.permutation(n);
  SplitIndices s;
  s.seed = seed;
  s.ratios = ratios;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.validation.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test.assign(perm.begin() + n_train + n_val, perm.end());
  return s;
}

// md5 over the index list as little-endian u64 values.
inline std::string partition_digest(const std::vector<std::size_t>& indices) {
  std::string bytes;
  bytes.reserve(indices.size() * 8);
  for (std::size_t v : indices)
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  return md5_hex(bytes);
}

}  // namespace barsctr::data
