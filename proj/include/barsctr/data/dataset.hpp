#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "barsctr/data/feature_map.hpp"
#include "barsctr/digest.hpp"

namespace barsctr::data {

struct FieldLayout {
  std::string name;
  FieldKind kind = FieldKind::categorical;
  std::uint32_t vocab_size = 0;
  std::uint16_t max_len = 0;  // 0 for scalar fields
  Pooling pooling = Pooling::mean;

  bool is_sequence() const { return kind == FieldKind::sequence; }
  std::size_t width() const { return is_sequence() ? max_len : 1; }
  bool operator==(const FieldLayout&) const = default;
};

inline std::vector<FieldLayout> layout_of(const FeatureMap& map) {
  std::vector<FieldLayout> out;
  for (const auto& f : map.fields) {
    out.push_back(FieldLayout{f.spec.name, f.spec.kind, f.size(),
                              static_cast<std::uint16_t>(f.spec.is_sequence() ? f.spec.max_len : 0), f.spec.pooling});
  }
  return out;
}

// Integer-encoded samples. columns[f] holds size() * width(f) indices, row
// major; sequence rows are padded with 0.
struct EncodedDataset {
  std::vector<FieldLayout> fields;
  std::vector<std::vector<std::uint32_t>> columns;
  std::vector<std::uint8_t> labels;
  std::string md5;
  std::string feature_map_digest;

  std::size_t size() const { return labels.size(); }
};

inline EncodedDataset encode_rows(const TokenTable& table, std::span<const std::size_t> rows, const FeatureMap& map) {
  if (map.fields.size() != table.fields.size()) {
    throw DataError("encode: table has " + std::to_string(table.fields.size()) + " fields, feature map has " +
                    std::to_string(map.fields.size()));
  }
  EncodedDataset ds;
  ds.fields = layout_of(map);
  ds.columns.resize(ds.fields.size());
  ds.feature_map_digest = map.digest();
  for (std::size_t f = 0; f < ds.fields.size(); ++f) {
    if (map.fields[f].spec.name != table.fields[f].name) {
      throw DataError("encode: field order mismatch at '" + table.fields[f].name + "'");
    }
    const TokenColumn& col = table.columns[f];
    std::vector<std::uint32_t> remap(col.dictionary.size());
    for (std::size_t id = 0; id < remap.size(); ++id) remap[id] = map.fields[f].encode(col.dictionary[id]);
    const std::size_t width = ds.fields[f].width();
    auto& out = ds.columns[f];
    out.assign(rows.size() * width, kPaddingIndex);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto items = table.row_items(f, rows[i]);
      const std::size_t n = std::min(items.size(), width);
      for (std::size_t k = 0; k < n; ++k) out[i * width + k] = remap[items[k]];
    }
  }
  ds.labels.reserve(rows.size());
  for (std::size_t r : rows) ds.labels.push_back(table.labels[r]);
  return ds;
}

namespace bars1 {

inline constexpr char kMagic[6] = {'B', 'A', 'R', 'S', '1', '\0'};
inline constexpr std::uint16_t kVersion = 1;

template <class T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("BARS1: truncated file");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace bars1

// Little-endian layout: magic "BARS1\0", u16 version, u16 field count, per
// field {u16 name length, name, u8 kind, u32 vocab size, u16 max_len}, u64
// sample count, row-major indices (one u32, or max_len u32 for sequences),
// then one u8 label per sample.
inline std::string serialize_bars1(const EncodedDataset& ds) {
  std::string out(bars1::kMagic, sizeof(bars1::kMagic));
  bars1::put<std::uint16_t>(out, bars1::kVersion);
  bars1::put<std::uint16_t>(out, static_cast<std::uint16_t>(ds.fields.size()));
  for (const auto& f : ds.fields) {
    bars1::put<std::uint16_t>(out, static_cast<std::uint16_t>(f.name.size()));
    out += f.name;
    bars1::put<std::uint8_t>(out, static_cast<std::uint8_t>(f.kind));
    bars1::put<std::uint32_t>(out, f.vocab_size);
    bars1::put<std::uint16_t>(out, f.max_len);
  }
  const std::size_t n = ds.size();
  bars1::put<std::uint64_t>(out, n);
  std::size_t row_width = 0;
  for (const auto& f : ds.fields) row_width += f.width();
  out.reserve(out.size() + n * (row_width * 4 + 1));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t f = 0; f < ds.fields.size(); ++f) {
      const std::size_t w = ds.fields[f].width();
      for (std::size_t k = 0; k < w; ++k) bars1::put<std::uint32_t>(out, ds.columns[f][r * w + k]);
    }
  }
  for (std::uint8_t y : ds.labels) bars1::put<std::uint8_t>(out, y);
  return out;
}

inline EncodedDataset deserialize_bars1(std::string_view bytes) {
  bars1::Reader in(bytes);
  if (in.take(sizeof(bars1::kMagic)) != std::string_view(bars1::kMagic, sizeof(bars1::kMagic))) {
    throw DataError("BARS1: bad magic");
  }
  if (const auto v = in.get<std::uint16_t>(); v != bars1::kVersion) {
    throw DataError("BARS1: unsupported version " + std::to_string(v));
  }
  EncodedDataset ds;
  const auto field_count = in.get<std::uint16_t>();
  for (std::size_t f = 0; f < field_count; ++f) {
    FieldLayout l;
    l.name = std::string(in.take(in.get<std::uint16_t>()));
    const auto kind = in.get<std::uint8_t>();
    if (kind > 2) throw DataError("BARS1: bad field kind " + std::to_string(kind));
    l.kind = static_cast<FieldKind>(kind);
    l.vocab_size = in.get<std::uint32_t>();
    l.max_len = in.get<std::uint16_t>();
    if (l.is_sequence() != (l.max_len > 0)) throw DataError("BARS1: field '" + l.name + "' has inconsistent max_len");
    ds.fields.push_back(std::move(l));
  }
  const auto n = in.get<std::uint64_t>();
  ds.columns.resize(ds.fields.size());
  for (std::size_t f = 0; f < ds.fields.size(); ++f) ds.columns[f].resize(n * ds.fields[f].width());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t f = 0; f < ds.fields.size(); ++f) {
      const std::size_t w = ds.fields[f].width();
      for (std::size_t k = 0; k < w; ++k) {
        const auto idx = in.get<std::uint32_t>();
        if (idx >= ds.fields[f].vocab_size) {
          throw DataError("BARS1: index " + std::to_string(idx) + " out of range in field '" + ds.fields[f].name + "'");
        }
        ds.columns[f][r * w + k] = idx;
      }
    }
  }
  ds.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto y = in.get<std::uint8_t>();
    if (y > 1) throw DataError("BARS1: label " + std::to_string(y) + " is not 0/1");
    ds.labels[r] = y;
  }
  if (!in.done()) throw DataError("BARS1: trailing bytes");
  ds.md5 = md5_hex(bytes);
  return ds;
}

// Writes the file and fills in ds.md5.
inline void write_bars1(const std::filesystem::path& path, EncodedDataset& ds) {
  const std::string bytes = serialize_bars1(ds);
  ds.md5 = md5_hex(bytes);
  write_file(path, bytes);
}

inline EncodedDataset read_bars1(const std::filesystem::path& path) { return deserialize_bars1(read_file(path)); }

}  // namespace barsctr::data
