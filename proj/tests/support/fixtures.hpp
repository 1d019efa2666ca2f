#pragma once

#include <string>

#include "barsctr/data/dataset.hpp"

namespace fixture {

using barsctr::data::FieldKind;
using barsctr::data::FieldLayout;

inline FieldLayout cat(const std::string& name, std::uint32_t vocab) {
  return FieldLayout{name, FieldKind::categorical, vocab, 0, barsctr::data::Pooling::mean};
}

inline FieldLayout seq(const std::string& name, std::uint32_t vocab, std::uint16_t max_len,
                       barsctr::data::Pooling pooling = barsctr::data::Pooling::mean) {
  return FieldLayout{name, FieldKind::sequence, vocab, max_len, pooling};
}

}  // namespace fixture
