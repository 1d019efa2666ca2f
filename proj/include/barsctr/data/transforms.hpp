#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "barsctr/error.hpp"

namespace barsctr::data {

inline constexpr std::string_view kMissingToken = "<MISSING>";

enum class NumericTransform {
  none,                       // raw text is the token
  log_squared_floor,          // x > 2 -> floor((ln x)^2), 0 <= x <= 2 -> floor(x)
  log2_squared_floor,         // same with log base 2
  log_squared_floor_collapse  // x > 2 -> floor((ln x)^2), 0 <= x <= 2 -> "1"
};

// Empty text is a missing value; anything else must parse fully as a number.
inline std::optional<double> parse_numeric(std::string_view text, std::size_t row, const std::string& field) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw ParseError(row, field, "not a number: '" + std::string(text) + "'");
  }
  return value;
}

inline std::string discretize_numeric(std::optional<double> x,
                                      NumericTransform transform = NumericTransform::log_squared_floor) {
  if (!x || *x < 0.0) return std::string(kMissingToken);
  const double v = *x;
  if (v <= 2.0) {
    if (transform == NumericTransform::log_squared_floor_collapse) return "1";
    return std::to_string(static_cast<long long>(std::floor(v)));
  }
  const double lg = transform == NumericTransform::log2_squared_floor ? std::log2(v) : std::log(v);
  return std::to_string(static_cast<long long>(std::floor(lg * lg)));
}

enum class TimestampPart { hour, weekday, is_weekend };

struct TimestampTokens {
  std::string hour;        // "00".."23"
  std::string weekday;     // "0".."6", Monday = 0
  std::string is_weekend;  // "1" iff Saturday or Sunday
};

// Parses `raw` under a strftime-like layout built from %Y %y %m %d %H and
// literal characters (Avazu uses "%y%m%d%H"). Throws DataError on mismatch.
inline TimestampTokens expand_timestamp(std::string_view raw, std::string_view layout) {
  int year = -1, month = -1, day = -1, hour = 0;
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> DataError {
    return DataError("timestamp '" + std::string(raw) + "' does not match layout '" + std::string(layout) +
                     "': " + why);
  };
  auto digits = [&](std::size_t count) {
    if (pos + count > raw.size()) throw fail("too short");
    int v = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const char c = raw[pos + i];
      if (c < '0' || c > '9') throw fail("expected a digit");
      v = v * 10 + (c - '0');
    }
    pos += count;
    return v;
  };
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i] == '%' && i + 1 < layout.size()) {
      switch (layout[++i]) {
        case 'Y': year = digits(4); break;
        case 'y': year = 2000 + digits(2); break;
        case 'm': month = digits(2); break;
        case 'd': day = digits(2); break;
        case 'H': hour = digits(2); break;
        default: throw ConfigError("timestamp layout: unsupported directive %" + std::string(1, layout[i]));
      }
    } else {
      if (pos >= raw.size() || raw[pos] != layout[i]) throw fail("literal mismatch");
      ++pos;
    }
  }
  if (pos != raw.size()) throw fail("trailing characters");
  if (year < 0 || month < 0 || day < 0) throw ConfigError("timestamp layout must contain year, month and day");
  if (hour > 23) throw fail("hour out of range");
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) throw fail("not a calendar date");
  const unsigned iso = std::chrono::weekday{sys_days{ymd}}.iso_encoding();  // Monday = 1
  const unsigned wd = iso - 1;
  TimestampTokens t;
  t.hour = (hour < 10 ? "0" : "") + std::to_string(hour);
  t.weekday = std::to_string(wd);
  t.is_weekend = wd >= 5 ? "1" : "0";
  return t;
}

inline const std::string& timestamp_part(const TimestampTokens& t, TimestampPart part) {
  switch (part) {
    case TimestampPart::hour: return t.hour;
    case TimestampPart::weekday: return t.weekday;
    case TimestampPart::is_weekend: return t.is_weekend;
  }
  return t.hour;
}

}  // namespace barsctr::data
