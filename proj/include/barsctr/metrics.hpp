#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "barsctr/error.hpp"

namespace barsctr::metrics {

inline constexpr double kProbClamp = 1e-7;

struct EvalResult {
  double auc = 0.0;
  double logloss = 0.0;
  std::size_t sample_count = 0;
};

namespace detail {

template <class Label>
void check_inputs(std::string_view what, std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw ContractError(std::string(what) + ": " + std::to_string(scores.size()) + " scores for " +
                        std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw ContractError(std::string(what) + ": empty input");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericError(std::string(what) + ": non-finite score at index " + std::to_string(i));
    if (labels[i] != 0 && labels[i] != 1) throw ContractError(std::string(what) + ": label at index " + std::to_string(i) + " is not 0/1");
  }
}

}  // namespace detail

// Exact numerator and denominator of the tie-aware AUC, both doubled so that
// half credits stay integral: AUC = twice_wins / (2 * pos * neg).
struct AucCounts {
  std::uint64_t twice_wins = 0;
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;

  double value() const { return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives)); }
};

// Rank formulation: sort once, give tied groups the average rank, and sum
// the ranks of positives. With doubled ranks everything stays in integers.
template <class Label>
AucCounts auc_counts(std::span<const double> scores, std::span<const Label> labels) {
  detail::check_inputs("auc", scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  AucCounts c;
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos_in_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      pos_in_group += labels[order[j]] ? 1 : 0;
      ++j;
    }
    // 1-based ranks i+1..j average to (i+1+j)/2; doubled: i+1+j.
    twice_rank_sum += pos_in_group * (i + 1 + j);
    c.positives += pos_in_group;
    i = j;
  }
  c.negatives = scores.size() - c.positives;
  if (c.positives == 0 || c.negatives == 0) {
    throw UndefinedMetricError("auc: needs both classes, got " + std::to_string(c.positives) + " positives and " +
                               std::to_string(c.negatives) + " negatives");
  }
  // Sum of positive ranks minus P(P+1)/2 counts wins; doubled throughout.
  c.twice_wins = twice_rank_sum - c.positives * (c.positives + 1);
  return c;
}

template <class Label>
double auc(std::span<const double> scores, std::span<const Label> labels) {
  return auc_counts(scores, labels).value();
}

inline double auc(const std::vector<double>& scores, const std::vector<double>& labels) {
  return auc<double>(std::span<const double>(scores), std::span<const double>(labels));
}

inline double auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  return auc<std::uint8_t>(std::span<const double>(scores), std::span<const std::uint8_t>(labels));
}

// Mean binary cross-entropy. With input_is_logit the softplus form is used;
// otherwise probabilities are clamped to [1e-7, 1 - 1e-7].
template <class Label>
double logloss(std::span<const double> values, std::span<const Label> labels, bool input_is_logit) {
  detail::check_inputs("logloss", values, labels);
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double y = labels[i] ? 1.0 : 0.0;
    if (input_is_logit) {
      const double z = values[i];
      // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
      total += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - y * z;
    } else {
      const double p = std::clamp(values[i], kProbClamp, 1.0 - kProbClamp);
      total += -(y * std::log(p) + (1.0 - y) * std::log1p(-p));
    }
  }
  return total / static_cast<double>(values.size());
}

inline double logloss(const std::vector<double>& values, const std::vector<double>& labels, bool input_is_logit) {
  return logloss<double>(std::span<const double>(values), std::span<const double>(labels), input_is_logit);
}

inline double logloss(const std::vector<double>& values, const std::vector<std::uint8_t>& labels, bool input_is_logit) {
  return logloss<std::uint8_t>(std::span<const double>(values), std::span<const std::uint8_t>(labels), input_is_logit);
}

template <class Label>
EvalResult evaluate_logits(std::span<const double> logits, std::span<const Label> labels) {
  EvalResult r;
  r.sample_count = logits.size();
  r.logloss = logloss(logits, labels, true);
  r.auc = auc(logits, labels);
  return r;
}

inline EvalResult evaluate_logits(const std::vector<double>& logits, const std::vector<std::uint8_t>& labels) {
  return evaluate_logits<std::uint8_t>(std::span<const double>(logits), std::span<const std::uint8_t>(labels));
}

}  // namespace barsctr::metrics
