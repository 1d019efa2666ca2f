#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "barsctr/bench/trials.hpp"

namespace barsctr::bench {

enum class ReportFormat { markdown, csv };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "md" || s == "markdown") return ReportFormat::markdown;
  if (s == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + s + "' (md or csv)");
}

struct LeaderboardRow {
  std::string model, setting;
  double logloss = 0.0, auc = 0.0;  // test split, raw
  std::size_t params = 0;
  std::size_t runs = 0;
  double epoch_seconds = 0.0;  // mean wall time per epoch
  std::size_t epochs = 0;
  std::string digest;
  std::uint64_t seed = 0;
};

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string format_logloss(double v) { return fixed(v * 100.0, 2); }
inline std::string format_auc(double v) { return fixed(v * 100.0, 2); }
inline std::string format_params(std::size_t n) { return fixed(static_cast<double>(n) / 1e6, 1) + "M"; }

// "0.4s", "12s", "18m", "2h33m"
inline std::string format_duration(double seconds) {
  if (seconds < 10.0) return fixed(seconds, 1) + "s";
  const long s = std::lround(seconds);
  if (s < 60) return std::to_string(s) + "s";
  if (s < 3600) return std::to_string(s / 60) + "m";
  return std::to_string(s / 3600) + "h" + std::to_string((s % 3600) / 60) + "m";
}

inline std::string format_time_epochs(double epoch_seconds, std::size_t epochs) {
  return format_duration(epoch_seconds) + " x " + std::to_string(epochs);
}

// Best completed trial per (model, setting) by its validation monitor; the
// row reports that trial's test metrics.
inline std::vector<LeaderboardRow> build_leaderboard(const std::vector<TrialRecord>& trials) {
  std::map<std::pair<std::string, std::string>, std::vector<TrialRecord>> groups;
  for (const auto& t : trials)
    if (t.ok()) groups[{t.experiment.model.model, t.experiment.setting}].push_back(t);
  std::vector<LeaderboardRow> rows;
  for (const auto& [key, group] : groups) {
    const TrialRecord best = *best_trial(group);
    LeaderboardRow r;
    r.model = key.first;
    r.setting = key.second;
    r.logloss = best.result.test_logloss;
    r.auc = best.result.test_auc;
    r.params = best.result.params;
    r.runs = group.size();
    r.epoch_seconds = best.result.mean_epoch_seconds();
    r.epochs = best.result.epochs;
    r.digest = best.digest;
    r.seed = best.result.seed;
    rows.push_back(r);
  }
  std::sort(rows.begin(), rows.end(), [](const LeaderboardRow& a, const LeaderboardRow& b) {
    if (a.auc != b.auc) return a.auc > b.auc;
    if (a.logloss != b.logloss) return a.logloss < b.logloss;
    if (a.model != b.model) return a.model < b.model;
    return a.setting < b.setting;
  });
  return rows;
}

inline std::vector<std::string> row_cells(const LeaderboardRow& r) {
  return {r.model,          r.setting,      format_logloss(r.logloss), format_auc(r.auc), format_params(r.params),
          std::to_string(r.runs), format_time_epochs(r.epoch_seconds, r.epochs)};
}

inline const std::vector<std::string>& leaderboard_header() {
  static const std::vector<std::string> h{"Model", "Setting", "Logloss(x10^-2)", "AUC(%)", "#Params", "#Runs", "Time x Epochs"};
  return h;
}

inline std::string render_leaderboard(const std::vector<LeaderboardRow>& rows, ReportFormat format) {
  std::string out;
  const auto& header = leaderboard_header();
  if (format == ReportFormat::markdown) {
    auto line = [&](const std::vector<std::string>& cells) {
      out += "|";
      for (const auto& c : cells) out += " " + c + " |";
      out += "\n";
    };
    line(header);
    out += "|";
    for (std::size_t i = 0; i < header.size(); ++i) out += i < 2 ? " --- |" : " ---: |";
    out += "\n";
    for (const auto& r : rows) line(row_cells(r));
    return out;
  }
  auto csv_cell = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  auto line = [&](std::vector<std::string> cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_cell(cells[i]);
    out += "\n";
  };
  auto h = header;
  h.insert(h.end(), {"Digest", "Seed"});
  line(h);
  for (const auto& r : rows) {
    auto cells = row_cells(r);
    cells.insert(cells.end(), {r.digest, std::to_string(r.seed)});
    line(cells);
  }
  return out;
}

// Report text for a set of trials; at least one must have completed.
inline std::string emit_leaderboard(const std::vector<TrialRecord>& trials, ReportFormat format) {
  auto rows = build_leaderboard(trials);
  if (rows.empty()) throw DataError("no completed trials to report");
  return render_leaderboard(rows, format);
}

}  // namespace barsctr::bench
