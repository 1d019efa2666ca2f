#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "barsctr/data/csv.hpp"
#include "barsctr/data/recipe.hpp"
#include "barsctr/data/transforms.hpp"
#include "barsctr/digest.hpp"
#include "barsctr/error.hpp"
#include "barsctr/json_util.hpp"
#include "barsctr/metrics.hpp"
#include "barsctr/rng.hpp"

// Synthetic click logs drawn from a known click model, so the best achievable
// logloss and AUC on the emitted sample are known exactly.
namespace barsctr::synth {

namespace fs = std::filesystem;

enum class GroundTruth { constant, linear, pairwise_fm, third_order };

inline std::string to_string(GroundTruth g) {
  switch (g) {
    case GroundTruth::constant: return "constant";
    case GroundTruth::linear: return "linear";
    case GroundTruth::pairwise_fm: return "pairwise-fm";
    case GroundTruth::third_order: return "third-order";
  }
  return "?";
}

inline GroundTruth ground_truth_from(const std::string& s) {
  if (s == "constant") return GroundTruth::constant;
  if (s == "linear") return GroundTruth::linear;
  if (s == "pairwise-fm") return GroundTruth::pairwise_fm;
  if (s == "third-order") return GroundTruth::third_order;
  throw ConfigError("unknown ground_truth '" + s + "'");
}

struct SequenceSpec {
  std::uint32_t vocab = 10;
  std::uint16_t max_len = 3;
};

struct SynthSpec {
  std::vector<std::uint32_t> categorical_vocab = {20, 30, 50, 10, 40, 25};
  std::size_t numeric_fields = 0;  // integer counts in [0, numeric_max]
  std::uint32_t numeric_max = 1000;
  std::vector<SequenceSpec> sequences;
  GroundTruth ground_truth = GroundTruth::pairwise_fm;
  std::size_t latent_dim = 4;
  double linear_scale = 0.3;       // std of first-order weights
  double interaction_scale = 0.6;  // std of latent vector entries
  double positive_rate = 0.25;     // target; the bias is calibrated to it
  double constant_p = 0.5;         // constant ground truth only
  std::size_t samples = 10000;
  std::uint64_t seed = 1;
};

inline void validate(const SynthSpec& s) {
  if (s.categorical_vocab.empty() && s.numeric_fields == 0 && s.sequences.empty()) throw ConfigError("synth: no fields");
  for (auto v : s.categorical_vocab)
    if (v == 0) throw ConfigError("synth: categorical vocab must be at least 1");
  for (const auto& q : s.sequences)
    if (q.vocab == 0 || q.max_len == 0) throw ConfigError("synth: sequence vocab and max_len must be at least 1");
  if (s.samples == 0) throw ConfigError("synth: samples must be at least 1");
  if (s.latent_dim == 0) throw ConfigError("synth: latent_dim must be at least 1");
  if (!(s.positive_rate > 0.0 && s.positive_rate < 1.0)) throw ConfigError("synth: positive_rate must be in (0, 1)");
  if (!(s.constant_p > 0.0 && s.constant_p < 1.0)) throw ConfigError("synth: constant_p must be in (0, 1)");
  if (!(s.linear_scale >= 0.0) || !(s.interaction_scale >= 0.0)) throw ConfigError("synth: scales must be non-negative");
  const bool pairwise = s.ground_truth == GroundTruth::pairwise_fm || s.ground_truth == GroundTruth::third_order;
  if (pairwise && s.categorical_vocab.size() < 2) throw ConfigError("synth: interactions need two categorical fields");
}

inline json to_json(const SynthSpec& s) {
  json seqs = json::array();
  for (const auto& q : s.sequences) seqs.push_back({{"vocab", q.vocab}, {"max_len", q.max_len}});
  return json{{"categorical_vocab", s.categorical_vocab},
              {"numeric_fields", s.numeric_fields},
              {"numeric_max", s.numeric_max},
              {"sequences", seqs},
              {"ground_truth", to_string(s.ground_truth)},
              {"latent_dim", s.latent_dim},
              {"linear_scale", s.linear_scale},
              {"interaction_scale", s.interaction_scale},
              {"positive_rate", s.positive_rate},
              {"constant_p", s.constant_p},
              {"samples", s.samples},
              {"seed", s.seed}};
}

inline SynthSpec synth_spec_from_json(const json& j) {
  require_known_keys(j,
                     {"categorical_vocab", "numeric_fields", "numeric_max", "sequences", "ground_truth", "latent_dim",
                      "linear_scale", "interaction_scale", "positive_rate", "constant_p", "samples", "seed"},
                     "synth");
  SynthSpec s;
  const char* ctx = "synth";
  s.categorical_vocab = get_or(j, "categorical_vocab", s.categorical_vocab, ctx);
  s.numeric_fields = get_or(j, "numeric_fields", s.numeric_fields, ctx);
  s.numeric_max = get_or(j, "numeric_max", s.numeric_max, ctx);
  if (j.contains("sequences")) {
    s.sequences.clear();
    for (const auto& q : j["sequences"]) {
      require_known_keys(q, {"vocab", "max_len"}, "synth.sequences");
      s.sequences.push_back({get_required<std::uint32_t>(q, "vocab", ctx), get_required<std::uint16_t>(q, "max_len", ctx)});
    }
  }
  s.ground_truth = ground_truth_from(get_or<std::string>(j, "ground_truth", to_string(s.ground_truth), ctx));
  s.latent_dim = get_or(j, "latent_dim", s.latent_dim, ctx);
  s.linear_scale = get_or(j, "linear_scale", s.linear_scale, ctx);
  s.interaction_scale = get_or(j, "interaction_scale", s.interaction_scale, ctx);
  s.positive_rate = get_or(j, "positive_rate", s.positive_rate, ctx);
  s.constant_p = get_or(j, "constant_p", s.constant_p, ctx);
  s.samples = get_or(j, "samples", s.samples, ctx);
  s.seed = get_or(j, "seed", s.seed, ctx);
  validate(s);
  return s;
}

inline std::string categorical_name(std::size_t f) { return "c" + std::to_string(f); }
inline std::string numeric_name(std::size_t f) { return "n" + std::to_string(f); }
inline std::string sequence_name(std::size_t f) { return "s" + std::to_string(f); }

// Recipe that ingests the generated CSV.
inline data::DatasetRecipe recipe_for(const SynthSpec& s) {
  data::DatasetRecipe r;
  r.dataset_id = "synth-" + to_string(s.ground_truth) + "-" + std::to_string(s.seed);
  for (std::size_t f = 0; f < s.categorical_vocab.size(); ++f) {
    data::FieldSpec fs;
    fs.name = categorical_name(f);
    r.fields.push_back(fs);
  }
  for (std::size_t f = 0; f < s.numeric_fields; ++f) {
    data::FieldSpec fs;
    fs.name = numeric_name(f);
    fs.kind = data::FieldKind::numeric;
    fs.numeric_transform = data::NumericTransform::log_squared_floor;
    r.fields.push_back(fs);
  }
  for (std::size_t f = 0; f < s.sequences.size(); ++f) {
    data::FieldSpec fs;
    fs.name = sequence_name(f);
    fs.kind = data::FieldKind::sequence;
    fs.max_len = s.sequences[f].max_len;
    r.fields.push_back(fs);
  }
  return r;
}

struct OracleRecord {
  std::string ground_truth;
  std::size_t samples = 0;
  double bias = 0.0;
  double positive_rate_target = 0.0;
  double positive_rate_expected = 0.0;  // mean true p
  double positive_rate_realized = 0.0;
  double oracle_logloss = 0.0;
  std::optional<double> oracle_auc;  // undefined for a single-class sample

  json to_json() const {
    return json{{"ground_truth", ground_truth},
                {"samples", samples},
                {"bias", bias},
                {"positive_rate_target", positive_rate_target},
                {"positive_rate_expected", positive_rate_expected},
                {"positive_rate_realized", positive_rate_realized},
                {"oracle_logloss", oracle_logloss},
                {"oracle_auc", oracle_auc ? json(*oracle_auc) : json(nullptr)}};
  }
};

struct Generated {
  std::string csv;
  OracleRecord oracle;
  std::vector<double> probabilities;
  std::vector<std::uint8_t> labels;
};

namespace detail {

inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

struct Truth {
  std::vector<std::vector<double>> cat_w;                        // [field][value]
  std::vector<std::vector<std::vector<double>>> cat_v, cat_u;    // [field][value][latent]
  std::vector<std::vector<double>> num_w;                        // [field][bucket]
  std::vector<std::vector<double>> seq_w;                        // [field][item]
};

inline std::vector<double> draw(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, scale);
  return v;
}

inline Truth draw_truth(const SynthSpec& s) {
  Rng rng(mix_seed(s.seed, 1));
  Truth t;
  const bool linear = s.ground_truth != GroundTruth::constant;
  const bool pairwise = s.ground_truth == GroundTruth::pairwise_fm || s.ground_truth == GroundTruth::third_order;
  for (auto vocab : s.categorical_vocab) {
    t.cat_w.push_back(linear ? draw(rng, vocab, s.linear_scale) : std::vector<double>(vocab, 0.0));
    std::vector<std::vector<double>> v, u;
    for (std::uint32_t k = 0; k < vocab; ++k) {
      if (pairwise) v.push_back(draw(rng, s.latent_dim, s.interaction_scale));
      if (s.ground_truth == GroundTruth::third_order) u.push_back(draw(rng, s.latent_dim, s.interaction_scale));
    }
    t.cat_v.push_back(std::move(v));
    t.cat_u.push_back(std::move(u));
  }
  for (std::size_t f = 0; f < s.numeric_fields; ++f) t.num_w.push_back(linear ? draw(rng, 128, s.linear_scale) : std::vector<double>(128, 0.0));
  for (const auto& q : s.sequences) t.seq_w.push_back(linear ? draw(rng, q.vocab, s.linear_scale) : std::vector<double>(q.vocab, 0.0));
  return t;
}

// Bias b with mean sigmoid(b + score) == target, by bisection.
inline double calibrate_bias(const std::vector<double>& scores, double target) {
  double lo = -60.0, hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double m = 0;
    for (double s : scores) m += sigmoid(mid + s);
    m /= static_cast<double>(scores.size());
    (m < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Features, true click probabilities and labels, with the CSV rendering.
// Streams: ground truth from mix(seed, 1), features from mix(seed, 2),
// labels from mix(seed, 3).
inline Generated generate(const SynthSpec& spec) {
  validate(spec);
  const detail::Truth truth = detail::draw_truth(spec);
  Rng feat(mix_seed(spec.seed, 2));
  const std::size_t nc = spec.categorical_vocab.size(), nn = spec.numeric_fields, ns = spec.sequences.size();

  std::vector<std::vector<std::string>> cells(spec.samples);
  std::vector<double> scores(spec.samples, 0.0);
  std::vector<std::uint32_t> cat(nc);
  for (std::size_t r = 0; r < spec.samples; ++r) {
    auto& row = cells[r];
    double score = 0.0;
    for (std::size_t f = 0; f < nc; ++f) {
      cat[f] = static_cast<std::uint32_t>(feat.below(spec.categorical_vocab[f]));
      row.push_back("v" + std::to_string(cat[f]));
      score += truth.cat_w[f][cat[f]];
    }
    if (spec.ground_truth == GroundTruth::pairwise_fm || spec.ground_truth == GroundTruth::third_order) {
      for (std::size_t i = 0; i < nc; ++i)
        for (std::size_t j = i + 1; j < nc; ++j)
          for (std::size_t t = 0; t < spec.latent_dim; ++t) score += truth.cat_v[i][cat[i]][t] * truth.cat_v[j][cat[j]][t];
    }
    if (spec.ground_truth == GroundTruth::third_order) {
      for (std::size_t i = 0; i < nc; ++i)
        for (std::size_t j = i + 1; j < nc; ++j)
          for (std::size_t k = j + 1; k < nc; ++k)
            for (std::size_t t = 0; t < spec.latent_dim; ++t)
              score += truth.cat_u[i][cat[i]][t] * truth.cat_u[j][cat[j]][t] * truth.cat_u[k][cat[k]][t];
    }
    for (std::size_t f = 0; f < nn; ++f) {
      const auto x = static_cast<double>(feat.below(spec.numeric_max + 1));
      row.push_back(std::to_string(static_cast<std::uint64_t>(x)));
      const auto bucket = static_cast<std::size_t>(std::stoul(data::discretize_numeric(x)));
      score += truth.num_w[f][std::min<std::size_t>(bucket, 127)];
    }
    for (std::size_t f = 0; f < ns; ++f) {
      const auto& q = spec.sequences[f];
      const std::size_t len = feat.below(q.max_len + 1u);
      std::string cell;
      double acc = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const auto item = static_cast<std::uint32_t>(feat.below(q.vocab));
        cell += (k ? "^" : "") + ("i" + std::to_string(item));
        acc += truth.seq_w[f][item];
      }
      if (len > 0) score += acc / static_cast<double>(len);
      row.push_back(cell);
    }
    scores[r] = score;
  }

  Generated g;
  OracleRecord& o = g.oracle;
  o.ground_truth = to_string(spec.ground_truth);
  o.samples = spec.samples;
  o.positive_rate_target = spec.ground_truth == GroundTruth::constant ? spec.constant_p : spec.positive_rate;
  if (spec.ground_truth != GroundTruth::constant) o.bias = detail::calibrate_bias(scores, spec.positive_rate);

  Rng lab(mix_seed(spec.seed, 3));
  g.probabilities.resize(spec.samples);
  g.labels.resize(spec.samples);
  double ll = 0.0, p_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t r = 0; r < spec.samples; ++r) {
    const double p = spec.ground_truth == GroundTruth::constant ? spec.constant_p : detail::sigmoid(o.bias + scores[r]);
    const bool y = lab.uniform() < p;
    g.probabilities[r] = p;
    g.labels[r] = y ? 1 : 0;
    positives += y;
    p_sum += p;
    ll += y ? -std::log(p) : -std::log1p(-p);
  }
  const double n = static_cast<double>(spec.samples);
  o.oracle_logloss = ll / n;
  o.positive_rate_expected = p_sum / n;
  o.positive_rate_realized = static_cast<double>(positives) / n;
  if (positives > 0 && positives < spec.samples) o.oracle_auc = metrics::auc(g.probabilities, g.labels);

  std::ostringstream csv;
  std::vector<std::string> header{"label"};
  for (std::size_t f = 0; f < nc; ++f) header.push_back(categorical_name(f));
  for (std::size_t f = 0; f < nn; ++f) header.push_back(numeric_name(f));
  for (std::size_t f = 0; f < ns; ++f) header.push_back(sequence_name(f));
  data::write_csv_row(csv, header);
  for (std::size_t r = 0; r < spec.samples; ++r) {
    std::vector<std::string> row{g.labels[r] ? "1" : "0"};
    row.insert(row.end(), cells[r].begin(), cells[r].end());
    data::write_csv_row(csv, row);
  }
  g.csv = csv.str();
  return g;
}

// Writes data.csv, recipe.json and oracle.json; returns the oracle record
// as written (with spec and csv md5).
inline json write_synthetic(const SynthSpec& spec, const fs::path& out_dir) {
  const Generated g = generate(spec);
  fs::create_directories(out_dir);
  write_file(out_dir / "data.csv", g.csv);
  save_json_file(out_dir / "recipe.json", data::to_json(recipe_for(spec)));
  json oracle = g.oracle.to_json();
  oracle["spec"] = to_json(spec);
  oracle["prng"] = kPrngId;
  oracle["csv_md5"] = md5_hex(g.csv);
  save_json_file(out_dir / "oracle.json", oracle);
  return oracle;
}

}  // namespace barsctr::synth
