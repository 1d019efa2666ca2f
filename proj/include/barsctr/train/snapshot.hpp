#pragma once

#include <bit>
#include <filesystem>
#include <string>
#include <vector>

#include "barsctr/data/dataset.hpp"
#include "barsctr/digest.hpp"
#include "barsctr/json_util.hpp"
#include "barsctr/models/model.hpp"

namespace barsctr::train {

namespace fs = std::filesystem;

// Copy of every parameter value plus batch-norm running statistics.
struct ModelSnapshot {
  std::vector<std::string> names;
  std::vector<ndgrad::Shape> shapes;
  std::vector<std::vector<double>> values;
  std::vector<ndgrad::BatchNormState> batch_norm;
};

inline ModelSnapshot capture(const models::CtrModel& model) {
  ModelSnapshot s;
  for (const auto& p : model.parameters()) {
    s.names.push_back(p.name);
    s.shapes.push_back(p.tensor.shape());
    s.values.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  }
  s.batch_norm = model.batch_norm_states();
  return s;
}

inline void restore(models::CtrModel& model, const ModelSnapshot& s) {
  auto& params = model.parameters();
  if (params.size() != s.names.size()) throw StateError("snapshot holds a different parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != s.names[i] || params[i].tensor.shape() != s.shapes[i]) {
      throw StateError("snapshot parameter '" + s.names[i] + "' does not match model parameter '" + params[i].name + "'");
    }
    std::copy(s.values[i].begin(), s.values[i].end(), params[i].tensor.mutable_values().begin());
  }
  if (model.batch_norm_states().size() != s.batch_norm.size()) throw StateError("snapshot batch-norm layers differ");
  model.batch_norm_states() = s.batch_norm;
}

namespace detail {

inline void put_doubles(std::string& out, const std::vector<double>& v) {
  for (double x : v) data::bars1::put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
}

inline std::vector<double> get_doubles(data::bars1::Reader& r, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = std::bit_cast<double>(r.get<std::uint64_t>());
  return v;
}

}  // namespace detail

// params.bin holds little-endian doubles; snapshot.json lists names, shapes
// and offsets (in doubles) plus the md5 of params.bin.
inline json save_snapshot(const fs::path& dir, const ModelSnapshot& s) {
  fs::create_directories(dir);
  std::string bytes;
  json params = json::array(), bn = json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < s.names.size(); ++i) {
    params.push_back({{"name", s.names[i]}, {"shape", s.shapes[i]}, {"offset", offset}});
    detail::put_doubles(bytes, s.values[i]);
    offset += s.values[i].size();
  }
  for (const auto& st : s.batch_norm) {
    bn.push_back({{"features", st.running_mean.size()}, {"offset", offset}, {"momentum", st.momentum}, {"epsilon", st.epsilon}});
    detail::put_doubles(bytes, st.running_mean);
    detail::put_doubles(bytes, st.running_var);
    offset += 2 * st.running_mean.size();
  }
  write_file(dir / "params.bin", bytes);
  json manifest{{"format", "barsctr-snapshot/v1"},
                {"byte_order", "little"},
                {"params", params},
                {"batch_norm", bn},
                {"doubles", offset},
                {"md5", md5_hex(bytes)}};
  save_json_file(dir / "snapshot.json", manifest);
  return manifest;
}

inline ModelSnapshot load_snapshot(const fs::path& dir) {
  const json manifest = load_json_file(dir / "snapshot.json");
  const std::string bytes = read_file(dir / "params.bin");
  if (md5_hex(bytes) != manifest.at("md5").get<std::string>()) throw DataError("params.bin does not match its md5");
  data::bars1::Reader r(bytes);
  ModelSnapshot s;
  for (const auto& p : manifest.at("params")) {
    s.names.push_back(p.at("name").get<std::string>());
    s.shapes.push_back(p.at("shape").get<ndgrad::Shape>());
    s.values.push_back(detail::get_doubles(r, ndgrad::shape_numel(s.shapes.back())));
  }
  for (const auto& b : manifest.at("batch_norm")) {
    ndgrad::BatchNormState st(b.at("features").get<std::size_t>());
    st.momentum = b.at("momentum").get<double>();
    st.epsilon = b.at("epsilon").get<double>();
    st.running_mean = detail::get_doubles(r, st.running_mean.size());
    st.running_var = detail::get_doubles(r, st.running_var.size());
    s.batch_norm.push_back(std::move(st));
  }
  if (!r.done()) throw DataError("params.bin has trailing bytes");
  return s;
}

}  // namespace barsctr::train
