#pragma once

#include <filesystem>

#include "barsctr/data/pipeline.hpp"
#include "barsctr/synth/generator.hpp"

namespace fixture {

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("barsctr-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// synth -> preprocess -> split under `dir`; returns the encoded splits.
inline barsctr::data::SplitTriple synthetic_splits(const barsctr::synth::SynthSpec& spec, const std::filesystem::path& dir) {
  using namespace barsctr;
  synth::write_synthetic(spec, dir / "raw");
  data::preprocess_files(data::recipe_from_json(load_json_file(dir / "raw" / "recipe.json")), dir / "raw" / "data.csv",
                         dir / "data");
  return data::prepare_splits(dir / "data");
}

}  // namespace fixture
