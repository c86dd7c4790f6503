#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "nerkd/corpus.hpp"

namespace nerkd::testing {

inline std::string data_path(const std::string& name) {
  return std::string(NERKD_TEST_DATA) + "/" + name;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<Sentence> load_fixture(const std::string& name, Source source) {
  return parse_conll(slurp(data_path(name)), {TagScheme::iob2, source, default_labels()});
}

inline std::vector<Sentence> train_fixture() {
  return load_fixture("conll_train_50.conll", Source::conll_train);
}

inline std::vector<Sentence> test_fixture() {
  return load_fixture("conll_test_20.conll", Source::conll_test);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("nerkd-test-" + name + "-" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace nerkd::testing
