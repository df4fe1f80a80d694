#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "travelsat/dataset.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("travelsat_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline travelsat::Dataset synthetic(std::size_t n, std::uint64_t seed = 1, double noise = 0.5,
                                    const std::string& rule = "linear") {
  travelsat::SynthesisOptions o;
  o.n = n;
  o.seed = seed;
  o.noise_sd = noise;
  o.label_rule = rule;
  return travelsat::synthesize(travelsat::VariableSchema::default_schema(), travelsat::Marginals::table2(), o);
}

}  // namespace testutil
