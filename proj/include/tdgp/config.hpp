#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tdgp/dgp.hpp"
#include "tdgp/postprocess.hpp"
#include "tdgp/preprocess.hpp"
#include "tdgp/synthgen.hpp"

namespace tdgp {

// Flat `key = value` configuration (UTF-8, '#' comments). Every default named
// by the pipeline modules has a key here; unknown keys are rejected and the
// full key set is echoed into reports and checkpoints.
class RunConfig {
 public:
  static RunConfig defaults();
  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_text(const std::string& text);

  void set(const std::string& key, const std::string& value);

  double number(const std::string& key) const;
  long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  const std::string& raw(const std::string& key) const;

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }
  void override_seed(std::uint64_t seed);

  // canonical text (registry order), used for reports and checkpoint echo
  std::string echo() const;

  DgpArchitecture architecture(int input_dim) const;
  TrainConfig train_config() const;
  PreprocessConfig preprocess_config() const;
  LognormalKernel2D postprocess_kernel() const;
  SynthConfig synth_config() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace tdgp
