#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "tnpcfg/parameterizer.hpp"
#include "tnpcfg/trainer.hpp"

namespace tnpcfg::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a config file can set. Defaults are the published settings:
/// p = 500 with n = p / 2, the rank rule for d, k = 256, Adam with
/// lr 0.001 and betas (0.75, 0.999), batches of 4, 10 epochs, 4 seeds.
struct Config {
  ModelConfig model;
  /// Zero means derived: n = p / 2 and d from the rank rule.
  std::size_t n = 0;
  std::size_t d = 0;
  TrainConfig train;

  std::filesystem::path train_path;
  std::filesystem::path dev_path;
  std::filesystem::path test_path;
  std::size_t vocab_size = 10000;
  /// Training sentences longer than this are dropped; 0 keeps all.
  std::size_t max_length = 0;
  bool strip_punctuation = true;

  std::size_t top_k = 30;
  std::size_t top_labels = 7;

  Config();

  /// Model sizes for a vocabulary of q words.
  ModelConfig resolve_model(std::size_t q) const;
  /// Every key with its resolved value, as "section.key".
  std::map<std::string, std::string> snapshot() const;
};

/// Reads a flat INI file with [model], [train], [data] and [eval] sections.
/// Unknown keys and malformed values throw ConfigError naming the key.
/// Relative data paths are taken relative to the config file.
Config load_config(const std::filesystem::path& path);

/// Applies one "section.key=value" setting; used for files and overrides.
void set_key(Config& config, const std::string& key, const std::string& value);

}  // namespace tnpcfg::cli
