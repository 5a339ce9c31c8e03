#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tnpcfg::cli {

std::string sha256_hex(const std::string& bytes);
std::string file_digest(const std::filesystem::path& path);

/// Reproducibility record for one command invocation. The run directory is
/// named after a digest of everything that determines the outputs.
class RunManifest {
 public:
  RunManifest(std::string command, std::filesystem::path root);

  void set(const std::string& key, const std::string& value) { settings_[key] = value; }
  void set_all(const std::map<std::string, std::string>& values);
  /// Records the content digest of an input file under a role name.
  void input(const std::string& role, const std::filesystem::path& path);

  std::string digest() const;
  /// Creates (if needed) and returns root/<command>-<digest prefix>.
  std::filesystem::path directory() const;
  /// Path for an output inside the run directory, recorded in the manifest.
  std::filesystem::path output(const std::string& name);
  /// Records an output written elsewhere.
  void external_output(const std::filesystem::path& path);
  /// Writes manifest.json into the run directory.
  void write() const;

 private:
  std::string command_;
  std::filesystem::path root_;
  std::map<std::string, std::string> settings_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

}  // namespace tnpcfg::cli
