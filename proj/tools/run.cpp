#include "run.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace tnpcfg::cli {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int size = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &size, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < size; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return sha256_hex(buffer.str());
}

RunManifest::RunManifest(std::string command, std::filesystem::path root)
    : command_(std::move(command)), root_(std::move(root)) {
  settings_["version"] = TNPCFG_VERSION;
}

void RunManifest::set_all(const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) settings_[k] = v;
}

void RunManifest::input(const std::string& role, const std::filesystem::path& path) {
  inputs_[role] = file_digest(path);
}

std::string RunManifest::digest() const {
  const nlohmann::json key{{"command", command_}, {"settings", settings_}, {"inputs", inputs_}};
  return sha256_hex(key.dump());
}

std::filesystem::path RunManifest::directory() const {
  const auto dir = root_ / (command_ + "-" + digest().substr(0, 16));
  std::filesystem::create_directories(dir);
  return dir;
}

std::filesystem::path RunManifest::output(const std::string& name) {
  outputs_.push_back(name);
  return directory() / name;
}

void RunManifest::external_output(const std::filesystem::path& path) { outputs_.push_back(path.string()); }

void RunManifest::write() const {
  nlohmann::json j{{"command", command_}, {"digest", digest()},  {"settings", settings_},
                   {"inputs", inputs_},   {"outputs", outputs_}};
  std::ofstream out(directory() / "manifest.json");
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write the run manifest");
}

}  // namespace tnpcfg::cli
