#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <functional>
#include <sstream>

namespace tnpcfg::cli {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("config key '" + key + "' has invalid value '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + value + "'");
}

std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& value) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    const auto last = item.find_last_not_of(' ');
    if (first == std::string::npos) throw ConfigError("config key '" + key + "' has an empty seed");
    seeds.push_back(parse_number<std::uint64_t>(key, item.substr(first, last - first + 1)));
  }
  if (seeds.empty()) throw ConfigError("config key '" + key + "' needs at least one seed");
  return seeds;
}

template <typename T>
std::string str(T v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

using Setter = std::function<void(Config&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  using S = std::size_t;
  static const std::map<std::string, Setter> table{
      {"model.p", [](Config& c, auto& k, auto& v) { c.model.p = parse_number<S>(k, v); }},
      {"model.n", [](Config& c, auto& k, auto& v) { c.n = parse_number<S>(k, v); }},
      {"model.d", [](Config& c, auto& k, auto& v) { c.d = parse_number<S>(k, v); }},
      {"model.k", [](Config& c, auto& k, auto& v) { c.model.k = parse_number<S>(k, v); }},
      {"model.dtype",
       [](Config& c, auto& k, auto& v) {
         try {
           c.model.dtype = parse_precision(v);
         } catch (const std::exception&) {
           throw ConfigError("config key '" + k + "' expects f32 or f64, got '" + v + "'");
         }
       }},
      {"model.activation", [](Config& c, auto&, auto& v) { c.model.activation = v; }},
      {"train.learning_rate", [](Config& c, auto& k, auto& v) { c.train.learning_rate = parse_number<double>(k, v); }},
      {"train.beta1", [](Config& c, auto& k, auto& v) { c.train.beta1 = parse_number<double>(k, v); }},
      {"train.beta2", [](Config& c, auto& k, auto& v) { c.train.beta2 = parse_number<double>(k, v); }},
      {"train.epsilon", [](Config& c, auto& k, auto& v) { c.train.epsilon = parse_number<double>(k, v); }},
      {"train.batch_size", [](Config& c, auto& k, auto& v) { c.train.batch_size = parse_number<S>(k, v); }},
      {"train.max_epochs", [](Config& c, auto& k, auto& v) { c.train.max_epochs = parse_number<S>(k, v); }},
      {"train.seeds", [](Config& c, auto& k, auto& v) { c.train.seeds = parse_seeds(k, v); }},
      {"train.length_bucket", [](Config& c, auto& k, auto& v) { c.train.length_bucket = parse_number<S>(k, v); }},
      {"train.clip_norm", [](Config& c, auto& k, auto& v) { c.train.clip_norm = parse_number<double>(k, v); }},
      {"data.train", [](Config& c, auto&, auto& v) { c.train_path = v; }},
      {"data.dev", [](Config& c, auto&, auto& v) { c.dev_path = v; }},
      {"data.test", [](Config& c, auto&, auto& v) { c.test_path = v; }},
      {"data.vocab_size", [](Config& c, auto& k, auto& v) { c.vocab_size = parse_number<S>(k, v); }},
      {"data.max_length", [](Config& c, auto& k, auto& v) { c.max_length = parse_number<S>(k, v); }},
      {"data.strip_punctuation", [](Config& c, auto& k, auto& v) { c.strip_punctuation = parse_bool(k, v); }},
      {"eval.top_k", [](Config& c, auto& k, auto& v) { c.top_k = parse_number<S>(k, v); }},
      {"eval.top_labels", [](Config& c, auto& k, auto& v) { c.top_labels = parse_number<S>(k, v); }},
  };
  return table;
}

}  // namespace

Config::Config() { model.p = 500; }

ModelConfig Config::resolve_model(std::size_t q) const {
  ModelConfig out = ModelConfig::with_defaults(model.p, q);
  out.k = model.k;
  out.dtype = model.dtype;
  out.activation = model.activation;
  if (n) out.n = n;
  if (d) out.d = d;
  out.validate();
  return out;
}

std::map<std::string, std::string> Config::snapshot() const {
  std::string seeds;
  for (std::size_t i = 0; i < train.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(train.seeds[i]);
  return {
      {"model.p", str(model.p)},
      {"model.n", n ? str(n) : "p/2"},
      {"model.d", d ? str(d) : "rule"},
      {"model.k", str(model.k)},
      {"model.dtype", to_string(model.dtype)},
      {"model.activation", model.activation},
      {"train.learning_rate", str(train.learning_rate)},
      {"train.beta1", str(train.beta1)},
      {"train.beta2", str(train.beta2)},
      {"train.epsilon", str(train.epsilon)},
      {"train.batch_size", str(train.batch_size)},
      {"train.max_epochs", str(train.max_epochs)},
      {"train.seeds", seeds},
      {"train.length_bucket", str(train.length_bucket)},
      {"train.clip_norm", str(train.clip_norm)},
      {"data.vocab_size", str(vocab_size)},
      {"data.max_length", str(max_length)},
      {"data.strip_punctuation", strip_punctuation ? "true" : "false"},
      {"eval.top_k", str(top_k)},
      {"eval.top_labels", str(top_labels)},
  };
}

void set_key(Config& config, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, key, value);
}

Config load_config(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  Config config;
  for (const auto& [section, entries] : tree) {
    if (entries.empty()) throw ConfigError("config key '" + section + "' must be inside a section");
    for (const auto& [name, value] : entries) {
      set_key(config, section + "." + name, value.get_value<std::string>());
    }
  }
  const auto base = path.parent_path();
  for (auto* p : {&config.train_path, &config.dev_path, &config.test_path}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return config;
}

}  // namespace tnpcfg::cli
