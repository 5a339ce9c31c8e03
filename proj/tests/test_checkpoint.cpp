#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <algorithm>
#include <fstream>

#include "oracles.hpp"
#include "tnpcfg/checkpoint.hpp"

using namespace tnpcfg;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("tnpcfg_test_ckpt_" + name);
}

Vocabulary vocab_of(std::size_t q) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i + 1 < q; ++i) words.push_back("w" + std::to_string(i));
  words.emplace_back(Vocabulary::kUnknown);
  return Vocabulary(words, std::vector<std::size_t>(q, 0));
}

ModelConfig tiny(Precision dtype) {
  ModelConfig c;
  c.n = 2;
  c.p = 3;
  c.q = 6;
  c.d = 4;
  c.k = 5;
  c.dtype = dtype;
  c.seed = 12;
  return c;
}

}  // namespace

TEST_CASE("neural checkpoints round-trip bit for bit") {
  for (Precision dtype : {Precision::kSingle, Precision::kDouble}) {
    const auto path = temp_file(to_string(dtype));
    const ModelConfig c = tiny(dtype);
    const Vocabulary v = vocab_of(c.q);
    if (dtype == Precision::kSingle) {
      const auto params = NeuralParams<float>::initialize(c);
      write_checkpoint(path, make_checkpoint(params, v, {{"note", "first"}}));
      const Checkpoint back = read_checkpoint(path);
      CHECK(back.get("note") == "first");
      CHECK(back.get("dtype") == "f32");
      const auto loaded = load_params<float>(back);
      for (std::size_t s = 0; s < kSlotCount; ++s) {
        CHECK(std::ranges::equal(loaded.parameters()[s].value.values(), params.parameters()[s].value.values()));
      }
    } else {
      const auto params = NeuralParams<double>::initialize(c);
      write_checkpoint(path, make_checkpoint(params, v));
      const Checkpoint back = read_checkpoint(path);
      const auto loaded = load_params<double>(back);
      for (std::size_t s = 0; s < kSlotCount; ++s) {
        CHECK(std::ranges::equal(loaded.parameters()[s].value.values(), params.parameters()[s].value.values()));
      }
      const TdPcfg g = emit_td_pcfg(params);
      const TdPcfg stored = grammar(back);
      CHECK(stored.U == g.U);
      CHECK(stored.emission == g.emission);
      CHECK(stored.start == g.start);
      CHECK(vocabulary(back).words() == v.words());
      const ModelConfig mc = model_config(back);
      CHECK(mc.n == c.n);
      CHECK(mc.k == c.k);
      CHECK(mc.seed == c.seed);
    }
    std::filesystem::remove(path);
  }
}

TEST_CASE("grammar checkpoints") {
  const auto path = temp_file("g2");
  const TdPcfg g = oracle::g2();
  write_checkpoint(path, make_grammar_checkpoint(g, Vocabulary({"a", Vocabulary::kUnknown}, {3, 0})));
  const Checkpoint back = read_checkpoint(path);
  CHECK(back.get("kind") == "grammar");
  CHECK_FALSE(back.has_array("E_s"));
  const TdPcfg h = grammar(back);
  CHECK(h.V == g.V);
  CHECK(h.W == g.W);
  CHECK_THROWS(back.get("missing"));
  CHECK_THROWS(back.array("missing"));
  CHECK_THROWS_AS(make_grammar_checkpoint(g, vocab_of(5)), std::invalid_argument);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt files are rejected") {
  const auto path = temp_file("bad");
  {
    std::ofstream out(path);
    out << "not a checkpoint\n";
  }
  CHECK_THROWS(read_checkpoint(path));

  const auto good = temp_file("good");
  write_checkpoint(good, make_grammar_checkpoint(oracle::g2(), Vocabulary({"a", Vocabulary::kUnknown}, {3, 0})));
  std::string bytes;
  {
    std::ifstream in(good, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  }
  CHECK_THROWS(read_checkpoint(path));
  CHECK_THROWS(read_checkpoint(temp_file("missing")));
  std::filesystem::remove(path);
  std::filesystem::remove(good);
}
