#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "moodseq/audio_pipeline.hpp"
#include "moodseq/checkpoint.hpp"
#include "moodseq/model.hpp"

using namespace moodseq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("moodseq_ckpt_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Tensor<float> tiny_embeddings(std::size_t vocab_plus_one) {
  std::mt19937_64 rng(5);
  return Tensor<float>::uniform({vocab_plus_one, kEmbeddingDim}, -0.5f, 0.5f, rng);
}

}  // namespace

TEST_CASE("a parameter list round-trips bitwise") {
  TempDir dir;
  std::mt19937_64 rng(9);
  AudioModelConfig cfg;
  cfg.features = 6;
  cfg.hidden = 8;
  AudioModel<float> model(cfg, rng);

  nlohmann::json meta = {{"model", "bilstm_tcnn"}, {"timestep", 16}};
  const auto path = (dir.path / "m.ckpt").string();
  save_checkpoint(path, meta, model.parameters());

  auto ckpt = read_checkpoint(path);
  CHECK(ckpt.meta["model"] == "bilstm_tcnn");
  CHECK(ckpt.meta["timestep"] == 16);
  CHECK(ckpt.tensors.size() == model.parameters().size());

  // an independently seeded model has different weights until loading
  std::mt19937_64 rng2(10);
  AudioModel<float> other(cfg, rng2);
  bool differed = false;
  for (std::size_t i = 0; i < other.parameters().size(); ++i) {
    auto a = other.parameters()[i].tensor.data();
    auto b = model.parameters()[i].tensor.data();
    for (std::size_t j = 0; j < a.size(); ++j)
      if (a[j] != b[j]) differed = true;
  }
  CHECK(differed);

  load_into(other.parameters(), ckpt);
  for (std::size_t i = 0; i < other.parameters().size(); ++i) {
    const auto& pa = other.parameters()[i];
    const auto& pb = model.parameters()[i];
    REQUIRE(pa.name == pb.name);
    auto a = pa.tensor.data();
    auto b = pb.tensor.data();
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) REQUIRE(a[j] == b[j]);
  }
}

TEST_CASE("a loaded model reproduces the saved model's predictions bitwise") {
  TempDir dir;
  std::mt19937_64 rng(2);
  TextModelConfig cfg;
  cfg.variant = TextVariant::BilstmAttn;
  cfg.hidden = 8;
  TextModel<float> model(cfg, tiny_embeddings(12), rng);

  Batch<float> batch;
  batch.labels = {0, 3};
  batch.token_width = 6;
  batch.tokens = {1, 4, 2, 9, 11, 0, 5, 5, 3, 1, 0, 0};

  std::mt19937_64 fwd_rng(1);
  auto before = model.forward(batch, false, fwd_rng);
  std::vector<float> expected(before.data().begin(), before.data().end());

  const auto path = (dir.path / "t.ckpt").string();
  save_checkpoint(path, nlohmann::json::object(), model.parameters());

  std::mt19937_64 rng2(77);
  TextModel<float> fresh(cfg, tiny_embeddings(12), rng2);
  load_into(fresh.parameters(), read_checkpoint(path));
  std::mt19937_64 fwd_rng2(1);
  auto after = fresh.forward(batch, false, fwd_rng2);
  REQUIRE(after.data().size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) REQUIRE(after.data()[i] == expected[i]);
}

TEST_CASE("saving twice produces byte-identical files") {
  TempDir dir;
  std::mt19937_64 rng(4);
  AudioModelConfig cfg;
  cfg.variant = AudioVariant::LstmFc;
  cfg.features = 5;
  cfg.hidden = 6;
  AudioModel<float> model(cfg, rng);
  nlohmann::json meta = {{"seed", 4}};
  save_checkpoint((dir.path / "a.ckpt").string(), meta, model.parameters());
  save_checkpoint((dir.path / "b.ckpt").string(), meta, model.parameters());
  std::ifstream fa(dir.path / "a.ckpt", std::ios::binary);
  std::ifstream fb(dir.path / "b.ckpt", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), {});
  std::string sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(!sa.empty());
  CHECK(sa == sb);
}

TEST_CASE("bad files are rejected loudly") {
  TempDir dir;
  auto write = [&](const std::string& name, const std::string& body) {
    auto p = (dir.path / name).string();
    std::ofstream(p, std::ios::binary) << body;
    return p;
  };
  CHECK_THROWS_WITH_AS(read_checkpoint((dir.path / "absent.ckpt").string()),
                       doctest::Contains("cannot open"), DataFormatError);
  CHECK_THROWS_WITH_AS(read_checkpoint(write("magic.ckpt", "NOPE....")),
                       doctest::Contains("bad magic"), DataFormatError);

  // a valid header with the wrong version
  std::string v2("MSEQ", 4);
  v2 += std::string("\x02\x00\x00\x00", 4);
  v2 += std::string("\x02\x00\x00\x00", 4);
  v2 += "{}";
  CHECK_THROWS_WITH_AS(read_checkpoint(write("v2.ckpt", v2)),
                       doctest::Contains("unsupported checkpoint version 2"), DataFormatError);

  // truncated metadata
  std::string trunc("MSEQ", 4);
  trunc += std::string("\x01\x00\x00\x00", 4);
  trunc += std::string("\xff\x00\x00\x00", 4);
  trunc += "{}";
  CHECK_THROWS_WITH_AS(read_checkpoint(write("trunc.ckpt", trunc)),
                       doctest::Contains("truncated"), DataFormatError);
}

TEST_CASE("load_into validates names, shapes, and counts") {
  TempDir dir;
  std::mt19937_64 rng(3);
  AudioModelConfig cfg;
  cfg.variant = AudioVariant::LstmFc;
  cfg.features = 5;
  cfg.hidden = 6;
  AudioModel<float> model(cfg, rng);
  const auto path = (dir.path / "m.ckpt").string();
  save_checkpoint(path, nlohmann::json::object(), model.parameters());
  auto ckpt = read_checkpoint(path);

  SUBCASE("wrong parameter count") {
    auto extra = ckpt;
    extra.tensors["bogus"] = {{2}, {1.f, 2.f}};
    CHECK_THROWS_WITH_AS(load_into(model.parameters(), extra),
                         doctest::Contains("parameters"), DataFormatError);
  }
  SUBCASE("renamed parameter") {
    auto renamed = ckpt;
    auto node = renamed.tensors.extract(renamed.tensors.begin());
    node.key() += "_x";
    renamed.tensors.insert(std::move(node));
    CHECK_THROWS_WITH_AS(load_into(model.parameters(), renamed),
                         doctest::Contains("missing parameter"), DataFormatError);
  }
  SUBCASE("shape mismatch") {
    auto reshaped = ckpt;
    auto& t = reshaped.tensors.begin()->second;
    t.shape = {t.values.size()};
    CHECK_THROWS_WITH_AS(load_into(model.parameters(), reshaped),
                         doctest::Contains("shape mismatch"), DataFormatError);
  }
}
