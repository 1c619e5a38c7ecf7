#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "moodseq/audio_pipeline.hpp"
#include "moodseq/model.hpp"
#include "moodseq/synth_corpus.hpp"
#include "moodseq/text_pipeline.hpp"
#include "moodseq/training.hpp"

using namespace moodseq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("moodseq_gen_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.partition_counts = {{{3, 3, 3, 3, 3}, {2, 2, 2, 2, 2}, {2, 2, 2, 2, 2}}};
  cfg.frames_mean = 700;
  cfg.frames_std = 50;
  cfg.min_frames = 400;
  cfg.utterances_per_subject = 12;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("the same seed produces byte-identical corpora") {
  TempDir a("a"), b("b");
  auto cfg = small_config();
  generate(cfg, a.path.string());
  generate(cfg, b.path.string());
  std::vector<fs::path> rel;
  for (auto& e : fs::recursive_directory_iterator(a.path))
    if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a.path));
  REQUIRE(!rel.empty());
  for (auto& r : rel) {
    REQUIRE(fs::exists(b.path / r));
    REQUIRE(slurp(a.path / r) == slurp(b.path / r));
  }
}

TEST_CASE("different seeds differ") {
  TempDir a("s1"), b("s2");
  auto cfg = small_config();
  generate(cfg, a.path.string());
  cfg.seed = 8;
  generate(cfg, b.path.string());
  CHECK(slurp(a.path / "registry.csv") != slurp(b.path / "registry.csv"));
}

TEST_CASE("generated files satisfy the loader contracts") {
  TempDir dir("fmt");
  auto cfg = small_config();
  auto registry = generate(cfg, dir.path.string());
  auto loaded = load_registry(dir.path.string());
  REQUIRE(loaded.size() == registry.size());

  std::set<int> seen;
  std::map<std::string, std::set<int>> by_partition;
  for (const auto& r : loaded) {
    CHECK(seen.insert(r.id).second);
    by_partition[r.partition].insert(r.id);
    CHECK((r.partition == "train" || r.partition == "val" || r.partition == "test"));
    CHECK(r.phq8 >= 0);
    CHECK(r.phq8 <= 24);

    auto m = load_covarep(covarep_path(dir.path.string(), r.id), cfg.vuv_col);
    CHECK(m.rows >= cfg.min_frames);
    CHECK(m.nan_rows_dropped == 0);

    auto entries = parse_transcript(transcript_path(dir.path.string(), r.id));
    CHECK(entries.size() == 2 * cfg.utterances_per_subject);
  }
  // partitions are subject-disjoint and every class appears in each
  for (auto& [p, ids] : by_partition)
    for (auto& [q, other] : by_partition) {
      if (p == q) continue;
      for (int id : ids) CHECK(!other.count(id));
    }
  for (const char* p : kPartitions) {
    std::set<Severity> classes;
    for (const auto& r : loaded)
      if (r.partition == p) classes.insert(phq_to_label(r.phq8));
    CHECK(classes.size() == 5);
  }
}

TEST_CASE("class labels round-trip through phq_to_label and the binary rule") {
  TempDir dir("phq");
  auto registry = generate(small_config(), dir.path.string());
  for (const auto& r : registry) {
    auto label = phq_to_label(r.phq8);
    // the generator avoids the score-10 straddle so the views agree
    CHECK(label_significant(int(label)) == phq_significant(r.phq8));
  }
}

TEST_CASE("experiment-group sentences are shorter, durations are not") {
  TempDir dir("stats");
  auto cfg = small_config();
  cfg.utterances_per_subject = 30;
  auto registry = generate(cfg, dir.path.string());
  std::vector<double> ctrl_len, exp_len;
  for (const auto& r : registry) {
    auto entries = parse_transcript(transcript_path(dir.path.string(), r.id));
    for (const auto& e : entries) {
      if (e.speaker != "Participant") continue;
      std::istringstream ss(e.utterance);
      std::string w;
      double words = 0;
      while (ss >> w) ++words;
      (r.phq8 > 10 ? exp_len : ctrl_len).push_back(words);
    }
  }
  const double mc = std::accumulate(ctrl_len.begin(), ctrl_len.end(), 0.0) / ctrl_len.size();
  const double me = std::accumulate(exp_len.begin(), exp_len.end(), 0.0) / exp_len.size();
  CHECK(me < mc);
  CHECK(me / mc == doctest::Approx(cfg.experiment_sentence_factor).epsilon(0.1));
}

TEST_CASE("marker tokens concentrate on the subject's class") {
  TempDir dir("marker");
  auto registry = generate(small_config(), dir.path.string());
  for (const auto& r : registry) {
    const int cls = int(phq_to_label(r.phq8));
    auto entries = parse_transcript(transcript_path(dir.path.string(), r.id));
    std::array<int, 5> counts = {0, 0, 0, 0, 0};
    for (const auto& e : entries) {
      if (e.speaker != "Participant") continue;
      std::istringstream ss(e.utterance);
      std::string w;
      while (ss >> w)
        for (int m = 0; m < 5; ++m)
          if (w == marker_words()[m]) ++counts[m];
    }
    for (int m = 0; m < 5; ++m)
      if (m != cls) CHECK(counts[cls] >= counts[m]);
  }
}

TEST_CASE("a linear probe on window means separates the audio classes") {
  TempDir dir("probe");
  auto cfg = small_config();
  cfg.partition_counts = {{{4, 4, 4, 4, 4}, {2, 2, 2, 2, 2}, {1, 1, 1, 1, 1}}};
  auto registry = generate(cfg, dir.path.string());

  // per-window mean feature vectors, z-scored with training statistics
  auto window_means = [&](const SubjectRecord& r) {
    auto m = load_covarep(covarep_path(dir.path.string(), r.id), cfg.vuv_col);
    auto windows = frame_sequences(m, 16);
    std::vector<std::vector<double>> feats;
    for (const auto& w : windows) {
      std::vector<double> mean(73, 0.0);
      for (std::size_t t = 0; t < 16; ++t)
        for (std::size_t c = 0; c < 73; ++c) mean[c] += w[t * 73 + c] / 16.0;
      feats.push_back(std::move(mean));
    }
    return feats;
  };

  std::vector<std::vector<double>> x_train, x_val;
  std::vector<int> y_train, y_val;
  for (const auto& r : registry) {
    if (r.partition == "test") continue;
    auto feats = window_means(r);
    const int cls = int(phq_to_label(r.phq8));
    for (auto& f : feats) {
      if (r.partition == "train") {
        x_train.push_back(std::move(f));
        y_train.push_back(cls);
      } else {
        x_val.push_back(std::move(f));
        y_val.push_back(cls);
      }
    }
  }
  REQUIRE(x_train.size() > 100);
  REQUIRE(x_val.size() > 50);

  std::vector<double> mu(73, 0), sd(73, 0);
  for (auto& f : x_train)
    for (int c = 0; c < 73; ++c) mu[c] += f[c] / double(x_train.size());
  for (auto& f : x_train)
    for (int c = 0; c < 73; ++c) sd[c] += (f[c] - mu[c]) * (f[c] - mu[c]);
  for (int c = 0; c < 73; ++c) sd[c] = std::sqrt(sd[c] / double(x_train.size())) + 1e-9;
  auto zscore = [&](std::vector<std::vector<double>>& xs) {
    for (auto& f : xs)
      for (int c = 0; c < 73; ++c) f[c] = (f[c] - mu[c]) / sd[c];
  };
  zscore(x_train);
  zscore(x_val);

  std::mt19937_64 rng(1);
  Dense<double> probe(73, 5, rng);
  ParamList<double> params;
  probe.collect(params, "probe");
  Adam<double> adam(params, 0.05);
  auto flatten = [](const std::vector<std::vector<double>>& xs) {
    std::vector<double> flat;
    for (auto& f : xs) flat.insert(flat.end(), f.begin(), f.end());
    return flat;
  };
  Tensor<double> xt({x_train.size(), 73}, flatten(x_train));
  for (int it = 0; it < 150; ++it) {
    zero_grads(params);
    cross_entropy(probe.forward(xt), y_train).backward();
    adam.step();
  }
  Tensor<double> xv({x_val.size(), 73}, flatten(x_val));
  auto logits = probe.forward(xv);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x_val.size(); ++i) {
    auto row = logits.data().subspan(i * 5, 5);
    if (int(std::max_element(row.begin(), row.end()) - row.begin()) == y_val[i]) ++correct;
  }
  const double acc = double(correct) / double(x_val.size());
  INFO("probe validation accuracy ", acc);
  CHECK(acc > 0.9);
}
