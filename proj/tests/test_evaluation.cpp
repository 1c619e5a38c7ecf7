#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "moodseq/evaluation.hpp"

using namespace moodseq;

namespace {

// Brute-force metrics oracle built only from a confusion matrix, independent
// of the library's counting path.
struct Oracle {
  double accuracy, macro_f1, macro_p, macro_r;
};

Oracle oracle_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                      std::size_t k) {
  std::vector<std::vector<double>> cm(k, std::vector<double>(k, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) cm[labels[i]][preds[i]] += 1;
  double diag = 0, total = 0;
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < k; ++c) {
      total += cm[r][c];
      if (r == c) diag += cm[r][c];
    }
  Oracle o{diag / total, 0, 0, 0};
  for (std::size_t c = 0; c < k; ++c) {
    double colsum = 0, rowsum = 0;
    for (std::size_t r = 0; r < k; ++r) {
      colsum += cm[r][c];
      rowsum += cm[c][r];
    }
    const double p = colsum == 0 ? 0 : cm[c][c] / colsum;
    const double r = rowsum == 0 ? 0 : cm[c][c] / rowsum;
    o.macro_p += p / double(k);
    o.macro_r += r / double(k);
    o.macro_f1 += (p + r == 0 ? 0 : 2 * p * r / (p + r)) / double(k);
  }
  return o;
}

// O(n^2) pairwise ordering AUC: fraction of (positive, negative) pairs where
// the positive scores higher, ties counted half.
double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& pos) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (!(pos[i] == 1 && pos[j] == 0)) continue;
      pairs += 1;
      if (scores[i] > scores[j]) wins += 1;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  return wins / pairs;
}

}  // namespace

TEST_CASE("perfect predictions score 1.0 everywhere") {
  std::vector<int> y = {0, 1, 2, 3, 4, 2, 1};
  auto r = metrics(y, y, 5);
  CHECK(r.accuracy == 1.0);
  CHECK(r.macro_f1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.weighted_f1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.sensitivity == 1.0);
  CHECK(r.specificity == 1.0);
}

TEST_CASE("the half-right binary case gives accuracy and F1 of 0.5") {
  auto r = metrics({0, 0, 1, 1}, {0, 1, 0, 1}, 2);
  CHECK(r.accuracy == doctest::Approx(0.5));
  CHECK(r.macro_f1 == doctest::Approx(0.5));
}

TEST_CASE("metrics rejects mismatched and empty inputs") {
  CHECK_THROWS_AS(metrics({0, 1}, {0}, 2), std::invalid_argument);
  CHECK_THROWS_AS(metrics({}, {}, 2), std::invalid_argument);
}

TEST_CASE("random 200-sample metrics match the confusion-matrix oracle to 1e-12") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> preds(200), labels(200);
    for (auto& p : preds) p = int(rng() % 5);
    for (auto& y : labels) y = int(rng() % 5);
    auto r = metrics(preds, labels, 5);
    auto o = oracle_metrics(preds, labels, 5);
    CHECK(std::abs(r.accuracy - o.accuracy) < 1e-12);
    CHECK(std::abs(r.macro_precision - o.macro_p) < 1e-12);
    CHECK(std::abs(r.macro_recall - o.macro_r) < 1e-12);
    CHECK(std::abs(r.macro_f1 - o.macro_f1) < 1e-12);
  }
}

TEST_CASE("confusion rows normalize to 1 and counts sum to N") {
  std::mt19937_64 rng(2);
  std::vector<int> preds(150), labels(150);
  for (auto& p : preds) p = int(rng() % 5);
  for (auto& y : labels) y = int(rng() % 4);  // class 4 empty
  auto m = confusion(preds, labels, 5);
  long long total = 0;
  for (auto c : m.counts) total += c;
  CHECK(total == 150);
  auto norm = m.row_normalized();
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 5; ++c) sum += norm[r * 5 + c];
    if (r == 4) CHECK(sum == 0.0);
    else CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("perfectly separating scores reach AUC 1.0") {
  std::vector<int> labels = {0, 0, 1, 1};
  std::vector<double> scores = {0.9, 0.1, 0.8, 0.2, 0.2, 0.8, 0.1, 0.9};
  auto r = roc_micro_auc(scores, labels, 2);
  CHECK(r.micro_auc == doctest::Approx(1.0));
  CHECK(r.per_class_auc[0] == doctest::Approx(1.0));
  CHECK(r.per_class_auc[1] == doctest::Approx(1.0));
}

TEST_CASE("label-independent scores sit at chance level") {
  std::mt19937_64 rng(3);
  const std::size_t n = 1000, k = 4;
  std::vector<int> labels(n);
  for (auto& y : labels) y = int(rng() % k);
  std::vector<double> scores;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) scores.push_back(1.0 / double(k));
  auto r = roc_micro_auc(scores, labels, k);
  CHECK(r.micro_auc == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("micro AUC matches the O(n^2) pairwise oracle to 1e-9") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 50, k = 3;
    std::vector<int> labels(n);
    for (auto& y : labels) y = int(rng() % k);
    std::vector<double> scores;
    for (std::size_t i = 0; i < n; ++i) {
      double a = u(rng), b = u(rng), c = u(rng);
      // quantize to force score ties sometimes
      a = std::round(a * 8) / 8;
      b = std::round(b * 8) / 8;
      c = std::round(c * 8) / 8;
      const double s = a + b + c;
      scores.insert(scores.end(), {a / s, b / s, c / s});
    }
    auto r = roc_micro_auc(scores, labels, k);
    std::vector<double> pooled_scores;
    std::vector<int> pooled_pos;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c) {
        pooled_scores.push_back(scores[i * k + c]);
        pooled_pos.push_back(std::size_t(labels[i]) == c ? 1 : 0);
      }
    CHECK(std::abs(r.micro_auc - pairwise_auc(pooled_scores, pooled_pos)) < 1e-9);
  }
}

TEST_CASE("classes absent from the labels are excluded from per-class AUC") {
  std::vector<int> labels = {0, 0, 1, 1};
  std::vector<double> scores = {0.5, 0.3, 0.2, 0.5, 0.3, 0.2,
                                0.2, 0.6, 0.2, 0.2, 0.6, 0.2};
  auto r = roc_micro_auc(scores, labels, 3);
  REQUIRE(r.excluded_classes == std::vector<std::size_t>{2});
  CHECK(std::isnan(r.per_class_auc[2]));
  CHECK(!std::isnan(r.per_class_auc[0]));
}

TEST_CASE("score rows must sum to one") {
  CHECK_THROWS_AS(roc_micro_auc({0.9, 0.3}, {0}, 2), std::invalid_argument);
}

TEST_CASE("balancing: already balanced input is unchanged") {
  std::vector<int> labels;
  for (int c = 0; c < 5; ++c) labels.insert(labels.end(), 10, c);
  auto idx = balance_by_oversampling(labels, 5, 7);
  CHECK(idx.size() == 50);
  std::vector<std::size_t> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(idx == expect);
}

TEST_CASE("balancing: minority classes are oversampled to the majority count") {
  std::vector<int> labels(15, 0);
  std::fill(labels.begin() + 10, labels.end(), 1);  // 10 vs 5
  auto idx = balance_by_oversampling(labels, 2, 3);
  REQUIRE(idx.size() == 20);
  // all originals retained
  for (std::size_t i = 0; i < 15; ++i) CHECK(idx[i] == i);
  // exactly uniform class proportions and only valid indices added
  std::size_t c1 = 0;
  for (std::size_t i : idx) {
    REQUIRE(i < 15);
    if (labels[i] == 1) ++c1;
  }
  CHECK(c1 == 10);
  // deterministic for a fixed seed
  CHECK(balance_by_oversampling(labels, 2, 3) == idx);
}

TEST_CASE("balancing fails loudly when a class is absent") {
  std::vector<int> labels = {0, 0, 2};
  CHECK_THROWS_WITH_AS(balance_by_oversampling(labels, 3, 1), doctest::Contains("1"),
                       std::invalid_argument);
}

TEST_CASE("majority vote: strict mode, severity ties, unanimity") {
  CHECK(majority_vote({2, 2, 1}, 5).voted == 2);
  CHECK(majority_vote({1, 3}, 5).voted == 3);
  CHECK(majority_vote(std::vector<int>(100, 0), 5).voted == 0);
  CHECK_THROWS_AS(majority_vote({}, 5), std::invalid_argument);
}

TEST_CASE("all two-window ties resolve to the more severe class") {
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      auto v = majority_vote({a, b}, 5);
      CHECK(v.voted == std::max(a, b));
    }
}

TEST_CASE("vote is invariant under permutation of the window predictions") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> preds(1 + rng() % 9);
    for (auto& p : preds) p = int(rng() % 5);
    auto base = majority_vote(preds, 5);
    std::shuffle(preds.begin(), preds.end(), rng);
    auto shuffled = majority_vote(preds, 5);
    CHECK(base.voted == shuffled.voted);
    CHECK(base.tally == shuffled.tally);
  }
}

TEST_CASE("welch t-test matches frozen reference values to 1e-6") {
  struct Fixture {
    std::vector<double> a, b;
    double t, p, t_pooled, p_pooled;
  };
  // reference values computed with an independent statistics package
  const std::vector<Fixture> fixtures = {
      {{1, 2, 3, 4, 5}, {2, 4, 6, 8, 10},
       -1.8973665961010275, 0.10753119493062718, -1.8973665961010275, 0.09434977284243756},
      {{10.1, 9.8, 10.3, 10.0, 9.9, 10.2}, {8.4, 8.9, 8.1, 8.6},
       8.38552760240711, 0.0008418591013015311, 9.464086434454982, 1.2786073512120737e-05},
      {{0.5, 1.5, 0.7, 1.1, 0.9, 1.3, 0.8}, {0.6, 1.4, 0.8, 1.2, 1.0},
       -0.1475756903829846, 0.8858250660055453, -0.1448818969499362, 0.8876826037847212},
      {{100, 102, 98, 101, 99, 103, 97, 100.5}, {95, 94, 96, 93, 95.5, 94.5},
       6.4568655315277494, 4.456749896250327e-05, 5.931081705112435, 6.912469025253739e-05},
      {{2.0, 2.1, 1.9, 2.05, 1.95}, {2.0, 2.2, 1.8, 2.1, 1.9, 2.0},
       0.0, 1.0, 0.0, 1.0},
  };
  for (const auto& f : fixtures) {
    auto w = welch_ttest(f.a, f.b);
    CHECK(w.t == doctest::Approx(f.t).epsilon(1e-9));
    CHECK(std::abs(w.p - f.p) < 1e-6);
    auto s = welch_ttest(f.a, f.b, true);
    CHECK(s.t == doctest::Approx(f.t_pooled).epsilon(1e-9));
    CHECK(std::abs(s.p - f.p_pooled) < 1e-6);
  }
}

TEST_CASE("identical non-constant samples give t=0 and p=1") {
  std::vector<double> a = {1, 2, 3, 4};
  auto r = welch_ttest(a, a);
  CHECK(r.t == 0.0);
  CHECK(r.p == 1.0);
}

TEST_CASE("degenerate t-test inputs are rejected") {
  CHECK_THROWS_AS(welch_ttest({1.0}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(welch_ttest({3, 3, 3}, {5, 5}), std::invalid_argument);
}

TEST_CASE("group summaries match hand computation") {
  auto g = summarize("control", {2.0, 4.0, 6.0});
  CHECK(g.n == 3);
  CHECK(g.mean == doctest::Approx(4.0));
  CHECK(g.stddev == doctest::Approx(2.0));
  CHECK_THROWS_AS(summarize("tiny", {1.0}), std::invalid_argument);
}

TEST_CASE("histogram bins cover the range and count every value") {
  auto csv = histogram_csv({0.0, 0.5, 1.0, 1.0, 0.25}, 4);
  CHECK(csv.rfind("bin_low,bin_high,count\n", 0) == 0);
  long long total = 0;
  std::istringstream ss(csv);
  std::string line;
  std::getline(ss, line);  // header
  while (std::getline(ss, line)) total += std::stoll(line.substr(line.rfind(',') + 1));
  CHECK(total == 5);
}
