#include "moodseq/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace moodseq {

namespace {

// The binary "significant symptoms" view: moderate or worse.
bool significant(int label) { return label >= 2; }

void check_pairs(const std::vector<int>& preds, const std::vector<int>& labels, std::size_t k) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("prediction/label length mismatch: " +
                                std::to_string(preds.size()) + " vs " +
                                std::to_string(labels.size()));
  if (preds.empty()) throw std::invalid_argument("cannot evaluate an empty prediction list");
  for (int p : preds)
    if (p < 0 || std::size_t(p) >= k) throw std::invalid_argument("prediction out of range");
  for (int y : labels)
    if (y < 0 || std::size_t(y) >= k) throw std::invalid_argument("label out of range");
}

}  // namespace

// ---------------------------------------------------------------------------
// confusion matrix

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          std::size_t k) {
  check_pairs(preds, labels, k);
  ConfusionMatrix m;
  m.k = k;
  m.counts.assign(k * k, 0);
  for (std::size_t i = 0; i < preds.size(); ++i)
    ++m.counts[std::size_t(labels[i]) * k + std::size_t(preds[i])];
  return m;
}

std::vector<double> ConfusionMatrix::row_normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    long long total = 0;
    for (std::size_t c = 0; c < k; ++c) total += at(r, c);
    if (total == 0) continue;
    for (std::size_t c = 0; c < k; ++c) out[r * k + c] = double(at(r, c)) / double(total);
  }
  return out;
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream os;
  os << "true_class";
  for (std::size_t c = 0; c < k; ++c) os << ",pred_" << c;
  os << '\n';
  for (std::size_t r = 0; r < k; ++r) {
    os << r;
    for (std::size_t c = 0; c < k; ++c) os << ',' << at(r, c);
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// metrics

EvaluationReport metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                         std::size_t k) {
  check_pairs(preds, labels, k);
  const std::size_t n = preds.size();

  EvaluationReport r;
  r.matrix = confusion(preds, labels, k);
  std::vector<long long> tp(k, 0), fp(k, 0), fn(k, 0), support(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i], p = preds[i];
    ++support[y];
    if (y == p) {
      ++tp[y];
      ++correct;
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  r.accuracy = double(correct) / double(n);

  r.per_class_precision.resize(k);
  r.per_class_recall.resize(k);
  r.per_class_f1.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    const double prec = tp[c] + fp[c] == 0 ? 0.0 : double(tp[c]) / double(tp[c] + fp[c]);
    const double rec = tp[c] + fn[c] == 0 ? 0.0 : double(tp[c]) / double(tp[c] + fn[c]);
    const double f1 = prec + rec == 0 ? 0.0 : 2 * prec * rec / (prec + rec);
    r.per_class_precision[c] = prec;
    r.per_class_recall[c] = rec;
    r.per_class_f1[c] = f1;
    r.macro_precision += prec / double(k);
    r.macro_recall += rec / double(k);
    r.macro_f1 += f1 / double(k);
    const double w = double(support[c]) / double(n);
    r.weighted_precision += w * prec;
    r.weighted_recall += w * rec;
    r.weighted_f1 += w * f1;
  }

  long long btp = 0, btn = 0, bfp = 0, bfn = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool y = significant(labels[i]), p = significant(preds[i]);
    if (y && p) ++btp;
    else if (!y && !p) ++btn;
    else if (!y && p) ++bfp;
    else ++bfn;
  }
  r.sensitivity = btp + bfn == 0 ? 0.0 : double(btp) / double(btp + bfn);
  r.specificity = btn + bfp == 0 ? 0.0 : double(btn) / double(btn + bfp);
  return r;
}

std::string EvaluationReport::to_text() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "accuracy           " << accuracy << '\n'
     << "macro precision    " << macro_precision << '\n'
     << "macro recall       " << macro_recall << '\n'
     << "macro F1           " << macro_f1 << '\n'
     << "weighted F1        " << weighted_f1 << '\n'
     << "sensitivity        " << sensitivity << '\n'
     << "specificity        " << specificity << '\n';
  os << "per-class P/R/F1:\n";
  for (std::size_t c = 0; c < per_class_f1.size(); ++c)
    os << "  class " << c << "  " << per_class_precision[c] << ' ' << per_class_recall[c] << ' '
       << per_class_f1[c] << '\n';
  return os.str();
}

std::string EvaluationReport::to_csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "metric,value\n"
     << "accuracy," << accuracy << '\n'
     << "macro_precision," << macro_precision << '\n'
     << "macro_recall," << macro_recall << '\n'
     << "macro_f1," << macro_f1 << '\n'
     << "weighted_precision," << weighted_precision << '\n'
     << "weighted_recall," << weighted_recall << '\n'
     << "weighted_f1," << weighted_f1 << '\n'
     << "sensitivity," << sensitivity << '\n'
     << "specificity," << specificity << '\n';
  for (std::size_t c = 0; c < per_class_f1.size(); ++c)
    os << "f1_class_" << c << ',' << per_class_f1[c] << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// ROC / AUC

namespace {

// One-vs-rest ROC from (score, is_positive) pairs: descending threshold
// sweep with tied scores collapsed into a single point, so the trapezoidal
// area matches the pairwise-ordering statistic with ties counted half.
std::pair<std::vector<RocPoint>, double> roc_curve(std::vector<std::pair<double, int>> pairs) {
  long long npos = 0, nneg = 0;
  for (auto& [s, y] : pairs) (y ? npos : nneg)++;
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<RocPoint> points;
  points.push_back({0, 0});
  long long tp = 0, fp = 0;
  double auc = 0, prev_fpr = 0, prev_tpr = 0;
  std::size_t i = 0;
  while (i < pairs.size()) {
    std::size_t j = i;
    while (j < pairs.size() && pairs[j].first == pairs[i].first) {
      if (pairs[j].second) ++tp;
      else ++fp;
      ++j;
    }
    const double fpr = double(fp) / double(nneg);
    const double tpr = double(tp) / double(npos);
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    points.push_back({fpr, tpr});
    prev_fpr = fpr;
    prev_tpr = tpr;
    i = j;
  }
  return {points, auc};
}

}  // namespace

RocResult roc_micro_auc(const std::vector<double>& scores, const std::vector<int>& labels,
                        std::size_t k) {
  if (labels.empty()) throw std::invalid_argument("roc: empty label list");
  if (scores.size() != labels.size() * k)
    throw std::invalid_argument("roc: score matrix must be N x K");
  const std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0;
    for (std::size_t c = 0; c < k; ++c) sum += scores[i * k + c];
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument("roc: score row " + std::to_string(i) +
                                  " does not sum to 1 (got " + std::to_string(sum) + ")");
  }

  RocResult res;
  res.per_class.resize(k);
  res.per_class_auc.assign(k, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::pair<double, int>> pooled;
  pooled.reserve(n * k);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::pair<double, int>> pairs;
    pairs.reserve(n);
    long long npos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = std::size_t(labels[i]) == c ? 1 : 0;
      npos += y;
      pairs.push_back({scores[i * k + c], y});
      pooled.push_back({scores[i * k + c], y});
    }
    if (npos == 0 || std::size_t(npos) == n) {
      res.excluded_classes.push_back(c);
      continue;
    }
    auto [points, auc] = roc_curve(std::move(pairs));
    res.per_class[c] = std::move(points);
    res.per_class_auc[c] = auc;
  }
  auto [mpoints, mauc] = roc_curve(std::move(pooled));
  res.micro = std::move(mpoints);
  res.micro_auc = mauc;
  return res;
}

std::string RocResult::to_csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "curve,fpr,tpr\n";
  for (std::size_t c = 0; c < per_class.size(); ++c)
    for (const auto& p : per_class[c])
      os << "class_" << c << ',' << p.fpr << ',' << p.tpr << '\n';
  for (const auto& p : micro) os << "micro," << p.fpr << ',' << p.tpr << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// balancing and voting

std::vector<std::size_t> balance_by_oversampling(const std::vector<int>& labels, std::size_t k,
                                                 std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || std::size_t(labels[i]) >= k)
      throw std::invalid_argument("balance: label out of range");
    by_class[labels[i]].push_back(i);
  }
  std::string missing;
  for (std::size_t c = 0; c < k; ++c)
    if (by_class[c].empty()) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
  if (!missing.empty())
    throw std::invalid_argument("balance: no samples for class(es) " + missing);

  std::size_t majority = 0;
  for (auto& v : by_class) majority = std::max(majority, v.size());

  std::vector<std::size_t> out(labels.size());
  std::iota(out.begin(), out.end(), 0);  // every original retained
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < k; ++c) {
    std::uniform_int_distribution<std::size_t> pick(0, by_class[c].size() - 1);
    for (std::size_t extra = by_class[c].size(); extra < majority; ++extra)
      out.push_back(by_class[c][pick(rng)]);
  }
  return out;
}

PatientPrediction majority_vote(const std::vector<int>& window_preds, std::size_t k) {
  if (window_preds.empty())
    throw std::invalid_argument("majority_vote: no window predictions");
  PatientPrediction p;
  p.tally.assign(k, 0);
  for (int c : window_preds) {
    if (c < 0 || std::size_t(c) >= k)
      throw std::invalid_argument("majority_vote: prediction out of range");
    ++p.tally[c];
  }
  // ties break toward the more severe (higher) class
  for (std::size_t c = 0; c < k; ++c)
    if (p.voted < 0 || p.tally[c] >= p.tally[p.voted]) p.voted = int(c);
  return p;
}

// ---------------------------------------------------------------------------
// Welch's t-test

double incomplete_beta(double a, double b, double x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  // continued fraction (modified Lentz); symmetry keeps it convergent
  auto betacf = [](double a, double b, double x) {
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1, qam = a - 1;
    double c = 1, d = 1 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
      const int m2 = 2 * m;
      double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
      d = 1 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1 / d;
      h *= d * c;
      aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
      d = 1 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1 / d;
      const double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < 1e-14) break;
    }
    return h;
  };
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1) / (a + b + 2)) return front * betacf(a, b, x) / a;
  return 1 - front * betacf(b, a, 1 - x) / b;
}

TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b,
                        bool pooled) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("t-test needs at least 2 samples per group");
  auto mean_var = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= double(v.size());
    double s2 = 0;
    for (double x : v) s2 += (x - m) * (x - m);
    s2 /= double(v.size() - 1);
    return std::pair<double, double>{m, s2};
  };
  auto [ma, va] = mean_var(a);
  auto [mb, vb] = mean_var(b);
  if (va == 0 && vb == 0)
    throw std::invalid_argument("t-test: both samples have zero variance");
  const double na = double(a.size()), nb = double(b.size());

  TTestResult r;
  if (pooled) {
    const double sp2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2);
    r.t = (ma - mb) / std::sqrt(sp2 * (1 / na + 1 / nb));
    r.df = na + nb - 2;
  } else {
    const double se2 = va / na + vb / nb;
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 /
           ((va / na) * (va / na) / (na - 1) + (vb / nb) * (vb / nb) / (nb - 1));
  }
  if (r.t == 0) {
    r.p = 1;
    return r;
  }
  r.p = incomplete_beta(r.df / 2, 0.5, r.df / (r.df + r.t * r.t));
  return r;
}

// ---------------------------------------------------------------------------
// group statistics

GroupStats summarize(const std::string& group, const std::vector<double>& values) {
  if (values.size() < 2)
    throw std::invalid_argument("group '" + group + "' needs at least 2 samples, has " +
                                std::to_string(values.size()));
  GroupStats g;
  g.group = group;
  g.n = values.size();
  for (double v : values) g.mean += v;
  g.mean /= double(g.n);
  double s2 = 0;
  for (double v : values) s2 += (v - g.mean) * (v - g.mean);
  g.stddev = std::sqrt(s2 / double(g.n - 1));
  return g;
}

std::string histogram_csv(const std::vector<double>& values, std::size_t bins) {
  if (values.empty() || bins == 0) return "bin_low,bin_high,count\n";
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn_it, hi = *mx_it;
  const double width = hi > lo ? (hi - lo) / double(bins) : 1.0;
  std::vector<long long> counts(bins, 0);
  for (double v : values) {
    std::size_t b = std::size_t((v - lo) / width);
    if (b >= bins) b = bins - 1;  // the max lands in the last bin
    ++counts[b];
  }
  std::ostringstream os;
  os.precision(9);
  os << "bin_low,bin_high,count\n";
  for (std::size_t b = 0; b < bins; ++b)
    os << lo + width * double(b) << ',' << lo + width * double(b + 1) << ',' << counts[b]
       << '\n';
  return os.str();
}

}  // namespace moodseq
