// Cross-entropy loss, Adam, early stopping and the epoch loop shared by all
// models. Everything is deterministic given the seed: one RNG drives batch
// shuffling, dropout and any per-epoch dataset re-pairing, in a fixed order.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "moodseq/layers.hpp"
#include "moodseq/tensor.hpp"

namespace moodseq {

// ---------------------------------------------------------------------------
// loss

// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw DimensionError("cross_entropy expects (B,K) logits, got " + shape_str(logits.shape()));
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (labels.size() != B) throw UsageError("cross_entropy label count mismatch");
  for (int y : labels)
    if (y < 0 || std::size_t(y) >= K)
      throw UsageError("cross_entropy label " + std::to_string(y) + " out of range [0," +
                       std::to_string(K) + ")");
  auto ld = logits.data();
  T loss = T(0);
  auto probs = std::make_shared<std::vector<T>>(B * K);
  for (std::size_t b = 0; b < B; ++b) {
    const T* x = ld.data() + b * K;
    T mx = *std::max_element(x, x + K);
    T sum = T(0);
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(x[k] - mx);
    const T lse = mx + std::log(sum);
    loss -= x[labels[b]] - lse;
    for (std::size_t k = 0; k < K; ++k) (*probs)[b * K + k] = std::exp(x[k] - lse);
  }
  loss /= T(B);
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return make_op<T>({1}, {loss}, {logits}, [B, K, probs, labels_copy](detail::Node<T>& n) {
    auto& pl = *n.parents[0];
    if (!pl.requires_grad) return;
    pl.ensure_grad();
    const T g = n.grad[0] / T(B);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < K; ++k) {
        T delta = (*probs)[b * K + k] - (std::size_t((*labels_copy)[b]) == k ? T(1) : T(0));
        pl.grad[b * K + k] += g * delta;
      }
  });
}

// ---------------------------------------------------------------------------
// optimizer

template <class T>
struct Adam {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-7);
  std::uint64_t step_count = 0;

  explicit Adam(ParamList<T>& params, T learning_rate = T(1e-3))
      : lr(learning_rate), params_(&params) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].tensor.size(), T(0));
      v_[i].assign(params[i].tensor.size(), T(0));
    }
  }

  void step() {
    ++step_count;
    const T bc1 = T(1) - std::pow(beta1, T(step_count));
    const T bc2 = T(1) - std::pow(beta2, T(step_count));
    for (std::size_t i = 0; i < params_->size(); ++i) {
      auto& p = (*params_)[i];
      if (!p.trainable) continue;
      if (!p.tensor.has_grad())
        throw UsageError("adam_step: missing gradient for parameter " + p.name);
      auto g = p.tensor.grad();
      auto& data = p.tensor.mutable_data();
      for (std::size_t j = 0; j < data.size(); ++j) {
        m_[i][j] = beta1 * m_[i][j] + (T(1) - beta1) * g[j];
        v_[i][j] = beta2 * v_[i][j] + (T(1) - beta2) * g[j] * g[j];
        const T mhat = m_[i][j] / bc1;
        const T vhat = v_[i][j] / bc2;
        data[j] -= lr * mhat / (std::sqrt(vhat) + epsilon);
      }
    }
  }

 private:
  ParamList<T>* params_;
  std::vector<std::vector<T>> m_, v_;
};

template <class T>
void zero_grads(ParamList<T>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

// Scales all gradients so their global L2 norm does not exceed max_norm.
template <class T>
void clip_global_norm(ParamList<T>& params, T max_norm) {
  T sq = T(0);
  for (auto& p : params) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) sq += g * g;
  }
  const T norm = std::sqrt(sq);
  if (norm <= max_norm || norm == T(0)) return;
  const T k = max_norm / norm;
  for (auto& p : params) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    for (auto& g : p.tensor.mutable_grad()) g *= k;
  }
}

// ---------------------------------------------------------------------------
// datasets and the model interface

template <class T>
struct Batch {
  Tensor<T> audio;                 // (B,TS,F) when audio_present
  std::vector<int> tokens;         // row-major (B,token_width) when token_width > 0
  std::size_t token_width = 0;
  std::vector<int> labels;
  bool audio_present = false;
};

template <class T>
struct Dataset {
  struct Item {
    std::vector<T> audio;      // TS*F values, empty when modality absent
    std::vector<int> tokens;   // token_width indices, empty when absent
    int label = 0;
    int subject = -1;
  };
  std::vector<Item> items;
  std::size_t audio_steps = 0, audio_feats = 0, token_width = 0;

  bool empty() const { return items.empty(); }
  std::size_t size() const { return items.size(); }

  Batch<T> make_batch(const std::vector<std::size_t>& idx) const {
    Batch<T> b;
    const std::size_t B = idx.size();
    b.labels.reserve(B);
    if (audio_steps > 0) {
      std::vector<T> data(B * audio_steps * audio_feats);
      for (std::size_t i = 0; i < B; ++i)
        std::copy(items[idx[i]].audio.begin(), items[idx[i]].audio.end(),
                  data.begin() + i * audio_steps * audio_feats);
      b.audio = Tensor<T>({B, audio_steps, audio_feats}, std::move(data));
      b.audio_present = true;
    }
    if (token_width > 0) {
      b.token_width = token_width;
      b.tokens.resize(B * token_width);
      for (std::size_t i = 0; i < B; ++i)
        std::copy(items[idx[i]].tokens.begin(), items[idx[i]].tokens.end(),
                  b.tokens.begin() + i * token_width);
    }
    for (std::size_t i : idx) b.labels.push_back(items[i].label);
    return b;
  }
};

template <class T>
class IModel {
 public:
  virtual ~IModel() = default;
  virtual Tensor<T> forward(const Batch<T>& batch, bool training, std::mt19937_64& rng) = 0;
  virtual ParamList<T>& parameters() = 0;
  virtual std::size_t num_classes() const = 0;
};

// ---------------------------------------------------------------------------
// fit

struct EarlyStopConfig {
  int patience = 5;
  bool restore_best = true;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
};

struct TrainingHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
};

struct FitOptions {
  int max_epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;  // <= 0 disables clipping
  EarlyStopConfig early;
  std::uint64_t seed = 0;
  bool verbose = false;
  std::function<void(int)> on_epoch_end;  // progress hook
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
template <class T>
std::pair<double, double> evaluate_pass(IModel<T>& model, const Dataset<T>& ds,
                                        std::size_t batch_size, std::mt19937_64& rng) {
  double loss_sum = 0;
  std::size_t correct = 0;
  const std::size_t K = model.num_classes();
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i)
      idx.push_back(i);
    auto batch = ds.make_batch(idx);
    auto logits = model.forward(batch, false, rng);
    auto loss = cross_entropy(logits, batch.labels);
    loss_sum += double(loss.item()) * double(idx.size());
    auto ld = logits.data();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const T* row = ld.data() + b * K;
      std::size_t arg = std::max_element(row, row + K) - row;
      if (int(arg) == batch.labels[b]) ++correct;
    }
  }
  return {loss_sum / double(ds.size()), double(correct) / double(ds.size())};
}
}  // namespace detail

// Trains until max_epochs or until validation loss fails to improve for
// `patience` consecutive epochs. Optionally restores the best weights.
template <class T>
TrainingHistory fit(IModel<T>& model, Dataset<T>& train, const Dataset<T>& val,
                    const FitOptions& opts,
                    const std::function<void(Dataset<T>&, std::mt19937_64&)>& on_epoch = {}) {
  if (train.empty() || val.empty()) throw UsageError("fit: empty dataset");
  std::mt19937_64 rng(opts.seed);
  auto& params = model.parameters();
  Adam<T> adam(params, T(opts.learning_rate));

  TrainingHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
  std::vector<std::vector<T>> best_weights;
  const std::size_t K = model.num_classes();

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    if (on_epoch) on_epoch(train, rng);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + std::min(order.size(), start + opts.batch_size));
      auto batch = train.make_batch(idx);
      auto logits = model.forward(batch, true, rng);
      auto loss = cross_entropy(logits, batch.labels);
      const double lv = double(loss.item());
      if (!std::isfinite(lv))
        throw DivergenceError("training diverged: loss is not finite at epoch " +
                              std::to_string(epoch));
      loss_sum += lv * double(idx.size());
      auto ld = logits.data();
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const T* row = ld.data() + b * K;
        if (int(std::max_element(row, row + K) - row) == batch.labels[b]) ++correct;
      }
      zero_grads(params);
      loss.backward();
      if (opts.clip_norm > 0) clip_global_norm(params, T(opts.clip_norm));
      adam.step();
    }

    auto [val_loss, val_acc] = detail::evaluate_pass(model, val, opts.batch_size, rng);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / double(train.size());
    stats.train_acc = double(correct) / double(train.size());
    stats.val_loss = val_loss;
    stats.val_acc = val_acc;
    history.epochs.push_back(stats);

    if (val_loss < best_val) {
      best_val = val_loss;
      history.best_epoch = epoch;
      epochs_since_best = 0;
      if (opts.early.restore_best) {
        best_weights.clear();
        for (auto& p : params) best_weights.push_back(p.tensor.mutable_data());
      }
    } else {
      ++epochs_since_best;
    }
    if (opts.on_epoch_end) opts.on_epoch_end(epoch);
    if (epochs_since_best >= opts.early.patience) break;
  }

  if (opts.early.restore_best && !best_weights.empty())
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i].tensor.mutable_data() = best_weights[i];
  return history;
}

// History serialization: one row per epoch.
inline std::string history_csv(const TrainingHistory& h) {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  os.precision(9);
  for (const auto& e : h.epochs)
    os << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_loss << ','
       << e.val_acc << '\n';
  return os.str();
}

}  // namespace moodseq
