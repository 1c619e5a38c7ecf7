// Layer vocabulary: LSTM cell and runners, dense, batch normalization,
// embedding lookup, time-distributed convolution blocks and pooling.
//
// Conventions: batch-major tensors. Sequences are (B,T,F); per-step inputs
// are (B,F). Input-to-hidden weights are stored (input,hidden) so a step is
// x·W + h·U + b.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "moodseq/tensor.hpp"

namespace moodseq {

template <class T>
struct Param {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

template <class T>
using ParamList = std::vector<Param<T>>;

// ---------------------------------------------------------------------------

template <class T>
struct Dense {
  Tensor<T> W, b;
  std::size_t in = 0, out = 0;

  Dense() = default;
  Dense(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng)
      : W(Tensor<T>::glorot({in_dim, out_dim}, rng)),
        b(Tensor<T>::zeros({out_dim}, true)),
        in(in_dim),
        out(out_dim) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.rank() != 2 || x.dim(1) != in)
      throw DimensionError("dense expects (B," + std::to_string(in) + "), got " +
                           shape_str(x.shape()));
    return add(matmul(x, W), b);
  }

  // Shared weights applied independently at every timestep of (B,T,in).
  Tensor<T> forward_time(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(2) != in)
      throw DimensionError("time-distributed dense expects (B,T," + std::to_string(in) +
                           "), got " + shape_str(x.shape()));
    const std::size_t B = x.dim(0), Tn = x.dim(1);
    auto y = forward(reshape(x, {B * Tn, in}));
    return reshape(y, {B, Tn, out});
  }

  void collect(ParamList<T>& params, const std::string& prefix) {
    params.push_back({prefix + ".W", W, true});
    params.push_back({prefix + ".b", b, true});
  }
};

// ---------------------------------------------------------------------------
// LSTM

template <class T>
struct LstmCellParams {
  // input-to-gate (input,hidden), recurrent (hidden,hidden), bias (hidden)
  Tensor<T> W_i, W_f, W_o, W_g;
  Tensor<T> U_i, U_f, U_o, U_g;
  Tensor<T> b_i, b_f, b_o, b_g;
  std::size_t input = 0, hidden = 0;

  LstmCellParams() = default;
  LstmCellParams(std::size_t input_dim, std::size_t hidden_dim, std::mt19937_64& rng)
      : W_i(Tensor<T>::glorot({input_dim, hidden_dim}, rng)),
        W_f(Tensor<T>::glorot({input_dim, hidden_dim}, rng)),
        W_o(Tensor<T>::glorot({input_dim, hidden_dim}, rng)),
        W_g(Tensor<T>::glorot({input_dim, hidden_dim}, rng)),
        U_i(Tensor<T>::glorot({hidden_dim, hidden_dim}, rng)),
        U_f(Tensor<T>::glorot({hidden_dim, hidden_dim}, rng)),
        U_o(Tensor<T>::glorot({hidden_dim, hidden_dim}, rng)),
        U_g(Tensor<T>::glorot({hidden_dim, hidden_dim}, rng)),
        b_i(Tensor<T>::zeros({hidden_dim}, true)),
        b_f(Tensor<T>::full({hidden_dim}, T(1), true)),  // forget bias 1.0
        b_o(Tensor<T>::zeros({hidden_dim}, true)),
        b_g(Tensor<T>::zeros({hidden_dim}, true)),
        input(input_dim),
        hidden(hidden_dim) {}

  void collect(ParamList<T>& params, const std::string& prefix) {
    const char* gates = "ifog";
    Tensor<T>* ws[] = {&W_i, &W_f, &W_o, &W_g};
    Tensor<T>* us[] = {&U_i, &U_f, &U_o, &U_g};
    Tensor<T>* bs[] = {&b_i, &b_f, &b_o, &b_g};
    for (int g = 0; g < 4; ++g) {
      std::string s(1, gates[g]);
      params.push_back({prefix + ".W_" + s, *ws[g], true});
      params.push_back({prefix + ".U_" + s, *us[g], true});
      params.push_back({prefix + ".b_" + s, *bs[g], true});
    }
  }
};

// One LSTM recurrence step on a batch. recurrent_dropout, when positive and
// training, is applied to h_prev before the recurrent matmuls.
template <class T>
std::pair<Tensor<T>, Tensor<T>> lstm_step(const LstmCellParams<T>& p, const Tensor<T>& x_t,
                                          const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                                          T recurrent_dropout = T(0), bool training = false,
                                          std::mt19937_64* rng = nullptr) {
  if (x_t.rank() != 2 || x_t.dim(1) != p.input)
    throw DimensionError("lstm_step input gate expects (B," + std::to_string(p.input) +
                         "), got " + shape_str(x_t.shape()));
  if (h_prev.rank() != 2 || h_prev.dim(1) != p.hidden)
    throw DimensionError("lstm_step recurrent gate expects (B," + std::to_string(p.hidden) +
                         "), got " + shape_str(h_prev.shape()));
  if (c_prev.shape() != h_prev.shape())
    throw DimensionError("lstm_step memory cell shape mismatch: " + shape_str(c_prev.shape()));

  Tensor<T> h_rec = h_prev;
  if (training && recurrent_dropout > T(0) && rng)
    h_rec = dropout(h_prev, recurrent_dropout, *rng);

  auto gate_i = sigmoid_op(add(add(matmul(x_t, p.W_i), matmul(h_rec, p.U_i)), p.b_i));
  auto gate_f = sigmoid_op(add(add(matmul(x_t, p.W_f), matmul(h_rec, p.U_f)), p.b_f));
  auto gate_o = sigmoid_op(add(add(matmul(x_t, p.W_o), matmul(h_rec, p.U_o)), p.b_o));
  auto mod_g = tanh_op(add(add(matmul(x_t, p.W_g), matmul(h_rec, p.U_g)), p.b_g));
  auto c_t = add(mul(gate_f, c_prev), mul(gate_i, mod_g));
  auto h_t = mul(gate_o, tanh_op(c_t));
  return {h_t, c_t};
}

// Runs the recurrence over (B,T,input) with zero initial state.
// return_all -> (B,T,hidden); otherwise -> (B,hidden) (last step).
template <class T>
Tensor<T> run_lstm(const LstmCellParams<T>& p, const Tensor<T>& seq, bool return_all,
                   T recurrent_dropout = T(0), bool training = false,
                   std::mt19937_64* rng = nullptr, bool reversed = false) {
  if (seq.rank() != 3) throw DimensionError("run_lstm expects (B,T,F), got " + shape_str(seq.shape()));
  const std::size_t B = seq.dim(0), Tn = seq.dim(1);
  if (Tn == 0) throw UsageError("run_lstm on empty sequence");
  Tensor<T> h = Tensor<T>::zeros({B, p.hidden});
  Tensor<T> c = Tensor<T>::zeros({B, p.hidden});
  std::vector<Tensor<T>> states(Tn, Tensor<T>());
  for (std::size_t step = 0; step < Tn; ++step) {
    const std::size_t t = reversed ? Tn - 1 - step : step;
    auto [h_t, c_t] = lstm_step(p, slice_time(seq, t), h, c, recurrent_dropout, training, rng);
    h = h_t;
    c = c_t;
    states[t] = h_t;  // stored at the source position
  }
  if (return_all) return stack_time(states);
  return h;
}

// Forward layer on the original order plus backward layer on the reversed
// order; row t is concat(fwd h_t, bwd h'_t aligned to position t).
template <class T>
Tensor<T> run_bilstm(const LstmCellParams<T>& fwd, const LstmCellParams<T>& bwd,
                     const Tensor<T>& seq, T recurrent_dropout = T(0), bool training = false,
                     std::mt19937_64* rng = nullptr) {
  if (fwd.hidden != bwd.hidden)
    throw DimensionError("bilstm hidden sizes differ: " + std::to_string(fwd.hidden) + " vs " +
                         std::to_string(bwd.hidden));
  auto hf = run_lstm(fwd, seq, true, recurrent_dropout, training, rng, false);
  auto hb = run_lstm(bwd, seq, true, recurrent_dropout, training, rng, true);
  return concat_last(hf, hb);
}

// ---------------------------------------------------------------------------
// batch normalization over all leading axes, per channel on the last axis

template <class T>
struct BatchNorm {
  Tensor<T> gamma, beta;
  // running statistics are non-trainable state; kept as tensors so they
  // serialize with the model and reload in place
  Tensor<T> running_mean, running_var;
  T eps = T(1e-5);
  T momentum = T(0.9);
  std::size_t channels = 0;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t c)
      : gamma(Tensor<T>::full({c}, T(1), true)),
        beta(Tensor<T>::zeros({c}, true)),
        running_mean(Tensor<T>::zeros({c})),
        running_var(Tensor<T>::full({c}, T(1))),
        channels(c) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    if (x.rank() < 2 || x.dim(x.rank() - 1) != channels)
      throw DimensionError("batch_norm expects last axis " + std::to_string(channels) +
                           ", got " + shape_str(x.shape()));
    const std::size_t C = channels;
    const std::size_t R = x.size() / C;
    if (training) {
      auto mean = std::make_shared<std::vector<T>>(C, T(0));
      auto inv_std = std::make_shared<std::vector<T>>(C, T(0));
      auto xd = x.data();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) (*mean)[c] += xd[r * C + c];
      for (auto& m : *mean) m /= T(R);
      std::vector<T> var(C, T(0));
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          T d = xd[r * C + c] - (*mean)[c];
          var[c] += d * d;
        }
      for (auto& v : var) v /= T(R);
      for (std::size_t c = 0; c < C; ++c) {
        auto& rm = running_mean.mutable_data();
        auto& rv = running_var.mutable_data();
        rm[c] = momentum * rm[c] + (T(1) - momentum) * (*mean)[c];
        rv[c] = momentum * rv[c] + (T(1) - momentum) * var[c];
        (*inv_std)[c] = T(1) / std::sqrt(var[c] + eps);
      }
      std::vector<T> xhat(x.size());
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
          xhat[r * C + c] = (xd[r * C + c] - (*mean)[c]) * (*inv_std)[c];
      auto norm = make_op<T>(x.shape(), std::move(xhat), {x},
                             [R, C, inv_std](detail::Node<T>& n) {
                               auto& px = *n.parents[0];
                               if (!px.requires_grad) return;
                               px.ensure_grad();
                               // d xhat -> d x through batch statistics
                               for (std::size_t c = 0; c < C; ++c) {
                                 T sum_g = T(0), sum_gx = T(0);
                                 for (std::size_t r = 0; r < R; ++r) {
                                   sum_g += n.grad[r * C + c];
                                   sum_gx += n.grad[r * C + c] * n.data[r * C + c];
                                 }
                                 const T is = (*inv_std)[c];
                                 for (std::size_t r = 0; r < R; ++r) {
                                   const T g = n.grad[r * C + c];
                                   const T xh = n.data[r * C + c];
                                   px.grad[r * C + c] +=
                                       is * (g - sum_g / T(R) - xh * sum_gx / T(R));
                                 }
                               }
                             });
      return add(mul(norm, gamma), beta);
    }
    // inference: frozen running statistics; gamma/beta stay on the graph
    std::vector<T> xhat(x.size());
    auto xd = x.data();
    std::vector<T> inv(C);
    for (std::size_t c = 0; c < C; ++c) inv[c] = T(1) / std::sqrt(running_var.data()[c] + eps);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c)
        xhat[r * C + c] = (xd[r * C + c] - running_mean.data()[c]) * inv[c];
    auto inv_shared = std::make_shared<std::vector<T>>(std::move(inv));
    auto norm =
        make_op<T>(x.shape(), std::move(xhat), {x}, [R, C, inv_shared](detail::Node<T>& n) {
          auto& px = *n.parents[0];
          if (!px.requires_grad) return;
          px.ensure_grad();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c)
              px.grad[r * C + c] += n.grad[r * C + c] * (*inv_shared)[c];
        });
    return add(mul(norm, gamma), beta);
  }

  void collect(ParamList<T>& params, const std::string& prefix) {
    params.push_back({prefix + ".gamma", gamma, true});
    params.push_back({prefix + ".beta", beta, true});
    params.push_back({prefix + ".running_mean", running_mean, false});
    params.push_back({prefix + ".running_var", running_var, false});
  }
};

// ---------------------------------------------------------------------------
// embedding lookup (frozen table; index 0 is the padding row)

template <class T>
struct Embedding {
  Tensor<T> table;  // (vocab+1, dim), requires_grad == false

  Embedding() = default;
  explicit Embedding(Tensor<T> t) : table(std::move(t)) { table.set_requires_grad(false); }

  // indices are row-major (B,W)
  Tensor<T> forward(const std::vector<int>& indices, std::size_t B, std::size_t W) const {
    const std::size_t V = table.dim(0), D = table.dim(1);
    std::vector<T> out(B * W * D);
    auto td = table.data();
    for (std::size_t i = 0; i < B * W; ++i) {
      int idx = indices[i];
      if (idx < 0 || std::size_t(idx) >= V)
        throw UsageError("embedding index " + std::to_string(idx) + " out of range [0," +
                         std::to_string(V) + ")");
      std::copy_n(td.data() + std::size_t(idx) * D, D, out.data() + i * D);
    }
    return Tensor<T>({B, W, D}, std::move(out), false);
  }
};

// ---------------------------------------------------------------------------
// time-distributed convolution along the feature axis of (B,T,F,C)

template <class T>
struct Conv1dTime {
  Tensor<T> W;  // (K*Cin, Cout)
  Tensor<T> b;  // (Cout)
  std::size_t kernel = 0, cin = 0, cout = 0;

  Conv1dTime() = default;
  Conv1dTime(std::size_t kernel_size, std::size_t in_channels, std::size_t out_channels,
             std::mt19937_64& rng)
      : W(Tensor<T>::glorot({kernel_size * in_channels, out_channels}, rng)),
        b(Tensor<T>::zeros({out_channels}, true)),
        kernel(kernel_size),
        cin(in_channels),
        cout(out_channels) {}

  // Same-padding 1-D convolution on the F axis, weight-shared across B and T.
  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(3) != cin)
      throw DimensionError("conv expects (B,T,F," + std::to_string(cin) + "), got " +
                           shape_str(x.shape()));
    const std::size_t B = x.dim(0), Tn = x.dim(1), F = x.dim(2);
    const std::size_t K = kernel;
    const std::ptrdiff_t pad = std::ptrdiff_t(K - 1) / 2;
    const std::size_t rows = B * Tn * F, cols = K * cin;
    std::vector<T> col(rows * cols, T(0));
    auto xd = x.data();
    // im2col
    for (std::size_t bt = 0; bt < B * Tn; ++bt) {
      const T* plane = xd.data() + bt * F * cin;
      for (std::size_t f = 0; f < F; ++f) {
        T* crow = col.data() + (bt * F + f) * cols;
        for (std::size_t k = 0; k < K; ++k) {
          const std::ptrdiff_t src = std::ptrdiff_t(f) + std::ptrdiff_t(k) - pad;
          if (src < 0 || src >= std::ptrdiff_t(F)) continue;
          std::copy_n(plane + std::size_t(src) * cin, cin, crow + k * cin);
        }
      }
    }
    auto col_t = make_op<T>({rows, cols}, std::move(col),
                         {x}, [B, Tn, F, K, pad, cinv = cin](detail::Node<T>& n) {
                           auto& px = *n.parents[0];
                           if (!px.requires_grad) return;
                           px.ensure_grad();
                           const std::size_t cols2 = K * cinv;
                           for (std::size_t bt = 0; bt < B * Tn; ++bt) {
                             T* plane = px.grad.data() + bt * F * cinv;
                             for (std::size_t f = 0; f < F; ++f) {
                               const T* crow = n.grad.data() + (bt * F + f) * cols2;
                               for (std::size_t k = 0; k < K; ++k) {
                                 const std::ptrdiff_t src =
                                     std::ptrdiff_t(f) + std::ptrdiff_t(k) - pad;
                                 if (src < 0 || src >= std::ptrdiff_t(F)) continue;
                                 T* dst = plane + std::size_t(src) * cinv;
                                 const T* s = crow + k * cinv;
                                 for (std::size_t c = 0; c < cinv; ++c) dst[c] += s[c];
                               }
                             }
                           }
                         });
    auto y = add(matmul(col_t, W), b);
    return reshape(y, {B, Tn, F, cout});
  }

  void collect(ParamList<T>& params, const std::string& prefix) {
    params.push_back({prefix + ".W", W, true});
    params.push_back({prefix + ".b", b, true});
  }
};

// Pooling along the feature axis of (B,T,F,C); F' = ceil(F/pool).
template <class T>
Tensor<T> pool_feature(const Tensor<T>& x, std::size_t pool, bool use_max) {
  if (x.rank() != 4) throw DimensionError("pool_feature expects rank-4, got " + shape_str(x.shape()));
  if (pool == 0) throw UsageError("pool size must be positive");
  const std::size_t B = x.dim(0), Tn = x.dim(1), F = x.dim(2), C = x.dim(3);
  const std::size_t Fp = (F + pool - 1) / pool;
  if (Fp == 0) throw UsageError("pooled feature dimension reached 0");
  auto xd = x.data();
  std::vector<T> out(B * Tn * Fp * C);
  if (use_max) {
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    for (std::size_t bt = 0; bt < B * Tn; ++bt)
      for (std::size_t fp = 0; fp < Fp; ++fp)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t f0 = fp * pool;
          const std::size_t f1 = std::min(F, f0 + pool);
          std::size_t best = f0;
          T bv = xd[(bt * F + f0) * C + c];
          for (std::size_t f = f0 + 1; f < f1; ++f) {
            T v = xd[(bt * F + f) * C + c];
            if (v > bv) { bv = v; best = f; }
          }
          const std::size_t oi = (bt * Fp + fp) * C + c;
          out[oi] = bv;
          (*argmax)[oi] = best;
        }
    return make_op<T>({B, Tn, Fp, C}, std::move(out), {x},
                      [B, Tn, F, Fp, C, argmax](detail::Node<T>& n) {
                        auto& px = *n.parents[0];
                        if (!px.requires_grad) return;
                        px.ensure_grad();
                        for (std::size_t bt = 0; bt < B * Tn; ++bt)
                          for (std::size_t fp = 0; fp < Fp; ++fp)
                            for (std::size_t c = 0; c < C; ++c) {
                              const std::size_t oi = (bt * Fp + fp) * C + c;
                              px.grad[(bt * F + (*argmax)[oi]) * C + c] += n.grad[oi];
                            }
                      });
  }
  // average pooling over the (possibly short) tail window
  for (std::size_t bt = 0; bt < B * Tn; ++bt)
    for (std::size_t fp = 0; fp < Fp; ++fp)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t f0 = fp * pool;
        const std::size_t f1 = std::min(F, f0 + pool);
        T acc = T(0);
        for (std::size_t f = f0; f < f1; ++f) acc += xd[(bt * F + f) * C + c];
        out[(bt * Fp + fp) * C + c] = acc / T(f1 - f0);
      }
  return make_op<T>({B, Tn, Fp, C}, std::move(out), {x},
                    [B, Tn, F, Fp, C, pool](detail::Node<T>& n) {
                      auto& px = *n.parents[0];
                      if (!px.requires_grad) return;
                      px.ensure_grad();
                      for (std::size_t bt = 0; bt < B * Tn; ++bt)
                        for (std::size_t fp = 0; fp < Fp; ++fp) {
                          const std::size_t f0 = fp * pool;
                          const std::size_t f1 = std::min(F, f0 + pool);
                          const T inv = T(1) / T(f1 - f0);
                          for (std::size_t c = 0; c < C; ++c) {
                            const T g = n.grad[(bt * Fp + fp) * C + c] * inv;
                            for (std::size_t f = f0; f < f1; ++f)
                              px.grad[(bt * F + f) * C + c] += g;
                          }
                        }
                    });
}

// ---------------------------------------------------------------------------
// T-CNN block: convolution -> pooling -> batch normalization

struct TcnnBlockConfig {
  std::size_t kernel_count = 0;
  std::size_t kernel_size = 0;
  std::size_t pool_size = 2;
};

// The proposed audio architecture stacks exactly these five blocks.
inline std::vector<TcnnBlockConfig> proposed_tcnn_stack() {
  return {{64, 3, 2}, {64, 3, 2}, {64, 3, 2}, {128, 3, 2}, {256, 9, 2}};
}

template <class T>
struct TcnnBlock {
  Conv1dTime<T> conv;
  BatchNorm<T> bn;
  std::size_t pool = 2;
  bool max_pool = true;

  TcnnBlock() = default;
  TcnnBlock(const TcnnBlockConfig& cfg, std::size_t in_channels, std::mt19937_64& rng,
            bool use_max_pool = true)
      : conv(cfg.kernel_size, in_channels, cfg.kernel_count, rng),
        bn(cfg.kernel_count),
        pool(cfg.pool_size),
        max_pool(use_max_pool) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    auto y = conv.forward(x);
    y = pool_feature(y, pool, max_pool);
    return bn.forward(y, training);
  }

  void collect(ParamList<T>& params, const std::string& prefix) {
    conv.collect(params, prefix + ".conv");
    bn.collect(params, prefix + ".bn");
  }
};

// Mean over the time axis of (B,T,F,C) or (B,T,M), flattened per sample.
template <class T>
Tensor<T> global_average_pool_time(const Tensor<T>& x) {
  if (x.rank() == 4) {
    const std::size_t B = x.dim(0), Tn = x.dim(1), M = x.dim(2) * x.dim(3);
    return mean_time(reshape(x, {B, Tn, M}));
  }
  if (x.rank() == 3) return mean_time(x);
  throw DimensionError("global_average_pool_time expects rank 3 or 4, got " +
                       shape_str(x.shape()));
}

template <class T>
Tensor<T> global_max_pool_time(const Tensor<T>& x) {
  if (x.rank() != 3)
    throw DimensionError("global_max_pool_time expects rank-3, got " + shape_str(x.shape()));
  return max_time(x);
}

}  // namespace moodseq
