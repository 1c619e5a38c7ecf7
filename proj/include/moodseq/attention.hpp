// Additive attention over encoder hidden states. The score of state h_j
// against a query s is v' * tanh(W_s*s + W_h*h_j); weights are the softmax
// of the scores and the context is the weighted sum of the states.

#pragma once

#include "moodseq/layers.hpp"
#include "moodseq/tensor.hpp"

namespace moodseq {

template <class T>
struct AttentionParams {
  Tensor<T> W_s;  // (query_dim, score_dim)
  Tensor<T> W_h;  // (hidden_dim, score_dim)
  Tensor<T> v;    // (score_dim, 1)
  std::size_t query_dim = 0, hidden_dim = 0, score_dim = 0;

  AttentionParams() = default;
  AttentionParams(std::size_t query, std::size_t hidden, std::size_t score,
                  std::mt19937_64& rng)
      : W_s(Tensor<T>::glorot({query, score}, rng)),
        W_h(Tensor<T>::glorot({hidden, score}, rng)),
        v(Tensor<T>::glorot({score, 1}, rng)),
        query_dim(query),
        hidden_dim(hidden),
        score_dim(score) {}

  void collect(ParamList<T>& params, const std::string& prefix) {
    params.push_back({prefix + ".W_s", W_s, true});
    params.push_back({prefix + ".W_h", W_h, true});
    params.push_back({prefix + ".v", v, true});
  }
};

template <class T>
struct AttentionOutput {
  Tensor<T> context;  // (B, hidden_dim)
  Tensor<T> weights;  // (B, T), strictly positive, rows sum to 1
};

template <class T>
AttentionOutput<T> attend(const AttentionParams<T>& p, const Tensor<T>& query,
                          const Tensor<T>& states) {
  if (states.rank() != 3)
    throw DimensionError("attend expects states (B,T,H), got " + shape_str(states.shape()));
  const std::size_t B = states.dim(0), Tn = states.dim(1), H = states.dim(2);
  if (Tn == 0) throw UsageError("attend on empty state sequence");
  if (H != p.hidden_dim)
    throw DimensionError("attend hidden dim " + std::to_string(H) + " != " +
                         std::to_string(p.hidden_dim));
  if (query.rank() != 2 || query.dim(0) != B || query.dim(1) != p.query_dim)
    throw DimensionError("attend query expects (B," + std::to_string(p.query_dim) + "), got " +
                         shape_str(query.shape()));

  auto qs = matmul(query, p.W_s);                         // (B,S)
  auto hs = matmul(reshape(states, {B * Tn, H}), p.W_h);  // (B*T,S)
  auto pre = add(reshape(hs, {B, Tn, p.score_dim}), repeat_time(qs, Tn));
  auto scores = reshape(matmul(reshape(tanh_op(pre), {B * Tn, p.score_dim}), p.v), {B, Tn});
  auto weights = softmax(scores);
  auto context = weighted_sum_time(states, weights);
  return {context, weights};
}

// Attention summary of a sequence against a learned constant query vector;
// the standard reduction of additive attention to sequence classification.
template <class T>
struct SelfSummary {
  AttentionParams<T> params;
  Tensor<T> query;  // (query_dim), trainable

  SelfSummary() = default;
  SelfSummary(std::size_t query_dim, std::size_t hidden, std::size_t score,
              std::mt19937_64& rng)
      : params(query_dim, hidden, score, rng),
        query(Tensor<T>::glorot({query_dim}, rng)) {}

  AttentionOutput<T> forward(const Tensor<T>& states) const {
    const std::size_t B = states.dim(0);
    auto q = repeat_time(reshape(query, {1, params.query_dim}), B);
    return attend(params, reshape(q, {B, params.query_dim}), states);
  }

  void collect(ParamList<T>& param_list, const std::string& prefix) {
    params.collect(param_list, prefix);
    param_list.push_back({prefix + ".query", query, true});
  }
};

}  // namespace moodseq
