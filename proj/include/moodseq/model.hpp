// Named architectures: the four audio models, the text models, and the three
// fused variants, plus the PHQ-8 severity binning they all classify into.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "moodseq/attention.hpp"
#include "moodseq/layers.hpp"
#include "moodseq/training.hpp"

namespace moodseq {

// ---------------------------------------------------------------------------
// severity labels

enum class Severity : int {
  Healthy = 0,
  Mild = 1,
  Moderate = 2,
  ModeratelySevere = 3,
  Severe = 4,
};

inline constexpr int kNumClasses = 5;

inline const char* severity_name(Severity s) {
  switch (s) {
    case Severity::Healthy: return "healthy";
    case Severity::Mild: return "mild";
    case Severity::Moderate: return "moderate";
    case Severity::ModeratelySevere: return "moderately_severe";
    case Severity::Severe: return "severe";
  }
  return "?";
}

// PHQ-8 in [0,24] -> five left-closed bins: [0,5) [5,10) [10,15) [15,20) [20,24].
inline Severity phq_to_label(int score) {
  if (score < 0 || score > 24)
    throw UsageError("PHQ-8 score " + std::to_string(score) + " outside [0,24]");
  if (score < 5) return Severity::Healthy;
  if (score < 10) return Severity::Mild;
  if (score < 15) return Severity::Moderate;
  if (score < 20) return Severity::ModeratelySevere;
  return Severity::Severe;
}

// Binary view: significant symptoms iff PHQ-8 > 10.
inline bool phq_significant(int score) {
  if (score < 0 || score > 24)
    throw UsageError("PHQ-8 score " + std::to_string(score) + " outside [0,24]");
  return score > 10;
}

// Class-level binary view used when only the 5-class label is available.
inline bool label_significant(int label) { return label >= int(Severity::Moderate); }

// ---------------------------------------------------------------------------
// audio models

enum class AudioVariant { LstmFc, BilstmFc, LstmTcnn, BilstmTcnn };

inline AudioVariant audio_variant_from(const std::string& s) {
  if (s == "lstm_fc") return AudioVariant::LstmFc;
  if (s == "bilstm_fc") return AudioVariant::BilstmFc;
  if (s == "lstm_tcnn") return AudioVariant::LstmTcnn;
  if (s == "bilstm_tcnn") return AudioVariant::BilstmTcnn;
  throw UsageError("unknown audio model variant: " + s);
}

inline constexpr std::size_t kAudioFeatures = 73;
inline constexpr std::size_t kAudioHidden = 73;
inline constexpr std::size_t kExtractorWidth = 32;
inline constexpr double kDropoutRate = 0.2;

struct AudioModelConfig {
  AudioVariant variant = AudioVariant::BilstmTcnn;
  std::size_t timestep = 16;
  std::size_t features = kAudioFeatures;
  std::size_t hidden = kAudioHidden;
  bool extractor = false;       // replace the 5-way head by a 32-unit output
  bool tcnn_max_pool = true;    // average pooling behind a switch
};

template <class T>
class AudioModel : public IModel<T> {
 public:
  AudioModel(const AudioModelConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    input_bn_ = BatchNorm<T>(cfg.features);
    fwd_ = LstmCellParams<T>(cfg.features, cfg.hidden, rng);
    const bool bi = cfg.variant == AudioVariant::BilstmFc || cfg.variant == AudioVariant::BilstmTcnn;
    if (bi) bwd_ = LstmCellParams<T>(cfg.features, cfg.hidden, rng);
    const std::size_t lstm_out = bi ? 2 * cfg.hidden : cfg.hidden;
    const bool tcnn = is_tcnn();
    std::size_t trunk_in = lstm_out;
    if (tcnn) {
      std::size_t channels = 1, fdim = lstm_out;
      for (const auto& bc : proposed_tcnn_stack()) {
        blocks_.emplace_back(bc, channels, rng, cfg.tcnn_max_pool);
        channels = bc.kernel_count;
        fdim = (fdim + bc.pool_size - 1) / bc.pool_size;
        if (fdim == 0) throw UsageError("tcnn configuration pooled the feature axis to 0");
      }
      trunk_in = fdim * channels;
    }
    dense1_ = Dense<T>(trunk_in, 128, rng);
    dense2_ = Dense<T>(128, 64, rng);
    if (!tcnn) mid_bn_ = BatchNorm<T>(64);
    head_ = Dense<T>(64, cfg.extractor ? kExtractorWidth : std::size_t(kNumClasses), rng);
    collect_params();
  }

  bool is_tcnn() const {
    return cfg_.variant == AudioVariant::LstmTcnn || cfg_.variant == AudioVariant::BilstmTcnn;
  }
  bool is_bidirectional() const { return bwd_.has_value(); }
  const AudioModelConfig& config() const { return cfg_; }

  // Trunk shared by classifier and extractor: everything below the head,
  // kept on the time axis. Output (B,T',trunk_width).
  Tensor<T> trunk_sequence(const Tensor<T>& x, bool training, std::mt19937_64& rng) {
    if (x.rank() != 3 || x.dim(2) != cfg_.features)
      throw DimensionError("audio model expects (B,T," + std::to_string(cfg_.features) +
                           "), got " + shape_str(x.shape()));
    auto h = input_bn_.forward(x, training);
    Tensor<T> states;
    if (bwd_)
      states = run_bilstm(fwd_, *bwd_, h, T(kDropoutRate), training, &rng);
    else
      states = run_lstm(fwd_, h, true, T(kDropoutRate), training, &rng);
    if (!is_tcnn()) return states;
    const std::size_t B = states.dim(0), Tn = states.dim(1), M = states.dim(2);
    auto y = reshape(states, {B, Tn, M, 1});  // expand channel axis
    for (auto& blk : blocks_) y = blk.forward(y, training);
    return reshape(y, {B, y.dim(1), y.dim(2) * y.dim(3)});
  }

  Tensor<T> forward(const Batch<T>& batch, bool training, std::mt19937_64& rng) override {
    if (!batch.audio_present) throw UsageError("audio model needs audio features in the batch");
    auto seq = trunk_sequence(batch.audio, training, rng);
    Tensor<T> flat;
    if (is_tcnn()) {
      flat = global_average_pool_time(seq);
    } else {
      flat = slice_time(seq, seq.dim(1) - 1);  // last hidden state
    }
    auto z = dense1_.forward(flat);
    if (training) z = dropout(z, T(kDropoutRate), rng);
    z = dense2_.forward(z);
    if (training) z = dropout(z, T(kDropoutRate), rng);
    if (mid_bn_) z = mid_bn_->forward(z, training);
    return head_.forward(z);
  }

  // Extractor-mode output: the per-timestep 32-wide feature sequence fed to
  // the fusion stage. Dense layers are the classifier's, applied
  // time-distributed; the head must have been built 32-wide.
  Tensor<T> extract_sequence(const Tensor<T>& x, bool training, std::mt19937_64& rng) {
    if (!cfg_.extractor) throw UsageError("audio model was not built in extractor mode");
    auto seq = trunk_sequence(x, training, rng);
    auto z = dense1_.forward_time(seq);
    if (training) z = dropout(z, T(kDropoutRate), rng);
    z = dense2_.forward_time(z);
    if (training) z = dropout(z, T(kDropoutRate), rng);
    return head_.forward_time(z);  // (B,T',32)
  }

  ParamList<T>& parameters() override { return params_; }
  std::size_t num_classes() const override { return kNumClasses; }

  void collect(ParamList<T>& out, const std::string& prefix) {
    input_bn_.collect(out, prefix + ".input_bn");
    fwd_.collect(out, prefix + ".lstm_fwd");
    if (bwd_) bwd_->collect(out, prefix + ".lstm_bwd");
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect(out, prefix + ".tcnn" + std::to_string(i));
    dense1_.collect(out, prefix + ".dense1");
    dense2_.collect(out, prefix + ".dense2");
    if (mid_bn_) mid_bn_->collect(out, prefix + ".mid_bn");
    head_.collect(out, prefix + ".head");
  }

  BatchNorm<T>& input_bn() { return input_bn_; }
  std::vector<TcnnBlock<T>>& tcnn_blocks() { return blocks_; }

 private:
  void collect_params() {
    params_.clear();
    collect(params_, "audio");
  }

  AudioModelConfig cfg_;
  BatchNorm<T> input_bn_;
  LstmCellParams<T> fwd_;
  std::optional<LstmCellParams<T>> bwd_;
  std::vector<TcnnBlock<T>> blocks_;
  Dense<T> dense1_, dense2_;
  std::optional<BatchNorm<T>> mid_bn_;
  Dense<T> head_;
  ParamList<T> params_;
};

// ---------------------------------------------------------------------------
// text models

enum class TextVariant { LstmFc, BilstmFc, BilstmAttn };

inline TextVariant text_variant_from(const std::string& s) {
  if (s == "text_lstm" || s == "lstm_fc") return TextVariant::LstmFc;
  if (s == "text_bilstm" || s == "bilstm_fc") return TextVariant::BilstmFc;
  if (s == "text_bilstm_attn" || s == "bilstm_attn") return TextVariant::BilstmAttn;
  throw UsageError("unknown text model variant: " + s);
}

inline constexpr std::size_t kTextHidden = 100;
inline constexpr std::size_t kEmbeddingDim = 100;

struct TextModelConfig {
  TextVariant variant = TextVariant::BilstmAttn;
  std::size_t window_size = 64;
  std::size_t hidden = kTextHidden;
  bool extractor = false;
};

template <class T>
class TextModel : public IModel<T> {
 public:
  // embedding table is (vocab+1, 100), frozen.
  TextModel(const TextModelConfig& cfg, Tensor<T> embedding_table, std::mt19937_64& rng)
      : cfg_(cfg), embedding_(std::move(embedding_table)) {
    if (embedding_.table.rank() != 2 || embedding_.table.dim(1) != kEmbeddingDim)
      throw UsageError("embedding table must be (vocab+1," + std::to_string(kEmbeddingDim) + ")");
    input_bn_ = BatchNorm<T>(kEmbeddingDim);
    fwd_ = LstmCellParams<T>(kEmbeddingDim, cfg.hidden, rng);
    const bool bi = cfg.variant != TextVariant::LstmFc;
    if (bi) bwd_ = LstmCellParams<T>(kEmbeddingDim, cfg.hidden, rng);
    const std::size_t lstm_out = bi ? 2 * cfg.hidden : cfg.hidden;
    if (cfg.variant == TextVariant::BilstmAttn)
      attn_ = SelfSummary<T>(lstm_out, lstm_out, lstm_out, rng);
    dense1_ = Dense<T>(lstm_out, 256, rng);
    dense2_ = Dense<T>(256, 128, rng);
    head_ = Dense<T>(128, cfg.extractor ? kExtractorWidth : std::size_t(kNumClasses), rng);
    collect_params();
  }

  const TextModelConfig& config() const { return cfg_; }
  bool is_bidirectional() const { return bwd_.has_value(); }

  Tensor<T> states_sequence(const std::vector<int>& tokens, std::size_t B, std::size_t W,
                            bool training, std::mt19937_64& rng) {
    auto emb = embedding_.forward(tokens, B, W);
    auto h = input_bn_.forward(emb, training);
    if (bwd_) return run_bilstm(fwd_, *bwd_, h, T(kDropoutRate), training, &rng);
    return run_lstm(fwd_, h, true, T(kDropoutRate), training, &rng);
  }

  Tensor<T> forward(const Batch<T>& batch, bool training, std::mt19937_64& rng) override {
    if (batch.token_width == 0) throw UsageError("text model needs token windows in the batch");
    const std::size_t B = batch.labels.size(), W = batch.token_width;
    auto states = states_sequence(batch.tokens, B, W, training, rng);
    Tensor<T> summary;
    if (attn_) {
      auto out = attn_->forward(states);
      last_attention_ = out.weights.detach();
      summary = out.context;
    } else {
      summary = slice_time(states, states.dim(1) - 1);
    }
    auto z = dense1_.forward(summary);
    if (training) z = dropout(z, T(kDropoutRate), rng);
    z = dense2_.forward(z);
    if (training) z = dropout(z, T(kDropoutRate), rng);
    return head_.forward(z);
  }

  Tensor<T> extract_sequence(const std::vector<int>& tokens, std::size_t B, std::size_t W,
                             bool training, std::mt19937_64& rng) {
    if (!cfg_.extractor) throw UsageError("text model was not built in extractor mode");
    auto states = states_sequence(tokens, B, W, training, rng);
    auto z = dense1_.forward_time(states);
    if (training) z = dropout(z, T(kDropoutRate), rng);
    z = dense2_.forward_time(z);
    if (training) z = dropout(z, T(kDropoutRate), rng);
    return head_.forward_time(z);  // (B,W,32)
  }

  // attention weights of the last forward pass, (B,W); empty if no attention
  const Tensor<T>& last_attention() const { return last_attention_; }

  ParamList<T>& parameters() override { return params_; }
  std::size_t num_classes() const override { return kNumClasses; }

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".embedding", embedding_.table, false});
    input_bn_.collect(out, prefix + ".input_bn");
    fwd_.collect(out, prefix + ".lstm_fwd");
    if (bwd_) bwd_->collect(out, prefix + ".lstm_bwd");
    if (attn_) attn_->collect(out, prefix + ".attention");
    dense1_.collect(out, prefix + ".dense1");
    dense2_.collect(out, prefix + ".dense2");
    head_.collect(out, prefix + ".head");
  }

 private:
  void collect_params() {
    params_.clear();
    collect(params_, "text");
  }

  TextModelConfig cfg_;
  Embedding<T> embedding_;
  BatchNorm<T> input_bn_;
  LstmCellParams<T> fwd_;
  std::optional<LstmCellParams<T>> bwd_;
  std::optional<SelfSummary<T>> attn_;
  Dense<T> dense1_, dense2_;
  Dense<T> head_;
  Tensor<T> last_attention_;
  ParamList<T> params_;
};

// ---------------------------------------------------------------------------
// fused audio-text models

enum class FusionKind { MaxpoolConcat, AttnAlign, AttnAlignFuse };

inline FusionKind fusion_kind_from(const std::string& s) {
  if (s == "fused_maxpool" || s == "maxpool_concat") return FusionKind::MaxpoolConcat;
  if (s == "fused_attn_align" || s == "attn_align") return FusionKind::AttnAlign;
  if (s == "fused_attn_fuse" || s == "attn_align_fuse") return FusionKind::AttnAlignFuse;
  throw UsageError("unknown fusion mode: " + s);
}

struct FusedModelConfig {
  bool bidirectional_text = true;  // uni vs bi text encoder
  FusionKind fusion = FusionKind::AttnAlignFuse;
  std::size_t window_size = 64;
  std::size_t audio_timestep = 16;
};

template <class T>
class FusedModel : public IModel<T> {
 public:
  FusedModel(const FusedModelConfig& cfg, Tensor<T> embedding_table, std::mt19937_64& rng)
      : cfg_(cfg) {
    AudioModelConfig acfg;
    acfg.variant = AudioVariant::BilstmTcnn;  // audio side uses the proposed architecture
    acfg.timestep = cfg.audio_timestep;
    acfg.extractor = true;
    audio_ = std::make_unique<AudioModel<T>>(acfg, rng);
    TextModelConfig tcfg;
    tcfg.variant = cfg.bidirectional_text ? TextVariant::BilstmFc : TextVariant::LstmFc;
    tcfg.window_size = cfg.window_size;
    tcfg.extractor = true;
    text_ = std::make_unique<TextModel<T>>(tcfg, std::move(embedding_table), rng);
    if (cfg.fusion != FusionKind::MaxpoolConcat) {
      audio_attn_ = SelfSummary<T>(kExtractorWidth, kExtractorWidth, kExtractorWidth, rng);
      text_attn_ = SelfSummary<T>(kExtractorWidth, kExtractorWidth, kExtractorWidth, rng);
    }
    if (cfg.fusion == FusionKind::AttnAlignFuse) {
      fuse_attn_ = SelfSummary<T>(kExtractorWidth, kExtractorWidth, kExtractorWidth, rng);
      head_ = Dense<T>(kExtractorWidth, kNumClasses, rng);
    } else {
      head_ = Dense<T>(2 * kExtractorWidth, kNumClasses, rng);
    }
    collect_params();
  }

  Tensor<T> forward(const Batch<T>& batch, bool training, std::mt19937_64& rng) override {
    if (!batch.audio_present || batch.token_width == 0)
      throw UsageError("fused model needs both audio and token windows in the batch");
    const std::size_t B = batch.labels.size();
    auto audio_seq = audio_->extract_sequence(batch.audio, training, rng);  // (B,Ta,32)
    auto text_seq =
        text_->extract_sequence(batch.tokens, B, batch.token_width, training, rng);  // (B,Wt,32)

    Tensor<T> audio_vec, text_vec;
    if (cfg_.fusion == FusionKind::MaxpoolConcat) {
      audio_vec = global_max_pool_time(audio_seq);
      text_vec = global_max_pool_time(text_seq);
    } else {
      auto ao = audio_attn_->forward(audio_seq);
      auto to = text_attn_->forward(text_seq);
      audio_vec = ao.context;
      text_vec = to.context;
      last_audio_attention_ = ao.weights.detach();
      last_text_attention_ = to.weights.detach();
    }
    if (cfg_.fusion == FusionKind::AttnAlignFuse) {
      auto stacked = stack_time(std::vector<Tensor<T>>{audio_vec, text_vec});  // (B,2,32)
      auto fo = fuse_attn_->forward(stacked);
      last_modality_weights_ = fo.weights.detach();  // (B,2)
      return head_.forward(fo.context);
    }
    return head_.forward(concat_last(audio_vec, text_vec));
  }

  const Tensor<T>& last_modality_weights() const { return last_modality_weights_; }
  const Tensor<T>& last_audio_attention() const { return last_audio_attention_; }
  const Tensor<T>& last_text_attention() const { return last_text_attention_; }
  const FusedModelConfig& config() const { return cfg_; }
  AudioModel<T>& audio_extractor() { return *audio_; }
  TextModel<T>& text_extractor() { return *text_; }

  ParamList<T>& parameters() override { return params_; }
  std::size_t num_classes() const override { return kNumClasses; }

  void collect(ParamList<T>& out, const std::string& prefix) {
    audio_->collect(out, prefix + ".audio");
    text_->collect(out, prefix + ".text");
    if (audio_attn_) audio_attn_->collect(out, prefix + ".align_audio");
    if (text_attn_) text_attn_->collect(out, prefix + ".align_text");
    if (fuse_attn_) fuse_attn_->collect(out, prefix + ".fuse");
    head_.collect(out, prefix + ".head");
  }

 private:
  void collect_params() {
    params_.clear();
    collect(params_, "fused");
  }

  FusedModelConfig cfg_;
  std::unique_ptr<AudioModel<T>> audio_;
  std::unique_ptr<TextModel<T>> text_;
  std::optional<SelfSummary<T>> audio_attn_, text_attn_, fuse_attn_;
  Dense<T> head_;
  Tensor<T> last_modality_weights_, last_audio_attention_, last_text_attention_;
  ParamList<T> params_;
};

}  // namespace moodseq
