// End-to-end orchestration shared by the CLI and the acceptance suite:
// corpus loading, window assembly and normalization, model construction,
// training with optional balancing and fused re-pairing, evaluation at the
// window and patient level, checkpoint metadata, and corpus statistics.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "moodseq/checkpoint.hpp"
#include "moodseq/evaluation.hpp"
#include "moodseq/model.hpp"
#include "moodseq/synth_corpus.hpp"
#include "moodseq/text_pipeline.hpp"

namespace moodseq {

enum class ModelFamily { Audio, Text, Fused };

// Family is derived from the model name; unknown names throw UsageError.
ModelFamily model_family(const std::string& name);

struct RunConfig {
  std::string corpus_dir;
  std::string embeddings_file;  // empty -> <corpus>/embeddings.txt
  std::string stopwords_file;   // empty -> shipped list
  std::string model = "bilstm_tcnn";
  std::size_t timestep = 16;    // audio window, frames
  std::size_t window = 64;      // text window, tokens
  bool remove_stopwords = true;
  std::uint64_t seed = 1;
  int epochs = 30;
  std::size_t batch = 32;
  double learning_rate = 1e-3;
  bool balance = false;
  std::size_t max_windows_per_subject = 0;  // 0 = unlimited
};

struct SubjectWindows {
  int subject = 0;
  int label = 0;
  std::vector<std::vector<float>> audio;  // timestep*73 each, normalized
  std::vector<std::vector<int>> tokens;   // window token ids each
};

struct PreparedCorpus {
  ModelFamily family = ModelFamily::Audio;
  std::size_t timestep = 0, window = 0;
  std::vector<float> feat_mean, feat_std;  // training-partition z-score stats
  Vocabulary vocab;                        // text/fused only
  EmbeddingTable embeddings;               // text/fused only
  std::map<std::string, std::vector<SubjectWindows>> partitions;

  // Flat dataset for a partition. For the fused family audio and token
  // windows of each subject are paired index-by-index.
  Dataset<float> dataset(const std::string& partition) const;
};

PreparedCorpus prepare_corpus(const RunConfig& cfg);

// Raw-file window assembly with given normalization stats (predict path).
std::vector<std::vector<float>> audio_windows_for(const std::string& covarep_file,
                                                  std::size_t timestep,
                                                  const std::vector<float>& mean,
                                                  const std::vector<float>& stddev);
std::vector<std::vector<int>> token_windows_for(const std::string& transcript_file,
                                                std::size_t window, const Vocabulary& vocab,
                                                const NormalizeOptions& opts);

std::unique_ptr<IModel<float>> build_model(const RunConfig& cfg, const PreparedCorpus& data,
                                           std::mt19937_64& rng);

// Oversamples minority classes in place (index duplication, seeded).
void balance_dataset(Dataset<float>& ds, std::uint64_t seed);

// Trains on the corpus train/val split. Handles oversampling balance and,
// for the fused family, per-epoch re-pairing of audio and text windows.
// `progress` runs after every epoch with the epoch index.
TrainingHistory train_model(IModel<float>& model, const RunConfig& cfg,
                            const PreparedCorpus& data,
                            const std::function<void(int)>& progress = {});

struct EvalOutputs {
  std::vector<int> labels, preds, subjects;
  std::vector<double> scores;  // N x 5 softmax rows
  EvaluationReport window_report;
  EvaluationReport patient_report;
  std::vector<int> patient_labels, patient_preds;
  RocResult roc;
};

EvalOutputs evaluate_model(IModel<float>& model, const Dataset<float>& ds,
                           std::size_t batch_size);

// Checkpoint metadata round-trip: enough to rebuild the model and the
// preprocessing (vocabulary, normalization stats) without the corpus.
nlohmann::json checkpoint_meta(const RunConfig& cfg, const PreparedCorpus& data);

struct RestoredModel {
  RunConfig cfg;
  Vocabulary vocab;
  std::vector<float> feat_mean, feat_std;
  std::unique_ptr<IModel<float>> model;
};

RestoredModel restore_model(const std::string& checkpoint_path);

// Dataset assembly from raw files with externally supplied preprocessing
// state — the eval/predict path, where the checkpoint provides the
// vocabulary and normalization statistics instead of the training split.
Dataset<float> assemble_dataset(const RunConfig& cfg, const std::string& partition,
                                const Vocabulary& vocab, const std::vector<float>& mean,
                                const std::vector<float>& stddev);

// Control vs experiment (PHQ-8 > 10) descriptive statistics over the corpus.
struct CorpusStatistics {
  GroupStats control_duration, experiment_duration;  // seconds per subject
  GroupStats control_sentence, experiment_sentence;  // words per utterance
  TTestResult duration_test, sentence_test;
  std::vector<double> control_durations, experiment_durations;
  std::vector<double> control_sentences, experiment_sentences;
};

CorpusStatistics corpus_statistics(const std::string& corpus_dir, bool pooled = false);

}  // namespace moodseq
