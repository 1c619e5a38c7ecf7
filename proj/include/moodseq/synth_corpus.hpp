// Deterministic synthetic corpus generator. Emits a registry, per-subject
// COVAREP CSVs and transcript TSVs, and an embedding file, with injected
// class-dependent signal in both modalities:
//   - audio: per-class +-shift patterns on 8 feature columns, applied in
//     short recurring bursts on top of AR(1) background noise;
//   - text: class-specific marker tokens at a configurable rate, and shorter
//     sentences for the experiment group (PHQ-8 > 10).
// Audio duration is class-independent by construction.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace moodseq {

struct GeneratorConfig {
  std::uint64_t seed = 7;
  // subjects per class for the train/val/test partitions
  std::array<std::array<std::size_t, 5>, 3> partition_counts = {{
      {16, 37, 30, 15, 9},
      {5, 13, 7, 4, 6},
      {5, 20, 10, 5, 7},
  }};
  double frames_mean = 3000;  // 10 ms frames per subject (~30 s)
  double frames_std = 300;
  std::size_t min_frames = 600;
  std::size_t utterances_per_subject = 18;  // participant turns
  std::size_t vuv_col = 1;
  double vuv_rate = 0.85;
  double audio_signal = 4.0;   // burst mean-shift amplitude
  std::size_t burst_len = 10;  // frames per burst
  std::size_t burst_gap = 8;   // frames between bursts
  // class markers come in bursts: every marker_period-th participant turn is
  // a marker turn whose words carry the class marker with marker_rate; all
  // other words may emit a random-class distractor marker instead
  double marker_rate = 0.4;
  std::size_t marker_period = 3;
  double distractor_rate = 0.03;
  double control_sentence_mean = 10.0;
  double experiment_sentence_factor = 0.75;
};

struct SubjectRecord {
  int id = 0;
  int phq8 = 0;
  std::string gender;
  std::string partition;  // train | val | test
};

inline const std::array<const char*, 3> kPartitions = {"train", "val", "test"};

const std::array<std::string, 5>& marker_words();
const std::vector<std::string>& generator_lexicon();  // filler words
const std::array<std::size_t, 8>& signal_columns();

std::string covarep_path(const std::string& dir, int subject_id);
std::string transcript_path(const std::string& dir, int subject_id);
std::string embeddings_path(const std::string& dir);
std::string registry_path(const std::string& dir);

// Writes the corpus into out_dir and returns the registry, ordered by id.
std::vector<SubjectRecord> generate(const GeneratorConfig& cfg, const std::string& out_dir);

std::vector<SubjectRecord> load_registry(const std::string& corpus_dir);

}  // namespace moodseq
