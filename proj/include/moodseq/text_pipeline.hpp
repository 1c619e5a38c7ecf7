// Transcript parsing, text normalization, vocabulary construction, sliding
// windows with 20% overlap, and pretrained embedding lookup.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "moodseq/audio_pipeline.hpp"  // DataFormatError

namespace moodseq {

struct TranscriptEntry {
  double start_time = 0;
  double stop_time = 0;
  std::string speaker;  // "Ellie" or "Participant"
  std::string utterance;
};

enum class HeaderMode { Auto, Expect, None };

// Tab-separated, 4 fields per row; malformed rows fail with the line number.
std::vector<TranscriptEntry> parse_transcript(const std::string& path,
                                              HeaderMode header = HeaderMode::Auto);

struct NormalizeOptions {
  bool remove_stopwords = true;
  const std::set<std::string>* stopwords = nullptr;  // override the shipped list
};

// lowercase -> contraction expansion -> punctuation strip -> optional
// stopword removal -> suffix-rule lemmatization.
std::vector<std::string> normalize(const std::string& text, const NormalizeOptions& opts = {});

const std::set<std::string>& default_stopwords();
std::set<std::string> load_stopwords(const std::string& path);
std::string lemmatize(const std::string& word);

inline const std::string kUnkToken = "[UNK]";

struct Vocabulary {
  // words[i] holds the word with index i+1; the last entry is [UNK].
  std::vector<std::string> words;
  std::map<std::string, int> index;

  std::size_t size() const { return words.size(); }      // includes [UNK]
  int unk_index() const { return int(words.size()); }    // == highest index
  int lookup(const std::string& w) const;
  std::uint64_t hash() const;                            // FNV-1a over the word list
};

// Deterministic: descending frequency, ties lexicographic; [UNK] appended.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& training_streams);

// stride = window - floor(0.2*window); the final short window is zero-padded
// when its real length is at least 20% of the window, else discarded.
std::vector<std::vector<int>> window_tokens(const std::vector<int>& tokens,
                                            std::size_t window_size);

struct EmbeddingTable {
  std::size_t rows = 0;  // vocab.size() + 1 (padding row 0)
  std::size_t dim = 100;
  std::vector<float> values;  // rows x dim
  double coverage = 0;        // fraction of vocabulary words found in the file
};

// One `token v1 .. v100` line per word. Row 0 is zero; missing words and
// [UNK] get the mean of all vectors loaded from the file.
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab);

}  // namespace moodseq
