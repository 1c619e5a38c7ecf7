#include "moodseq/synth_corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "moodseq/audio_pipeline.hpp"

namespace moodseq {

namespace fs = std::filesystem;

const std::array<std::string, 5>& marker_words() {
  static const std::array<std::string, 5> words = {"river", "stone", "cloud", "ember", "frost"};
  return words;
}

const std::vector<std::string>& generator_lexicon() {
  static const std::vector<std::string> words = {
      "walk",  "talk",   "sleep",  "quiet",  "bright", "garden", "music",  "window",
      "storm", "paper",  "dream",  "heavy",  "light",  "road",   "water",  "night",
      "day",   "mountain", "field", "bird",  "tree",   "house",  "hope",   "tired",
      "calm",  "worry",  "rest",   "slow",   "fast",   "cold",   "warm",   "friend",
      "work",  "family", "book",   "coffee", "rain",   "sun",    "moon",   "star",
      "happy", "sad",    "long",   "short",  "deep",   "high",   "low",    "far",
  };
  return words;
}

const std::array<std::size_t, 8>& signal_columns() {
  static const std::array<std::size_t, 8> cols = {5, 9, 13, 17, 21, 25, 29, 33};
  return cols;
}

std::string covarep_path(const std::string& dir, int id) {
  return dir + "/audio/" + std::to_string(id) + "_covarep.csv";
}
std::string transcript_path(const std::string& dir, int id) {
  return dir + "/transcripts/" + std::to_string(id) + "_transcript.tsv";
}
std::string embeddings_path(const std::string& dir) { return dir + "/embeddings.txt"; }
std::string registry_path(const std::string& dir) { return dir + "/registry.csv"; }

namespace {

// Walsh-style +-1 codes; rows are pairwise orthogonal over the 8 columns.
constexpr int kClassPattern[5][8] = {
    {+1, +1, +1, +1, +1, +1, +1, +1},
    {+1, -1, +1, -1, +1, -1, +1, -1},
    {+1, +1, -1, -1, +1, +1, -1, -1},
    {+1, -1, -1, +1, +1, -1, -1, +1},
    {+1, +1, +1, +1, -1, -1, -1, -1},
};

// PHQ-8 ranges per class, chosen so the class-2 floor avoids the group
// boundary (score 10 is control, the moderate bin starts at 10).
constexpr int kPhqLo[5] = {0, 5, 11, 15, 20};
constexpr int kPhqHi[5] = {4, 9, 14, 19, 24};

double column_scale(std::size_t col) {
  static const double scales[4] = {0.1, 1.0, 5.0, 20.0};
  return scales[col % 4];
}

void write_covarep(const std::string& path, const GeneratorConfig& cfg, int cls,
                   std::size_t frames, std::mt19937_64& rng) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write " + path);
  std::bernoulli_distribution voiced(cfg.vuv_rate);
  std::normal_distribution<double> noise(0.0, 0.6);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<double> state(kCovarepColumns, 0.0);
  const std::size_t period = cfg.burst_len + cfg.burst_gap;
  const std::size_t phase = rng() % std::max<std::size_t>(period, 1);

  std::string line;
  char buf[32];
  for (std::size_t t = 0; t < frames; ++t) {
    const bool in_burst = period > 0 && (t + phase) % period < cfg.burst_len;
    line.clear();
    for (std::size_t c = 0; c < kCovarepColumns; ++c) {
      double v;
      if (c == cfg.vuv_col) {
        v = voiced(rng) ? 1.0 : 0.0;
      } else {
        const double scale = column_scale(c);
        const double base = double(int((c * 7) % 13) - 6) * 0.5 * scale;
        state[c] = 0.8 * state[c] + noise(rng) * scale;
        v = base + state[c];
        auto sig = std::find(signal_columns().begin(), signal_columns().end(), c);
        if (in_burst && sig != signal_columns().end())
          v += cfg.audio_signal * kClassPattern[cls][sig - signal_columns().begin()];
      }
      std::snprintf(buf, sizeof buf, "%.3f", v);
      if (c) line += ',';
      line += buf;
    }
    out << line << '\n';
  }
}

void write_transcript(const std::string& path, const GeneratorConfig& cfg, int cls,
                      bool experiment, std::mt19937_64& rng) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write " + path);
  out << "start_time\tstop_time\tspeaker\tvalue\n";

  static const char* prompts[] = {
      "how are you doing today",     "tell me about your week",
      "what do you do to relax",     "how have you been sleeping",
      "what was the best part of your day",
      "is there anything on your mind",
  };
  const auto& fillers = generator_lexicon();
  const auto& markers = marker_words();
  const double mean_len =
      experiment ? cfg.control_sentence_mean * cfg.experiment_sentence_factor
                 : cfg.control_sentence_mean;
  std::normal_distribution<double> len_dist(mean_len, 2.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  char buf[32];
  double t = 1.0;
  for (std::size_t turn = 0; turn < cfg.utterances_per_subject; ++turn) {
    const char* prompt = prompts[rng() % (sizeof prompts / sizeof *prompts)];
    double dur = 2.5;
    std::snprintf(buf, sizeof buf, "%.2f\t%.2f", t, t + dur);
    out << buf << "\tEllie\t" << prompt << '\n';
    t += dur + 0.5;

    const std::size_t len = std::max<std::size_t>(3, std::size_t(std::lround(len_dist(rng))));
    const bool marker_turn = cfg.marker_period > 0 && turn % cfg.marker_period == 1;
    std::string sentence;
    for (std::size_t w = 0; w < len; ++w) {
      if (!sentence.empty()) sentence += ' ';
      const double roll = u01(rng);
      if (marker_turn && roll < cfg.marker_rate)
        sentence += markers[cls];
      else if (roll < (marker_turn ? cfg.marker_rate : 0.0) + cfg.distractor_rate)
        sentence += markers[rng() % 5];
      else
        sentence += fillers[rng() % fillers.size()];
    }
    dur = 0.4 * double(len);
    std::snprintf(buf, sizeof buf, "%.2f\t%.2f", t, t + dur);
    out << buf << "\tParticipant\t" << sentence << '\n';
    t += dur + 0.5;
  }
}

void write_embeddings(const std::string& path, std::mt19937_64& rng) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write " + path);
  std::normal_distribution<double> small(0.0, 0.1);
  std::normal_distribution<double> filler(0.0, 0.3);
  char buf[32];
  const auto& markers = marker_words();
  for (std::size_t m = 0; m < markers.size(); ++m) {
    out << markers[m];
    for (std::size_t d = 0; d < 100; ++d) {
      double v = small(rng);
      if (d >= 10 * m && d < 10 * (m + 1)) v += 1.5;  // distinct direction per marker
      std::snprintf(buf, sizeof buf, " %.5f", v);
      out << buf;
    }
    out << '\n';
  }
  for (const auto& w : generator_lexicon()) {
    out << w;
    for (std::size_t d = 0; d < 100; ++d) {
      std::snprintf(buf, sizeof buf, " %.5f", filler(rng));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace

std::vector<SubjectRecord> generate(const GeneratorConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/audio");
  fs::create_directories(out_dir + "/transcripts");

  std::mt19937_64 rng(cfg.seed);
  std::vector<SubjectRecord> registry;

  int next_id = 101;
  struct Slot {
    int id, cls;
    std::string partition;
  };
  std::vector<Slot> slots;
  for (std::size_t p = 0; p < 3; ++p)
    for (int cls = 0; cls < 5; ++cls)
      for (std::size_t i = 0; i < cfg.partition_counts[p][cls]; ++i)
        slots.push_back({next_id++, cls, kPartitions[p]});

  std::normal_distribution<double> frame_count(cfg.frames_mean, cfg.frames_std);
  for (const auto& slot : slots) {
    SubjectRecord rec;
    rec.id = slot.id;
    rec.partition = slot.partition;
    std::uniform_int_distribution<int> phq(kPhqLo[slot.cls], kPhqHi[slot.cls]);
    rec.phq8 = phq(rng);
    rec.gender = rng() % 2 ? "female" : "male";

    const std::size_t frames =
        std::max<std::size_t>(cfg.min_frames, std::size_t(std::lround(frame_count(rng))));
    write_covarep(covarep_path(out_dir, rec.id), cfg, slot.cls, frames, rng);
    write_transcript(transcript_path(out_dir, rec.id), cfg, slot.cls, rec.phq8 > 10, rng);
    registry.push_back(std::move(rec));
  }

  write_embeddings(embeddings_path(out_dir), rng);

  std::ofstream reg(registry_path(out_dir));
  if (!reg) throw DataFormatError("cannot write " + registry_path(out_dir));
  reg << "subject_id,phq8,gender,partition\n";
  for (const auto& r : registry)
    reg << r.id << ',' << r.phq8 << ',' << r.gender << ',' << r.partition << '\n';
  return registry;
}

std::vector<SubjectRecord> load_registry(const std::string& corpus_dir) {
  const std::string path = registry_path(corpus_dir);
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open registry: " + path);
  std::vector<SubjectRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || lineno == 1) continue;  // header
    std::istringstream ss(line);
    SubjectRecord r;
    std::string field;
    if (!std::getline(ss, field, ',')) goto bad;
    {
      auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), r.id);
      if (ec != std::errc()) goto bad;
    }
    if (!std::getline(ss, field, ',')) goto bad;
    {
      auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), r.phq8);
      if (ec != std::errc()) goto bad;
    }
    if (!std::getline(ss, r.gender, ',')) goto bad;
    if (!std::getline(ss, r.partition, ',')) goto bad;
    out.push_back(std::move(r));
    continue;
  bad:
    throw DataFormatError(path + ": malformed registry row at line " + std::to_string(lineno));
  }
  if (out.empty()) throw DataFormatError(path + ": registry holds no subjects");
  return out;
}

}  // namespace moodseq
