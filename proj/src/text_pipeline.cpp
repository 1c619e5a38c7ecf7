#include "moodseq/text_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace moodseq {

// ---------------------------------------------------------------------------
// transcript parsing

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r')
    fields.back().pop_back();
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\r')) --e;
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e && b != e;
}

std::string lower(std::string s) {
  for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::vector<TranscriptEntry> parse_transcript(const std::string& path, HeaderMode header) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open transcript file: " + path);

  std::vector<TranscriptEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_tabs(line);
    if (lineno == 1 && header != HeaderMode::None) {
      double probe;
      const bool numeric_first = !fields.empty() && parse_double(fields[0], probe);
      if (header == HeaderMode::Expect || !numeric_first) continue;  // skip the header row
    }
    if (fields.size() != 4)
      throw DataFormatError(path + ": expected 4 tab-separated fields, found " +
                            std::to_string(fields.size()) + " at line " + std::to_string(lineno));
    TranscriptEntry e;
    if (!parse_double(fields[0], e.start_time))
      throw DataFormatError(path + ": bad start time at line " + std::to_string(lineno));
    if (!parse_double(fields[1], e.stop_time))
      throw DataFormatError(path + ": bad stop time at line " + std::to_string(lineno));
    if (e.start_time > e.stop_time)
      throw DataFormatError(path + ": start time after stop time at line " +
                            std::to_string(lineno));
    const std::string sp = lower(fields[2]);
    if (sp == "ellie")
      e.speaker = "Ellie";
    else if (sp == "participant")
      e.speaker = "Participant";
    else
      e.speaker = fields[2];
    e.utterance = fields[3];
    entries.push_back(std::move(e));
  }
  return entries;
}

// ---------------------------------------------------------------------------
// normalization

namespace {

const std::unordered_map<std::string, std::string>& contractions() {
  static const std::unordered_map<std::string, std::string> table = {
      {"what's", "what is"},   {"that's", "that is"},   {"it's", "it is"},
      {"he's", "he is"},       {"she's", "she is"},     {"there's", "there is"},
      {"here's", "here is"},   {"who's", "who is"},     {"let's", "let us"},
      {"i'm", "i am"},         {"won't", "will not"},   {"can't", "can not"},
      {"cannot", "can not"},   {"shan't", "shall not"}, {"e-mail", "email"},
      {"e-mails", "emails"},   {"gonna", "going to"},   {"wanna", "want to"},
      {"gotta", "got to"},     {"y'all", "you all"},    {"o'clock", "oclock"},
  };
  return table;
}

std::string expand_contraction(const std::string& word) {
  auto& table = contractions();
  auto it = table.find(word);
  if (it != table.end()) return it->second;
  auto ends_with = [&](const char* suf) {
    const std::size_t n = std::char_traits<char>::length(suf);
    return word.size() > n && word.compare(word.size() - n, n, suf) == 0;
  };
  if (ends_with("n't")) return word.substr(0, word.size() - 3) + " not";
  if (ends_with("'re")) return word.substr(0, word.size() - 3) + " are";
  if (ends_with("'ve")) return word.substr(0, word.size() - 3) + " have";
  if (ends_with("'ll")) return word.substr(0, word.size() - 3) + " will";
  if (ends_with("'d")) return word.substr(0, word.size() - 2) + " would";
  if (ends_with("'m")) return word.substr(0, word.size() - 2) + " am";
  if (ends_with("'s")) return word.substr(0, word.size() - 2) + " is";
  return word;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

bool has_vowel(const std::string& s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return is_vowel(c) || c == 'y'; });
}

}  // namespace

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",       "about",  "above",   "after",  "again",  "against", "all",    "am",
      "an",      "and",    "any",     "are",    "as",     "at",      "be",     "because",
      "been",    "before", "being",   "below",  "between","both",    "but",    "by",
      "could",   "did",    "do",      "does",   "doing",  "down",    "during", "each",
      "few",     "for",    "from",    "further","had",    "has",     "have",   "having",
      "he",      "her",    "here",    "hers",   "herself","him",     "himself","his",
      "how",     "i",      "if",      "in",     "into",   "is",      "it",     "its",
      "itself",  "just",   "me",      "more",   "most",   "my",      "myself", "no",
      "nor",     "not",    "now",     "of",     "off",    "on",      "once",   "only",
      "or",      "other",  "our",     "ours",   "ourselves", "out",  "over",   "own",
      "same",    "she",    "should",  "so",     "some",   "such",    "than",   "that",
      "the",     "their",  "theirs",  "them",   "themselves", "then","there",  "these",
      "they",    "this",   "those",   "through","to",     "too",     "under",  "until",
      "up",      "us",     "very",    "was",    "we",     "were",    "what",   "when",
      "where",   "which",  "while",   "who",    "whom",   "why",     "will",   "with",
      "would",   "you",    "your",    "yours",  "yourself", "yourselves", "uh", "um",
      "mm",      "mhm",    "yeah",    "okay",
  };
  return words;
}

std::set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open stopword file: " + path);
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.insert(lower(line));
  }
  return words;
}

std::string lemmatize(const std::string& word) {
  static const std::unordered_map<std::string, std::string> exceptions = {
      {"ran", "run"},       {"went", "go"},       {"feet", "foot"},   {"teeth", "tooth"},
      {"men", "man"},       {"women", "woman"},   {"children", "child"},
      {"mice", "mouse"},    {"geese", "goose"},   {"people", "person"},
      {"better", "good"},   {"best", "good"},     {"worse", "bad"},   {"worst", "bad"},
      {"felt", "feel"},     {"said", "say"},      {"made", "make"},   {"got", "get"},
      {"thought", "think"}, {"slept", "sleep"},   {"left", "leave"},
  };
  auto ex = exceptions.find(word);
  if (ex != exceptions.end()) return ex->second;

  const std::size_t n = word.size();
  auto ends = [&](const char* suf) {
    const std::size_t k = std::char_traits<char>::length(suf);
    return n > k && word.compare(n - k, k, suf) == 0;
  };

  if (ends("ies") && n > 4) return word.substr(0, n - 3) + "y";
  if (ends("sses")) return word.substr(0, n - 2);
  if (ends("shes") || ends("ches") || ends("xes") || ends("zes"))
    return word.substr(0, n - 2);
  if (ends("ing") && n >= 6) {
    std::string stem = word.substr(0, n - 3);
    if (has_vowel(stem)) {
      if (stem.size() >= 2 && stem[stem.size() - 1] == stem[stem.size() - 2] &&
          !is_vowel(stem.back()))
        stem.pop_back();
      return stem;
    }
  }
  if (ends("ied")) return word.substr(0, n - 3) + "y";
  if (ends("ed") && n >= 5) {
    std::string stem = word.substr(0, n - 2);
    if (has_vowel(stem)) {
      if (stem.size() >= 2 && stem[stem.size() - 1] == stem[stem.size() - 2] &&
          !is_vowel(stem.back()))
        stem.pop_back();
      return stem;
    }
  }
  if (word.back() == 's' && n >= 3 && !ends("ss") && !ends("us") && !ends("is"))
    return word.substr(0, n - 1);
  return word;
}

std::vector<std::string> normalize(const std::string& text, const NormalizeOptions& opts) {
  const std::set<std::string>& stop = opts.stopwords ? *opts.stopwords : default_stopwords();

  // lowercase, then expand contractions word by word (keeps ' and - alive
  // until expansion has seen them)
  std::string low = lower(text);
  std::string expanded;
  std::size_t i = 0;
  while (i < low.size()) {
    while (i < low.size() && std::isspace(static_cast<unsigned char>(low[i]))) ++i;
    std::size_t j = i;
    while (j < low.size() && !std::isspace(static_cast<unsigned char>(low[j]))) ++j;
    if (j > i) {
      if (!expanded.empty()) expanded += ' ';
      expanded += expand_contraction(low.substr(i, j - i));
    }
    i = j;
  }

  // strip punctuation: everything outside [a-z0-9] becomes a separator
  for (char& c : expanded)
    if (!(std::islower(static_cast<unsigned char>(c)) ||
          std::isdigit(static_cast<unsigned char>(c))))
      c = ' ';

  std::vector<std::string> tokens;
  std::istringstream ss(expanded);
  std::string w;
  while (ss >> w) {
    if (opts.remove_stopwords && stop.count(w)) continue;
    tokens.push_back(lemmatize(w));
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// vocabulary

int Vocabulary::lookup(const std::string& w) const {
  auto it = index.find(w);
  return it == index.end() ? unk_index() : it->second;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (const auto& w : words) {
    for (char c : w) {
      h ^= std::uint64_t(static_cast<unsigned char>(c));
      h *= 1099511628211ull;
    }
    h ^= std::uint64_t('\n');
    h *= 1099511628211ull;
  }
  return h;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& training_streams) {
  std::map<std::string, std::size_t> freq;
  for (const auto& stream : training_streams)
    for (const auto& w : stream) ++freq[w];
  if (freq.empty()) throw DataFormatError("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::size_t>> order(freq.begin(), freq.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.words.reserve(order.size() + 1);
  for (auto& [w, f] : order) {
    v.index[w] = int(v.words.size()) + 1;
    v.words.push_back(w);
  }
  v.words.push_back(kUnkToken);  // index == words.size()
  return v;
}

// ---------------------------------------------------------------------------
// windowing

std::vector<std::vector<int>> window_tokens(const std::vector<int>& tokens,
                                            std::size_t window_size) {
  if (window_size < 5)
    throw std::invalid_argument("window size must be >= 5 so the 20% overlap is nonempty");
  const std::size_t overlap = window_size / 5;  // floor(0.2 * window)
  const std::size_t stride = window_size - overlap;

  std::vector<std::vector<int>> windows;
  const std::size_t len = tokens.size();
  for (std::size_t offset = 0; offset < len; offset += stride) {
    const std::size_t real = std::min(window_size, len - offset);
    if (real < window_size) {
      // final partial window: keep iff >= 20% of the window, zero-padded
      if (real * 5 >= window_size) {
        std::vector<int> w(tokens.begin() + offset, tokens.begin() + offset + real);
        w.resize(window_size, 0);
        windows.push_back(std::move(w));
      }
      break;
    }
    windows.emplace_back(tokens.begin() + offset, tokens.begin() + offset + window_size);
  }
  return windows;
}

// ---------------------------------------------------------------------------
// embeddings

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open embedding file: " + path);

  EmbeddingTable t;
  t.dim = 100;
  t.rows = vocab.size() + 1;
  t.values.assign(t.rows * t.dim, 0.0f);

  std::vector<double> mean(t.dim, 0.0);
  std::size_t loaded = 0, found = 0;
  std::vector<bool> filled(t.rows, false);

  std::string line;
  std::size_t lineno = 0;
  std::vector<float> vec(t.dim);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token))
      throw DataFormatError(path + ": malformed line " + std::to_string(lineno));
    std::size_t d = 0;
    double v;
    while (ss >> v) {
      if (d < t.dim) vec[d] = float(v);
      ++d;
    }
    if (!ss.eof())
      throw DataFormatError(path + ": non-numeric vector entry at line " +
                            std::to_string(lineno));
    if (d != t.dim)
      throw DataFormatError(path + ": expected 100 dimensions, found " + std::to_string(d) +
                            " at line " + std::to_string(lineno));
    for (std::size_t k = 0; k < t.dim; ++k) mean[k] += vec[k];
    ++loaded;
    auto it = vocab.index.find(token);
    if (it != vocab.index.end() && !filled[it->second]) {
      std::copy(vec.begin(), vec.end(), t.values.begin() + std::size_t(it->second) * t.dim);
      filled[it->second] = true;
      ++found;
    }
  }
  if (loaded == 0) throw DataFormatError(path + ": embedding file holds no vectors");

  std::vector<float> fallback(t.dim);
  for (std::size_t k = 0; k < t.dim; ++k) fallback[k] = float(mean[k] / double(loaded));
  // [UNK] and any uncovered vocabulary word get the mean vector
  for (std::size_t idx = 1; idx < t.rows; ++idx)
    if (!filled[idx])
      std::copy(fallback.begin(), fallback.end(), t.values.begin() + idx * t.dim);

  const std::size_t real_words = vocab.size() - 1;  // exclude [UNK]
  t.coverage = real_words == 0 ? 0.0 : double(found) / double(real_words);
  return t;
}

}  // namespace moodseq
