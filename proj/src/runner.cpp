#include "moodseq/runner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "moodseq/audio_pipeline.hpp"

namespace moodseq {

namespace {

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}

NormalizeOptions make_normalize_options(const RunConfig& cfg, std::set<std::string>& storage) {
  NormalizeOptions opts;
  opts.remove_stopwords = cfg.remove_stopwords;
  if (!cfg.stopwords_file.empty()) {
    storage = load_stopwords(cfg.stopwords_file);
    opts.stopwords = &storage;
  }
  return opts;
}

std::vector<std::string> participant_tokens(const std::string& transcript_file,
                                            const NormalizeOptions& opts) {
  std::vector<std::string> tokens;
  for (const auto& e : parse_transcript(transcript_file)) {
    if (e.speaker != "Participant") continue;
    auto words = normalize(e.utterance, opts);
    tokens.insert(tokens.end(), words.begin(), words.end());
  }
  return tokens;
}

std::vector<std::vector<int>> window_ids(const std::vector<std::string>& tokens,
                                         const Vocabulary& vocab, std::size_t window,
                                         std::size_t cap) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.lookup(t));
  auto windows = window_tokens(ids, window);
  if (cap > 0 && windows.size() > cap) windows.resize(cap);
  return windows;
}

std::vector<typename Dataset<float>::Item> fused_items(
    const std::vector<SubjectWindows>& subjects, std::mt19937_64* rng) {
  std::vector<typename Dataset<float>::Item> items;
  for (const auto& s : subjects) {
    const std::size_t n = std::min(s.audio.size(), s.tokens.size());
    std::vector<std::size_t> order(s.audio.size());
    std::iota(order.begin(), order.end(), 0);
    if (rng) std::shuffle(order.begin(), order.end(), *rng);
    for (std::size_t i = 0; i < n; ++i)
      items.push_back({s.audio[order[i]], s.tokens[i], s.label, s.subject});
  }
  return items;
}

}  // namespace

void balance_dataset(Dataset<float>& ds, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(ds.items.size());
  for (const auto& it : ds.items) labels.push_back(it.label);
  auto idx = balance_by_oversampling(labels, kNumClasses, seed);
  std::vector<typename Dataset<float>::Item> items;
  items.reserve(idx.size());
  for (std::size_t i : idx) items.push_back(ds.items[i]);
  ds.items = std::move(items);
}

namespace {

Vocabulary vocabulary_from_words(std::vector<std::string> words) {
  Vocabulary v;
  v.words = std::move(words);
  for (std::size_t i = 0; i < v.words.size(); ++i) v.index[v.words[i]] = int(i) + 1;
  return v;
}

std::vector<double> softmax_row(const float* row, std::size_t k) {
  const float mx = *std::max_element(row, row + k);
  std::vector<double> out(k);
  double sum = 0;
  for (std::size_t i = 0; i < k; ++i) sum += (out[i] = std::exp(double(row[i] - mx)));
  for (auto& v : out) v /= sum;
  return out;
}

}  // namespace

ModelFamily model_family(const std::string& name) {
  if (starts_with(name, "fused_")) {
    fusion_kind_from(name);  // validates
    return ModelFamily::Fused;
  }
  if (starts_with(name, "text_")) {
    text_variant_from(name);
    return ModelFamily::Text;
  }
  audio_variant_from(name);
  return ModelFamily::Audio;
}

std::vector<std::vector<float>> audio_windows_for(const std::string& covarep_file,
                                                  std::size_t timestep,
                                                  const std::vector<float>& mean,
                                                  const std::vector<float>& stddev) {
  auto m = load_covarep(covarep_file);
  auto raw = frame_sequences(m, timestep);
  const std::size_t F = kCovarepColumns - 1;
  std::vector<std::vector<float>> out;
  out.reserve(raw.size());
  for (const auto& w : raw) {
    std::vector<float> v(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::size_t c = i % F;
      v[i] = (float(w[i]) - mean[c]) / stddev[c];
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::vector<int>> token_windows_for(const std::string& transcript_file,
                                                std::size_t window, const Vocabulary& vocab,
                                                const NormalizeOptions& opts) {
  return window_ids(participant_tokens(transcript_file, opts), vocab, window, 0);
}

Dataset<float> PreparedCorpus::dataset(const std::string& partition) const {
  auto it = partitions.find(partition);
  if (it == partitions.end()) throw UsageError("unknown partition: " + partition);
  Dataset<float> ds;
  const std::size_t F = kCovarepColumns - 1;
  if (family != ModelFamily::Text) {
    ds.audio_steps = timestep;
    ds.audio_feats = F;
  }
  if (family != ModelFamily::Audio) ds.token_width = window;
  if (family == ModelFamily::Fused) {
    ds.items = fused_items(it->second, nullptr);
    return ds;
  }
  for (const auto& s : it->second) {
    if (family == ModelFamily::Audio)
      for (const auto& w : s.audio) ds.items.push_back({w, {}, s.label, s.subject});
    else
      for (const auto& w : s.tokens) ds.items.push_back({{}, w, s.label, s.subject});
  }
  return ds;
}

PreparedCorpus prepare_corpus(const RunConfig& cfg) {
  PreparedCorpus data;
  data.family = model_family(cfg.model);
  data.timestep = cfg.timestep;
  data.window = cfg.window;
  const bool need_audio = data.family != ModelFamily::Text;
  const bool need_text = data.family != ModelFamily::Audio;
  const std::size_t F = kCovarepColumns - 1;

  auto registry = load_registry(cfg.corpus_dir);

  std::set<std::string> stopword_storage;
  const auto opts = make_normalize_options(cfg, stopword_storage);

  std::map<int, std::vector<std::string>> tokens_by_subject;
  if (need_text) {
    std::vector<std::vector<std::string>> train_streams;
    for (const auto& r : registry) {
      auto toks = participant_tokens(transcript_path(cfg.corpus_dir, r.id), opts);
      if (r.partition == "train") train_streams.push_back(toks);
      tokens_by_subject[r.id] = std::move(toks);
    }
    data.vocab = build_vocabulary(train_streams);
    const std::string emb =
        cfg.embeddings_file.empty() ? embeddings_path(cfg.corpus_dir) : cfg.embeddings_file;
    data.embeddings = load_embeddings(emb, data.vocab);
  }

  // raw audio windows first; z-score statistics come from the train split
  std::map<int, std::vector<std::vector<float>>> audio_by_subject;
  std::vector<double> sum(F, 0), sumsq(F, 0);
  std::size_t train_frames = 0;
  if (need_audio) {
    for (const auto& r : registry) {
      auto m = load_covarep(covarep_path(cfg.corpus_dir, r.id));
      auto raw = frame_sequences(m, cfg.timestep);
      if (cfg.max_windows_per_subject > 0 && raw.size() > cfg.max_windows_per_subject)
        raw.resize(cfg.max_windows_per_subject);
      auto& store = audio_by_subject[r.id];
      store.reserve(raw.size());
      for (const auto& w : raw) {
        if (r.partition == "train") {
          for (std::size_t i = 0; i < w.size(); ++i) {
            sum[i % F] += w[i];
            sumsq[i % F] += w[i] * w[i];
          }
          train_frames += cfg.timestep;
        }
        store.emplace_back(w.begin(), w.end());
      }
    }
    if (train_frames == 0) throw DataFormatError("training partition yields no audio windows");
    data.feat_mean.resize(F);
    data.feat_std.resize(F);
    for (std::size_t c = 0; c < F; ++c) {
      const double mean = sum[c] / double(train_frames);
      const double var = std::max(0.0, sumsq[c] / double(train_frames) - mean * mean);
      data.feat_mean[c] = float(mean);
      data.feat_std[c] = float(std::max(std::sqrt(var), 1e-6));
    }
    for (auto& [id, windows] : audio_by_subject)
      for (auto& w : windows)
        for (std::size_t i = 0; i < w.size(); ++i)
          w[i] = (w[i] - data.feat_mean[i % F]) / data.feat_std[i % F];
  }

  for (const auto& r : registry) {
    SubjectWindows s;
    s.subject = r.id;
    s.label = int(phq_to_label(r.phq8));
    if (need_audio) s.audio = std::move(audio_by_subject[r.id]);
    if (need_text)
      s.tokens = window_ids(tokens_by_subject[r.id], data.vocab, cfg.window,
                            cfg.max_windows_per_subject);
    data.partitions[r.partition].push_back(std::move(s));
  }
  return data;
}

std::unique_ptr<IModel<float>> build_model(const RunConfig& cfg, const PreparedCorpus& data,
                                           std::mt19937_64& rng) {
  const auto family = model_family(cfg.model);
  if (family == ModelFamily::Audio) {
    AudioModelConfig acfg;
    acfg.variant = audio_variant_from(cfg.model);
    acfg.timestep = cfg.timestep;
    return std::make_unique<AudioModel<float>>(acfg, rng);
  }
  if (data.vocab.words.empty()) throw UsageError("text models need a prepared vocabulary");
  Tensor<float> table({data.vocab.size() + 1, kEmbeddingDim},
                      data.embeddings.values.empty()
                          ? std::vector<float>((data.vocab.size() + 1) * kEmbeddingDim, 0.0f)
                          : data.embeddings.values);
  if (family == ModelFamily::Text) {
    TextModelConfig tcfg;
    tcfg.variant = text_variant_from(cfg.model);
    tcfg.window_size = cfg.window;
    return std::make_unique<TextModel<float>>(tcfg, std::move(table), rng);
  }
  FusedModelConfig fcfg;
  fcfg.fusion = fusion_kind_from(cfg.model);
  fcfg.window_size = cfg.window;
  fcfg.audio_timestep = cfg.timestep;
  return std::make_unique<FusedModel<float>>(fcfg, std::move(table), rng);
}

TrainingHistory train_model(IModel<float>& model, const RunConfig& cfg,
                            const PreparedCorpus& data,
                            const std::function<void(int)>& progress) {
  auto train = data.dataset("train");
  auto val = data.dataset("val");
  if (cfg.balance) balance_dataset(train, cfg.seed);

  FitOptions opts;
  opts.max_epochs = cfg.epochs;
  opts.batch_size = cfg.batch;
  opts.learning_rate = cfg.learning_rate;
  opts.seed = cfg.seed;
  opts.on_epoch_end = progress;

  std::function<void(Dataset<float>&, std::mt19937_64&)> on_epoch;
  if (data.family == ModelFamily::Fused) {
    const auto& train_subjects = data.partitions.at("train");
    const bool balance = cfg.balance;
    on_epoch = [&train_subjects, balance](Dataset<float>& ds, std::mt19937_64& rng) {
      ds.items = fused_items(train_subjects, &rng);
      if (balance) balance_dataset(ds, rng());
    };
  }
  return fit(model, train, val, opts, on_epoch);
}

EvalOutputs evaluate_model(IModel<float>& model, const Dataset<float>& ds,
                           std::size_t batch_size) {
  if (ds.empty()) throw UsageError("evaluate_model: empty dataset");
  EvalOutputs out;
  std::mt19937_64 rng(0);  // unused outside training mode
  const std::size_t K = model.num_classes();
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i)
      idx.push_back(i);
    auto batch = ds.make_batch(idx);
    auto logits = model.forward(batch, false, rng);
    auto ld = logits.data();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const float* row = ld.data() + b * K;
      auto probs = softmax_row(row, K);
      out.scores.insert(out.scores.end(), probs.begin(), probs.end());
      out.preds.push_back(int(std::max_element(row, row + K) - row));
      out.labels.push_back(batch.labels[b]);
      out.subjects.push_back(ds.items[idx[b]].subject);
    }
  }
  out.window_report = metrics(out.preds, out.labels, K);
  out.roc = roc_micro_auc(out.scores, out.labels, K);

  std::map<int, std::vector<int>> by_subject;
  std::map<int, int> subject_label;
  for (std::size_t i = 0; i < out.preds.size(); ++i) {
    by_subject[out.subjects[i]].push_back(out.preds[i]);
    subject_label[out.subjects[i]] = out.labels[i];
  }
  for (const auto& [id, preds] : by_subject) {
    out.patient_preds.push_back(majority_vote(preds, K).voted);
    out.patient_labels.push_back(subject_label[id]);
  }
  out.patient_report = metrics(out.patient_preds, out.patient_labels, K);
  return out;
}

nlohmann::json checkpoint_meta(const RunConfig& cfg, const PreparedCorpus& data) {
  nlohmann::json meta;
  meta["model"] = cfg.model;
  meta["timestep"] = cfg.timestep;
  meta["window"] = cfg.window;
  meta["remove_stopwords"] = cfg.remove_stopwords;
  meta["seed"] = cfg.seed;
  meta["feat_mean"] = data.feat_mean;
  meta["feat_std"] = data.feat_std;
  meta["vocab"] = data.vocab.words;
  meta["vocab_hash"] = data.vocab.hash();
  return meta;
}

RestoredModel restore_model(const std::string& checkpoint_path) {
  auto ckpt = read_checkpoint(checkpoint_path);
  RestoredModel out;
  try {
    out.cfg.model = ckpt.meta.at("model").get<std::string>();
    out.cfg.timestep = ckpt.meta.at("timestep").get<std::size_t>();
    out.cfg.window = ckpt.meta.at("window").get<std::size_t>();
    out.cfg.remove_stopwords = ckpt.meta.at("remove_stopwords").get<bool>();
    out.cfg.seed = ckpt.meta.at("seed").get<std::uint64_t>();
    out.feat_mean = ckpt.meta.at("feat_mean").get<std::vector<float>>();
    out.feat_std = ckpt.meta.at("feat_std").get<std::vector<float>>();
    out.vocab = vocabulary_from_words(ckpt.meta.at("vocab").get<std::vector<std::string>>());
    if (!out.vocab.words.empty() &&
        out.vocab.hash() != ckpt.meta.at("vocab_hash").get<std::uint64_t>())
      throw DataFormatError(checkpoint_path + ": vocabulary hash mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(checkpoint_path + ": incomplete checkpoint metadata: " + e.what());
  }

  PreparedCorpus stub;
  stub.vocab = out.vocab;
  std::mt19937_64 rng(out.cfg.seed);
  out.model = build_model(out.cfg, stub, rng);
  load_into(out.model->parameters(), ckpt);
  return out;
}

Dataset<float> assemble_dataset(const RunConfig& cfg, const std::string& partition,
                                const Vocabulary& vocab, const std::vector<float>& mean,
                                const std::vector<float>& stddev) {
  const auto family = model_family(cfg.model);
  std::set<std::string> stopword_storage;
  const auto opts = make_normalize_options(cfg, stopword_storage);

  std::vector<SubjectWindows> subjects;
  for (const auto& r : load_registry(cfg.corpus_dir)) {
    if (r.partition != partition) continue;
    SubjectWindows s;
    s.subject = r.id;
    s.label = int(phq_to_label(r.phq8));
    if (family != ModelFamily::Text) {
      s.audio = audio_windows_for(covarep_path(cfg.corpus_dir, r.id), cfg.timestep, mean, stddev);
      if (cfg.max_windows_per_subject > 0 && s.audio.size() > cfg.max_windows_per_subject)
        s.audio.resize(cfg.max_windows_per_subject);
    }
    if (family != ModelFamily::Audio) {
      s.tokens = window_ids(participant_tokens(transcript_path(cfg.corpus_dir, r.id), opts),
                            vocab, cfg.window, cfg.max_windows_per_subject);
    }
    subjects.push_back(std::move(s));
  }

  PreparedCorpus view;
  view.family = family;
  view.timestep = cfg.timestep;
  view.window = cfg.window;
  view.partitions[partition] = std::move(subjects);
  return view.dataset(partition);
}

CorpusStatistics corpus_statistics(const std::string& corpus_dir, bool pooled) {
  auto registry = load_registry(corpus_dir);
  std::vector<double> ctrl_dur, exp_dur, ctrl_sent, exp_sent;
  for (const auto& r : registry) {
    const bool exp = phq_significant(r.phq8);
    auto m = load_covarep(covarep_path(corpus_dir, r.id));
    (exp ? exp_dur : ctrl_dur).push_back(double(m.rows) * 0.01);  // 10 ms frames
    for (const auto& e : parse_transcript(transcript_path(corpus_dir, r.id))) {
      if (e.speaker != "Participant") continue;
      std::istringstream ss(e.utterance);
      std::string w;
      double words = 0;
      while (ss >> w) ++words;
      (exp ? exp_sent : ctrl_sent).push_back(words);
    }
  }
  CorpusStatistics stats;
  stats.control_duration = summarize("control", ctrl_dur);
  stats.experiment_duration = summarize("experiment", exp_dur);
  stats.control_sentence = summarize("control", ctrl_sent);
  stats.experiment_sentence = summarize("experiment", exp_sent);
  stats.duration_test = welch_ttest(ctrl_dur, exp_dur, pooled);
  stats.sentence_test = welch_ttest(ctrl_sent, exp_sent, pooled);
  stats.control_durations = std::move(ctrl_dur);
  stats.experiment_durations = std::move(exp_dur);
  stats.control_sentences = std::move(ctrl_sent);
  stats.experiment_sentences = std::move(exp_sent);
  return stats;
}

}  // namespace moodseq
