// moodseq: depression-severity sequence classification over synthetic
// DAIC-WOZ-format corpora. Subcommands: gen-data, train, eval, stats,
// predict. Exit codes: 0 success, 2 configuration error, 3 data-format
// error. Set MOODSEQ_LOG to debug|info|warn|error (default info).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "moodseq/audio_pipeline.hpp"
#include "moodseq/runner.hpp"

namespace fs = std::filesystem;
using namespace moodseq;

namespace {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("MOODSEQ_LOG");
    const std::string v = env ? env : "info";
    if (v == "debug") return LogLevel::Debug;
    if (v == "warn") return LogLevel::Warn;
    if (v == "error") return LogLevel::Error;
    return LogLevel::Info;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"debug", "info", "warn", "error"};
  if (int(level) < int(log_level())) return;
  std::cerr << "[" << names[int(level)] << "] " << msg << "\n";
}

struct Options {
  RunConfig run;
  std::string out_dir;
  std::string checkpoint;
  std::string partition = "test";
  std::string audio_file, transcript_file;
  std::string stopwords = "remove";
  std::string balance = "off";
  int threads = 0;
  bool pooled = false;
};

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataFormatError("cannot write " + path.string());
  out << body;
}

std::string report_block(const EvalOutputs& ev) {
  std::ostringstream os;
  os << "== window-level ==\n"
     << ev.window_report.to_text() << "micro AUC: " << ev.roc.micro_auc << "\n\n"
     << "== patient-level (major voting over " << ev.patient_labels.size() << " subjects) ==\n"
     << ev.patient_report.to_text();
  return os.str();
}

void emit_eval_outputs(const EvalOutputs& ev, const std::string& out_dir) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "report.txt", report_block(ev));
  write_file(fs::path(out_dir) / "metrics.csv", ev.window_report.to_csv());
  write_file(fs::path(out_dir) / "metrics_patient.csv", ev.patient_report.to_csv());
  write_file(fs::path(out_dir) / "confusion.csv", ev.window_report.matrix.to_csv());
  write_file(fs::path(out_dir) / "roc.csv", ev.roc.to_csv());
}

int cmd_gen_data(const Options& opt) {
  GeneratorConfig cfg;
  cfg.seed = opt.run.seed;
  auto registry = generate(cfg, opt.out_dir);
  log(LogLevel::Info, "wrote " + std::to_string(registry.size()) + " subjects to " + opt.out_dir);
  return 0;
}

int cmd_train(Options opt) {
  auto& cfg = opt.run;
  log(LogLevel::Info, "loading corpus " + cfg.corpus_dir + " for model " + cfg.model);
  auto data = prepare_corpus(cfg);
  std::mt19937_64 rng(cfg.seed);
  auto model = build_model(cfg, data, rng);
  log(LogLevel::Info, "training (seed " + std::to_string(cfg.seed) + ", up to " +
                          std::to_string(cfg.epochs) + " epochs)");
  auto history = train_model(*model, cfg, data, [](int epoch) {
    log(LogLevel::Debug, "epoch " + std::to_string(epoch) + " done");
  });
  fs::create_directories(opt.out_dir);
  save_checkpoint((fs::path(opt.out_dir) / "model.ckpt").string(), checkpoint_meta(cfg, data),
                  model->parameters());
  write_file(fs::path(opt.out_dir) / "history.csv", history_csv(history));
  const auto& last = history.epochs.back();
  std::cout << "trained " << history.epochs.size() << " epochs, best epoch "
            << history.best_epoch << ", final val acc " << last.val_acc << "\n";
  return 0;
}

int cmd_eval(const Options& opt) {
  auto restored = restore_model(opt.checkpoint);
  RunConfig cfg = restored.cfg;
  cfg.corpus_dir = opt.run.corpus_dir;
  cfg.stopwords_file = opt.run.stopwords_file;
  cfg.max_windows_per_subject = opt.run.max_windows_per_subject;
  cfg.batch = opt.run.batch;
  auto ds = assemble_dataset(cfg, opt.partition, restored.vocab, restored.feat_mean,
                             restored.feat_std);
  if (opt.run.balance) balance_dataset(ds, opt.run.seed);
  auto ev = evaluate_model(*restored.model, ds, cfg.batch);
  std::cout << report_block(ev);
  emit_eval_outputs(ev, opt.out_dir);
  return 0;
}

int cmd_stats(const Options& opt) {
  auto s = corpus_statistics(opt.run.corpus_dir, opt.pooled);
  auto row = [](const GroupStats& dur, const GroupStats& sent) {
    std::ostringstream os;
    os << dur.group << "\t" << dur.n << "\t" << dur.mean << "\t" << dur.stddev << "\t"
       << sent.mean << "\t" << sent.stddev;
    return os.str();
  };
  std::cout << "group\tsubjects\tduration_mean_s\tduration_sd\tsentence_mean_w\tsentence_sd\n"
            << row(s.control_duration, s.control_sentence) << "\n"
            << row(s.experiment_duration, s.experiment_sentence) << "\n"
            << "duration " << (opt.pooled ? "(pooled)" : "(welch)") << ": t=" << s.duration_test.t
            << " df=" << s.duration_test.df << " p=" << s.duration_test.p << "\n"
            << "sentence length " << (opt.pooled ? "(pooled)" : "(welch)")
            << ": t=" << s.sentence_test.t << " df=" << s.sentence_test.df
            << " p=" << s.sentence_test.p << "\n";
  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    std::ostringstream csv;
    csv << "group,metric,n,mean,stddev,t,df,p\n"
        << "control,duration_s," << s.control_duration.n << ',' << s.control_duration.mean << ','
        << s.control_duration.stddev << ",,,\n"
        << "experiment,duration_s," << s.experiment_duration.n << ','
        << s.experiment_duration.mean << ',' << s.experiment_duration.stddev << ','
        << s.duration_test.t << ',' << s.duration_test.df << ',' << s.duration_test.p << "\n"
        << "control,sentence_words," << s.control_sentence.n << ',' << s.control_sentence.mean
        << ',' << s.control_sentence.stddev << ",,,\n"
        << "experiment,sentence_words," << s.experiment_sentence.n << ','
        << s.experiment_sentence.mean << ',' << s.experiment_sentence.stddev << ','
        << s.sentence_test.t << ',' << s.sentence_test.df << ',' << s.sentence_test.p << "\n";
    write_file(fs::path(opt.out_dir) / "stats.csv", csv.str());
    write_file(fs::path(opt.out_dir) / "duration_control_hist.csv",
               histogram_csv(s.control_durations, 10));
    write_file(fs::path(opt.out_dir) / "duration_experiment_hist.csv",
               histogram_csv(s.experiment_durations, 10));
    write_file(fs::path(opt.out_dir) / "sentence_control_hist.csv",
               histogram_csv(s.control_sentences, 10));
    write_file(fs::path(opt.out_dir) / "sentence_experiment_hist.csv",
               histogram_csv(s.experiment_sentences, 10));
  }
  return 0;
}

int cmd_predict(const Options& opt) {
  auto restored = restore_model(opt.checkpoint);
  const auto family = model_family(restored.cfg.model);
  if (family != ModelFamily::Text && opt.audio_file.empty())
    throw UsageError("model " + restored.cfg.model + " needs --audio");
  if (family != ModelFamily::Audio && opt.transcript_file.empty())
    throw UsageError("model " + restored.cfg.model + " needs --transcript");

  NormalizeOptions nopts;
  nopts.remove_stopwords = restored.cfg.remove_stopwords;
  std::set<std::string> stopword_storage;
  if (!opt.run.stopwords_file.empty()) {
    stopword_storage = load_stopwords(opt.run.stopwords_file);
    nopts.stopwords = &stopword_storage;
  }

  Dataset<float> ds;
  std::vector<std::vector<float>> audio;
  std::vector<std::vector<int>> tokens;
  if (family != ModelFamily::Text)
    audio = audio_windows_for(opt.audio_file, restored.cfg.timestep, restored.feat_mean,
                              restored.feat_std);
  if (family != ModelFamily::Audio)
    tokens = token_windows_for(opt.transcript_file, restored.cfg.window, restored.vocab, nopts);

  const std::size_t n = family == ModelFamily::Audio  ? audio.size()
                        : family == ModelFamily::Text ? tokens.size()
                                                      : std::min(audio.size(), tokens.size());
  if (n == 0) throw DataFormatError("subject yields no windows at the model's sizes");
  if (family != ModelFamily::Text) {
    ds.audio_steps = restored.cfg.timestep;
    ds.audio_feats = kCovarepColumns - 1;
  }
  if (family != ModelFamily::Audio) ds.token_width = restored.cfg.window;
  for (std::size_t i = 0; i < n; ++i)
    ds.items.push_back({family == ModelFamily::Text ? std::vector<float>{} : audio[i],
                        family == ModelFamily::Audio ? std::vector<int>{} : tokens[i], 0, 0});

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto batch = ds.make_batch(idx);
  std::mt19937_64 rng(0);
  auto logits = restored.model->forward(batch, false, rng);
  auto ld = logits.data();

  std::vector<int> preds;
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = ld.data() + i * kNumClasses;
    const int p = int(std::max_element(row, row + kNumClasses) - row);
    preds.push_back(p);
    std::cout << "window " << i << ": " << severity_name(Severity(p)) << " (" << p << ")\n";
  }
  auto vote = majority_vote(preds, kNumClasses);
  std::cout << "vote tally:";
  for (int c = 0; c < kNumClasses; ++c)
    std::cout << ' ' << severity_name(Severity(c)) << '=' << vote.tally[c];
  std::cout << "\nvoted severity: " << severity_name(Severity(vote.voted)) << " (" << vote.voted
            << ")\n";

  if (auto* text = dynamic_cast<TextModel<float>*>(restored.model.get());
      text && text->last_attention().size() > 0) {
    auto w = text->last_attention().data();
    const std::size_t W = text->last_attention().dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      std::cout << "attention window " << i << ":";
      for (std::size_t j = 0; j < W; ++j) std::cout << ' ' << w[i * W + j];
      std::cout << "\n";
    }
  }
  if (auto* fused = dynamic_cast<FusedModel<float>*>(restored.model.get());
      fused && fused->last_modality_weights().size() > 0) {
    auto w = fused->last_modality_weights().data();
    for (std::size_t i = 0; i < n; ++i)
      std::cout << "modality weights window " << i << ": audio=" << w[i * 2]
                << " text=" << w[i * 2 + 1] << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moodseq: multimodal depression-severity sequence classification"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value configuration file; explicit flags override it");

  Options opt;
  app.add_option("--corpus", opt.run.corpus_dir, "corpus directory (registry.csv layout)");
  app.add_option("--embeddings", opt.run.embeddings_file,
                 "embedding file (default: <corpus>/embeddings.txt)");
  app.add_option("--model", opt.run.model, "model variant")
      ->check(CLI::IsMember({"lstm_fc", "bilstm_fc", "lstm_tcnn", "bilstm_tcnn", "text_lstm",
                             "text_bilstm", "text_bilstm_attn", "fused_maxpool",
                             "fused_attn_align", "fused_attn_fuse"}))
      ->capture_default_str();
  app.add_option("--timestep", opt.run.timestep, "audio window length in voiced frames")
      ->check(CLI::IsMember({16, 32, 64}))
      ->capture_default_str();
  app.add_option("--window", opt.run.window, "text window length in tokens")
      ->check(CLI::IsMember({16, 32, 64, 128}))
      ->capture_default_str();
  app.add_option("--stopwords", opt.stopwords, "stopword handling")
      ->check(CLI::IsMember({"keep", "remove"}))
      ->capture_default_str();
  app.add_option("--stopword-file", opt.run.stopwords_file, "override stopword list (one per line)");
  app.add_option("--seed", opt.run.seed, "random seed")->capture_default_str();
  app.add_option("--epochs", opt.run.epochs, "maximum training epochs")->capture_default_str();
  app.add_option("--batch", opt.run.batch, "batch size")->capture_default_str();
  app.add_option("--lr", opt.run.learning_rate, "Adam learning rate")->capture_default_str();
  app.add_option("--balance", opt.balance, "oversample minority classes")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  app.add_option("--max-windows", opt.run.max_windows_per_subject,
                 "cap windows per subject (0 = unlimited)")
      ->capture_default_str();
  app.add_option("--out", opt.out_dir, "output directory");
  app.add_option("--threads", opt.threads, "worker threads (0 = library default)")
      ->capture_default_str();
  app.add_option("--checkpoint", opt.checkpoint, "model checkpoint path");
  app.add_option("--partition", opt.partition, "corpus partition to evaluate")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  app.add_option("--audio", opt.audio_file, "COVAREP CSV for predict");
  app.add_option("--transcript", opt.transcript_file, "transcript TSV for predict");
  app.add_flag("--pooled", opt.pooled, "pooled-variance Student's t instead of Welch");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus partition");
  auto* stats = app.add_subcommand("stats", "control vs experiment group statistics");
  auto* predict = app.add_subcommand("predict", "score one subject's files with a checkpoint");
  for (auto* sub : {gen, train, eval, stats, predict}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  opt.run.remove_stopwords = opt.stopwords == "remove";
  opt.run.balance = opt.balance == "on";
  set_threads(opt.threads);

  auto require = [](const std::string& value, const std::string& flag) {
    if (value.empty()) throw UsageError("missing required flag " + flag);
  };

  try {
    if (gen->parsed()) {
      require(opt.out_dir, "--out");
      return cmd_gen_data(opt);
    }
    if (train->parsed()) {
      require(opt.run.corpus_dir, "--corpus");
      require(opt.out_dir, "--out");
      return cmd_train(opt);
    }
    if (eval->parsed()) {
      require(opt.checkpoint, "--checkpoint");
      require(opt.run.corpus_dir, "--corpus");
      return cmd_eval(opt);
    }
    if (stats->parsed()) {
      require(opt.run.corpus_dir, "--corpus");
      return cmd_stats(opt);
    }
    require(opt.checkpoint, "--checkpoint");
    return cmd_predict(opt);
  } catch (const DataFormatError& e) {
    log(LogLevel::Error, e.what());
    return 3;
  } catch (const UsageError& e) {
    log(LogLevel::Error, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(LogLevel::Error, e.what());
    return 1;
  }
}
