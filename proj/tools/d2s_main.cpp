// Copyright 2026 The Desc2Story Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "d2s/d2s.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct Failure {
  d2s_status status;
};

void check(d2s_status s) {
  if (s != D2S_OK) throw Failure{s};
}

struct Common {
  std::uint64_t seed = 1;
  bool deterministic = false;
  unsigned threads = 1;
  std::string config;

  unsigned effective_threads() const { return deterministic ? 1u : std::max(1u, threads); }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "File of `key = value` lines (keys are long option names); flags take precedence");
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  sub->add_flag("--deterministic", c.deterministic, "Single-threaded, bitwise-reproducible execution");
  sub->add_option("--threads", c.threads, "Worker threads")->capture_default_str()->check(CLI::Range(1u, 1024u));
}

struct StatsArgs {
  std::string input;
  std::string stopwords;
  bool json = false;
};

int run_stats(const StatsArgs& a) {
  d2s_corpus_stats s{};
  check(d2s_corpus_stats_file(a.input.c_str(), a.stopwords.empty() ? nullptr : a.stopwords.c_str(), &s));
  if (a.json) {
    std::printf(
        "{\"docs\":%llu,\"avg_sentences_caption\":%.6f,\"avg_sentences_story\":%.6f,\"avg_words_caption\":%.6f,"
        "\"avg_words_story\":%.6f,\"avg_nonoverlap_words\":%.6f,\"unseen_nonstop_fraction\":%.6f}\n",
        static_cast<unsigned long long>(s.doc_count), s.avg_sentences_caption, s.avg_sentences_story,
        s.avg_words_caption, s.avg_words_story, s.avg_nonoverlap_words, s.unseen_nonstop_fraction);
    return kExitOk;
  }
  std::printf("%-34s %12s %12s\n", "", "Description", "Story");
  std::printf("%-34s %12llu %12s\n", "# docs", static_cast<unsigned long long>(s.doc_count), "");
  std::printf("%-34s %12.2f %12.2f\n", "avg # sentences", s.avg_sentences_caption, s.avg_sentences_story);
  std::printf("%-34s %12.2f %12.2f\n", "avg # words", s.avg_words_caption, s.avg_words_story);
  std::printf("%-34s %12s %12.2f\n", "avg # non-overlap words", "", s.avg_nonoverlap_words);
  std::printf("%-34s %12s %11.2f%%\n", "unseen non-stop story tokens", "", 100.0 * s.unseen_nonstop_fraction);
  return kExitOk;
}

struct VocabArgs {
  std::string input;
  std::string output;
  std::uint64_t min_count = 2;
  std::uint64_t max_size = 30000;
};

int run_build_vocab(const VocabArgs& a) {
  std::uint64_t n = 0;
  check(d2s_build_vocab(a.input.c_str(), a.min_count, a.max_size, a.output.c_str(), &n));
  std::fprintf(stderr, "wrote %llu tokens (reserved included) to %s\n", static_cast<unsigned long long>(n),
               a.output.c_str());
  return kExitOk;
}

struct TrainArgs {
  std::string train;
  std::string valid;
  std::string vocab;
  std::string checkpoint_dir;
  std::string log;
  std::uint64_t dim = 256;
  std::uint64_t embed_dim = 0;
  std::uint64_t hidden_dim = 0;
  double dropout = 0.2;
  std::uint64_t batch_size = 32;
  std::uint64_t max_iterations = 10000;
  std::uint64_t eval_every = 500;
  double lr = 0.001;
  double clip = 5.0;
  std::uint64_t max_decode_len = 100;
  std::uint64_t min_count = 2;
  std::uint64_t max_vocab = 30000;
  std::uint64_t report_every = 100;
  bool quiet = false;
};

struct Progress {
  std::uint64_t every;
  bool quiet;
};

void on_progress(std::uint64_t iteration, double loss, double bleu, void* user) {
  const auto* p = static_cast<const Progress*>(user);
  if (p->quiet) return;
  if (!std::isnan(bleu)) {
    std::fprintf(stderr, "iter %llu  loss %.4f  val BLEU-4 %.2f\n", static_cast<unsigned long long>(iteration), loss,
                 bleu);
  } else if (p->every > 0 && iteration % p->every == 0) {
    std::fprintf(stderr, "iter %llu  loss %.4f\n", static_cast<unsigned long long>(iteration), loss);
  }
}

int run_train(const TrainArgs& a, const Common& c) {
  d2s_train_config cfg;
  d2s_train_config_init(&cfg);
  cfg.embed_dim = a.embed_dim ? a.embed_dim : a.dim;
  cfg.hidden_dim = a.hidden_dim ? a.hidden_dim : a.dim;
  cfg.dropout = a.dropout;
  cfg.max_decode_len = a.max_decode_len;
  cfg.batch_size = a.batch_size;
  cfg.max_iterations = a.max_iterations;
  cfg.eval_every = a.eval_every;
  cfg.clip_norm = a.clip;
  cfg.learning_rate = a.lr;
  cfg.seed = c.seed;
  cfg.deterministic = c.deterministic ? 1 : 0;
  cfg.threads = c.effective_threads();
  cfg.vocab_min_count = a.min_count;
  cfg.vocab_max_size = a.max_vocab;
  cfg.train_path = a.train.c_str();
  cfg.valid_path = a.valid.empty() ? nullptr : a.valid.c_str();
  cfg.vocab_path = a.vocab.empty() ? nullptr : a.vocab.c_str();
  cfg.checkpoint_dir = a.checkpoint_dir.c_str();
  const std::string log = a.log.empty() ? a.checkpoint_dir + "/train_log.csv" : a.log;
  cfg.log_path = log.c_str();

  Progress progress{a.report_every, a.quiet};
  d2s_train_summary sum{};
  check(d2s_train(&cfg, on_progress, &progress, &sum));
  std::fprintf(stderr, "trained %llu iterations, final loss %.4f, %llu parameters\n",
               static_cast<unsigned long long>(sum.iterations), sum.final_loss,
               static_cast<unsigned long long>(sum.parameter_count));
  if (sum.best_val_bleu4 >= 0)
    std::fprintf(stderr, "best validation BLEU-4 %.2f at iteration %llu\n", sum.best_val_bleu4,
                 static_cast<unsigned long long>(sum.best_iteration));
  return kExitOk;
}

struct GenerateArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::uint64_t beam = 5;
  bool suppress_unk = false;
};

void print_story(std::uint64_t, const char* story, void*) { std::printf("%s\n", story); }

int run_generate(const GenerateArgs& a, const Common& c) {
  d2s_model* model = nullptr;
  check(d2s_model_load(a.checkpoint.c_str(), &model));
  std::uint64_t n = 0;
  d2s_status s = a.output.empty() || a.output == "-"
                     ? d2s_generate_stream(model, a.input.c_str(), a.beam, a.suppress_unk ? 1 : 0,
                                           c.effective_threads(), print_story, nullptr, &n)
                     : d2s_generate_file(model, a.input.c_str(), a.output.c_str(), a.beam, a.suppress_unk ? 1 : 0,
                                         c.effective_threads(), &n);
  d2s_model_free(model);
  check(s);
  std::fflush(stdout);
  std::fprintf(stderr, "generated %llu stories\n", static_cast<unsigned long long>(n));
  return kExitOk;
}

struct EvaluateArgs {
  std::string hyp;
  std::string ref;
  std::string json;
  std::string label = "system";
  bool smoothing = false;
};

std::string render(const d2s_metric_report& r, const std::string& label, d2s_report_format f) {
  char* text = nullptr;
  check(d2s_metric_report_render(&r, label.c_str(), f, &text));
  std::string out(text);
  d2s_string_free(text);
  return out;
}

int run_evaluate(const EvaluateArgs& a, const Common& c) {
  d2s_metric_report r{};
  check(d2s_evaluate_files(a.hyp.c_str(), a.ref.c_str(), a.smoothing ? 1 : 0, c.effective_threads(), &r));
  const std::string json = render(r, a.label, D2S_REPORT_JSON);
  std::cout << render(r, a.label, D2S_REPORT_TABLE) << json << "\n";
  if (!a.json.empty()) {
    std::ofstream out(a.json, std::ios::trunc);
    out << json << "\n";
    if (!out) {
      std::fprintf(stderr, "d2s: error: cannot write %s\n", a.json.c_str());
      return kExitDomain;
    }
  }
  return kExitOk;
}

struct LmTrainArgs {
  std::string input;
  std::string output;
  std::uint64_t order = 5;
  double discount = 0.75;
  bool no_boundaries = false;
  bool no_unk = false;
};

int run_lm_train(const LmTrainArgs& a) {
  d2s_lm_options opt;
  d2s_lm_options_init(&opt);
  opt.order = a.order;
  opt.discount = a.discount;
  opt.boundaries = a.no_boundaries ? 0 : 1;
  opt.unk = a.no_unk ? 0 : 1;
  d2s_lm* lm = nullptr;
  check(d2s_lm_train_file(a.input.c_str(), &opt, &lm));
  d2s_status s = d2s_lm_save(lm, a.output.c_str());
  d2s_lm_free(lm);
  check(s);
  std::fprintf(stderr, "wrote order-%llu model to %s\n", static_cast<unsigned long long>(a.order), a.output.c_str());
  return kExitOk;
}

struct LmScoreArgs {
  std::string model;
  std::string input;
};

int run_lm_score(const LmScoreArgs& a) {
  d2s_lm* lm = nullptr;
  check(d2s_lm_load(a.model.c_str(), &lm));
  d2s_perplexity p{};
  d2s_status s = d2s_lm_perplexity_file(lm, a.input.c_str(), &p);
  d2s_lm_free(lm);
  check(s);
  std::printf("perplexity %.4f\nlog_prob %.6f\nevents %llu\noov %llu\n", p.perplexity, p.log_prob,
              static_cast<unsigned long long>(p.events), static_cast<unsigned long long>(p.oov));
  std::printf("{\"perplexity\":%.6f,\"log_prob\":%.6f,\"events\":%llu,\"oov\":%llu}\n", p.perplexity, p.log_prob,
              static_cast<unsigned long long>(p.events), static_cast<unsigned long long>(p.oov));
  return kExitOk;
}

struct UsageError {
  std::string message;
};

struct MissingFile {
  std::string path;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Expands `--config FILE` into flags placed right after the subcommand name;
/// command-line flags win.
std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError{"--config requires a file argument"};
      path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
      break;
    }
  }
  if (path.empty()) return args;
  std::size_t sub_pos = 1;
  while (sub_pos < args.size() && args[sub_pos].rfind("-", 0) == 0) ++sub_pos;
  if (sub_pos >= args.size()) throw UsageError{"--config needs a subcommand"};
  const CLI::App* sub = nullptr;
  try {
    sub = const_cast<CLI::App&>(app).get_subcommand(args[sub_pos]);
  } catch (const CLI::OptionNotFound&) {
    throw UsageError{"unknown subcommand '" + args[sub_pos] + "'"};
  }

  std::ifstream in(path);
  if (!in) throw MissingFile{path};
  std::vector<std::string> injected;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError{path + ":" + std::to_string(lineno) + ": expected key = value"};
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (key.empty() || key == "config" || !opt)
      throw UsageError{path + ":" + std::to_string(lineno) + ": unknown option '" + key + "'"};
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes" || value == "on") {
        injected.push_back("--" + key);
      } else if (!(value == "false" || value == "0" || value == "no" || value == "off")) {
        throw UsageError{path + ":" + std::to_string(lineno) + ": '" + key + "' takes true or false"};
      }
    } else {
      injected.push_back("--" + key);
      injected.push_back(value);
    }
  }
  args.insert(args.begin() + static_cast<long>(sub_pos) + 1, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desc2Story: turn image-description sequences into stories"};
  app.name("d2s");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", std::string(d2s_version()));
  app.option_defaults()->take_last();

  Common common;

  StatsArgs stats;
  auto* sub_stats = app.add_subcommand("stats", "Corpus statistics for a JSON Lines corpus");
  sub_stats->add_option("--input,-i", stats.input, "Corpus (JSON Lines)")->required();
  sub_stats->add_option("--stopwords", stats.stopwords, "Stopword list, one per line (default: built-in)");
  sub_stats->add_flag("--json", stats.json, "Print one JSON object instead of the table");
  add_common(sub_stats, common);

  VocabArgs vocab;
  auto* sub_vocab = app.add_subcommand("build-vocab", "Build the joint vocabulary");
  sub_vocab->add_option("--input,-i", vocab.input, "Training corpus (JSON Lines)")->required();
  sub_vocab->add_option("--output,-o", vocab.output, "Vocabulary file to write")->required();
  sub_vocab->add_option("--min-count", vocab.min_count, "Minimum token frequency")->capture_default_str();
  sub_vocab->add_option("--max-size", vocab.max_size, "Maximum number of tokens")->capture_default_str();
  add_common(sub_vocab, common);

  TrainArgs train;
  auto* sub_train = app.add_subcommand("train", "Train the encoder-decoder model");
  sub_train->add_option("--train", train.train, "Training corpus (JSON Lines)")->required();
  sub_train->add_option("--valid", train.valid, "Validation corpus (JSON Lines)");
  sub_train->add_option("--vocab", train.vocab, "Vocabulary file (default: built from --train)");
  sub_train->add_option("--checkpoint-dir", train.checkpoint_dir, "Directory for best.ckpt and last.ckpt")
      ->required();
  sub_train->add_option("--log", train.log, "Training log CSV (default: <checkpoint-dir>/train_log.csv)");
  sub_train->add_option("--dim", train.dim, "Embedding and hidden size preset")
      ->capture_default_str()
      ->check(CLI::IsMember({50, 128, 256}));
  sub_train->add_option("--embed-dim", train.embed_dim, "Embedding size (overrides --dim)");
  sub_train->add_option("--hidden-dim", train.hidden_dim, "Hidden size (overrides --dim)");
  sub_train->add_option("--dropout", train.dropout, "Dropout rate")->capture_default_str()->check(CLI::Range(0.0, 0.99));
  sub_train->add_option("--batch-size", train.batch_size, "Batch size")->capture_default_str();
  sub_train->add_option("--max-iterations", train.max_iterations, "Number of batches")->capture_default_str();
  sub_train->add_option("--eval-every", train.eval_every, "Iterations between validation runs")->capture_default_str();
  sub_train->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
  sub_train->add_option("--clip", train.clip, "Global gradient norm limit")->default_str("5.0");
  sub_train->add_option("--max-decode-len", train.max_decode_len, "Maximum story length in tokens")
      ->capture_default_str();
  sub_train->add_option("--min-count", train.min_count, "Vocabulary minimum frequency")->capture_default_str();
  sub_train->add_option("--max-vocab", train.max_vocab, "Vocabulary size limit")->capture_default_str();
  sub_train->add_option("--report-every", train.report_every, "Iterations between progress lines")
      ->capture_default_str();
  sub_train->add_flag("--quiet", train.quiet, "No progress output");
  add_common(sub_train, common);

  GenerateArgs gen;
  auto* sub_gen = app.add_subcommand("generate", "Generate stories from a trained checkpoint");
  sub_gen->add_option("--checkpoint", gen.checkpoint, "Checkpoint file")->required();
  sub_gen->add_option("--input,-i", gen.input, "Documents (JSON Lines)")->required();
  sub_gen->add_option("--output,-o", gen.output, "Story file, one per line (default: standard output)");
  sub_gen->add_option("--beam", gen.beam, "Beam width (1 = greedy)")->capture_default_str()->check(CLI::Range(1, 1000));
  sub_gen->add_flag("--suppress-unk", gen.suppress_unk, "Never emit <unk>");
  add_common(sub_gen, common);

  EvaluateArgs ev;
  auto* sub_eval = app.add_subcommand("evaluate", "Score stories with BLEU-4, METEOR, TER and ROUGE-L");
  sub_eval->add_option("--hyp", ev.hyp, "Hypothesis file, one story per line")->required();
  sub_eval->add_option("--ref", ev.ref, "Reference file, one story per line")->required();
  sub_eval->add_option("--json", ev.json, "Also write the JSON report to this file");
  sub_eval->add_option("--label", ev.label, "Row label in the table")->capture_default_str();
  sub_eval->add_flag("--smoothing", ev.smoothing, "Add-one smoothing for BLEU orders without matches");
  add_common(sub_eval, common);

  LmTrainArgs lmt;
  auto* sub_lmt = app.add_subcommand("lm-train", "Train an interpolated Kneser-Ney language model");
  sub_lmt->add_option("--input,-i", lmt.input, "Stories (.jsonl corpus or plain text, one per line)")->required();
  sub_lmt->add_option("--output,-o", lmt.output, "Model file to write")->required();
  sub_lmt->add_option("--order", lmt.order, "N-gram order")->capture_default_str()->check(CLI::Range(1, 10));
  sub_lmt->add_option("--discount", lmt.discount, "Absolute discount D")->capture_default_str();
  sub_lmt->add_flag("--no-boundaries", lmt.no_boundaries, "Do not add <s> and </s>");
  sub_lmt->add_flag("--no-unk", lmt.no_unk, "Do not reserve <unk>");
  add_common(sub_lmt, common);

  LmScoreArgs lms;
  auto* sub_lms = app.add_subcommand("lm-score", "Perplexity of text under a language model");
  sub_lms->add_option("--model,-m", lms.model, "Model file")->required();
  sub_lms->add_option("--input,-i", lms.input, "Stories (.jsonl corpus or plain text, one per line)")->required();
  add_common(sub_lms, common);

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(app, std::move(args));
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(rev);
  } catch (const MissingFile& e) {
    std::cerr << "d2s: error: cannot open " << e.path << "\n";
    return kExitDomain;
  } catch (const UsageError& e) {
    std::cerr << "d2s: error: " << e.message << "\n\n" << app.help();
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sub_stats->parsed()) return run_stats(stats);
    if (sub_vocab->parsed()) return run_build_vocab(vocab);
    if (sub_train->parsed()) return run_train(train, common);
    if (sub_gen->parsed()) return run_generate(gen, common);
    if (sub_eval->parsed()) return run_evaluate(ev, common);
    if (sub_lmt->parsed()) return run_lm_train(lmt);
    if (sub_lms->parsed()) return run_lm_score(lms);
  } catch (const Failure&) {
    std::cerr << "d2s: error: " << d2s_last_error() << "\n";
    return kExitDomain;
  }
  std::cerr << app.help();
  return kExitUsage;
}
