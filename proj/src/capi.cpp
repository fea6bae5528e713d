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

#include "d2s/d2s.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "generator.hpp"
#include "metrics.hpp"
#include "ngram_lm.hpp"
#include "trainer.hpp"

struct d2s_model {
  d2s::Checkpoint ckpt;
};

struct d2s_lm {
  d2s::lm::KNModel model;
};

namespace {

thread_local std::string g_last_error;

d2s_status set_error(d2s_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename Fn>
d2s_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return D2S_OK;
  } catch (const d2s::Error& e) {
    return set_error(static_cast<d2s_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(D2S_ERR_INTERNAL, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return set_error(D2S_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return set_error(D2S_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(D2S_ERR_INTERNAL, "unknown error");
  }
}

void require(bool cond, const char* what) {
  if (!cond) d2s::fail(d2s::Errc::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.data(), s.size() + 1);
  return p;
}

bool is_jsonl(const std::filesystem::path& p) { return p.extension() == ".jsonl"; }

std::vector<d2s::lm::Sentence> read_texts(const char* path) {
  std::vector<d2s::lm::Sentence> out;
  if (is_jsonl(path)) {
    for (const auto& ex : d2s::load_corpus(path)) out.push_back(d2s::tokenize(ex.story));
  } else {
    for (const auto& line : d2s::read_lines(path)) out.push_back(d2s::tokenize(line));
  }
  return out;
}

d2s::metrics::MetricReport to_report(const d2s_metric_report& r) {
  d2s::metrics::MetricReport rep;
  rep.bleu4 = r.bleu4;
  rep.meteor = r.meteor;
  rep.ter = r.ter;
  rep.rouge_l = r.rouge_l;
  rep.sentences.resize(r.sentences);
  return rep;
}

void from_report(const d2s::metrics::MetricReport& rep, d2s_metric_report* out) {
  out->bleu4 = rep.bleu4;
  out->meteor = rep.meteor;
  out->ter = rep.ter;
  out->rouge_l = rep.rouge_l;
  out->sentences = rep.sentences.size();
}

}  // namespace

extern "C" {

const char* d2s_last_error(void) { return g_last_error.c_str(); }

const char* d2s_status_name(d2s_status status) {
  switch (status) {
    case D2S_OK: return "ok";
    case D2S_ERR_INVALID_ARGUMENT: return "invalid argument";
    case D2S_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case D2S_ERR_NON_FINITE: return "non-finite value";
    case D2S_ERR_EMPTY_CORPUS: return "empty corpus";
    case D2S_ERR_EMPTY_TARGET: return "empty target";
    case D2S_ERR_IO: return "i/o error";
    case D2S_ERR_PARSE: return "parse error";
    case D2S_ERR_NOT_CHECKPOINT: return "not a checkpoint";
    case D2S_ERR_UNSUPPORTED_VERSION: return "unsupported version";
    case D2S_ERR_TRUNCATED: return "truncated file";
    case D2S_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* d2s_version(void) { return "1.0.0"; }

void d2s_string_free(char* s) { std::free(s); }

d2s_status d2s_corpus_stats_file(const char* corpus_path, const char* stopwords_path, d2s_corpus_stats* out) {
  return guarded([&] {
    require(corpus_path && out, "corpus_path and out are required");
    auto examples = d2s::load_corpus(corpus_path);
    if (examples.empty()) d2s::fail(d2s::Errc::kEmptyCorpus, std::string(corpus_path) + ": empty corpus");
    d2s::CorpusStats s;
    if (stopwords_path) {
      s = d2s::compute_stats(examples, d2s::load_stopwords(stopwords_path));
    } else {
      s = d2s::compute_stats(examples, d2s::default_stopwords());
    }
    out->doc_count = s.doc_count;
    out->avg_sentences_caption = s.avg_sentences_caption;
    out->avg_sentences_story = s.avg_sentences_story;
    out->avg_words_caption = s.avg_words_caption;
    out->avg_words_story = s.avg_words_story;
    out->avg_nonoverlap_words = s.avg_nonoverlap_words;
    out->unseen_nonstop_fraction = s.unseen_nonstop_fraction;
  });
}

d2s_status d2s_build_vocab(const char* corpus_path, uint64_t min_count, uint64_t max_size, const char* vocab_path,
                           uint64_t* vocab_size) {
  return guarded([&] {
    require(corpus_path && vocab_path, "corpus_path and vocab_path are required");
    auto examples = d2s::load_corpus(corpus_path);
    auto vocab = d2s::build_vocab(examples, min_count, max_size);
    vocab.save(vocab_path);
    if (vocab_size) *vocab_size = vocab.size();
  });
}

void d2s_train_config_init(d2s_train_config* cfg) {
  if (!cfg) return;
  d2s::TrainConfig def;
  *cfg = d2s_train_config{};
  cfg->embed_dim = def.hp.embed_dim;
  cfg->hidden_dim = def.hp.hidden_dim;
  cfg->dropout = def.hp.dropout;
  cfg->max_decode_len = def.hp.max_decode_len;
  cfg->batch_size = def.batch_size;
  cfg->max_iterations = def.max_iterations;
  cfg->eval_every = def.eval_every;
  cfg->clip_norm = def.clip_norm;
  cfg->learning_rate = def.learning_rate;
  cfg->seed = def.seed;
  cfg->deterministic = 0;
  cfg->threads = 1;
  cfg->vocab_min_count = 2;
  cfg->vocab_max_size = 30000;
}

d2s_status d2s_train(const d2s_train_config* cfg, d2s_train_callback callback, void* user, d2s_train_summary* out) {
  return guarded([&] {
    require(cfg && cfg->train_path, "a configuration with train_path is required");
    auto train_set = d2s::load_corpus(cfg->train_path);
    if (train_set.empty()) d2s::fail(d2s::Errc::kEmptyCorpus, std::string(cfg->train_path) + ": empty corpus");
    std::vector<d2s::Example> valid_set;
    if (cfg->valid_path) valid_set = d2s::load_corpus(cfg->valid_path);
    d2s::Vocab vocab = cfg->vocab_path ? d2s::Vocab::load(cfg->vocab_path)
                                       : d2s::build_vocab(train_set, cfg->vocab_min_count, cfg->vocab_max_size);

    d2s::TrainConfig tc;
    tc.hp.embed_dim = cfg->embed_dim;
    tc.hp.hidden_dim = cfg->hidden_dim;
    tc.hp.dropout = cfg->dropout;
    tc.hp.max_decode_len = cfg->max_decode_len;
    tc.batch_size = cfg->batch_size;
    tc.max_iterations = cfg->max_iterations;
    tc.eval_every = cfg->eval_every;
    tc.clip_norm = cfg->clip_norm;
    tc.learning_rate = cfg->learning_rate;
    tc.seed = cfg->seed;
    tc.deterministic = cfg->deterministic != 0;
    tc.threads = cfg->threads;
    if (cfg->checkpoint_dir) tc.checkpoint_dir = cfg->checkpoint_dir;
    if (cfg->log_path) tc.log_path = cfg->log_path;

    d2s::TrainCallback cb;
    if (callback) {
      cb = [&](const d2s::TrainLogRecord& r) {
        callback(r.iteration, r.loss, r.val_bleu4 ? *r.val_bleu4 : std::numeric_limits<double>::quiet_NaN(), user);
      };
    }
    auto result = d2s::train(tc, vocab, train_set, valid_set, cb);
    if (out) {
      *out = d2s_train_summary{};
      out->iterations = result.last.iteration;
      out->final_loss = result.log.empty() ? 0.0 : result.log.back().loss;
      out->best_val_bleu4 = result.best ? result.best->val_bleu4 : -1.0;
      out->best_iteration = result.best ? result.best->iteration : result.last.iteration;
      out->vocab_size = vocab.size();
      out->parameter_count = result.last.params.parameter_count();
    }
  });
}

d2s_status d2s_model_load(const char* checkpoint_path, d2s_model** out) {
  return guarded([&] {
    require(checkpoint_path && out, "checkpoint_path and out are required");
    *out = nullptr;
    auto m = std::make_unique<d2s_model>();
    m->ckpt = d2s::load_checkpoint(checkpoint_path);
    *out = m.release();
  });
}

void d2s_model_free(d2s_model* model) { delete model; }

d2s_status d2s_model_info_get(const d2s_model* model, d2s_model_info* out) {
  return guarded([&] {
    require(model && out, "model and out are required");
    const auto& c = model->ckpt;
    out->vocab_size = c.hp.vocab_size;
    out->embed_dim = c.hp.embed_dim;
    out->hidden_dim = c.hp.hidden_dim;
    out->max_decode_len = c.hp.max_decode_len;
    out->iteration = c.iteration;
    out->val_bleu4 = c.val_bleu4;
    out->parameter_count = c.params.parameter_count();
  });
}

d2s_status d2s_generate(const d2s_model* model, const char* const* descriptions, size_t count, uint64_t beam_width,
                        int suppress_unk, char** story) {
  return guarded([&] {
    require(model && story && (descriptions || count == 0), "model, descriptions and story are required");
    *story = nullptr;
    d2s::Example ex;
    for (size_t i = 0; i < count; ++i) {
      require(descriptions[i] != nullptr, "description strings must not be NULL");
      ex.descriptions.emplace_back(descriptions[i]);
    }
    d2s::GenerateOptions opt;
    opt.beam_width = beam_width;
    opt.suppress_unk = suppress_unk != 0;
    const auto& c = model->ckpt;
    auto out = d2s::generate_stories(std::span(&ex, 1), c.params, c.hp, c.vocab, opt);
    *story = dup_string(out.front());
  });
}

d2s_status d2s_generate_stream(const d2s_model* model, const char* input_path, uint64_t beam_width,
                               int suppress_unk, unsigned threads, d2s_story_callback callback, void* user,
                               uint64_t* count) {
  return guarded([&] {
    require(model && input_path && callback, "model, input_path and callback are required");
    auto examples = d2s::load_corpus(input_path);
    d2s::GenerateOptions opt;
    opt.beam_width = beam_width;
    opt.suppress_unk = suppress_unk != 0;
    opt.threads = threads;
    const auto& c = model->ckpt;
    auto stories = d2s::generate_stories(examples, c.params, c.hp, c.vocab, opt);
    for (std::size_t i = 0; i < stories.size(); ++i) callback(i, stories[i].c_str(), user);
    if (count) *count = stories.size();
  });
}

d2s_status d2s_generate_file(const d2s_model* model, const char* input_path, const char* output_path,
                             uint64_t beam_width, int suppress_unk, unsigned threads, uint64_t* count) {
  return guarded([&] {
    require(model && input_path && output_path, "model, input_path and output_path are required");
    std::vector<std::string> stories;
    auto collect = [](uint64_t, const char* story, void* user) {
      static_cast<std::vector<std::string>*>(user)->emplace_back(story);
    };
    d2s_status s = d2s_generate_stream(model, input_path, beam_width, suppress_unk, threads, collect, &stories, count);
    if (s != D2S_OK) throw d2s::Error(static_cast<d2s::Errc>(s), g_last_error);
    std::ofstream out(output_path, std::ios::binary | std::ios::trunc);
    if (!out) d2s::fail(d2s::Errc::kIo, std::string("cannot open ") + output_path + " for writing");
    for (const auto& story : stories) out << story << '\n';
    out.flush();
    if (!out) d2s::fail(d2s::Errc::kIo, std::string("write failed: ") + output_path);
  });
}

d2s_status d2s_evaluate_files(const char* hyp_path, const char* ref_path, int smoothing, unsigned threads,
                              d2s_metric_report* out) {
  return guarded([&] {
    require(hyp_path && ref_path && out, "hyp_path, ref_path and out are required");
    from_report(d2s::metrics::evaluate_files(hyp_path, ref_path, smoothing != 0, threads), out);
  });
}

d2s_status d2s_evaluate_strings(const char* const* hyps, const char* const* refs, size_t count, int smoothing,
                                d2s_metric_report* out) {
  return guarded([&] {
    require(hyps && refs && out, "hyps, refs and out are required");
    std::vector<d2s::metrics::Tokens> h, r;
    for (size_t i = 0; i < count; ++i) {
      require(hyps[i] && refs[i], "sentence strings must not be NULL");
      h.push_back(d2s::tokenize(hyps[i]));
      r.push_back(d2s::tokenize(refs[i]));
    }
    from_report(d2s::metrics::evaluate(h, r, smoothing != 0), out);
  });
}

d2s_status d2s_metric_report_render(const d2s_metric_report* report, const char* label, d2s_report_format format,
                                    char** text) {
  return guarded([&] {
    require(report && text, "report and text are required");
    *text = nullptr;
    auto rep = to_report(*report);
    switch (format) {
      case D2S_REPORT_TABLE: *text = dup_string(rep.table(label ? label : "system")); break;
      case D2S_REPORT_JSON: *text = dup_string(rep.json()); break;
      default: d2s::fail(d2s::Errc::kInvalidArgument, "unknown report format");
    }
  });
}

void d2s_lm_options_init(d2s_lm_options* opt) {
  if (!opt) return;
  d2s::lm::KNOptions def;
  opt->order = def.order;
  opt->discount = def.discount;
  opt->boundaries = def.boundaries ? 1 : 0;
  opt->unk = def.unk ? 1 : 0;
}

d2s_status d2s_lm_train_file(const char* text_path, const d2s_lm_options* opt, d2s_lm** out) {
  return guarded([&] {
    require(text_path && out, "text_path and out are required");
    *out = nullptr;
    d2s::lm::KNOptions o;
    if (opt) {
      o.order = opt->order;
      o.discount = opt->discount;
      o.boundaries = opt->boundaries != 0;
      o.unk = opt->unk != 0;
    }
    auto texts = read_texts(text_path);
    auto m = std::make_unique<d2s_lm>(d2s_lm{d2s::lm::KNModel::train(texts, o)});
    *out = m.release();
  });
}

d2s_status d2s_lm_load(const char* model_path, d2s_lm** out) {
  return guarded([&] {
    require(model_path && out, "model_path and out are required");
    *out = nullptr;
    auto m = std::make_unique<d2s_lm>(d2s_lm{d2s::lm::KNModel::load(model_path)});
    *out = m.release();
  });
}

d2s_status d2s_lm_save(const d2s_lm* lm, const char* model_path) {
  return guarded([&] {
    require(lm && model_path, "lm and model_path are required");
    lm->model.save(model_path);
  });
}

void d2s_lm_free(d2s_lm* lm) { delete lm; }

d2s_status d2s_lm_prob(const d2s_lm* lm, const char* const* context, size_t context_len, const char* word,
                       double* out) {
  return guarded([&] {
    require(lm && word && out && (context || context_len == 0), "lm, word and out are required");
    std::vector<std::string> ctx;
    for (size_t i = 0; i < context_len; ++i) {
      require(context[i] != nullptr, "context strings must not be NULL");
      ctx.emplace_back(context[i]);
    }
    *out = lm->model.prob(ctx, word);
  });
}

d2s_status d2s_lm_perplexity_file(const d2s_lm* lm, const char* text_path, d2s_perplexity* out) {
  return guarded([&] {
    require(lm && text_path && out, "lm, text_path and out are required");
    auto r = lm->model.perplexity(read_texts(text_path));
    out->perplexity = r.perplexity;
    out->log_prob = r.log_prob;
    out->events = r.events;
    out->oov = r.oov;
  });
}

}  // extern "C"
