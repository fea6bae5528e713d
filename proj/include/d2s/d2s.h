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

#ifndef D2S_D2S_H_
#define D2S_D2S_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define D2S_API __declspec(dllexport)
#else
#define D2S_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum d2s_status {
  D2S_OK = 0,
  D2S_ERR_INVALID_ARGUMENT = 1,
  D2S_ERR_SHAPE_MISMATCH = 2,
  D2S_ERR_NON_FINITE = 3,
  D2S_ERR_EMPTY_CORPUS = 4,
  D2S_ERR_EMPTY_TARGET = 5,
  D2S_ERR_IO = 6,
  D2S_ERR_PARSE = 7,
  D2S_ERR_NOT_CHECKPOINT = 8,
  D2S_ERR_UNSUPPORTED_VERSION = 9,
  D2S_ERR_TRUNCATED = 10,
  D2S_ERR_INTERNAL = 99
} d2s_status;

/* Message of the last failed call on the calling thread; "" after success. */
D2S_API const char* d2s_last_error(void);
D2S_API const char* d2s_status_name(d2s_status status);
D2S_API const char* d2s_version(void);

/* Releases strings returned through char** out-parameters. */
D2S_API void d2s_string_free(char* s);

/* ---- corpus ------------------------------------------------------------ */

typedef struct d2s_corpus_stats {
  uint64_t doc_count;
  double avg_sentences_caption;
  double avg_sentences_story;
  double avg_words_caption;
  double avg_words_story;
  double avg_nonoverlap_words;
  double unseen_nonstop_fraction;
} d2s_corpus_stats;

/* stopwords_path may be NULL for the built-in English list. */
D2S_API d2s_status d2s_corpus_stats_file(const char* corpus_path, const char* stopwords_path,
                                         d2s_corpus_stats* out);

D2S_API d2s_status d2s_build_vocab(const char* corpus_path, uint64_t min_count, uint64_t max_size,
                                   const char* vocab_path, uint64_t* vocab_size);

/* ---- training ---------------------------------------------------------- */

typedef struct d2s_train_config {
  uint64_t embed_dim;
  uint64_t hidden_dim;
  double dropout;
  uint64_t max_decode_len;
  uint64_t batch_size;
  uint64_t max_iterations;
  uint64_t eval_every;
  double clip_norm;
  double learning_rate;
  uint64_t seed;
  int deterministic;
  unsigned threads;
  uint64_t vocab_min_count;
  uint64_t vocab_max_size;
  const char* train_path;      /* JSON Lines, required */
  const char* valid_path;      /* JSON Lines, may be NULL */
  const char* vocab_path;      /* NULL builds the vocabulary from train_path */
  const char* checkpoint_dir;  /* may be NULL */
  const char* log_path;        /* may be NULL */
} d2s_train_config;

typedef struct d2s_train_summary {
  uint64_t iterations;
  double final_loss;
  double best_val_bleu4; /* negative when never evaluated */
  uint64_t best_iteration;
  uint64_t vocab_size;
  uint64_t parameter_count;
} d2s_train_summary;

/* val_bleu4 is NaN on iterations without validation. */
typedef void (*d2s_train_callback)(uint64_t iteration, double loss, double val_bleu4, void* user);

D2S_API void d2s_train_config_init(d2s_train_config* cfg);
D2S_API d2s_status d2s_train(const d2s_train_config* cfg, d2s_train_callback callback, void* user,
                             d2s_train_summary* out);

/* ---- model and generation ---------------------------------------------- */

typedef struct d2s_model d2s_model;

typedef struct d2s_model_info {
  uint64_t vocab_size;
  uint64_t embed_dim;
  uint64_t hidden_dim;
  uint64_t max_decode_len;
  uint64_t iteration;
  double val_bleu4;
  uint64_t parameter_count;
} d2s_model_info;

D2S_API d2s_status d2s_model_load(const char* checkpoint_path, d2s_model** out);
D2S_API void d2s_model_free(d2s_model* model);
D2S_API d2s_status d2s_model_info_get(const d2s_model* model, d2s_model_info* out);

/* One story for a list of descriptions; beam_width 1 decodes greedily. */
D2S_API d2s_status d2s_generate(const d2s_model* model, const char* const* descriptions, size_t count,
                                uint64_t beam_width, int suppress_unk, char** story);

/* Called once per input document, in input order. */
typedef void (*d2s_story_callback)(uint64_t index, const char* story, void* user);

/* Reads JSON Lines and reports each generated story through the callback. */
D2S_API d2s_status d2s_generate_stream(const d2s_model* model, const char* input_path, uint64_t beam_width,
                                       int suppress_unk, unsigned threads, d2s_story_callback callback, void* user,
                                       uint64_t* count);

/* Reads JSON Lines and writes one story per line in input order. */
D2S_API d2s_status d2s_generate_file(const d2s_model* model, const char* input_path, const char* output_path,
                                     uint64_t beam_width, int suppress_unk, unsigned threads, uint64_t* count);

/* ---- evaluation -------------------------------------------------------- */

typedef struct d2s_metric_report {
  double bleu4;   /* percent */
  double meteor;  /* percent */
  double ter;     /* percent */
  double rouge_l; /* fraction */
  uint64_t sentences;
} d2s_metric_report;

typedef enum d2s_report_format { D2S_REPORT_TABLE = 0, D2S_REPORT_JSON = 1 } d2s_report_format;

D2S_API d2s_status d2s_evaluate_files(const char* hyp_path, const char* ref_path, int smoothing, unsigned threads,
                                      d2s_metric_report* out);
D2S_API d2s_status d2s_evaluate_strings(const char* const* hyps, const char* const* refs, size_t count, int smoothing,
                                        d2s_metric_report* out);
D2S_API d2s_status d2s_metric_report_render(const d2s_metric_report* report, const char* label,
                                            d2s_report_format format, char** text);

/* ---- n-gram language model --------------------------------------------- */

typedef struct d2s_lm d2s_lm;

typedef struct d2s_lm_options {
  uint64_t order;
  double discount;
  int boundaries;
  int unk;
} d2s_lm_options;

typedef struct d2s_perplexity {
  double perplexity;
  double log_prob;
  uint64_t events;
  uint64_t oov;
} d2s_perplexity;

D2S_API void d2s_lm_options_init(d2s_lm_options* opt);
/* Text input: JSON Lines stories when the path ends in .jsonl, else one
   sentence sequence per line. */
D2S_API d2s_status d2s_lm_train_file(const char* text_path, const d2s_lm_options* opt, d2s_lm** out);
D2S_API d2s_status d2s_lm_load(const char* model_path, d2s_lm** out);
D2S_API d2s_status d2s_lm_save(const d2s_lm* lm, const char* model_path);
D2S_API void d2s_lm_free(d2s_lm* lm);
D2S_API d2s_status d2s_lm_prob(const d2s_lm* lm, const char* const* context, size_t context_len, const char* word,
                               double* out);
D2S_API d2s_status d2s_lm_perplexity_file(const d2s_lm* lm, const char* text_path, d2s_perplexity* out);

#ifdef __cplusplus
}
#endif

#endif /* D2S_D2S_H_ */
