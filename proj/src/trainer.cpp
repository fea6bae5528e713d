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

#include "trainer.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "generator.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace d2s {

void TrainConfig::validate() const {
  hp.validate();
  if (max_iterations < 1) fail(Errc::kInvalidArgument, "max_iterations must be ≥ 1");
  if (eval_every < 1) fail(Errc::kInvalidArgument, "eval_every must be ≥ 1");
  if (batch_size < 1) fail(Errc::kInvalidArgument, "batch_size must be ≥ 1");
  if (!(clip_norm > 0)) fail(Errc::kInvalidArgument, "clip_norm must be > 0");
  if (!(learning_rate >= 0)) fail(Errc::kInvalidArgument, "learning rate must be ≥ 0");
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return make_stream(seed, "epoch", epoch)();
}

double validation_bleu(std::span<const Example> examples, const ModelParams<float>& params, const Hyperparams& hp,
                       const Vocab& vocab, unsigned threads) {
  if (examples.empty()) fail(Errc::kEmptyCorpus, "empty validation corpus");
  GenerateOptions opt;
  opt.beam_width = 1;
  opt.threads = threads;
  auto stories = generate_stories(examples, params, hp, vocab, opt);
  std::vector<metrics::Tokens> hyps, refs;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    hyps.push_back(tokenize(stories[i]));
    refs.push_back(tokenize(examples[i].story));
  }
  return metrics::bleu_corpus(hyps, refs, false);
}

TrainLogWriter::TrainLogWriter(const std::filesystem::path& path) : path_(path) {
  std::ofstream out(path_, std::ios::trunc);
  if (!out) fail(Errc::kIo, "cannot open " + path_.string() + " for writing");
  out << "iteration,loss,val_bleu4\n";
  out.flush();
  if (!out) fail(Errc::kIo, "write failed: " + path_.string());
}

std::string TrainLogWriter::format(const TrainLogRecord& rec) {
  auto num = [](double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  std::string line = std::to_string(rec.iteration) + "," + num(rec.loss) + ",";
  if (rec.val_bleu4) line += num(*rec.val_bleu4);
  line += "\n";
  return line;
}

void TrainLogWriter::append(const TrainLogRecord& rec) {
  const std::string line = format(rec);
  std::ofstream out(path_, std::ios::app);
  if (!out) fail(Errc::kIo, "cannot open " + path_.string() + " for appending");
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) fail(Errc::kIo, "write failed: " + path_.string());
}

std::vector<TrainLogRecord> read_train_log(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  if (lines.empty() || lines.front() != "iteration,loss,val_bleu4")
    fail(Errc::kParse, path.string() + ": missing training log header");
  std::vector<TrainLogRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(lines[i]);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (lines[i].back() == ',') fields.emplace_back();
    if (fields.size() != 3) fail(Errc::kParse, path.string() + ":" + std::to_string(i + 1) + ": expected 3 fields");
    TrainLogRecord rec;
    try {
      rec.iteration = std::stoull(fields[0]);
      rec.loss = std::stod(fields[1]);
      if (!fields[2].empty()) rec.val_bleu4 = std::stod(fields[2]);
    } catch (const std::exception&) {
      fail(Errc::kParse, path.string() + ":" + std::to_string(i + 1) + ": bad number");
    }
    out.push_back(rec);
  }
  return out;
}

TrainResult train(const TrainConfig& config, const Vocab& vocab, std::span<const Example> train_set,
                  std::span<const Example> valid_set, const TrainCallback& on_record) {
  TrainConfig cfg = config;
  cfg.hp.vocab_size = vocab.size();
  cfg.validate();
  if (train_set.empty()) fail(Errc::kEmptyCorpus, "empty training corpus");
  const unsigned threads = cfg.deterministic ? 1u : std::max(1u, cfg.threads);

  std::vector<EncodedPair> pairs;
  pairs.reserve(train_set.size());
  for (const auto& ex : train_set) pairs.push_back(encode_example(ex, vocab));

  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
  std::optional<TrainLogWriter> log_writer;
  if (!cfg.log_path.empty()) log_writer.emplace(cfg.log_path);

  TrainResult result;
  ModelParams<float> params = init_params(cfg.hp, cfg.seed);
  AdamState adam = AdamState::zeros_like(params, cfg.learning_rate);
  std::vector<nk::Tensor<float>> grads;
  double best_bleu = -1.0;

  auto snapshot = [&](std::size_t iteration, double bleu) {
    Checkpoint c;
    c.hp = cfg.hp;
    c.vocab = vocab;
    c.params = params;
    c.adam = adam;
    c.iteration = iteration;
    c.val_bleu4 = bleu;
    return c;
  };

  std::size_t iteration = 0;
  double last_bleu = -1.0;
  for (std::size_t epoch = 0; iteration < cfg.max_iterations; ++epoch) {
    auto batches = make_batches(pairs, cfg.batch_size, epoch_seed(cfg.seed, epoch));
    for (const Batch& batch : batches) {
      if (iteration >= cfg.max_iterations) break;
      ++iteration;
      auto rng = make_stream(cfg.seed, "dropout", iteration);
      float loss = 0;
      try {
        loss = loss_and_gradients(batch, params, cfg.hp, true, &rng, grads);
      } catch (const Error& e) {
        if (e.code() == Errc::kNonFinite)
          fail(Errc::kNonFinite, "non-finite loss at iteration " + std::to_string(iteration) + ": " + e.what());
        throw;
      }
      if (!std::isfinite(loss))
        fail(Errc::kNonFinite, "non-finite loss at iteration " + std::to_string(iteration));
      clip_gradients<float>(grads, cfg.clip_norm);
      adam_step(params, grads, adam);

      TrainLogRecord rec{iteration, static_cast<double>(loss), std::nullopt};
      if (!valid_set.empty() && iteration % cfg.eval_every == 0) {
        const double bleu = validation_bleu(valid_set, params, cfg.hp, vocab, threads);
        rec.val_bleu4 = bleu;
        last_bleu = bleu;
        if (bleu >= best_bleu) {
          best_bleu = bleu;
          result.best = snapshot(iteration, bleu);
          result.best_history.push_back({iteration, bleu});
          if (!cfg.checkpoint_dir.empty()) save_checkpoint(*result.best, cfg.checkpoint_dir / "best.ckpt");
        }
      }
      result.log.push_back(rec);
      if (log_writer) log_writer->append(rec);
      if (on_record) on_record(rec);
    }
  }

  result.last = snapshot(iteration, last_bleu);
  if (!cfg.checkpoint_dir.empty()) {
    save_checkpoint(result.last, cfg.checkpoint_dir / "last.ckpt");
    if (!result.best) save_checkpoint(result.last, cfg.checkpoint_dir / "best.ckpt");
  }
  return result;
}

}  // namespace d2s
