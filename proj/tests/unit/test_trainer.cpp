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
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "checkpoint.hpp"
#include "generator.hpp"
#include "model_fixtures.hpp"
#include "test_support.hpp"
#include "trainer.hpp"

using namespace d2s;
using d2s::nk::Tensor;
using d2s::testing::read_file;
using d2s::testing::TempDir;
using d2s::testing::write_file;

namespace {

Errc error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::kInvalidArgument;
}

bool bitwise_equal(const ModelParams<float>& a, const ModelParams<float>& b) {
  std::vector<const Tensor<float>*> ta, tb;
  a.for_each([&](const std::string&, const Tensor<float>& t) { ta.push_back(&t); });
  b.for_each([&](const std::string&, const Tensor<float>& t) { tb.push_back(&t); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!ta[i]->same_shape(*tb[i])) return false;
    if (std::memcmp(ta[i]->values().data(), tb[i]->values().data(), ta[i]->size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

Checkpoint sample_checkpoint() {
  auto examples = testing::synthetic_pairs(5, 2);
  Checkpoint c;
  c.vocab = build_vocab(examples, 1, 100);
  c.hp.vocab_size = c.vocab.size();
  c.hp.embed_dim = 5;
  c.hp.hidden_dim = 4;
  c.hp.dropout = 0.3;
  c.hp.max_decode_len = 17;
  c.params = init_params(c.hp, 3);
  c.adam = AdamState::zeros_like(c.params, 0.002);
  std::mt19937_64 rng(4);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& t : c.adam->m)
    for (auto& v : t.values()) v = n(rng);
  for (auto& t : c.adam->v)
    for (auto& v : t.values()) v = std::abs(n(rng));
  c.adam->step = 42;
  c.iteration = 1234;
  c.val_bleu4 = 12.5;
  return c;
}

TrainConfig tiny_config(const std::filesystem::path& dir) {
  TrainConfig cfg;
  cfg.hp.embed_dim = 8;
  cfg.hp.hidden_dim = 8;
  cfg.hp.max_decode_len = 20;
  cfg.batch_size = 4;
  cfg.max_iterations = 12;
  cfg.eval_every = 4;
  cfg.seed = 7;
  cfg.deterministic = true;
  cfg.checkpoint_dir = dir;
  cfg.log_path = dir / "log.csv";
  return cfg;
}

}  // namespace

TEST_CASE("gradient clipping") {
  std::vector<Tensor<double>> g{Tensor<double>::from(1, 2, {3.0, 4.0})};
  CHECK(clip_gradients<double>(g, 2.5) == doctest::Approx(5.0));
  CHECK(g[0][0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(g[0][1] == doctest::Approx(2.0).epsilon(1e-15));

  std::vector<Tensor<double>> small{Tensor<double>::from(1, 2, {0.6, 0.8})};
  clip_gradients<double>(small, 5.0);
  CHECK(small[0][0] == 0.6);
  CHECK(small[0][1] == 0.8);

  std::vector<Tensor<double>> zero{Tensor<double>::from(1, 3, {0.0, 0.0, 0.0})};
  CHECK(clip_gradients<double>(zero, 1.0) == 0.0);
  for (double v : zero[0].values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(clip_gradients<double>(g, 0.0), Error);

  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 10.0f);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor<float>> gs;
    for (int k = 0; k < 4; ++k) {
      Tensor<float> t(3, 5);
      for (auto& v : t.values()) v = n(rng);
      gs.push_back(t);
    }
    clip_gradients<float>(gs, 5.0);
    CHECK(global_norm(std::span<const Tensor<float>>(gs)) <= 5.0 + 1e-6);
  }
}

TEST_CASE("adam first step and invariants") {
  Tensor<double> p = Tensor<double>::from(1, 3, {1.0, -2.0, 0.5});
  std::vector<Tensor<double>*> params{&p};
  std::vector<Tensor<double>> g{Tensor<double>::from(1, 3, {0.3, -7.0, 0.0})};
  std::vector<Tensor<double>> m{Tensor<double>(1, 3)}, v{Tensor<double>(1, 3)};
  std::uint64_t step = 0;
  adam_step<double>(params, g, m, v, step, 0.001, 0.9, 0.999, 1e-8);
  CHECK(step == 1);
  CHECK(p[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-7));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.001).epsilon(1e-7));
  CHECK(p[2] == 0.5);
  CHECK(m[0][0] == doctest::Approx(0.1 * 0.3));
  CHECK(v[0][1] == doctest::Approx(0.001 * 49.0));
  for (double x : v[0].values()) CHECK(x >= 0.0);

  Tensor<double> q = Tensor<double>::from(1, 3, {1.0, -2.0, 0.5});
  std::vector<Tensor<double>*> qp{&q};
  std::vector<Tensor<double>> m2{Tensor<double>(1, 3)}, v2{Tensor<double>(1, 3)};
  std::uint64_t step2 = 0;
  adam_step<double>(qp, g, m2, v2, step2, 0.001, 0.9, 0.999, 1e-8);
  CHECK(std::memcmp(p.values().data(), q.values().data(), 3 * sizeof(double)) == 0);

  std::vector<Tensor<double>> bad{Tensor<double>(1, 2)};
  CHECK(error_code([&] { adam_step<double>(params, bad, m, v, step, 0.001, 0.9, 0.999, 1e-8); }) ==
        Errc::kShapeMismatch);
}

TEST_CASE("adam with zero learning rate leaves parameters bitwise unchanged") {
  Hyperparams hp = testing::tiny_hyperparams();
  auto params = init_params(hp, 5);
  const auto before = params;
  auto state = AdamState::zeros_like(params, 0.0);
  std::mt19937_64 rng(6);
  std::normal_distribution<float> n(0.0f, 100.0f);
  for (int it = 0; it < 5; ++it) {
    std::vector<Tensor<float>> grads;
    params.for_each([&](const std::string&, const Tensor<float>& t) {
      Tensor<float> g = t;
      for (auto& x : g.values()) x = n(rng);
      grads.push_back(g);
    });
    adam_step(params, grads, state);
  }
  CHECK(state.step == 5);
  CHECK(bitwise_equal(params, before));

  auto fresh = AdamState::zeros_like(params, 0.001);
  std::vector<Tensor<float>> zeros;
  params.for_each([&](const std::string&, const Tensor<float>& t) { zeros.push_back(Tensor<float>(t.shape())); });
  adam_step(params, zeros, fresh);
  CHECK(bitwise_equal(params, before));
}

TEST_CASE("training configuration validation") {
  TrainConfig cfg;
  cfg.hp.vocab_size = 20;
  cfg.max_iterations = 0;
  CHECK_THROWS_WITH(cfg.validate(), "max_iterations must be ≥ 1");
  cfg.max_iterations = 1;
  cfg.eval_every = 0;
  CHECK_THROWS_WITH(cfg.validate(), "eval_every must be ≥ 1");
  cfg.eval_every = 1;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.batch_size = 1;
  cfg.clip_norm = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.clip_norm = 5;
  CHECK_NOTHROW(cfg.validate());

  auto examples = testing::synthetic_pairs(4, 1);
  auto vocab = build_vocab(examples, 1, 100);
  TrainConfig zero;
  zero.max_iterations = 0;
  CHECK_THROWS_WITH(train(zero, vocab, examples, {}), "max_iterations must be ≥ 1");
  TrainConfig ok;
  ok.hp.embed_dim = ok.hp.hidden_dim = 4;
  CHECK(error_code([&] { train(ok, vocab, std::span<const Example>(), {}); }) == Errc::kEmptyCorpus);
}

TEST_CASE("epoch seeds differ per epoch and are reproducible") {
  CHECK(epoch_seed(1, 0) == epoch_seed(1, 0));
  CHECK(epoch_seed(1, 0) != epoch_seed(1, 1));
  CHECK(epoch_seed(1, 0) != epoch_seed(2, 0));
}

TEST_CASE("training log CSV") {
  TempDir dir;
  auto path = dir / "log.csv";
  TrainLogWriter w(path);
  w.append({1, 2.5, std::nullopt});
  w.append({2, 0.125, 33.25});
  CHECK(read_file(path) == "iteration,loss,val_bleu4\n1,2.5,\n2,0.125,33.25\n");
  auto recs = read_train_log(path);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].iteration == 1);
  CHECK_FALSE(recs[0].val_bleu4.has_value());
  CHECK(*recs[1].val_bleu4 == 33.25);
  const double awkward = 0.1 + 0.2;
  CHECK(std::stod(TrainLogWriter::format({3, awkward, std::nullopt}).substr(2)) == awkward);
  write_file(dir / "bad.csv", "iter,loss\n");
  CHECK(error_code([&] { read_train_log(dir / "bad.csv"); }) == Errc::kParse);
  write_file(dir / "bad2.csv", "iteration,loss,val_bleu4\n1,x,\n");
  CHECK(error_code([&] { read_train_log(dir / "bad2.csv"); }) == Errc::kParse);
}

TEST_CASE("checkpoint save and load round-trips bitwise") {
  TempDir dir;
  auto c = sample_checkpoint();
  save_checkpoint(c, dir / "a.ckpt");
  auto back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.hp == c.hp);
  CHECK(back.vocab.tokens() == c.vocab.tokens());
  for (std::size_t i = 0; i < c.vocab.size(); ++i) CHECK(back.vocab.count(TokenId(i)) == c.vocab.count(TokenId(i)));
  CHECK(bitwise_equal(back.params, c.params));
  REQUIRE(back.adam.has_value());
  CHECK(*back.adam == *c.adam);
  CHECK(back.iteration == 1234);
  CHECK(back.val_bleu4 == 12.5);
  save_checkpoint(back, dir / "b.ckpt");
  CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
  CHECK_FALSE(std::filesystem::exists(dir / "a.ckpt.tmp"));

  c.adam.reset();
  save_checkpoint(c, dir / "c.ckpt");
  CHECK_FALSE(load_checkpoint(dir / "c.ckpt").adam.has_value());
}

TEST_CASE("checkpoint is self-describing") {
  TempDir dir;
  Checkpoint c;
  c.vocab = build_vocab(testing::synthetic_pairs(3, 1), 1, 100);
  c.hp.vocab_size = c.vocab.size();
  c.hp.embed_dim = 128;
  c.hp.hidden_dim = 128;
  c.params = init_params(c.hp, 1);
  save_checkpoint(c, dir / "e128.ckpt");
  auto back = load_checkpoint(dir / "e128.ckpt");
  CHECK(back.hp.embed_dim == 128);
  CHECK(back.hp.hidden_dim == 128);
  auto src = encode_source(std::vector<std::string>{"a dog at the park ."}, back.vocab);
  CHECK_NOTHROW(greedy_decode(std::span<const TokenId>(src), back.params, back.hp));
}

TEST_CASE("corrupted checkpoints are rejected with distinct codes") {
  TempDir dir;
  auto c = sample_checkpoint();
  save_checkpoint(c, dir / "good.ckpt");
  const std::string bytes = read_file(dir / "good.ckpt");

  write_file(dir / "magic.ckpt", "XXXX" + bytes.substr(4));
  CHECK(error_code([&] { load_checkpoint(dir / "magic.ckpt"); }) == Errc::kNotCheckpoint);
  try {
    load_checkpoint(dir / "magic.ckpt");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("not a checkpoint") != std::string::npos);
  }
  write_file(dir / "text.ckpt", "hello");
  CHECK(error_code([&] { load_checkpoint(dir / "text.ckpt"); }) == Errc::kNotCheckpoint);

  std::string v2 = bytes;
  v2[4] = 2;
  write_file(dir / "v2.ckpt", v2);
  CHECK(error_code([&] { load_checkpoint(dir / "v2.ckpt"); }) == Errc::kUnsupportedVersion);

  for (std::size_t cut : {std::size_t(6), std::size_t(40), bytes.size() / 2, bytes.size() - 1}) {
    write_file(dir / "cut.ckpt", bytes.substr(0, cut));
    INFO("cut at " << cut);
    CHECK(error_code([&] { load_checkpoint(dir / "cut.ckpt"); }) == Errc::kTruncated);
  }
  CHECK(error_code([&] { load_checkpoint(dir / "missing.ckpt"); }) == Errc::kIo);
}

TEST_CASE("training run writes a gap-free log and checkpoints") {
  TempDir dir;
  auto examples = testing::synthetic_pairs(10, 5);
  auto vocab = build_vocab(examples, 1, 1000);
  auto cfg = tiny_config(dir.path());
  std::vector<std::size_t> seen;
  auto result = train(cfg, vocab, examples, std::span<const Example>(examples).subspan(0, 4),
                      [&](const TrainLogRecord& r) { seen.push_back(r.iteration); });
  REQUIRE(result.log.size() == 12);
  for (std::size_t i = 0; i < result.log.size(); ++i) {
    CHECK(result.log[i].iteration == i + 1);
    CHECK(seen[i] == i + 1);
    CHECK(std::isfinite(result.log[i].loss));
    CHECK(result.log[i].val_bleu4.has_value() == ((i + 1) % 4 == 0));
  }
  auto disk = read_train_log(cfg.log_path);
  REQUIRE(disk.size() == result.log.size());
  for (std::size_t i = 0; i < disk.size(); ++i) {
    CHECK(disk[i].iteration == result.log[i].iteration);
    CHECK(disk[i].loss == result.log[i].loss);
    CHECK(disk[i].val_bleu4 == result.log[i].val_bleu4);
  }
  CHECK(std::filesystem::exists(dir / "best.ckpt"));
  CHECK(std::filesystem::exists(dir / "last.ckpt"));
  auto last = load_checkpoint(dir / "last.ckpt");
  CHECK(last.iteration == 12);
  CHECK(bitwise_equal(last.params, result.last.params));
  REQUIRE(result.best.has_value());
  auto best = load_checkpoint(dir / "best.ckpt");
  CHECK(best.iteration == result.best->iteration);
  CHECK(best.val_bleu4 == result.best->val_bleu4);
  for (std::size_t i = 1; i < result.best_history.size(); ++i)
    CHECK(result.best_history[i].val_bleu4 >= result.best_history[i - 1].val_bleu4);
  CHECK(last.adam->step == 12);
}

TEST_CASE("deterministic training reproduces checkpoints bitwise") {
  TempDir a, b, c;
  auto examples = testing::synthetic_pairs(9, 6);
  auto vocab = build_vocab(examples, 1, 1000);
  auto cfg_a = tiny_config(a.path());
  auto cfg_b = tiny_config(b.path());
  cfg_b.threads = 4;
  train(cfg_a, vocab, examples, examples);
  train(cfg_b, vocab, examples, examples);
  CHECK(read_file(a / "last.ckpt") == read_file(b / "last.ckpt"));
  CHECK(read_file(a / "best.ckpt") == read_file(b / "best.ckpt"));
  CHECK(read_file(a / "log.csv") == read_file(b / "log.csv"));

  auto cfg_c = tiny_config(c.path());
  cfg_c.seed = 8;
  train(cfg_c, vocab, examples, examples);
  CHECK(read_file(a / "last.ckpt") != read_file(c / "last.ckpt"));
}

TEST_CASE("without validation data the last checkpoint doubles as best") {
  TempDir dir;
  auto examples = testing::synthetic_pairs(6, 8);
  auto vocab = build_vocab(examples, 1, 1000);
  auto cfg = tiny_config(dir.path());
  cfg.max_iterations = 3;
  auto result = train(cfg, vocab, examples, {});
  CHECK_FALSE(result.best.has_value());
  CHECK(read_file(dir / "best.ckpt") == read_file(dir / "last.ckpt"));
  for (const auto& r : result.log) CHECK_FALSE(r.val_bleu4.has_value());
}

TEST_CASE("divergent training aborts naming the iteration") {
  auto examples = testing::synthetic_pairs(6, 8);
  auto vocab = build_vocab(examples, 1, 1000);
  TrainConfig cfg;
  cfg.hp.embed_dim = cfg.hp.hidden_dim = 8;
  cfg.batch_size = 3;
  cfg.max_iterations = 50;
  cfg.learning_rate = 1e30;
  try {
    train(cfg, vocab, examples, {});
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kNonFinite);
    CHECK(std::string(e.what()).find("non-finite loss at iteration ") != std::string::npos);
  }
}
