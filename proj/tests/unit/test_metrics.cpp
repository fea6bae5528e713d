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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "test_support.hpp"

using namespace d2s;
using namespace d2s::metrics;

namespace {

Tokens T(const std::string& s) { return tokenize(s); }

std::size_t edit_distance(const Tokens& a, const Tokens& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return d[a.size()][b.size()];
}

bool occurs_in(const Tokens& block, const Tokens& ref) {
  return std::search(ref.begin(), ref.end(), block.begin(), block.end()) != ref.end();
}

// Smallest edit distance reachable with exactly one move of a block (up to
// ten words) that also appears in the reference.
std::size_t best_single_shift(const Tokens& hyp, const Tokens& ref) {
  std::size_t best = SIZE_MAX;
  const std::size_t n = hyp.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t len = 1; len <= 10 && i + len <= n; ++len) {
      Tokens block(hyp.begin() + i, hyp.begin() + i + len);
      if (!occurs_in(block, ref)) continue;
      Tokens rest(hyp.begin(), hyp.begin() + i);
      rest.insert(rest.end(), hyp.begin() + i + len, hyp.end());
      for (std::size_t dest = 0; dest <= rest.size(); ++dest) {
        if (dest == i) continue;
        Tokens moved(rest.begin(), rest.begin() + dest);
        moved.insert(moved.end(), block.begin(), block.end());
        moved.insert(moved.end(), rest.begin() + dest, rest.end());
        best = std::min(best, edit_distance(moved, ref));
      }
    }
  return best;
}

// Fewest chunks over every alignment with the maximum number of exact matches.
std::size_t min_chunks(const Tokens& hyp, const Tokens& ref) {
  std::size_t best_matches = 0, best_chunks = SIZE_MAX;
  std::vector<int> to(hyp.size(), -1);
  std::vector<bool> used(ref.size(), false);
  auto rec = [&](auto& self, std::size_t i) -> void {
    if (i == hyp.size()) {
      std::size_t m = 0, c = 0;
      long ph = -2, pr = -2;
      for (std::size_t k = 0; k < hyp.size(); ++k) {
        if (to[k] < 0) continue;
        ++m;
        if (!(long(k) == ph + 1 && to[k] == pr + 1)) ++c;
        ph = long(k);
        pr = to[k];
      }
      if (m > best_matches || (m == best_matches && c < best_chunks)) {
        best_matches = m;
        best_chunks = c;
      }
      return;
    }
    self(self, i + 1);
    for (std::size_t j = 0; j < ref.size(); ++j)
      if (!used[j] && ref[j] == hyp[i]) {
        used[j] = true;
        to[i] = int(j);
        self(self, i + 1);
        to[i] = -1;
        used[j] = false;
      }
  };
  rec(rec, 0);
  return best_matches == 0 ? 0 : best_chunks;
}

Tokens random_tokens(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len, int vocab) {
  std::size_t len = min_len + rng() % (max_len - min_len + 1);
  Tokens out;
  for (std::size_t i = 0; i < len; ++i) out.push_back("w" + std::to_string(rng() % vocab));
  return out;
}

}  // namespace

TEST_CASE("bleu oracles") {
  std::vector<Tokens> same{T("the cat sat on the mat"), T("a dog ran far away")};
  CHECK(bleu_corpus(same, same) == doctest::Approx(100.0).epsilon(1e-12));

  std::vector<Tokens> h{T("a b c d e f")}, r{T("a b c d x f")};
  const double expected = 100.0 * std::pow((5.0 / 6) * (3.0 / 5) * (2.0 / 4) * (1.0 / 3), 0.25);
  CHECK(expected == doctest::Approx(53.73).epsilon(1e-4));
  CHECK(std::abs(bleu_corpus(h, r) - expected) < 1e-9);
  CHECK(std::abs(bleu_corpus(h, r) - 53.73) < 0.01);

  std::vector<Tokens> zh{T("a b c d e")}, zr{T("f g h i j")};
  CHECK(bleu_corpus(zh, zr) == 0.0);
  const double smoothed = 100.0 * std::pow((1.0 / 6) * (1.0 / 5) * (1.0 / 4) * (1.0 / 3), 0.25);
  CHECK(bleu_corpus(zh, zr, true) == doctest::Approx(smoothed).epsilon(1e-12));

  std::vector<Tokens> sh{T("a b c d")}, sr{T("a b c d e f g h")};
  CHECK(bleu_corpus(sh, sr) == doctest::Approx(100.0 * std::exp(1.0 - 8.0 / 4.0)).epsilon(1e-12));

  std::vector<Tokens> empty_hyp{Tokens{}}, one_ref{T("a b c d")};
  CHECK(bleu_corpus(empty_hyp, one_ref) == 0.0);

  std::vector<Tokens> one{T("a")};
  CHECK_THROWS_AS(bleu_corpus(one, same), Error);
  CHECK_THROWS_AS(bleu_corpus(std::span<const Tokens>(), std::span<const Tokens>()), Error);
}

TEST_CASE("bleu pools counts over the corpus") {
  std::vector<Tokens> h{T("a b c d e f"), T("a b c d")}, r{T("a b c d x f"), T("a c b d")};
  const double expected = 100.0 * std::pow((9.0 / 10) * (3.0 / 8) * (2.0 / 6) * (1.0 / 4), 0.25);
  CHECK(bleu_corpus(h, r) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("bleu clips repeated n-grams") {
  std::vector<Tokens> h{T("the the the the the the the")}, r{T("the cat is on the mat")};
  CHECK(bleu_corpus(h, r) == 0.0);
  const double p1 = 2.0 / 7, p2 = 1.0 / 7, p3 = 1.0 / 6, p4 = 1.0 / 5;
  CHECK(bleu_corpus(h, r, true) == doctest::Approx(100.0 * std::pow(p1 * p2 * p3 * p4, 0.25)).epsilon(1e-12));
}

TEST_CASE("bleu is invariant to joint permutation of the corpus") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tokens> h, r;
    for (int i = 0; i < 8; ++i) {
      h.push_back(random_tokens(rng, 1, 12, 6));
      r.push_back(random_tokens(rng, 1, 12, 6));
    }
    const double base = bleu_corpus(h, r, true);
    std::vector<std::size_t> order(h.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Tokens> hp, rp;
    for (auto i : order) {
      hp.push_back(h[i]);
      rp.push_back(r[i]);
    }
    CHECK(bleu_corpus(hp, rp, true) == doctest::Approx(base).epsilon(1e-12));
    CHECK(base >= 0.0);
    CHECK(base <= 100.0);
  }
}

TEST_CASE("rouge-l oracles") {
  CHECK(rouge_l(T("a b c"), T("a b c")) == 1.0);
  CHECK(lcs_length(T("a b c d"), T("a c b d")) == 3);
  CHECK(rouge_l(T("a b c d"), T("a c b d")) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(rouge_l(T("a b"), T("c d")) == 0.0);
  CHECK(rouge_l(Tokens{}, T("c d")) == 0.0);
  CHECK(rouge_l(T("a b c d e f"), T("a b")) == doctest::Approx(2 * (2.0 / 6) * 1.0 / (2.0 / 6 + 1.0)));
  CHECK_THROWS_AS(rouge_l(T("a"), Tokens{}), Error);
}

TEST_CASE("lcs grows by one when the same token is appended") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    auto a = random_tokens(rng, 0, 12, 5);
    auto b = random_tokens(rng, 0, 12, 5);
    auto base = lcs_length(a, b);
    a.push_back("w9");
    b.push_back("w9");
    CHECK(lcs_length(a, b) == base + 1);
  }
}

TEST_CASE("ter oracles") {
  CHECK(ter(T("a b c d"), T("a b c d")) == 0.0);
  CHECK(ter(T("a b c"), T("a b c d")) == 25.0);
  auto shift = ter_stats(T("d a b c"), T("a b c d"));
  CHECK(shift.shifts == 1);
  CHECK(shift.edits == 0);
  CHECK(shift.rate() == 25.0);
  CHECK(100.0 * double(edit_distance(T("d a b c"), T("a b c d"))) / 4 == 50.0);
  CHECK(levenshtein(T("d a b c"), T("a b c d")) == 2);
  CHECK(ter(Tokens{}, T("a b")) == 100.0);
  CHECK_THROWS_AS(ter(T("a"), Tokens{}), Error);
}

TEST_CASE("ter bounds and brute-force agreement on random pairs") {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto hyp = random_tokens(rng, 1, 12, 10);
    auto ref = random_tokens(rng, 1, 12, 10);
    auto st = ter_stats(hyp, ref);
    const double lev_rate = 100.0 * double(edit_distance(hyp, ref)) / double(ref.size());
    CHECK(levenshtein(hyp, ref) == edit_distance(hyp, ref));
    CHECK(st.rate() <= lev_rate + 1e-12);
    CHECK(st.rate() <= 100.0 * double(std::max(hyp.size(), ref.size())) / double(ref.size()) + 1e-12);
    if (st.shifts > 1) continue;
    ++checked;
    const std::size_t plain = edit_distance(hyp, ref);
    const std::size_t shifted = best_single_shift(hyp, ref);
    const std::size_t oracle = shifted == SIZE_MAX ? plain : std::min(plain, shifted + 1);
    INFO("hyp=" << detokenize(hyp) << " ref=" << detokenize(ref));
    CHECK(st.edits + st.shifts == oracle);
  }
  CHECK(checked > 700);
}

TEST_CASE("meteor oracles") {
  auto same = meteor_stats(T("a b c"), T("a b c"));
  CHECK(same.matches == 3);
  CHECK(same.chunks == 1);
  CHECK(std::abs(same.score() - (1.0 - 0.5 / 27.0)) < 1e-15);
  CHECK(std::abs(meteor(T("a b c"), T("a b c")) - 0.98148) < 1e-5);

  auto swapped = meteor_stats(T("a b"), T("b a"));
  CHECK(swapped.matches == 2);
  CHECK(swapped.chunks == 2);
  CHECK(swapped.score() == 0.5);

  CHECK(meteor(T("a b"), T("c d")) == 0.0);
  CHECK(meteor(Tokens{}, T("c d")) == 0.0);
  CHECK(meteor(T("a b c d"), T("c d a b")) == doctest::Approx(1.0 - 0.5 / 8.0).epsilon(1e-15));
  CHECK_THROWS_AS(meteor(T("a"), Tokens{}), Error);
}

TEST_CASE("meteor uses the chunk-minimal alignment") {
  // Leftmost matching pairs hyp "a" with the first ref "a" and splits into
  // three chunks; aligning with the second "a" gives one chunk.
  auto st = meteor_stats(T("a b c"), T("a x a b c"));
  CHECK(st.matches == 3);
  CHECK(st.chunks == 1);
  const double P = 1.0, R = 3.0 / 5;
  const double fmean = 10 * P * R / (R + 9 * P);
  CHECK(st.score() == doctest::Approx(fmean * (1 - 0.5 / 27.0)).epsilon(1e-12));
}

TEST_CASE("meteor chunk count matches brute-force alignment") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 400; ++trial) {
    auto hyp = random_tokens(rng, 1, 7, 3);
    auto ref = random_tokens(rng, 1, 7, 3);
    auto st = meteor_stats(hyp, ref);
    INFO("hyp=" << detokenize(hyp) << " ref=" << detokenize(ref));
    CHECK(st.chunks == min_chunks(hyp, ref));
  }
}

TEST_CASE("evaluate composes the per-sentence oracles") {
  std::vector<Tokens> h{T("a b c d e f"), T("a b c d")}, r{T("a b c d x f"), T("a c b d")};
  auto rep = evaluate(h, r);
  CHECK(rep.bleu4 == doctest::Approx(100.0 * std::pow(0.9 * 0.375 * (1.0 / 3) * 0.25, 0.25)).epsilon(1e-12));
  CHECK(rep.ter == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(rep.rouge_l == doctest::Approx((5.0 / 6 + 0.75) / 2).epsilon(1e-12));
  const double pen = 0.5 * std::pow(6.0 / 9.0, 3);
  CHECK(rep.meteor == doctest::Approx(100.0 * 0.9 * (1 - pen)).epsilon(1e-12));
  REQUIRE(rep.sentences.size() == 2);
  CHECK(rep.sentences[1].rouge_l == doctest::Approx(0.75));
  CHECK(rep.sentences[1].ter == 25.0);
  CHECK(rep.sentences[0].ter == doctest::Approx(100.0 / 6));

  auto parallel = evaluate(h, r, false, 4);
  CHECK(parallel.bleu4 == rep.bleu4);
  CHECK(parallel.meteor == rep.meteor);
  CHECK(parallel.ter == rep.ter);
  CHECK(parallel.rouge_l == rep.rouge_l);

  std::vector<Tokens> one{T("a")};
  CHECK_THROWS_AS(evaluate(one, r), Error);
}

TEST_CASE("report layout") {
  std::vector<Tokens> h{T("the cat sat on the mat .")};
  auto rep = evaluate(h, h);
  auto table = rep.table("seq2seq");
  auto header = table.substr(0, table.find('\n'));
  auto b = header.find("BLEU-4"), m = header.find("METEOR"), t = header.find("TER"), r = header.find("ROUGE-L");
  CHECK(b < m);
  CHECK(m < t);
  CHECK(t < r);
  CHECK(table.find("100.00") != std::string::npos);
  CHECK(table.find("1.000") != std::string::npos);
  CHECK(table.find("seq2seq") != std::string::npos);
  auto j = nlohmann::json::parse(rep.json());
  CHECK(j["bleu4"].get<double>() == doctest::Approx(100.0));
  CHECK(j["ter"].get<double>() == 0.0);
  CHECK(j["rouge_l"].get<double>() == 1.0);
  CHECK(j["sentences"].get<int>() == 1);
}

TEST_CASE("evaluate_files tokenizes and checks alignment") {
  testing::TempDir dir;
  testing::write_file(dir / "h.txt", "The cat sat.\nA dog ran!\n");
  testing::write_file(dir / "r.txt", "The cat sat.\nA dog ran!\n");
  testing::write_file(dir / "short.txt", "The cat sat.\n");
  auto rep = evaluate_files(dir / "h.txt", dir / "r.txt");
  CHECK(rep.bleu4 == doctest::Approx(100.0));
  CHECK(rep.ter == 0.0);
  CHECK(rep.rouge_l == 1.0);
  try {
    evaluate_files(dir / "h.txt", dir / "short.txt");
    FAIL("expected a mismatch error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("2 lines") != std::string::npos);
    CHECK(msg.find("has 1") != std::string::npos);
  }
  CHECK_THROWS_AS(evaluate_files(dir / "h.txt", dir / "none.txt"), Error);
}
