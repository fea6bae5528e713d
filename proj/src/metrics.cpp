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

#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"

namespace d2s::metrics {

namespace {

using Ids = std::vector<int>;

// Maps both sides onto shared integer ids.
std::pair<Ids, Ids> intern(std::span<const std::string> a, std::span<const std::string> b) {
  std::unordered_map<std::string_view, int> index;
  auto map = [&](std::span<const std::string> src) {
    Ids out;
    out.reserve(src.size());
    for (const auto& t : src) out.push_back(index.emplace(t, static_cast<int>(index.size())).first->second);
    return out;
  };
  Ids ia = map(a);
  Ids ib = map(b);
  return {std::move(ia), std::move(ib)};
}

std::size_t lev_ids(const Ids& a, const Ids& b, std::vector<std::size_t>& row) {
  row.resize(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({sub, up + 1, row[j - 1] + 1});
      diag = up;
    }
  }
  return row[b.size()];
}

void require_ref(std::span<const std::string> ref, const char* metric) {
  if (ref.empty()) fail(Errc::kInvalidArgument, std::string(metric) + ": empty reference");
}

}  // namespace

// --- BLEU ----------------------------------------------------------------------

double bleu_corpus(std::span<const Tokens> hyps, std::span<const Tokens> refs, bool smoothing) {
  if (hyps.size() != refs.size())
    fail(Errc::kInvalidArgument, "bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                                     std::to_string(refs.size()) + " references");
  if (hyps.empty()) fail(Errc::kInvalidArgument, "bleu: empty corpus");
  std::size_t matches[4] = {0, 0, 0, 0}, totals[4] = {0, 0, 0, 0};
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto& h = hyps[s];
    const auto& r = refs[s];
    hyp_len += h.size();
    ref_len += r.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<std::string_view>, std::size_t> ref_counts, hyp_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i)
        ++ref_counts[std::vector<std::string_view>(r.begin() + static_cast<long>(i), r.begin() + static_cast<long>(i + n))];
      for (std::size_t i = 0; i + n <= h.size(); ++i)
        ++hyp_counts[std::vector<std::string_view>(h.begin() + static_cast<long>(i), h.begin() + static_cast<long>(i + n))];
      for (const auto& [gram, c] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(c, it->second);
      }
      totals[n - 1] += h.size() >= n ? h.size() - n + 1 : 0;
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    double m = static_cast<double>(matches[n]), t = static_cast<double>(totals[n]);
    if (matches[n] == 0) {
      if (!smoothing) return 0.0;
      m += 1.0;
      t += 1.0;
    }
    log_sum += std::log(m / t);
  }
  const double c = static_cast<double>(hyp_len), r = static_cast<double>(ref_len);
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

// --- ROUGE-L -------------------------------------------------------------------

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(up, row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

double rouge_l(std::span<const std::string> hyp, std::span<const std::string> ref) {
  require_ref(ref, "rouge_l");
  if (hyp.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(hyp, ref));
  if (l == 0.0) return 0.0;
  const double p = l / static_cast<double>(hyp.size());
  const double r = l / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

// --- TER -----------------------------------------------------------------------

std::size_t levenshtein(std::span<const std::string> a, std::span<const std::string> b) {
  auto [ia, ib] = intern(a, b);
  std::vector<std::size_t> row;
  return lev_ids(ia, ib, row);
}

double TerStats::rate() const {
  return ref_length == 0 ? 0.0 : 100.0 * static_cast<double>(edits + shifts) / static_cast<double>(ref_length);
}

TerStats ter_stats(std::span<const std::string> hyp, std::span<const std::string> ref, std::size_t max_shift_size) {
  require_ref(ref, "ter");
  auto [cur, r] = intern(hyp, ref);
  std::set<Ids> ref_spans;
  for (std::size_t len = 1; len <= max_shift_size; ++len)
    for (std::size_t i = 0; i + len <= r.size(); ++i)
      ref_spans.emplace(r.begin() + static_cast<long>(i), r.begin() + static_cast<long>(i + len));

  std::vector<std::size_t> row;
  TerStats st;
  st.ref_length = r.size();
  std::size_t dist = lev_ids(cur, r, row);
  Ids shifted, best;
  while (dist > 0) {
    std::size_t best_gain = 0;
    const std::size_t n = cur.size();
    for (std::size_t len = 1; len <= std::min(max_shift_size, n); ++len) {
      for (std::size_t from = 0; from + len <= n; ++from) {
        Ids block(cur.begin() + static_cast<long>(from), cur.begin() + static_cast<long>(from + len));
        if (!ref_spans.count(block)) continue;
        Ids rest;
        rest.reserve(n - len);
        rest.insert(rest.end(), cur.begin(), cur.begin() + static_cast<long>(from));
        rest.insert(rest.end(), cur.begin() + static_cast<long>(from + len), cur.end());
        for (std::size_t to = 0; to <= rest.size(); ++to) {
          if (to == from) continue;
          shifted.assign(rest.begin(), rest.begin() + static_cast<long>(to));
          shifted.insert(shifted.end(), block.begin(), block.end());
          shifted.insert(shifted.end(), rest.begin() + static_cast<long>(to), rest.end());
          const std::size_t d = lev_ids(shifted, r, row);
          if (d < dist && dist - d > best_gain) {
            best_gain = dist - d;
            best = shifted;
          }
        }
      }
    }
    if (best_gain == 0) break;
    cur = best;
    dist -= best_gain;
    ++st.shifts;
  }
  st.edits = dist;
  return st;
}

double ter(std::span<const std::string> hyp, std::span<const std::string> ref) { return ter_stats(hyp, ref).rate(); }

// --- METEOR --------------------------------------------------------------------

double MeteorStats::score() const {
  if (matches == 0) return 0.0;
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(hyp_length);
  const double r = m / static_cast<double>(ref_length);
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / m;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

namespace {

class ChunkSearch {
 public:
  ChunkSearch(const Ids& hyp, const Ids& ref, std::size_t best_known)
      : hyp_(hyp), ref_(ref), used_(ref.size(), false), best_(best_known) {
    std::unordered_map<int, std::size_t> ch, cr;
    for (int w : hyp_) ++ch[w];
    for (int w : ref_) ++cr[w];
    for (auto& [w, c] : ch) skips_[w] = cr.count(w) ? (c > cr[w] ? c - cr[w] : 0) : c;
  }

  std::size_t run() {
    dfs(0, 0, -1, -1);
    return best_;
  }

 private:
  void dfs(std::size_t i, std::size_t chunks, long prev_h, long prev_r) {
    if (chunks >= best_) return;
    if (i == hyp_.size()) {
      best_ = chunks;
      return;
    }
    const int w = hyp_[i];
    auto try_match = [&](std::size_t j) {
      used_[j] = true;
      const bool extends = prev_h >= 0 && prev_h == static_cast<long>(i) - 1 && prev_r == static_cast<long>(j) - 1;
      dfs(i + 1, chunks + (extends ? 0 : 1), static_cast<long>(i), static_cast<long>(j));
      used_[j] = false;
    };
    // The chunk-extending choice first tightens the bound early.
    std::size_t preferred = ref_.size();
    if (prev_h == static_cast<long>(i) - 1 && prev_r >= 0) {
      auto j = static_cast<std::size_t>(prev_r + 1);
      if (j < ref_.size() && !used_[j] && ref_[j] == w) {
        preferred = j;
        try_match(j);
      }
    }
    for (std::size_t j = 0; j < ref_.size(); ++j)
      if (j != preferred && !used_[j] && ref_[j] == w) try_match(j);
    auto& skip = skips_[w];
    if (skip > 0) {
      --skip;
      dfs(i + 1, chunks, prev_h, prev_r);
      ++skip;
    }
  }

  const Ids& hyp_;
  const Ids& ref_;
  std::vector<bool> used_;
  std::unordered_map<int, std::size_t> skips_;
  std::size_t best_;
};

std::size_t count_chunks(const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::size_t chunks = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (k == 0 || pairs[k].first != pairs[k - 1].first + 1 || pairs[k].second != pairs[k - 1].second + 1) ++chunks;
  }
  return chunks;
}

}  // namespace

MeteorStats meteor_stats(std::span<const std::string> hyp, std::span<const std::string> ref,
                         std::size_t exhaustive_limit) {
  require_ref(ref, "meteor");
  auto [h, r] = intern(hyp, ref);
  MeteorStats st;
  st.hyp_length = h.size();
  st.ref_length = r.size();

  // Leftmost-greedy alignment; also the upper bound for the exhaustive search.
  std::vector<bool> used(r.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!used[j] && r[j] == h[i]) {
        used[j] = true;
        pairs.emplace_back(i, j);
        break;
      }
    }
  }
  st.matches = pairs.size();
  st.chunks = count_chunks(pairs);
  if (st.matches > 0 && st.matches <= exhaustive_limit && st.chunks > 1) {
    st.chunks = ChunkSearch(h, r, st.chunks).run();
  }
  return st;
}

double meteor(std::span<const std::string> hyp, std::span<const std::string> ref) {
  return meteor_stats(hyp, ref).score();
}

// --- Reports -------------------------------------------------------------------

std::string MetricReport::table(const std::string& label) const {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s\n", "Method", "BLEU-4", "METEOR", "TER", "ROUGE-L");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-16s %8.2f %8.2f %8.2f %8.3f\n", label.c_str(), bleu4, meteor, ter, rouge_l);
  out += buf;
  return out;
}

std::string MetricReport::json() const {
  nlohmann::ordered_json j;
  j["bleu4"] = bleu4;
  j["meteor"] = meteor;
  j["ter"] = ter;
  j["rouge_l"] = rouge_l;
  j["sentences"] = sentences.size();
  return j.dump();
}

MetricReport evaluate(std::span<const Tokens> hyps, std::span<const Tokens> refs, bool smoothing, unsigned threads) {
  if (hyps.size() != refs.size())
    fail(Errc::kInvalidArgument, "evaluate: " + std::to_string(hyps.size()) + " hypotheses vs " +
                                     std::to_string(refs.size()) + " references");
  if (hyps.empty()) fail(Errc::kInvalidArgument, "evaluate: empty corpus");
  const std::size_t n = hyps.size();
  std::vector<MeteorStats> met(n);
  std::vector<TerStats> te(n);
  MetricReport rep;
  rep.sentences.resize(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      met[i] = meteor_stats(hyps[i], refs[i]);
      te[i] = ter_stats(hyps[i], refs[i]);
      rep.sentences[i] = {met[i].score(), te[i].rate(), rouge_l(hyps[i], refs[i])};
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(n * t / threads, n * (t + 1) / threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  MeteorStats total_m;
  std::size_t ter_edits = 0, ter_ref = 0;
  double rouge_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total_m.matches += met[i].matches;
    total_m.chunks += met[i].chunks;
    total_m.hyp_length += met[i].hyp_length;
    total_m.ref_length += met[i].ref_length;
    ter_edits += te[i].edits + te[i].shifts;
    ter_ref += te[i].ref_length;
    rouge_sum += rep.sentences[i].rouge_l;
  }
  rep.bleu4 = bleu_corpus(hyps, refs, smoothing);
  rep.meteor = 100.0 * total_m.score();
  rep.ter = 100.0 * static_cast<double>(ter_edits) / static_cast<double>(ter_ref);
  rep.rouge_l = rouge_sum / static_cast<double>(n);
  return rep;
}

MetricReport evaluate_files(const std::filesystem::path& hyp_file, const std::filesystem::path& ref_file,
                            bool smoothing, unsigned threads) {
  auto hyp_lines = read_lines(hyp_file);
  auto ref_lines = read_lines(ref_file);
  if (hyp_lines.size() != ref_lines.size())
    fail(Errc::kInvalidArgument, "line count mismatch: " + hyp_file.string() + " has " +
                                     std::to_string(hyp_lines.size()) + " lines, " + ref_file.string() + " has " +
                                     std::to_string(ref_lines.size()));
  std::vector<Tokens> hyps, refs;
  for (std::size_t i = 0; i < hyp_lines.size(); ++i) {
    hyps.push_back(tokenize(hyp_lines[i]));
    refs.push_back(tokenize(ref_lines[i]));
    if (refs.back().empty())
      fail(Errc::kInvalidArgument, ref_file.string() + ":" + std::to_string(i + 1) + ": empty reference");
  }
  return evaluate(hyps, refs, smoothing, threads);
}

}  // namespace d2s::metrics
