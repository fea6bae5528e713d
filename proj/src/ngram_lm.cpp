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

#include "ngram_lm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "error.hpp"

namespace d2s::lm {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

void KNModel::index_tokens() {
  index_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second)
      fail(Errc::kParse, "duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

std::int32_t KNModel::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

std::uint64_t KNModel::adjusted(std::size_t k, const Counts& c, std::int32_t first) const {
  return (k == opt_.order || first == 0) ? c.count : c.continuation;
}

void KNModel::finalize() {
  contexts_.assign(opt_.order, {});
  for (std::size_t k = 1; k <= opt_.order; ++k) {
    for (const auto& [g, c] : tables_[k - 1]) {
      const std::uint64_t a = adjusted(k, c, g.front());
      if (a == 0) continue;
      Ngram ctx(g.begin(), g.end() - 1);
      auto& s = contexts_[k - 1][ctx];
      s.total += static_cast<double>(a);
      s.types += 1;
    }
  }
}

std::vector<std::int32_t> KNModel::encode(const Sentence& s, std::size_t* oov) const {
  std::vector<std::int32_t> seq;
  seq.reserve(s.size() + 2);
  if (opt_.boundaries) seq.push_back(0);
  const std::int32_t unk = opt_.unk ? id(kUnk) : -1;
  for (const auto& w : s) {
    std::int32_t i = id(w);
    if (i <= 0) {
      if (unk < 0) fail(Errc::kInvalidArgument, "word '" + w + "' is not in the language model vocabulary");
      i = unk;
      if (oov) ++*oov;
    }
    seq.push_back(i);
  }
  if (opt_.boundaries) seq.push_back(id(kEos));
  return seq;
}

KNModel KNModel::train(std::span<const Sentence> sentences, const KNOptions& opt) {
  if (opt.order < 1) fail(Errc::kInvalidArgument, "order must be ≥ 1");
  if (!(opt.discount > 0 && opt.discount < 1)) fail(Errc::kInvalidArgument, "discount must lie in (0, 1)");
  std::size_t n_tokens = 0;
  std::set<std::string> words;
  for (const auto& s : sentences)
    for (const auto& w : s) {
      ++n_tokens;
      if (w != kBos && w != kEos && w != kUnk) words.insert(w);
    }
  if (n_tokens == 0) fail(Errc::kEmptyCorpus, "empty corpus");

  KNModel m;
  m.opt_ = opt;
  m.tokens_.emplace_back(kBos);
  if (opt.boundaries) m.tokens_.emplace_back(kEos);
  if (opt.unk) m.tokens_.emplace_back(kUnk);
  m.tokens_.insert(m.tokens_.end(), words.begin(), words.end());
  m.index_tokens();

  m.tables_.assign(opt.order, {});
  for (const auto& s : sentences) {
    if (s.empty()) continue;
    auto seq = m.encode(s, nullptr);
    const std::size_t start = opt.boundaries ? 1 : 0;
    for (std::size_t i = start; i < seq.size(); ++i) {
      for (std::size_t k = 1; k <= std::min(opt.order, i + 1); ++k) {
        Ngram g(seq.begin() + static_cast<long>(i + 1 - k), seq.begin() + static_cast<long>(i + 1));
        m.tables_[k - 1][g].count += 1;
      }
    }
  }
  for (std::size_t k = 2; k <= opt.order; ++k) {
    for (const auto& [h, c] : m.tables_[k - 1]) {
      Ngram g(h.begin() + 1, h.end());
      m.tables_[k - 2][g].continuation += 1;
    }
  }
  m.finalize();
  return m;
}

double KNModel::prob_ids(std::span<const std::int32_t> context, std::int32_t word) const {
  const std::size_t v = tokens_.size() - 1;
  if (word < 1 || static_cast<std::size_t>(word) > v)
    fail(Errc::kInvalidArgument, "word id " + std::to_string(word) + " is not predictable");
  const std::size_t len = std::min(context.size(), opt_.order - 1);
  const double d = opt_.discount;
  double p = 1.0 / static_cast<double>(v);
  Ngram key;
  for (std::size_t j = 0; j <= len; ++j) {
    const std::size_t k = j + 1;
    if (j > 0 && context[context.size() - j] < 0) break;
    Ngram ctx(context.end() - static_cast<long>(j), context.end());
    auto cit = contexts_[k - 1].find(ctx);
    if (cit == contexts_[k - 1].end()) continue;
    key = ctx;
    key.push_back(word);
    double a = 0.0;
    auto git = tables_[k - 1].find(key);
    if (git != tables_[k - 1].end()) a = static_cast<double>(adjusted(k, git->second, key.front()));
    const auto& s = cit->second;
    p = std::max(a - d, 0.0) / s.total + d * static_cast<double>(s.types) / s.total * p;
  }
  return p;
}

double KNModel::prob(std::span<const std::string> context, std::string_view word) const {
  const std::int32_t unk = opt_.unk ? id(kUnk) : -1;
  std::vector<std::int32_t> ctx;
  ctx.reserve(context.size());
  for (const auto& c : context) {
    std::int32_t i = id(c);
    ctx.push_back(i >= 0 ? i : unk);
  }
  std::int32_t w = id(word);
  if (w <= 0) {
    if (unk < 0) fail(Errc::kInvalidArgument, "word '" + std::string(word) + "' is not in the language model vocabulary");
    w = unk;
  }
  return prob_ids(ctx, w);
}

PerplexityResult KNModel::perplexity(std::span<const Sentence> sentences) const {
  PerplexityResult r;
  for (const auto& s : sentences) {
    if (s.empty() && !opt_.boundaries) continue;
    auto seq = encode(s, &r.oov);
    const std::size_t start = opt_.boundaries ? 1 : 0;
    for (std::size_t i = start; i < seq.size(); ++i) {
      const std::size_t from = i >= opt_.order - 1 ? i - (opt_.order - 1) : 0;
      const double p = prob_ids(std::span(seq).subspan(from, i - from), seq[i]);
      if (!(p > 0)) fail(Errc::kNonFinite, "zero probability for '" + tokens_[static_cast<std::size_t>(seq[i])] + "'");
      r.log_prob += std::log(p);
      ++r.events;
    }
  }
  if (r.events == 0) fail(Errc::kInvalidArgument, "empty text");
  r.perplexity = std::exp(-r.log_prob / static_cast<double>(r.events));
  return r;
}

std::string KNModel::serialize() const {
  std::ostringstream out;
  out << "\\kn-model\n";
  out << "order=" << opt_.order << "\n";
  out << "discount=" << format_double(opt_.discount) << "\n";
  out << "boundaries=" << (opt_.boundaries ? 1 : 0) << "\n";
  out << "unk=" << (opt_.unk ? 1 : 0) << "\n";
  out << "vocab=" << tokens_.size() - 1 << "\n";
  for (std::size_t i = 1; i < tokens_.size(); ++i) out << tokens_[i] << "\n";
  for (std::size_t k = 1; k <= opt_.order; ++k) {
    out << "\\order " << k << "\n";
    std::vector<std::pair<std::vector<std::string>, const Counts*>> rows;
    rows.reserve(tables_[k - 1].size());
    for (const auto& [g, c] : tables_[k - 1]) {
      std::vector<std::string> words;
      for (auto i : g) words.push_back(tokens_[static_cast<std::size_t>(i)]);
      rows.emplace_back(std::move(words), &c);
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [words, c] : rows) {
      for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i];
      out << "\t" << c->count << "\t" << c->continuation << "\n";
    }
  }
  out << "\\end\n";
  return out.str();
}

KNModel KNModel::parse(std::string_view text, const std::string& origin) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  std::size_t ln = 0;
  auto bad = [&](const std::string& msg) -> void {
    fail(Errc::kParse, origin + ":" + std::to_string(ln + 1) + ": " + msg);
  };
  auto next = [&]() -> std::string_view {
    if (ln >= lines.size()) fail(Errc::kParse, origin + ": unexpected end of model");
    return lines[ln++];
  };
  auto field = [&](std::string_view key) -> std::string_view {
    std::string_view line = next();
    if (line.substr(0, key.size()) != key || line.size() <= key.size() || line[key.size()] != '=') {
      --ln;
      bad("expected " + std::string(key) + "=");
    }
    return line.substr(key.size() + 1);
  };

  if (next() != "\\kn-model") fail(Errc::kParse, origin + ": not a Kneser-Ney model file");
  KNModel m;
  if (!parse_int(field("order"), m.opt_.order) || m.opt_.order < 1) bad("bad order");
  auto dtext = field("discount");
  auto dres = std::from_chars(dtext.data(), dtext.data() + dtext.size(), m.opt_.discount);
  if (dres.ec != std::errc() || dres.ptr != dtext.data() + dtext.size() || !(m.opt_.discount > 0 && m.opt_.discount < 1))
    bad("bad discount");
  int flag = 0;
  if (!parse_int(field("boundaries"), flag) || flag < 0 || flag > 1) bad("bad boundaries flag");
  m.opt_.boundaries = flag == 1;
  if (!parse_int(field("unk"), flag) || flag < 0 || flag > 1) bad("bad unk flag");
  m.opt_.unk = flag == 1;
  std::size_t v = 0;
  if (!parse_int(field("vocab"), v) || v < 1) bad("bad vocabulary size");
  m.tokens_.emplace_back(kBos);
  for (std::size_t i = 0; i < v; ++i) m.tokens_.emplace_back(next());
  try {
    m.index_tokens();
  } catch (const Error& e) {
    bad(e.what());
  }

  m.tables_.assign(m.opt_.order, {});
  for (std::size_t k = 1; k <= m.opt_.order; ++k) {
    if (next() != "\\order " + std::to_string(k)) {
      --ln;
      bad("expected \\order " + std::to_string(k));
    }
    while (ln < lines.size() && !lines[ln].starts_with("\\")) {
      auto line = next();
      auto cols = split(line, '\t');
      if (cols.size() != 3) bad("expected k-gram<TAB>count<TAB>continuation");
      Ngram g;
      for (auto w : split(cols[0], ' ')) {
        auto i = m.id(w);
        if (i < 0) bad("unknown token '" + std::string(w) + "'");
        g.push_back(i);
      }
      if (g.size() != k) bad("k-gram has " + std::to_string(g.size()) + " tokens, expected " + std::to_string(k));
      Counts c;
      if (!parse_int(cols[1], c.count) || !parse_int(cols[2], c.continuation)) bad("bad count");
      if (!m.tables_[k - 1].emplace(std::move(g), c).second) bad("duplicate k-gram");
    }
  }
  if (next() != "\\end") {
    --ln;
    bad("expected \\end");
  }
  if (ln != lines.size()) bad("trailing content after \\end");
  m.finalize();
  return m;
}

void KNModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::kIo, "cannot open " + path.string() + " for writing");
  const std::string text = serialize();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(Errc::kIo, "write failed: " + path.string());
}

KNModel KNModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kIo, "cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text, path.string());
}

}  // namespace d2s::lm
