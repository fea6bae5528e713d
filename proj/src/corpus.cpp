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

#include "corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace d2s {

extern const char* const kDefaultStopwordText;

namespace {

constexpr std::string_view kPunctuation = ".,!?;:'\"()-";

bool is_punct_char(char c) { return kPunctuation.find(c) != std::string_view::npos; }

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

const char* const kReservedTokens[Vocab::kNumReserved] = {"<pad>", "<unk>", "<s>", "</s>", "<d>",
                                                         "<seq_end>"};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_punct_char(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      auto u = static_cast<unsigned char>(c);
      cur.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
    }
  }
  flush();
  return out;
}

bool is_punctuation_token(std::string_view token) {
  return !token.empty() && std::all_of(token.begin(), token.end(), is_punct_char);
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  bool glue_next = true;
  for (const auto& tok : tokens) {
    bool attach_left = tok == "." || tok == "," || tok == "!" || tok == "?" || tok == ";" ||
                       tok == ":" || tok == ")" || tok == "'" || tok == "-";
    if (!out.empty() && !glue_next && !attach_left) out.push_back(' ');
    out += tok;
    glue_next = tok == "(" || tok == "'" || tok == "-";
  }
  return out;
}

// --- Vocab -----------------------------------------------------------------

Vocab::Vocab() {
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    tokens_.emplace_back(kReservedTokens[i]);
    counts_.push_back(0);
    index_.emplace(tokens_.back(), static_cast<TokenId>(i));
  }
}

TokenId Vocab::add(const std::string& token, std::uint64_t count) {
  if (index_.count(token)) fail(Errc::kInvalidArgument, "duplicate vocabulary token '" + token + "'");
  auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  counts_.push_back(count);
  index_.emplace(token, id);
  return id;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    fail(Errc::kInvalidArgument, "token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::kIo, "cannot open " + path.string() + " for writing");
  for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << counts_[i] << '\n';
  if (!out) fail(Errc::kIo, "write failed: " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  Vocab v;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      fail(Errc::kParse, path.string() + ":" + std::to_string(lineno) + ": expected token<TAB>count");
    std::uint64_t count = 0;
    try {
      count = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      fail(Errc::kParse, path.string() + ":" + std::to_string(lineno) + ": bad count");
    }
    v.add(line.substr(0, tab), count);
  }
  return v;
}

Vocab build_vocab(std::span<const Example> examples, std::uint64_t min_count, std::size_t max_size) {
  if (examples.empty()) fail(Errc::kEmptyCorpus, "empty corpus");
  if (min_count < 1) fail(Errc::kInvalidArgument, "min_count must be >= 1");
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& ex : examples) {
    for (const auto& d : ex.descriptions)
      for (auto& t : tokenize(d)) ++counts[t];
    for (auto& t : tokenize(ex.story)) ++counts[t];
  }
  Vocab probe;
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [tok, c] : counts)
    if (c >= min_count && !probe.contains(tok)) kept.emplace_back(tok, c);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (kept.size() > max_size) kept.resize(max_size);
  Vocab v;
  for (auto& [tok, c] : kept) v.add(tok, c);
  return v;
}

// --- Encoding and batching ---------------------------------------------------

std::vector<TokenId> encode_source(std::span<const std::string> descriptions, const Vocab& vocab) {
  if (descriptions.empty()) fail(Errc::kInvalidArgument, "no descriptions to encode");
  std::vector<TokenId> ids;
  for (std::size_t i = 0; i < descriptions.size(); ++i) {
    if (i > 0) ids.push_back(Vocab::kDescDelim);
    for (const auto& t : tokenize(descriptions[i])) ids.push_back(vocab.id(t));
  }
  ids.push_back(Vocab::kSeqEnd);
  return ids;
}

EncodedPair encode_example(const Example& ex, const Vocab& vocab) {
  if (ex.descriptions.empty()) fail(Errc::kInvalidArgument, "example '" + ex.id + "' has no descriptions");
  EncodedPair p;
  p.source_ids = encode_source(ex.descriptions, vocab);
  auto story = tokenize(ex.story);
  if (story.empty()) fail(Errc::kEmptyTarget, "empty target in example '" + ex.id + "'");
  p.target_ids.push_back(Vocab::kBos);
  for (const auto& t : story) p.target_ids.push_back(vocab.id(t));
  p.target_ids.push_back(Vocab::kEos);
  return p;
}

namespace {

IdMatrix pad_rows(std::span<const std::vector<TokenId>* const> rows) {
  IdMatrix m;
  m.rows = rows.size();
  for (auto* r : rows) m.cols = std::max(m.cols, r->size());
  m.ids.assign(m.rows * m.cols, Vocab::kPad);
  m.mask.assign(m.rows * m.cols, 0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto& r = *rows[i];
    for (std::size_t j = 0; j < r.size(); ++j) {
      m.ids[i * m.cols + j] = r[j];
      m.mask[i * m.cols + j] = r[j] != Vocab::kPad ? 1 : 0;
    }
  }
  return m;
}

}  // namespace

Batch make_batch(std::span<const EncodedPair> pairs, std::span<const std::size_t> order) {
  std::vector<const std::vector<TokenId>*> src, tgt;
  Batch b;
  for (auto idx : order) {
    src.push_back(&pairs[idx].source_ids);
    tgt.push_back(&pairs[idx].target_ids);
    b.indices.push_back(idx);
  }
  b.source = pad_rows(src);
  b.target = pad_rows(tgt);
  return b;
}

Batch make_batch(std::span<const EncodedPair> pairs) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  return make_batch(pairs, order);
}

std::vector<std::size_t> shuffle_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_stream(seed, "shuffle");
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<Batch> make_batches(std::span<const EncodedPair> pairs, std::size_t batch_size,
                                std::uint64_t seed) {
  if (batch_size < 1) fail(Errc::kInvalidArgument, "batch_size must be >= 1");
  std::vector<Batch> out;
  auto order = shuffle_order(pairs.size(), seed);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    auto end = std::min(order.size(), start + batch_size);
    out.push_back(make_batch(pairs, std::span<const std::size_t>(order).subspan(start, end - start)));
  }
  return out;
}

// --- Statistics --------------------------------------------------------------

std::size_t count_sentences(std::string_view text) {
  std::size_t n = 0;
  bool content = false;
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?') {
      if (content) ++n;
      content = false;
    } else if (!is_space(c) && !is_punct_char(c)) {
      content = true;
    }
  }
  return n + (content ? 1 : 0);
}

CorpusStats compute_stats(std::span<const Example> examples, const StopwordSet& stopwords) {
  if (examples.empty()) fail(Errc::kEmptyCorpus, "empty corpus");
  CorpusStats s;
  s.doc_count = examples.size();
  double sent_cap = 0, sent_story = 0, words_cap = 0, words_story = 0, nonoverlap = 0;
  std::uint64_t nonstop_story = 0, unseen_nonstop = 0;
  for (const auto& ex : examples) {
    std::set<std::string, std::less<>> caption_types;
    for (const auto& d : ex.descriptions) {
      sent_cap += static_cast<double>(count_sentences(d));
      for (auto& t : tokenize(d)) {
        if (is_punctuation_token(t)) continue;
        words_cap += 1;
        caption_types.insert(std::move(t));
      }
    }
    sent_story += static_cast<double>(count_sentences(ex.story));
    std::set<std::string, std::less<>> novel_types;
    for (auto& t : tokenize(ex.story)) {
      if (is_punctuation_token(t)) continue;
      words_story += 1;
      if (stopwords.count(t)) continue;
      ++nonstop_story;
      if (!caption_types.count(t)) {
        ++unseen_nonstop;
        novel_types.insert(std::move(t));
      }
    }
    nonoverlap += static_cast<double>(novel_types.size());
  }
  auto n = static_cast<double>(s.doc_count);
  s.avg_sentences_caption = sent_cap / n;
  s.avg_sentences_story = sent_story / n;
  s.avg_words_caption = words_cap / n;
  s.avg_words_story = words_story / n;
  s.avg_nonoverlap_words = nonoverlap / n;
  s.unseen_nonstop_fraction =
      nonstop_story == 0 ? 0.0 : static_cast<double>(unseen_nonstop) / static_cast<double>(nonstop_story);
  return s;
}

namespace {

StopwordSet parse_stopwords(std::istream& in) {
  StopwordSet out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && is_space(line.back())) line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    out.insert(line.substr(first));
  }
  return out;
}

}  // namespace

const StopwordSet& default_stopwords() {
  static const StopwordSet words = [] {
    std::istringstream in(kDefaultStopwordText);
    return parse_stopwords(in);
  }();
  return words;
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::kIo, "cannot open " + path.string());
  return parse_stopwords(in);
}

// --- Files -------------------------------------------------------------------

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kIo, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

Example parse_example(std::string_view json_line) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(json_line);
  } catch (const json::parse_error& e) {
    fail(Errc::kParse, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(Errc::kParse, "expected a JSON object");
  Example ex;
  try {
    ex.id = j.at("id").get<std::string>();
    ex.descriptions = j.at("descriptions").get<std::vector<std::string>>();
    ex.story = j.at("story").get<std::string>();
  } catch (const json::exception& e) {
    fail(Errc::kParse, std::string("bad example fields: ") + e.what());
  }
  if (ex.descriptions.empty()) fail(Errc::kParse, "example '" + ex.id + "' has no descriptions");
  return ex;
}

std::vector<Example> load_corpus(const std::filesystem::path& path) {
  std::vector<Example> out;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(parse_example(line));
    } catch (const Error& e) {
      fail(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace d2s
