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

#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "error.hpp"

namespace d2s {

using nk::Tensor;

AdamState AdamState::zeros_like(const ModelParams<float>& params, double lr) {
  AdamState s;
  s.lr = lr;
  params.for_each([&](const std::string&, const Tensor<float>& t) {
    s.m.emplace_back(t.shape());
    s.v.emplace_back(t.shape());
  });
  return s;
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail(Errc::kTruncated, "checkpoint truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

struct Entry {
  std::string name;
  const Tensor<float>* tensor;
};

std::vector<Entry> directory_of(const Checkpoint& c) {
  std::vector<Entry> out;
  c.params.for_each([&](const std::string& name, const Tensor<float>& t) { out.push_back({name, &t}); });
  if (c.adam) {
    std::vector<std::string> names;
    c.params.for_each([&](const std::string& name, const Tensor<float>&) { names.push_back(name); });
    if (c.adam->m.size() != names.size() || c.adam->v.size() != names.size())
      fail(Errc::kInvalidArgument, "optimizer state does not match the parameters");
    for (std::size_t i = 0; i < names.size(); ++i) out.push_back({"adam.m/" + names[i], &c.adam->m[i]});
    for (std::size_t i = 0; i < names.size(); ++i) out.push_back({"adam.v/" + names[i], &c.adam->v[i]});
  }
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  Writer w;
  for (char ch : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u32(kCheckpointVersion);
  const Hyperparams& hp = c.hp;
  for (std::uint64_t v : {std::uint64_t(hp.vocab_size), std::uint64_t(hp.embed_dim), std::uint64_t(hp.hidden_dim),
                          std::uint64_t(hp.encoder_layers), std::uint64_t(hp.decoder_layers),
                          std::uint64_t(hp.max_decode_len), std::uint64_t(hp.beam_width)})
    w.u64(v);
  w.f64(hp.dropout);
  w.f64(hp.length_alpha);
  w.u64(c.iteration);
  w.f64(c.val_bleu4);

  w.u64(c.vocab.size());
  for (std::size_t i = 0; i < c.vocab.size(); ++i) {
    w.str(c.vocab.tokens()[i]);
    w.u64(c.vocab.count(static_cast<TokenId>(i)));
  }

  w.u8(c.adam ? 1 : 0);
  if (c.adam) {
    w.u64(c.adam->step);
    w.f64(c.adam->lr);
    w.f64(c.adam->beta1);
    w.f64(c.adam->beta2);
    w.f64(c.adam->eps);
  }

  auto dir = directory_of(c);
  w.u32(static_cast<std::uint32_t>(dir.size()));
  std::uint64_t offset = 0;
  for (const auto& e : dir) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.tensor->rank()));
    for (auto d : e.tensor->shape()) w.u64(d);
    w.u64(offset);
    offset += e.tensor->size();
  }
  w.u64(offset);
  for (const auto& e : dir)
    for (float v : e.tensor->values()) w.f32(v);

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::kIo, "cannot open " + tmp.string() + " for writing");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) fail(Errc::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::kIo, "cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kIo, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 4 || std::memcmp(data.data(), kCheckpointMagic, 4) != 0)
    fail(Errc::kNotCheckpoint, path.string() + ": not a checkpoint");
  Reader r(std::move(data));
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    fail(Errc::kUnsupportedVersion, path.string() + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint c;
  Hyperparams& hp = c.hp;
  hp.vocab_size = r.u64();
  hp.embed_dim = r.u64();
  hp.hidden_dim = r.u64();
  hp.encoder_layers = r.u64();
  hp.decoder_layers = r.u64();
  hp.max_decode_len = r.u64();
  hp.beam_width = r.u64();
  hp.dropout = r.f64();
  hp.length_alpha = r.f64();
  c.iteration = r.u64();
  c.val_bleu4 = r.f64();
  try {
    hp.validate();
  } catch (const Error& e) {
    fail(Errc::kParse, path.string() + ": bad hyperparameters: " + e.what());
  }

  const std::uint64_t vocab_n = r.u64();
  if (vocab_n != hp.vocab_size || vocab_n < Vocab::kNumReserved)
    fail(Errc::kParse, path.string() + ": vocabulary size does not match the header");
  for (std::uint64_t i = 0; i < vocab_n; ++i) {
    std::string tok = r.str();
    std::uint64_t count = r.u64();
    if (i >= Vocab::kNumReserved) c.vocab.add(tok, count);
  }

  if (r.u8()) {
    AdamState a;
    a.step = r.u64();
    a.lr = r.f64();
    a.beta1 = r.f64();
    a.beta2 = r.f64();
    a.eps = r.f64();
    c.adam = std::move(a);
  }

  struct DirEntry {
    std::vector<std::size_t> shape;
    std::uint64_t offset;
  };
  std::map<std::string, DirEntry> dir;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    DirEntry e;
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 2) fail(Errc::kParse, path.string() + ": tensor '" + name + "' has rank " + std::to_string(rank));
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(r.u64());
    e.offset = r.u64();
    dir.emplace(std::move(name), std::move(e));
  }
  const std::uint64_t payload = r.u64();
  if (r.remaining() / 4 < payload) fail(Errc::kTruncated, path.string() + ": checkpoint truncated");
  std::vector<float> floats(payload);
  for (auto& f : floats) f = r.f32();

  auto fill = [&](const std::string& name, Tensor<float>& t) {
    auto it = dir.find(name);
    if (it == dir.end()) fail(Errc::kParse, path.string() + ": missing tensor '" + name + "'");
    const auto& e = it->second;
    Tensor<float> loaded(e.shape);
    if (loaded.shape() != t.shape())
      fail(Errc::kParse, path.string() + ": tensor '" + name + "' has shape " + loaded.shape_string() +
                             ", expected " + t.shape_string());
    if (e.offset > payload || payload - e.offset < loaded.size())
      fail(Errc::kParse, path.string() + ": tensor '" + name + "' lies outside the payload");
    std::copy_n(floats.begin() + static_cast<long>(e.offset), loaded.size(), loaded.data());
    t = std::move(loaded);
  };

  c.params = ModelParams<float>::zeros(hp);
  c.params.for_each(fill);
  if (c.adam) {
    auto fresh = AdamState::zeros_like(c.params);
    c.adam->m = std::move(fresh.m);
    c.adam->v = std::move(fresh.v);
    std::size_t i = 0;
    c.params.for_each([&](const std::string& name, const Tensor<float>&) {
      fill("adam.m/" + name, c.adam->m[i]);
      fill("adam.v/" + name, c.adam->v[i]);
      ++i;
    });
  }
  return c;
}

}  // namespace d2s
