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

#include "model.hpp"

#include <cmath>

#include "rng.hpp"

namespace d2s {

using nk::NodeId;
using nk::Tape;
using nk::Tensor;

void Hyperparams::validate() const {
  if (vocab_size < Vocab::kNumReserved)
    fail(Errc::kInvalidArgument, "vocab_size must cover the reserved tokens");
  if (embed_dim < 1 || hidden_dim < 1) fail(Errc::kInvalidArgument, "dimensions must be >= 1");
  if (encoder_layers != 1 || decoder_layers != 2)
    fail(Errc::kInvalidArgument, "the network has one encoder layer and two decoder layers");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(Errc::kInvalidArgument, "dropout must be in [0,1)");
  if (max_decode_len < 1) fail(Errc::kInvalidArgument, "max_decode_len must be >= 1");
  if (beam_width < 1) fail(Errc::kInvalidArgument, "beam width must be >= 1");
}

template <typename T>
GruParams<T> GruParams<T>::zeros(std::size_t in_dim, std::size_t hidden) {
  GruParams g;
  g.w_z = g.w_r = g.w_h = Tensor<T>(in_dim, hidden);
  g.u_z = g.u_r = g.u_h = Tensor<T>(hidden, hidden);
  g.b_z = g.b_r = g.b_h = Tensor<T>::vector(hidden);
  return g;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const Hyperparams& hp) {
  hp.validate();
  const std::size_t V = hp.vocab_size, E = hp.embed_dim, H = hp.hidden_dim, A = hp.attention_dim();
  ModelParams p;
  p.src_embed = Tensor<T>(V, E);
  p.tgt_embed = Tensor<T>(V, E);
  p.enc_fwd = GruParams<T>::zeros(E, H);
  p.enc_bwd = GruParams<T>::zeros(E, H);
  p.dec1 = GruParams<T>::zeros(E + 2 * H, H);
  p.dec2 = GruParams<T>::zeros(H, H);
  p.w_a = Tensor<T>(H, A);
  p.u_a = Tensor<T>(2 * H, A);
  p.v_a = Tensor<T>(A, 1);
  p.w_init = Tensor<T>(H, H);
  p.b_init = Tensor<T>::vector(H);
  p.w_o = Tensor<T>(3 * H, V);
  p.b_o = Tensor<T>::vector(V);
  return p;
}

namespace {

template <typename P, typename F>
void visit(P& p, F&& fn) {
  fn("src_embed", p.src_embed);
  fn("tgt_embed", p.tgt_embed);
  auto gru = [&](const std::string& prefix, auto& g) {
    fn(prefix + ".w_z", g.w_z);
    fn(prefix + ".w_r", g.w_r);
    fn(prefix + ".w_h", g.w_h);
    fn(prefix + ".u_z", g.u_z);
    fn(prefix + ".u_r", g.u_r);
    fn(prefix + ".u_h", g.u_h);
    fn(prefix + ".b_z", g.b_z);
    fn(prefix + ".b_r", g.b_r);
    fn(prefix + ".b_h", g.b_h);
  };
  gru("enc_fwd", p.enc_fwd);
  gru("enc_bwd", p.enc_bwd);
  gru("dec1", p.dec1);
  gru("dec2", p.dec2);
  fn("attn.w_a", p.w_a);
  fn("attn.u_a", p.u_a);
  fn("attn.v_a", p.v_a);
  fn("init.w", p.w_init);
  fn("init.b", p.b_init);
  fn("out.w", p.w_o);
  fn("out.b", p.b_o);
}

}  // namespace

template <typename T>
void ModelParams<T>::for_each(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
  visit(*this, fn);
}

template <typename T>
void ModelParams<T>::for_each(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const {
  visit(*this, fn);
}

template <typename T>
std::vector<Tensor<T>*> ModelParams<T>::tensors() {
  std::vector<Tensor<T>*> out;
  for_each([&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
  return n;
}

ModelParams<float> init_params(const Hyperparams& hp, std::uint64_t seed) {
  auto p = ModelParams<float>::zeros(hp);
  p.for_each([&](const std::string& name, Tensor<float>& t) {
    if (t.rank() == 1) return;  // biases stay zero
    // A column vector is treated as a square A x A map for its fan.
    const double fan = t.cols() == 1 ? 2.0 * static_cast<double>(t.rows())
                                     : static_cast<double>(t.rows() + t.cols());
    const float bound = static_cast<float>(std::sqrt(6.0 / fan));
    auto rng = make_stream(seed, "init/" + name);
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (auto& v : t.values()) v = dist(rng);
  });
  return p;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& src) {
  ModelParams<To> out;
  std::vector<const Tensor<From>*> from;
  src.for_each([&](const std::string&, const Tensor<From>& t) { from.push_back(&t); });
  std::size_t i = 0;
  out.for_each([&](const std::string&, Tensor<To>& t) { t = nk::cast<To>(*from[i++]); });
  return out;
}

// --- Graph construction ------------------------------------------------------

std::vector<NodeId> ParamNodes::all() const {
  std::vector<NodeId> out{src_embed, tgt_embed};
  for (const GruNodes* g : {&enc_fwd, &enc_bwd, &dec1, &dec2})
    out.insert(out.end(), {g->w_z, g->w_r, g->w_h, g->u_z, g->u_r, g->u_h, g->b_z, g->b_r, g->b_h});
  out.insert(out.end(), {w_a, u_a, v_a, w_init, b_init, w_o, b_o});
  return out;
}

namespace {

template <typename T>
GruNodes bind_gru(Tape<T>& tape, const GruParams<T>& g) {
  return {tape.reference(g.w_z), tape.reference(g.w_r), tape.reference(g.w_h),
          tape.reference(g.u_z), tape.reference(g.u_r), tape.reference(g.u_h),
          tape.reference(g.b_z), tape.reference(g.b_r), tape.reference(g.b_h)};
}

template <typename T>
NodeId affine(Tape<T>& tape, NodeId x, NodeId w, NodeId h, NodeId u, NodeId b) {
  return tape.add_bias(tape.add(tape.matmul(x, w), tape.matmul(h, u)), b);
}

}  // namespace

template <typename T>
ParamNodes bind_params(Tape<T>& tape, const ModelParams<T>& p) {
  ParamNodes n;
  n.src_embed = tape.reference(p.src_embed);
  n.tgt_embed = tape.reference(p.tgt_embed);
  n.enc_fwd = bind_gru(tape, p.enc_fwd);
  n.enc_bwd = bind_gru(tape, p.enc_bwd);
  n.dec1 = bind_gru(tape, p.dec1);
  n.dec2 = bind_gru(tape, p.dec2);
  n.w_a = tape.reference(p.w_a);
  n.u_a = tape.reference(p.u_a);
  n.v_a = tape.reference(p.v_a);
  n.w_init = tape.reference(p.w_init);
  n.b_init = tape.reference(p.b_init);
  n.w_o = tape.reference(p.w_o);
  n.b_o = tape.reference(p.b_o);
  return n;
}

template <typename T>
NodeId gru_cell(Tape<T>& tape, NodeId x, NodeId h_prev, const GruNodes& p) {
  NodeId z = tape.sigmoid(affine(tape, x, p.w_z, h_prev, p.u_z, p.b_z));
  NodeId r = tape.sigmoid(affine(tape, x, p.w_r, h_prev, p.u_r, p.b_r));
  NodeId cand = tape.tanh(affine(tape, x, p.w_h, tape.mul(r, h_prev), p.u_h, p.b_h));
  return tape.add(tape.mul(z, h_prev), tape.mul(tape.one_minus(z), cand));
}

template <typename T>
Tensor<T> gru_cell(const Tensor<T>& x, const Tensor<T>& h_prev, const GruParams<T>& p) {
  Tape<T> tape;
  auto as_row = [](const Tensor<T>& v) { return Tensor<T>::from(1, v.size(), std::vector<T>(v.values().begin(), v.values().end())); };
  NodeId xn = tape.constant(as_row(x));
  NodeId hn = tape.constant(as_row(h_prev));
  NodeId out = gru_cell(tape, xn, hn, bind_gru(tape, p));
  const auto& v = tape.value(out);
  return Tensor<T>::from_vector(std::vector<T>(v.values().begin(), v.values().end()));
}

template <typename T>
Encoded<T> encode(Tape<T>& tape, const ParamNodes& p, const IdMatrix& source, const Hyperparams& hp,
                  bool training, std::mt19937_64* rng) {
  const std::size_t B = source.rows, S = source.cols, H = hp.hidden_dim;
  if (B == 0 || S == 0) fail(Errc::kInvalidArgument, "encode: empty source");
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t len = 0;
    while (len < S && source.valid(b, len)) ++len;
    if (len == 0) fail(Errc::kInvalidArgument, "encode: empty source");
    if (source.at(b, len - 1) != Vocab::kSeqEnd)
      fail(Errc::kInvalidArgument, "encode: source must end with the sequence-end token");
  }
  if (training && hp.dropout > 0.0 && rng == nullptr)
    fail(Errc::kInvalidArgument, "encode: training with dropout needs a random stream");
  std::mt19937_64 unused;
  std::mt19937_64& gen = rng ? *rng : unused;

  Encoded<T> enc;
  enc.batch = B;
  enc.steps = S;
  enc.mask = Tensor<T>(B, S);
  std::vector<NodeId> inputs(S);
  std::vector<std::vector<std::uint8_t>> keep(S, std::vector<std::uint8_t>(B));
  for (std::size_t t = 0; t < S; ++t) {
    std::vector<TokenId> ids(B);
    for (std::size_t b = 0; b < B; ++b) {
      ids[b] = source.at(b, t);
      keep[t][b] = source.valid(b, t) ? 1 : 0;
      enc.mask(b, t) = T(keep[t][b]);
    }
    inputs[t] = tape.dropout(tape.embed_lookup(p.src_embed, ids), hp.dropout, training, gen);
  }

  const NodeId zero = tape.constant(Tensor<T>(B, H));
  std::vector<NodeId> fwd(S), bwd(S);
  NodeId h = zero;
  for (std::size_t t = 0; t < S; ++t) {
    h = tape.mask_blend(gru_cell(tape, inputs[t], h, p.enc_fwd), h, keep[t]);
    fwd[t] = h;
  }
  h = zero;
  for (std::size_t t = S; t-- > 0;) {
    h = tape.mask_blend(gru_cell(tape, inputs[t], h, p.enc_bwd), h, keep[t]);
    bwd[t] = h;
  }
  std::vector<NodeId> rows(S);
  for (std::size_t t = 0; t < S; ++t) {
    const NodeId parts[2] = {fwd[t], bwd[t]};
    rows[t] = tape.concat_cols(parts);
  }
  enc.annotations = tape.stack_rows(rows);
  enc.keys = tape.matmul(enc.annotations, p.u_a);
  enc.init_state = tape.tanh(tape.add_bias(tape.matmul(bwd[0], p.w_init), p.b_init));
  return enc;
}

template <typename T>
AttentionNodes attend(Tape<T>& tape, const ParamNodes& p, NodeId dec_state, const Encoded<T>& enc) {
  NodeId query = tape.matmul(dec_state, p.w_a);
  NodeId energy = tape.tanh(tape.add_tiled(enc.keys, query));
  NodeId scores = tape.blocks_to_cols(tape.matmul(energy, p.v_a), enc.batch);
  NodeId weights = tape.masked_softmax_rows(scores, enc.mask);
  return {tape.weighted_block_sum(weights, enc.annotations), weights};
}

template <typename T>
StepNodes decode_step(Tape<T>& tape, const ParamNodes& p, std::span<const TokenId> y_prev, DecoderState state,
                      const Encoded<T>& enc, const Hyperparams& hp, bool training, std::mt19937_64* rng) {
  if (training && hp.dropout > 0.0 && rng == nullptr)
    fail(Errc::kInvalidArgument, "decode_step: training with dropout needs a random stream");
  std::mt19937_64 unused;
  std::mt19937_64& gen = rng ? *rng : unused;

  NodeId emb = tape.dropout(tape.embed_lookup(p.tgt_embed, y_prev), hp.dropout, training, gen);
  AttentionNodes att = attend(tape, p, state.layer2, enc);
  const NodeId in1[2] = {emb, att.context};
  NodeId s1 = gru_cell(tape, tape.concat_cols(in1), state.layer1, p.dec1);
  NodeId s2 = gru_cell(tape, tape.dropout(s1, hp.dropout, training, gen), state.layer2, p.dec2);
  const NodeId out[2] = {s2, att.context};
  NodeId logits = tape.add_bias(tape.matmul(tape.concat_cols(out), p.w_o), p.b_o);
  return {logits, {s1, s2}, att};
}

template <typename T>
NodeId loss_graph(Tape<T>& tape, const ParamNodes& p, const Batch& batch, const Hyperparams& hp, bool training,
                  std::mt19937_64* rng) {
  const IdMatrix& tgt = batch.target;
  const std::size_t B = tgt.rows;
  if (B != batch.source.rows) fail(Errc::kShapeMismatch, "loss: source and target batch sizes differ");
  std::size_t tokens = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 1; t < tgt.cols; ++t) tokens += tgt.valid(b, t) ? 1 : 0;
  if (tokens == 0) fail(Errc::kInvalidArgument, "loss: batch has no target tokens");

  Encoded<T> enc = encode(tape, p, batch.source, hp, training, rng);
  DecoderState state{enc.init_state, enc.init_state};
  const T inv = T(1) / static_cast<T>(tokens);
  NodeId total = 0;
  bool first = true;
  std::vector<TokenId> prev(B), gold(B);
  for (std::size_t t = 1; t < tgt.cols; ++t) {
    Tensor<T> weight(B, 1);
    for (std::size_t b = 0; b < B; ++b) {
      prev[b] = tgt.at(b, t - 1);
      gold[b] = tgt.at(b, t);
      weight[b] = tgt.valid(b, t) ? T(1) : T(0);
    }
    StepNodes step = decode_step(tape, p, prev, state, enc, hp, training, rng);
    state = step.state;
    NodeId part = tape.weighted_sum(tape.cross_entropy_rows(step.logits, gold), std::move(weight), inv);
    total = first ? part : tape.add(total, part);
    first = false;
  }
  return total;
}

template <typename T>
T forward_loss(const Batch& batch, const ModelParams<T>& params, const Hyperparams& hp, bool training,
               std::mt19937_64* rng) {
  Tape<T> tape;
  ParamNodes p = bind_params(tape, params);
  return tape.value(loss_graph(tape, p, batch, hp, training, rng))[0];
}

template <typename T>
T loss_and_gradients(const Batch& batch, const ModelParams<T>& params, const Hyperparams& hp, bool training,
                     std::mt19937_64* rng, std::vector<Tensor<T>>& grads) {
  Tape<T> tape;
  ParamNodes p = bind_params(tape, params);
  NodeId loss = loss_graph(tape, p, batch, hp, training, rng);
  auto g = tape.backward(loss);
  grads.clear();
  for (NodeId id : p.all()) grads.push_back(std::move(g[id]));
  return tape.value(loss)[0];
}

// --- Inference session ---------------------------------------------------------

template <typename T>
DecoderSession<T>::DecoderSession(const ModelParams<T>& params, const Hyperparams& hp,
                                  std::span<const TokenId> source_ids)
    : params_(params), hp_(hp) {
  if (source_ids.empty()) fail(Errc::kInvalidArgument, "decode: empty source");
  IdMatrix src;
  src.rows = 1;
  src.cols = source_ids.size();
  src.ids.assign(source_ids.begin(), source_ids.end());
  src.mask.assign(src.cols, 1);
  for (std::size_t i = 0; i < src.cols; ++i)
    if (src.ids[i] == Vocab::kPad) src.mask[i] = 0;
  Tape<T> tape;
  ParamNodes p = bind_params(tape, params_);
  Encoded<T> enc = encode(tape, p, src, hp_, false, nullptr);
  steps_ = enc.steps;
  annotations_ = tape.value(enc.annotations);
  keys_ = tape.value(enc.keys);
  mask_ = enc.mask;
  initial_.layer1 = tape.value(enc.init_state);
  initial_.layer2 = initial_.layer1;
}

template <typename T>
std::vector<T> DecoderSession<T>::step(const State& state, TokenId y_prev, State& next,
                                       std::vector<T>* attention) const {
  Tape<T> tape;
  ParamNodes p = bind_params(tape, params_);
  Encoded<T> enc;
  enc.batch = 1;
  enc.steps = steps_;
  enc.annotations = tape.reference(annotations_);
  enc.keys = tape.reference(keys_);
  enc.mask = mask_;
  DecoderState s{tape.reference(state.layer1), tape.reference(state.layer2)};
  const TokenId ids[1] = {y_prev};
  StepNodes out = decode_step(tape, p, ids, s, enc, hp_, false, nullptr);
  next.layer1 = tape.value(out.state.layer1);
  next.layer2 = tape.value(out.state.layer2);
  if (attention) {
    const auto& w = tape.value(out.attention.weights);
    attention->assign(w.values().begin(), w.values().end());
  }
  const auto& logits = tape.value(out.logits);
  return {logits.values().begin(), logits.values().end()};
}

#define D2S_INSTANTIATE(T)                                                                                  \
  template struct GruParams<T>;                                                                             \
  template struct ModelParams<T>;                                                                           \
  template ParamNodes bind_params<T>(Tape<T>&, const ModelParams<T>&);                                      \
  template NodeId gru_cell<T>(Tape<T>&, NodeId, NodeId, const GruNodes&);                                   \
  template Tensor<T> gru_cell<T>(const Tensor<T>&, const Tensor<T>&, const GruParams<T>&);                  \
  template Encoded<T> encode<T>(Tape<T>&, const ParamNodes&, const IdMatrix&, const Hyperparams&, bool,     \
                                std::mt19937_64*);                                                          \
  template AttentionNodes attend<T>(Tape<T>&, const ParamNodes&, NodeId, const Encoded<T>&);                \
  template StepNodes decode_step<T>(Tape<T>&, const ParamNodes&, std::span<const TokenId>, DecoderState,    \
                                    const Encoded<T>&, const Hyperparams&, bool, std::mt19937_64*);         \
  template NodeId loss_graph<T>(Tape<T>&, const ParamNodes&, const Batch&, const Hyperparams&, bool,        \
                                std::mt19937_64*);                                                          \
  template T forward_loss<T>(const Batch&, const ModelParams<T>&, const Hyperparams&, bool,                 \
                             std::mt19937_64*);                                                             \
  template T loss_and_gradients<T>(const Batch&, const ModelParams<T>&, const Hyperparams&, bool,           \
                                   std::mt19937_64*, std::vector<Tensor<T>>&);                              \
  template class DecoderSession<T>;

D2S_INSTANTIATE(float)
D2S_INSTANTIATE(double)
#undef D2S_INSTANTIATE

template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);

}  // namespace d2s
