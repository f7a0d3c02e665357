#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "gate/corpus.hpp"
#include "gate/numerics.hpp"
#include "gate/syntax.hpp"

namespace gate {

enum class AttentionMode { kGate, kPlain };

AttentionMode parse_attention_mode(const std::string& name);
std::string attention_mode_name(AttentionMode mode);

struct EncoderConfig {
  size_t d_model = 512;
  size_t n_layers = 1;
  size_t n_heads = 8;
  size_t ffn_dim = 2048;
  double dropout = 0.5;
  size_t word_emb_dim = 64;
  size_t feature_emb_dim = 30;
  AttentionMode attention_mode = AttentionMode::kGate;
  DeltaSchedule delta_schedule;  // empty means: take the task default
  // Learned sequential position rows, off by default; the encoder is
  // order-agnostic only while this stays off. Kept as an ablation control.
  bool use_position = false;
  size_t max_sentence_len = 256;

  size_t d_k() const { return d_model / n_heads; }
  size_t input_dim() const { return word_emb_dim + 3 * feature_emb_dim; }
  void validate() const;
};

// One transformer layer's learnable arrays. T is Array for stored parameters
// and Var once bound onto a tape; both shapes stay in lockstep so the two
// instantiations can be zipped field by field.
template <typename T>
struct LayerParamsT {
  std::vector<T> w_q, w_k, w_v;  // per head, d_model x d_k
  T w_o, b_o;                    // d_model x d_model, 1 x d_model
  T ln1_gain, ln1_bias;          // 1 x d_model
  T ffn_w1, ffn_b1;              // d_model x ffn_dim, 1 x ffn_dim
  T ffn_w2, ffn_b2;              // ffn_dim x d_model, 1 x d_model
  T ln2_gain, ln2_bias;          // 1 x d_model
};

template <typename T>
struct EncoderParamsT {
  T word_emb;                          // n_words x word_emb_dim
  T upos_emb, deprel_emb, entity_emb;  // vocab size x feature_emb_dim
  T pos_emb;  // max_sentence_len x d_model, empty when positions are off
  T in_proj_w, in_proj_b;  // input_dim x d_model, 1 x d_model
  std::vector<LayerParamsT<T>> layers;
};

using LayerParams = LayerParamsT<Array>;
using EncoderParams = EncoderParamsT<Array>;
using BoundLayerParams = LayerParamsT<Var>;
using BoundEncoderParams = EncoderParamsT<Var>;

// Visits every parameter field in a fixed order with a stable dotted name.
// The order defines the checkpoint manifest and the SGD update sequence.
template <typename T, typename Fn>
void for_each_param(EncoderParamsT<T>& p, Fn&& fn) {
  fn("word_emb", p.word_emb);
  fn("upos_emb", p.upos_emb);
  fn("deprel_emb", p.deprel_emb);
  fn("entity_emb", p.entity_emb);
  fn("pos_emb", p.pos_emb);
  fn("in_proj_w", p.in_proj_w);
  fn("in_proj_b", p.in_proj_b);
  for (size_t l = 0; l < p.layers.size(); ++l) {
    auto& lp = p.layers[l];
    const std::string base = "layers." + std::to_string(l) + ".";
    for (size_t h = 0; h < lp.w_q.size(); ++h) {
      const std::string head = std::to_string(h);
      fn(base + "w_q." + head, lp.w_q[h]);
      fn(base + "w_k." + head, lp.w_k[h]);
      fn(base + "w_v." + head, lp.w_v[h]);
    }
    fn(base + "w_o", lp.w_o);
    fn(base + "b_o", lp.b_o);
    fn(base + "ln1_gain", lp.ln1_gain);
    fn(base + "ln1_bias", lp.ln1_bias);
    fn(base + "ffn_w1", lp.ffn_w1);
    fn(base + "ffn_b1", lp.ffn_b1);
    fn(base + "ffn_w2", lp.ffn_w2);
    fn(base + "ffn_b2", lp.ffn_b2);
    fn(base + "ln2_gain", lp.ln2_gain);
    fn(base + "ln2_bias", lp.ln2_bias);
  }
}

template <typename T, typename Fn>
void for_each_param(const EncoderParamsT<T>& p, Fn&& fn) {
  for_each_param(const_cast<EncoderParamsT<T>&>(p),
                 [&fn](const std::string& name, T& value) {
                   fn(name, static_cast<const T&>(value));
                 });
}

Array glorot_uniform(size_t rows, size_t cols, std::mt19937_64& rng);

EncoderParams init_encoder_params(const EncoderConfig& cfg, const Vocab& vocab,
                                  const StringIndex& words,
                                  std::mt19937_64& rng);

// Registers every stored array as a tape leaf; empty arrays (disabled
// position table) stay unbound.
BoundEncoderParams bind(Tape& tape, const EncoderParams& params);

struct ForwardCtx {
  std::mt19937_64* rng = nullptr;  // required when train is true
  bool train = false;
};

std::vector<AttentionMask> build_head_masks(const DistanceMatrix& dist,
                                            const DeltaSchedule& schedule);

// External word features: sentence id -> n x word_emb_dim rows that replace
// the learned word vectors (frozen, no gradient).
using FeatureMap = std::map<std::string, Array>;
FeatureMap parse_word_features(const std::string& text, size_t word_emb_dim);

Var embed(Tape& tape, const BoundEncoderParams& p, const EncoderConfig& cfg,
          const DepSentence& sent, const Vocab& vocab,
          const StringIndex& words, const Array* external_features,
          ForwardCtx ctx);

Var gate_attention_head(Tape& tape, Var h, Var w_q, Var w_k, Var w_v,
                        const AttentionMask& mask, const DistanceMatrix& dist,
                        AttentionMode mode, size_t d_k);

Var encoder_layer(Tape& tape, const BoundLayerParams& lp,
                  const EncoderConfig& cfg, Var x, const DistanceMatrix& dist,
                  const std::vector<AttentionMask>& masks, ForwardCtx ctx);

Var encode(Tape& tape, const BoundEncoderParams& p, const EncoderConfig& cfg,
           const DepSentence& sent, const DistanceMatrix& dist,
           const Vocab& vocab, const StringIndex& words,
           const Array* external_features, ForwardCtx ctx);

}  // namespace gate
