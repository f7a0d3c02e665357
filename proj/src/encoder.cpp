#include "gate/encoder.hpp"

#include <cmath>
#include <sstream>

namespace gate {

AttentionMode parse_attention_mode(const std::string& name) {
  if (name == "gate") return AttentionMode::kGate;
  if (name == "plain") return AttentionMode::kPlain;
  throw ConfigError("unknown attention mode '" + name +
                    "' (expected gate or plain)");
}

std::string attention_mode_name(AttentionMode mode) {
  return mode == AttentionMode::kGate ? "gate" : "plain";
}

void EncoderConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || ffn_dim == 0 ||
      word_emb_dim == 0 || feature_emb_dim == 0 || max_sentence_len == 0)
    throw ConfigError("encoder dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("dropout must be in [0, 1)");
  if (!delta_schedule.empty() && delta_schedule.size() != n_heads)
    throw ConfigError("delta schedule has " +
                      std::to_string(delta_schedule.size()) +
                      " entries for " + std::to_string(n_heads) + " heads");
  for (int d : delta_schedule)
    if (d < 1) throw ConfigError("delta values must be >= 1");
}

Array glorot_uniform(size_t rows, size_t cols, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Array out(rows, cols);
  for (double& v : out.data) v = dist(rng);
  return out;
}

namespace {

Array zeros(size_t rows, size_t cols) { return Array(rows, cols); }

Array ones(size_t rows, size_t cols) {
  Array out(rows, cols);
  for (double& v : out.data) v = 1.0;
  return out;
}

}  // namespace

EncoderParams init_encoder_params(const EncoderConfig& cfg, const Vocab& vocab,
                                  const StringIndex& words,
                                  std::mt19937_64& rng) {
  cfg.validate();
  EncoderParams p;
  p.word_emb = glorot_uniform(words.size(), cfg.word_emb_dim, rng);
  p.upos_emb = glorot_uniform(vocab.upos.size(), cfg.feature_emb_dim, rng);
  p.deprel_emb = glorot_uniform(vocab.deprel.size(), cfg.feature_emb_dim, rng);
  p.entity_emb =
      glorot_uniform(vocab.entity_type.size(), cfg.feature_emb_dim, rng);
  if (cfg.use_position)
    p.pos_emb = glorot_uniform(cfg.max_sentence_len, cfg.d_model, rng);
  p.in_proj_w = glorot_uniform(cfg.input_dim(), cfg.d_model, rng);
  p.in_proj_b = zeros(1, cfg.d_model);
  p.layers.resize(cfg.n_layers);
  for (auto& lp : p.layers) {
    lp.w_q.reserve(cfg.n_heads);
    lp.w_k.reserve(cfg.n_heads);
    lp.w_v.reserve(cfg.n_heads);
    for (size_t h = 0; h < cfg.n_heads; ++h) {
      lp.w_q.push_back(glorot_uniform(cfg.d_model, cfg.d_k(), rng));
      lp.w_k.push_back(glorot_uniform(cfg.d_model, cfg.d_k(), rng));
      lp.w_v.push_back(glorot_uniform(cfg.d_model, cfg.d_k(), rng));
    }
    lp.w_o = glorot_uniform(cfg.d_model, cfg.d_model, rng);
    lp.b_o = zeros(1, cfg.d_model);
    lp.ln1_gain = ones(1, cfg.d_model);
    lp.ln1_bias = zeros(1, cfg.d_model);
    lp.ffn_w1 = glorot_uniform(cfg.d_model, cfg.ffn_dim, rng);
    lp.ffn_b1 = zeros(1, cfg.ffn_dim);
    lp.ffn_w2 = glorot_uniform(cfg.ffn_dim, cfg.d_model, rng);
    lp.ffn_b2 = zeros(1, cfg.d_model);
    lp.ln2_gain = ones(1, cfg.d_model);
    lp.ln2_bias = zeros(1, cfg.d_model);
  }
  return p;
}

BoundEncoderParams bind(Tape& tape, const EncoderParams& params) {
  BoundEncoderParams bound;
  bound.layers.resize(params.layers.size());
  for (size_t l = 0; l < params.layers.size(); ++l) {
    bound.layers[l].w_q.resize(params.layers[l].w_q.size());
    bound.layers[l].w_k.resize(params.layers[l].w_k.size());
    bound.layers[l].w_v.resize(params.layers[l].w_v.size());
  }
  std::vector<const Array*> stored;
  for_each_param(params, [&stored](const std::string&, const Array& a) {
    stored.push_back(&a);
  });
  std::vector<Var*> slots;
  for_each_param(bound,
                 [&slots](const std::string&, Var& v) { slots.push_back(&v); });
  for (size_t i = 0; i < stored.size(); ++i)
    if (!stored[i]->empty()) *slots[i] = tape.leaf(*stored[i]);
  return bound;
}

std::vector<AttentionMask> build_head_masks(const DistanceMatrix& dist,
                                            const DeltaSchedule& schedule) {
  std::vector<AttentionMask> masks;
  masks.reserve(schedule.size());
  for (int delta : schedule) masks.push_back(build_mask(dist, delta));
  return masks;
}

FeatureMap parse_word_features(const std::string& text, size_t word_emb_dim) {
  FeatureMap out;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  std::map<std::string, std::vector<std::vector<double>>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    size_t start = 0;
    while (true) {
      size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 2 + word_emb_dim)
      throw ParseError("features line " + std::to_string(lineno) +
                       ": expected " + std::to_string(2 + word_emb_dim) +
                       " tab-separated columns, got " +
                       std::to_string(cols.size()));
    auto& sent_rows = rows[cols[0]];
    size_t parsed = 0;
    size_t index;
    try {
      index = std::stoul(cols[1], &parsed);
    } catch (const std::exception&) {
      parsed = 0;
      index = 0;
    }
    if (parsed != cols[1].size())
      throw ParseError("features line " + std::to_string(lineno) +
                       ": bad row index '" + cols[1] + "'");
    if (index != sent_rows.size())
      throw ParseError("features line " + std::to_string(lineno) +
                       ": row index " + cols[1] + " out of order (expected " +
                       std::to_string(sent_rows.size()) + ")");
    std::vector<double> values(word_emb_dim);
    for (size_t j = 0; j < word_emb_dim; ++j) {
      try {
        values[j] = std::stod(cols[2 + j], &parsed);
      } catch (const std::exception&) {
        parsed = 0;
      }
      if (parsed != cols[2 + j].size() || !std::isfinite(values[j]))
        throw ParseError("features line " + std::to_string(lineno) +
                         ": bad value '" + cols[2 + j] + "'");
    }
    sent_rows.push_back(std::move(values));
  }
  for (auto& [id, sent_rows] : rows) {
    Array a(sent_rows.size(), word_emb_dim);
    for (size_t i = 0; i < sent_rows.size(); ++i)
      std::copy(sent_rows[i].begin(), sent_rows[i].end(),
                a.data.begin() + i * word_emb_dim);
    out.emplace(id, std::move(a));
  }
  return out;
}

Var embed(Tape& tape, const BoundEncoderParams& p, const EncoderConfig& cfg,
          const DepSentence& sent, const Vocab& vocab,
          const StringIndex& words, const Array* external_features,
          ForwardCtx ctx) {
  const size_t n = sent.tokens.size();
  if (n == 0) throw Error("cannot embed an empty sentence");
  if (n > cfg.max_sentence_len)
    throw Error("sentence " + sent.id + " has " + std::to_string(n) +
                " tokens, limit " + std::to_string(cfg.max_sentence_len));

  Var word_rows;
  if (external_features) {
    if (external_features->rows != n ||
        external_features->cols != cfg.word_emb_dim)
      throw Error("external features for sentence " + sent.id + " are " +
                  external_features->shape_string() + ", expected " +
                  std::to_string(n) + "x" + std::to_string(cfg.word_emb_dim));
    word_rows = tape.leaf(*external_features);
  } else {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = words.lookup(sent.tokens[i].form);
    word_rows = tape.gather_rows(p.word_emb, idx);
  }

  std::vector<size_t> upos(n), deprel(n), entity(n);
  for (size_t i = 0; i < n; ++i) {
    upos[i] = vocab.upos.lookup(sent.tokens[i].upos);
    deprel[i] = vocab.deprel.lookup(sent.tokens[i].deprel);
    entity[i] = vocab.entity_type.lookup(sent.tokens[i].entity_type);
  }
  Var features = tape.concat({word_rows, tape.gather_rows(p.upos_emb, upos),
                              tape.gather_rows(p.deprel_emb, deprel),
                              tape.gather_rows(p.entity_emb, entity)},
                             1);
  Var h = tape.add_rowvec(tape.matmul(features, p.in_proj_w), p.in_proj_b);
  if (cfg.use_position) {
    std::vector<size_t> positions(n);
    for (size_t i = 0; i < n; ++i) positions[i] = i;
    h = tape.add(h, tape.gather_rows(p.pos_emb, positions));
  }
  if (ctx.train && cfg.dropout > 0.0) {
    if (!ctx.rng) throw Error("training forward pass needs an rng");
    h = tape.dropout(h, cfg.dropout, *ctx.rng, true);
  }
  return h;
}

Var gate_attention_head(Tape& tape, Var h, Var w_q, Var w_k, Var w_v,
                        const AttentionMask& mask, const DistanceMatrix& dist,
                        AttentionMode mode, size_t d_k) {
  Var q = tape.matmul(h, w_q);
  Var k = tape.matmul(h, w_k);
  Var v = tape.matmul(h, w_v);
  Var scores = tape.scale(tape.matmul(q, tape.transpose(k)),
                          1.0 / std::sqrt(static_cast<double>(d_k)));
  Var p = tape.masked_softmax(scores, mask);
  if (mode == AttentionMode::kGate) p = tape.distance_renorm(p, dist, mask);
  return tape.matmul(p, v);
}

Var encoder_layer(Tape& tape, const BoundLayerParams& lp,
                  const EncoderConfig& cfg, Var x, const DistanceMatrix& dist,
                  const std::vector<AttentionMask>& masks, ForwardCtx ctx) {
  if (masks.size() != cfg.n_heads)
    throw Error("expected one mask per head, got " +
                std::to_string(masks.size()));
  std::vector<Var> heads;
  heads.reserve(cfg.n_heads);
  for (size_t h = 0; h < cfg.n_heads; ++h)
    heads.push_back(gate_attention_head(tape, x, lp.w_q[h], lp.w_k[h],
                                        lp.w_v[h], masks[h], dist,
                                        cfg.attention_mode, cfg.d_k()));
  Var attn = tape.add_rowvec(tape.matmul(tape.concat(heads, 1), lp.w_o),
                             lp.b_o);
  const bool drop = ctx.train && cfg.dropout > 0.0;
  if (drop) {
    if (!ctx.rng) throw Error("training forward pass needs an rng");
    attn = tape.dropout(attn, cfg.dropout, *ctx.rng, true);
  }
  Var h1 = tape.layer_norm(tape.add(x, attn), lp.ln1_gain, lp.ln1_bias);
  Var ff = tape.add_rowvec(
      tape.matmul(
          tape.relu(tape.add_rowvec(tape.matmul(h1, lp.ffn_w1), lp.ffn_b1)),
          lp.ffn_w2),
      lp.ffn_b2);
  if (drop) ff = tape.dropout(ff, cfg.dropout, *ctx.rng, true);
  return tape.layer_norm(tape.add(h1, ff), lp.ln2_gain, lp.ln2_bias);
}

Var encode(Tape& tape, const BoundEncoderParams& p, const EncoderConfig& cfg,
           const DepSentence& sent, const DistanceMatrix& dist,
           const Vocab& vocab, const StringIndex& words,
           const Array* external_features, ForwardCtx ctx) {
  if (cfg.delta_schedule.empty())
    throw ConfigError("delta schedule unset; fill it before encoding");
  std::vector<AttentionMask> masks =
      build_head_masks(dist, cfg.delta_schedule);
  Var h = embed(tape, p, cfg, sent, vocab, words, external_features, ctx);
  for (const auto& lp : p.layers)
    h = encoder_layer(tape, lp, cfg, h, dist, masks, ctx);
  return h;
}

}  // namespace gate
