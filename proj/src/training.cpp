#include "gate/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "gate/io.hpp"
#include "json.hpp"

namespace gate {

using nlohmann::json;

void TrainConfig::validate() const {
  if (lr < 0.0) throw ConfigError("lr must not be negative");
  if (lr_decay <= 0.0 || lr_decay > 1.0)
    throw ConfigError("lr_decay must be in (0, 1]");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_grad_norm <= 0.0)
    throw ConfigError("max_grad_norm must be positive");
}

double lr_at_epoch(const TrainConfig& cfg, size_t epoch) {
  if (epoch < 1) throw Error("epochs count from 1");
  const double steps =
      epoch > cfg.decay_start_epoch
          ? static_cast<double>(epoch - cfg.decay_start_epoch)
          : 0.0;
  return cfg.lr * std::pow(cfg.lr_decay, steps);
}

double global_grad_norm(const std::vector<Array>& grads) {
  double sum = 0.0;
  for (const Array& g : grads)
    for (double v : g.data) sum += v * v;
  return std::sqrt(sum);
}

double clip_gradients(std::vector<Array>& grads, double max_norm) {
  if (max_norm <= 0.0) throw Error("max_norm must be positive");
  const double norm = global_grad_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Array& g : grads)
      for (double& v : g.data) v *= scale;
  }
  return norm;
}

void sgd_step(Model& model, const std::vector<Array>& grads, double lr) {
  size_t i = 0;
  for_each_model_param(model, [&](const std::string& name, Array& p) {
    if (i >= grads.size()) throw Error("gradient list too short");
    const Array& g = grads[i++];
    if (p.empty() && g.empty()) return;
    if (!p.same_shape(g))
      throw Error("gradient shape mismatch for " + name);
    for (size_t k = 0; k < p.size(); ++k) p.data[k] -= lr * g.data[k];
  });
  if (i != grads.size()) throw Error("gradient list too long");
}

std::string metrics_to_jsonl(const std::vector<EpochMetrics>& metrics) {
  std::ostringstream out;
  for (const auto& m : metrics) {
    json object;
    object["epoch"] = m.epoch;
    object["lr"] = m.lr;
    object["train_loss"] = m.train_loss;
    object["dev_p"] = m.dev_p;
    object["dev_r"] = m.dev_r;
    object["dev_f1"] = m.dev_f1;
    out << object.dump() << "\n";
  }
  return out.str();
}

TrainData make_train_data(const std::vector<DepSentence>& sentences,
                          std::vector<TaskInstance> train_instances,
                          std::vector<TaskInstance> dev_instances,
                          const FeatureMap* features) {
  TrainData data;
  data.sentences = index_sentences(sentences);
  data.distances = distance_cache(sentences);
  data.train_instances = std::move(train_instances);
  data.dev_instances = std::move(dev_instances);
  data.features = features;
  return data;
}

std::string rng_state_string(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 rng_from_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream in(state);
  in >> rng;
  if (!in) throw ParseError("bad rng state string");
  return rng;
}

TrainResult train(Model model, const TrainData& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train_instances.empty()) throw Error("empty training set");
  const std::vector<TaskInstance>& dev =
      data.dev_instances.empty() ? data.train_instances : data.dev_instances;
  std::mt19937_64 rng(cfg.seed);
  SentenceBatchContext batch_ctx = data.context();

  TrainResult result;
  result.best_model = model;
  result.best_rng_state = rng_state_string(rng);
  double best_f1 = -1.0;  // the unevaluated initial model loses to any epoch

  std::vector<size_t> order(data.train_instances.size());
  std::iota(order.begin(), order.end(), 0);
  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    try {
      for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const size_t end = std::min(order.size(), start + cfg.batch_size);
        std::vector<TaskInstance> batch;
        batch.reserve(end - start);
        for (size_t i = start; i < end; ++i)
          batch.push_back(data.train_instances[order[i]]);
        Tape tape;
        BoundModel bound = bind_model(tape, model);
        Var loss = model_batch_loss(tape, bound, model, batch, batch_ctx,
                                    ForwardCtx{&rng, true});
        loss_sum += tape.value(loss).data[0] * static_cast<double>(batch.size());
        tape.backward(loss);
        std::vector<Array> grads = model_gradients(tape, model, bound);
        clip_gradients(grads, cfg.max_grad_norm);
        sgd_step(model, grads, lr);
      }
    } catch (const NumericError& e) {
      throw NumericError("training diverged at epoch " +
                         std::to_string(epoch) + ": " + e.what());
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    ScoreReport report = score(predict_records(model, dev, batch_ctx), dev);
    m.dev_p = report.precision;
    m.dev_r = report.recall;
    m.dev_f1 = report.f1;
    result.metrics.push_back(m);
    if (m.dev_f1 > best_f1) {
      best_f1 = m.dev_f1;
      result.best_f1 = m.dev_f1;
      result.best_epoch = epoch;
      result.best_model = model;
      result.best_rng_state = rng_state_string(rng);
    }
  }
  result.final_model = std::move(model);
  result.final_rng_state = rng_state_string(rng);
  return result;
}

namespace {

constexpr char kMagic[] = "GATEckpt";
constexpr size_t kMagicLen = 8;
constexpr int kFormatVersion = 1;

static_assert(sizeof(double) == 8, "checkpoint blobs assume 64-bit doubles");

json config_to_json(const EncoderConfig& cfg) {
  json object;
  object["d_model"] = cfg.d_model;
  object["n_layers"] = cfg.n_layers;
  object["n_heads"] = cfg.n_heads;
  object["ffn_dim"] = cfg.ffn_dim;
  object["dropout"] = cfg.dropout;
  object["word_emb_dim"] = cfg.word_emb_dim;
  object["feature_emb_dim"] = cfg.feature_emb_dim;
  object["attention_mode"] = attention_mode_name(cfg.attention_mode);
  object["delta_schedule"] = delta_schedule_to_string(cfg.delta_schedule);
  object["use_position"] = cfg.use_position;
  object["max_sentence_len"] = cfg.max_sentence_len;
  return object;
}

EncoderConfig config_from_json(const json& object) {
  EncoderConfig cfg;
  cfg.d_model = object.at("d_model").get<size_t>();
  cfg.n_layers = object.at("n_layers").get<size_t>();
  cfg.n_heads = object.at("n_heads").get<size_t>();
  cfg.ffn_dim = object.at("ffn_dim").get<size_t>();
  cfg.dropout = object.at("dropout").get<double>();
  cfg.word_emb_dim = object.at("word_emb_dim").get<size_t>();
  cfg.feature_emb_dim = object.at("feature_emb_dim").get<size_t>();
  cfg.attention_mode =
      parse_attention_mode(object.at("attention_mode").get<std::string>());
  cfg.delta_schedule =
      parse_delta_schedule(object.at("delta_schedule").get<std::string>());
  cfg.use_position = object.at("use_position").get<bool>();
  cfg.max_sentence_len = object.at("max_sentence_len").get<size_t>();
  return cfg;
}

StringIndex index_from_full_names(const std::vector<std::string>& names) {
  if (names.empty()) throw ParseError("empty vocabulary list in checkpoint");
  StringIndex idx(names[0]);
  for (size_t i = 1; i < names.size(); ++i) idx.add(names[i]);
  if (idx.size() != names.size())
    throw ParseError("duplicate vocabulary entry in checkpoint");
  return idx;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json header;
  header["version"] = kFormatVersion;
  header["task"] = task_name(ckpt.model.task);
  header["epoch"] = ckpt.epoch;
  header["rng_state"] = ckpt.rng_state;
  header["config"] = config_to_json(ckpt.model.config);
  header["vocab"] = {{"upos", ckpt.model.vocab.upos.names()},
                     {"deprel", ckpt.model.vocab.deprel.names()},
                     {"entity_type", ckpt.model.vocab.entity_type.names()},
                     {"label", ckpt.model.vocab.label.names()}};
  header["words"] = ckpt.model.words.names();
  json manifest = json::array();
  for_each_model_param(ckpt.model,
                       [&manifest](const std::string& name, const Array& a) {
                         manifest.push_back({{"name", name},
                                             {"rows", a.rows},
                                             {"cols", a.cols}});
                       });
  header["arrays"] = manifest;

  const std::string header_bytes = header.dump();
  std::string out;
  out.reserve(kMagicLen + 8 + header_bytes.size());
  out.append(kMagic, kMagicLen);
  const uint64_t len = header_bytes.size();
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += header_bytes;
  for_each_model_param(ckpt.model, [&out](const std::string&, const Array& a) {
    if (a.empty()) return;
    const char* raw = reinterpret_cast<const char*>(a.data.data());
    out.append(raw, a.size() * sizeof(double));
  });
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagicLen + 8 ||
      bytes.compare(0, kMagicLen, kMagic, kMagicLen) != 0)
    throw ParseError("not a checkpoint file");
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i)
    len |= static_cast<uint64_t>(
               static_cast<unsigned char>(bytes[kMagicLen + i]))
           << (8 * i);
  if (bytes.size() < kMagicLen + 8 + len)
    throw ParseError("truncated checkpoint header");
  json header;
  try {
    header = json::parse(bytes.substr(kMagicLen + 8, len));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what());
  }
  if (header.at("version").get<int>() != kFormatVersion)
    throw ParseError("unsupported checkpoint version " +
                     header.at("version").dump());

  Checkpoint ckpt;
  ckpt.epoch = header.at("epoch").get<size_t>();
  ckpt.rng_state = header.at("rng_state").get<std::string>();
  Model& m = ckpt.model;
  m.config = config_from_json(header.at("config"));
  m.config.validate();
  m.task = parse_task(header.at("task").get<std::string>());
  const json& vocab = header.at("vocab");
  m.vocab.upos = index_from_full_names(
      vocab.at("upos").get<std::vector<std::string>>());
  m.vocab.deprel = index_from_full_names(
      vocab.at("deprel").get<std::vector<std::string>>());
  m.vocab.entity_type = index_from_full_names(
      vocab.at("entity_type").get<std::vector<std::string>>());
  m.vocab.label = index_from_full_names(
      vocab.at("label").get<std::vector<std::string>>());
  m.words =
      index_from_full_names(header.at("words").get<std::vector<std::string>>());

  m.encoder.layers.resize(m.config.n_layers);
  for (auto& lp : m.encoder.layers) {
    lp.w_q.resize(m.config.n_heads);
    lp.w_k.resize(m.config.n_heads);
    lp.w_v.resize(m.config.n_heads);
  }
  m.classifier.task = m.task;

  const json& manifest = header.at("arrays");
  size_t entry = 0;
  size_t offset = kMagicLen + 8 + len;
  for_each_model_param(m, [&](const std::string& name, Array& a) {
    if (entry >= manifest.size())
      throw ParseError("checkpoint manifest too short");
    const json& e = manifest[entry++];
    if (e.at("name").get<std::string>() != name)
      throw ParseError("checkpoint manifest names " +
                       e.at("name").get<std::string>() + " where " + name +
                       " was expected");
    const size_t rows = e.at("rows").get<size_t>();
    const size_t cols = e.at("cols").get<size_t>();
    a = Array(rows, cols);
    const size_t nbytes = a.size() * sizeof(double);
    if (offset + nbytes > bytes.size())
      throw ParseError("truncated checkpoint data at " + name);
    if (nbytes > 0)
      std::memcpy(a.data.data(), bytes.data() + offset, nbytes);
    offset += nbytes;
  });
  if (entry != manifest.size())
    throw ParseError("checkpoint manifest has extra entries");
  if (offset != bytes.size())
    throw ParseError("trailing bytes after checkpoint data");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt,
                     const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

}  // namespace gate
