#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gate/evaluation.hpp"
#include "gate/model.hpp"

namespace gate {

struct TrainConfig {
  double lr = 0.1;
  double lr_decay = 0.9;
  size_t decay_start_epoch = 5;
  size_t batch_size = 50;
  double max_grad_norm = 5.0;
  size_t epochs = 0;  // no sensible default; the CLI requires it
  uint64_t seed = 1;

  void validate() const;
};

// lr * decay^max(0, epoch - decay_start_epoch); epochs count from 1.
double lr_at_epoch(const TrainConfig& cfg, size_t epoch);

// Scales all gradients by max_norm / norm when the global L2 norm exceeds
// max_norm; returns the pre-clip norm.
double clip_gradients(std::vector<Array>& grads, double max_norm);

double global_grad_norm(const std::vector<Array>& grads);

// In-place SGD update: param -= lr * grad, in parameter visit order.
void sgd_step(Model& model, const std::vector<Array>& grads, double lr);

struct EpochMetrics {
  size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_p = 0.0;
  double dev_r = 0.0;
  double dev_f1 = 0.0;
};

// One JSON object per line, one line per epoch.
std::string metrics_to_jsonl(const std::vector<EpochMetrics>& metrics);

struct TrainData {
  SentenceMap sentences;  // views into caller-owned sentence vectors
  std::map<std::string, DistanceMatrix> distances;
  std::vector<TaskInstance> train_instances;
  std::vector<TaskInstance> dev_instances;  // empty: dev = train
  const FeatureMap* features = nullptr;

  SentenceBatchContext context() const {
    return SentenceBatchContext{&sentences, &distances, features};
  }
};

TrainData make_train_data(const std::vector<DepSentence>& sentences,
                          std::vector<TaskInstance> train_instances,
                          std::vector<TaskInstance> dev_instances = {},
                          const FeatureMap* features = nullptr);

struct TrainResult {
  Model best_model;       // highest dev micro-F1, earlier epoch wins ties
  size_t best_epoch = 0;  // 0 when no epochs ran
  double best_f1 = 0.0;
  std::string best_rng_state;
  Model final_model;
  std::string final_rng_state;
  std::vector<EpochMetrics> metrics;
};

// Epochs of: seeded shuffle, batches, forward/backward, clip, SGD step.
// Deterministic given (model, data, config). A non-finite loss aborts with
// the epoch number in the message.
TrainResult train(Model model, const TrainData& data, const TrainConfig& cfg);

struct Checkpoint {
  Model model;
  size_t epoch = 0;
  std::string rng_state;  // mt19937_64 stream serialization
};

// Binary container: magic, little-endian u64 header length, JSON header
// (config, vocab, word list, array manifest), then raw f64 blobs in manifest
// order. serialize(parse(bytes)) == bytes.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string rng_state_string(const std::mt19937_64& rng);
std::mt19937_64 rng_from_state(const std::string& state);

}  // namespace gate
