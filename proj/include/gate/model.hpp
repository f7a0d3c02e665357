#pragma once

#include <map>
#include <string>
#include <vector>

#include "gate/corpus.hpp"
#include "gate/encoder.hpp"
#include "gate/tasks.hpp"

namespace gate {

// Everything needed to run the network: immutable configuration plus the
// learnable arrays for the encoder and the task head.
struct Model {
  EncoderConfig config;
  Task task = Task::kRelation;
  Vocab vocab;
  StringIndex words{"UNKNOWN"};
  EncoderParams encoder;
  ClassifierParams classifier;

  // Fills an empty delta schedule with the task default, validates the
  // config, and draws all parameters from rng.
  static Model init(EncoderConfig config, Task task, Vocab vocab,
                    StringIndex words, std::mt19937_64& rng);
};

StringIndex build_word_index(const std::vector<DepSentence>& sentences);

// Visits encoder parameters (stable dotted names) then the classifier head.
template <typename Fn>
void for_each_model_param(Model& m, Fn&& fn) {
  for_each_param(m.encoder, fn);
  fn(std::string("classifier.w"), m.classifier.w);
  fn(std::string("classifier.b"), m.classifier.b);
}

template <typename Fn>
void for_each_model_param(const Model& m, Fn&& fn) {
  for_each_param(m.encoder, fn);
  fn(std::string("classifier.w"), static_cast<const Array&>(m.classifier.w));
  fn(std::string("classifier.b"), static_cast<const Array&>(m.classifier.b));
}

struct BoundModel {
  BoundEncoderParams encoder;
  BoundClassifierParams classifier;
};

BoundModel bind_model(Tape& tape, const Model& model);

// Gradients of every parameter after tape.backward, in visit order.
std::vector<Array> model_gradients(const Tape& tape, const Model& model,
                                   const BoundModel& bound);

// Shared per-sentence inputs for loss and prediction.
struct SentenceBatchContext {
  const SentenceMap* sentences = nullptr;
  const std::map<std::string, DistanceMatrix>* distances = nullptr;
  const FeatureMap* features = nullptr;  // optional external word vectors
};

std::map<std::string, DistanceMatrix> distance_cache(
    const std::vector<DepSentence>& sentences);

// Mean cross-entropy over the instances; each distinct sentence in the batch
// is encoded once. Throws on an empty batch.
Var model_batch_loss(Tape& tape, const BoundModel& bound, const Model& model,
                     const std::vector<TaskInstance>& batch,
                     const SentenceBatchContext& data, ForwardCtx ctx);

struct Prediction {
  size_t label = 0;    // argmax over the label vocabulary
  Array probs;         // 1 x n_labels softmax row
};

// Inference (dropout off). Output order matches the input instance order;
// each distinct sentence is encoded once.
std::vector<Prediction> predict(const Model& model,
                                const std::vector<TaskInstance>& instances,
                                const SentenceBatchContext& data);

}  // namespace gate
