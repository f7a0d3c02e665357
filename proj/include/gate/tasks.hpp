#pragma once

#include <random>

#include "gate/corpus.hpp"
#include "gate/numerics.hpp"

namespace gate {

// Linear classifier over [pool(span_a); pool(span_b); pool(sentence)].
// One head per model, tagged with the task it was built for.
template <typename T>
struct ClassifierParamsT {
  Task task = Task::kRelation;
  T w;  // 3*d_model x n_labels
  T b;  // 1 x n_labels
};

using ClassifierParams = ClassifierParamsT<Array>;
using BoundClassifierParams = ClassifierParamsT<Var>;

ClassifierParams init_classifier_params(Task task, size_t d_model,
                                        size_t n_labels, std::mt19937_64& rng);

BoundClassifierParams bind(Tape& tape, const ClassifierParams& params);

// Column-wise max over the rows of h covered by the span.
Var span_pool(Tape& tape, Var h, const Span& span);

// 1 x n_labels logits for the instance; softmax is left to the caller
// (cross_entropy and softmax_row both take raw logits).
Var classify_logits(Tape& tape, Var h, const TaskInstance& instance,
                    const BoundClassifierParams& params);

Var instance_loss(Tape& tape, Var h, const TaskInstance& instance,
                  const BoundClassifierParams& params, const Vocab& vocab);

// Label index for loss/scoring; throws on labels missing from the vocab
// (the reserved name at index 0 is a legal label).
size_t label_index(const Vocab& vocab, const std::string& label);

}  // namespace gate
