#include "gate/tasks.hpp"

#include "gate/encoder.hpp"

namespace gate {

ClassifierParams init_classifier_params(Task task, size_t d_model,
                                        size_t n_labels,
                                        std::mt19937_64& rng) {
  if (n_labels < 2)
    throw ConfigError("classifier needs at least 2 labels, got " +
                      std::to_string(n_labels));
  ClassifierParams p;
  p.task = task;
  p.w = glorot_uniform(3 * d_model, n_labels, rng);
  p.b = Array(1, n_labels);
  return p;
}

BoundClassifierParams bind(Tape& tape, const ClassifierParams& params) {
  BoundClassifierParams bound;
  bound.task = params.task;
  bound.w = tape.leaf(params.w);
  bound.b = tape.leaf(params.b);
  return bound;
}

Var span_pool(Tape& tape, Var h, const Span& span) {
  if (span.begin >= span.end)
    throw Error("empty span [" + std::to_string(span.begin) + ", " +
                std::to_string(span.end) + ")");
  return tape.max_pool_rows(tape.slice_rows(h, span.begin, span.end));
}

Var classify_logits(Tape& tape, Var h, const TaskInstance& instance,
                    const BoundClassifierParams& params) {
  if (instance.task != params.task)
    throw Error(std::string("instance task ") + task_name(instance.task) +
                " does not match classifier task " + task_name(params.task));
  const size_t n = tape.value(h).rows;
  Var pooled = tape.concat({span_pool(tape, h, instance.span_a),
                            span_pool(tape, h, instance.span_b),
                            span_pool(tape, h, Span{0, n})},
                           1);
  return tape.add_rowvec(tape.matmul(pooled, params.w), params.b);
}

size_t label_index(const Vocab& vocab, const std::string& label) {
  const size_t index = vocab.label.lookup(label);
  if (index == 0 && label != vocab.label.reserved())
    throw Error("unknown label '" + label + "'");
  return index;
}

Var instance_loss(Tape& tape, Var h, const TaskInstance& instance,
                  const BoundClassifierParams& params, const Vocab& vocab) {
  return tape.cross_entropy(classify_logits(tape, h, instance, params),
                            label_index(vocab, instance.label));
}

}  // namespace gate
