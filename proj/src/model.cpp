#include "gate/model.hpp"

#include <algorithm>
#include <set>

namespace gate {

Model Model::init(EncoderConfig config, Task task, Vocab vocab,
                  StringIndex words, std::mt19937_64& rng) {
  if (config.delta_schedule.empty())
    config.delta_schedule = default_schedule(task, config.n_heads);
  config.validate();
  Model m;
  m.config = std::move(config);
  m.task = task;
  m.vocab = std::move(vocab);
  m.words = std::move(words);
  m.encoder = init_encoder_params(m.config, m.vocab, m.words, rng);
  m.classifier = init_classifier_params(task, m.config.d_model,
                                        m.vocab.label.size(), rng);
  return m;
}

StringIndex build_word_index(const std::vector<DepSentence>& sentences) {
  std::set<std::string> forms;
  for (const auto& s : sentences)
    for (const auto& t : s.tokens) forms.insert(t.form);
  return StringIndex::from_names({forms.begin(), forms.end()});
}

BoundModel bind_model(Tape& tape, const Model& model) {
  return BoundModel{bind(tape, model.encoder), bind(tape, model.classifier)};
}

std::vector<Array> model_gradients(const Tape& tape, const Model& model,
                                   const BoundModel& bound) {
  std::vector<Var> vars;
  for_each_param(bound.encoder,
                 [&vars](const std::string&, const Var& v) { vars.push_back(v); });
  vars.push_back(bound.classifier.w);
  vars.push_back(bound.classifier.b);
  std::vector<Array> grads;
  grads.reserve(vars.size());
  size_t i = 0;
  for_each_model_param(model, [&](const std::string&, const Array& a) {
    grads.push_back(a.empty() ? Array() : tape.grad(vars[i]));
    ++i;
  });
  return grads;
}

std::map<std::string, DistanceMatrix> distance_cache(
    const std::vector<DepSentence>& sentences) {
  std::map<std::string, DistanceMatrix> out;
  for (const auto& s : sentences) out.emplace(s.id, pairwise_distances(s));
  return out;
}

namespace {

struct SentenceInputs {
  const DepSentence* sentence;
  const DistanceMatrix* dist;
  const Array* features;
};

SentenceInputs lookup_sentence(const SentenceBatchContext& data,
                               const std::string& id) {
  if (!data.sentences || !data.distances)
    throw Error("sentence batch context is incomplete");
  auto sit = data.sentences->find(id);
  if (sit == data.sentences->end())
    throw Error("unknown sentence id '" + id + "'");
  auto dit = data.distances->find(id);
  if (dit == data.distances->end())
    throw Error("no distance matrix for sentence '" + id + "'");
  const Array* features = nullptr;
  if (data.features) {
    auto fit = data.features->find(id);
    if (fit == data.features->end())
      throw Error("no external features for sentence '" + id + "'");
    features = &fit->second;
  }
  return SentenceInputs{sit->second, &dit->second, features};
}

}  // namespace

Var model_batch_loss(Tape& tape, const BoundModel& bound, const Model& model,
                     const std::vector<TaskInstance>& batch,
                     const SentenceBatchContext& data, ForwardCtx ctx) {
  if (batch.empty()) throw Error("empty batch");
  std::map<std::string, Var> encoded;
  Var total;
  for (const auto& inst : batch) {
    auto it = encoded.find(inst.sentence_id);
    if (it == encoded.end()) {
      SentenceInputs in = lookup_sentence(data, inst.sentence_id);
      Var h = encode(tape, bound.encoder, model.config, *in.sentence,
                     *in.dist, model.vocab, model.words, in.features, ctx);
      it = encoded.emplace(inst.sentence_id, h).first;
    }
    Var loss =
        instance_loss(tape, it->second, inst, bound.classifier, model.vocab);
    total = total.valid() ? tape.add(total, loss) : loss;
  }
  return tape.scale(total, 1.0 / static_cast<double>(batch.size()));
}

std::vector<Prediction> predict(const Model& model,
                                const std::vector<TaskInstance>& instances,
                                const SentenceBatchContext& data) {
  std::vector<Prediction> out;
  out.reserve(instances.size());
  Tape tape;
  BoundModel bound = bind_model(tape, model);
  std::map<std::string, Var> encoded;
  for (const auto& inst : instances) {
    auto it = encoded.find(inst.sentence_id);
    if (it == encoded.end()) {
      SentenceInputs in = lookup_sentence(data, inst.sentence_id);
      Var h = encode(tape, bound.encoder, model.config, *in.sentence,
                     *in.dist, model.vocab, model.words, in.features,
                     ForwardCtx{});
      it = encoded.emplace(inst.sentence_id, h).first;
    }
    Var logits = classify_logits(tape, it->second, inst, bound.classifier);
    Prediction p;
    p.probs = softmax_row(tape.value(logits));
    p.label = static_cast<size_t>(
        std::max_element(p.probs.data.begin(), p.probs.data.end()) -
        p.probs.data.begin());
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace gate
