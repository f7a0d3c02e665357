#include "gate/training.hpp"

#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "gate/corpus.hpp"
#include "gate/evaluation.hpp"
#include "gate/model.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace gate;

namespace {

EncoderConfig tiny_encoder_config() {
  EncoderConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 4;
  cfg.ffn_dim = 24;
  cfg.dropout = 0.2;
  cfg.word_emb_dim = 8;
  cfg.feature_emb_dim = 4;
  cfg.delta_schedule = {1, 2, kUnboundedDelta, kUnboundedDelta};
  return cfg;
}

// Synthetic sentences plus a model sized to overfit them quickly. The corpus
// must stay alive as long as `data` (the sentence map holds views).
struct TrainFixture {
  SynthCorpus corpus;
  Model model;
  TrainData data;

  explicit TrainFixture(uint64_t seed = 5) {
    SynthConfig scfg;
    scfg.count = 12;
    scfg.len_min = 4;
    scfg.len_max = 8;
    corpus = generate_synthetic(scfg, 77);
    std::mt19937_64 rng(seed);
    model = Model::init(tiny_encoder_config(), Task::kRelation,
                        build_vocab(corpus.source, corpus.source_instances),
                        build_word_index(corpus.source), rng);
    data = make_train_data(corpus.source, corpus.source_instances);
  }
};

std::vector<Array> collect_params(const Model& m) {
  std::vector<Array> out;
  for_each_model_param(m, [&](const std::string&, const Array& a) {
    out.push_back(a);
  });
  return out;
}

TrainConfig quick_config(size_t epochs) {
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.lr_decay = 0.9;
  cfg.decay_start_epoch = 3;
  cfg.batch_size = 5;
  cfg.epochs = epochs;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST_CASE("learning rate holds until the decay epoch then shrinks geometrically") {
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.lr_decay = 0.9;
  cfg.decay_start_epoch = 5;
  for (size_t e = 1; e <= 5; ++e) CHECK(lr_at_epoch(cfg, e) == 0.1);
  CHECK(lr_at_epoch(cfg, 6) == doctest::Approx(0.09).epsilon(1e-15));
  CHECK(lr_at_epoch(cfg, 7) == doctest::Approx(0.081).epsilon(1e-15));
  CHECK(lr_at_epoch(cfg, 9) == doctest::Approx(0.06561).epsilon(1e-15));
  cfg.lr_decay = 1.0;
  CHECK(lr_at_epoch(cfg, 50) == 0.1);
  CHECK_THROWS_AS(lr_at_epoch(cfg, 0), Error);
}

TEST_CASE("gradient clipping rescales only above the threshold") {
  std::vector<Array> small = {Array::from_rows({{3.0}}), Array()};
  CHECK(global_grad_norm(small) == 3.0);
  CHECK(clip_gradients(small, 5.0) == 3.0);
  CHECK(small[0].at(0, 0) == 3.0);  // untouched below the threshold

  std::vector<Array> boundary = {Array::from_rows({{3.0, 4.0}})};
  CHECK(clip_gradients(boundary, 5.0) == 5.0);
  CHECK(boundary[0].at(0, 0) == 3.0);  // exactly at the threshold: untouched

  std::vector<Array> big = {Array::from_rows({{6.0}}),
                            Array::from_rows({{8.0}})};
  CHECK(clip_gradients(big, 5.0) == 10.0);
  CHECK(big[0].at(0, 0) == 3.0);  // halving is exact
  CHECK(big[1].at(0, 0) == 4.0);

  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Array> grads = {testsupport::random_array(3, 5, rng, 4.0),
                                testsupport::random_array(1, 7, rng, 4.0)};
    clip_gradients(grads, 2.0);
    CHECK(global_grad_norm(grads) <= 2.0 + 1e-12);
  }
}

TEST_CASE("an sgd step subtracts exactly lr times the gradient") {
  TrainFixture fx;
  std::vector<Array> before = collect_params(fx.model);
  std::vector<Array> grads;
  for (const Array& p : before) {
    Array g(p.rows, p.cols);
    for (double& v : g.data) v = 0.5;
    grads.push_back(g);
  }
  sgd_step(fx.model, grads, 0.2);
  std::vector<Array> after = collect_params(fx.model);
  for (size_t i = 0; i < before.size(); ++i)
    for (size_t k = 0; k < before[i].size(); ++k)
      CHECK(after[i].data[k] == before[i].data[k] - 0.2 * 0.5);

  grads.pop_back();
  CHECK_THROWS_WITH_AS(sgd_step(fx.model, grads, 0.1),
                       doctest::Contains("too short"), Error);
}

TEST_CASE("train config validation permits a zero learning rate") {
  TrainConfig cfg = quick_config(1);
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = 0.0;
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = quick_config(1);
  cfg.lr_decay = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.lr_decay = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = quick_config(1);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = quick_config(1);
  cfg.max_grad_norm = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("metrics serialize to one sorted json object per epoch") {
  std::vector<EpochMetrics> metrics = {{1, 0.1, 2.5, 0.5, 0.25, 1.0 / 3.0},
                                       {2, 0.09, 1.25, 1.0, 1.0, 1.0}};
  std::string text = metrics_to_jsonl(metrics);
  std::istringstream in(text);
  std::string line;
  size_t count = 0;
  while (std::getline(in, line)) {
    auto object = nlohmann::json::parse(line);
    ++count;
    CHECK(object["epoch"] == count);
    for (const char* key :
         {"epoch", "lr", "train_loss", "dev_p", "dev_r", "dev_f1"})
      CHECK(object.contains(key));
  }
  CHECK(count == 2);
  CHECK(metrics_to_jsonl({}).empty());
}

TEST_CASE("model init fills the per-task default schedules for 8 heads") {
  std::mt19937_64 rng(43);
  EncoderConfig cfg = tiny_encoder_config();
  cfg.n_heads = 8;
  cfg.delta_schedule.clear();
  Vocab vocab;
  vocab.label.add("X");
  StringIndex words;
  words.add("w0");
  Model re = Model::init(cfg, Task::kRelation, vocab, words, rng);
  CHECK(re.config.delta_schedule ==
        DeltaSchedule{1, 1, 2, 2, kUnboundedDelta, kUnboundedDelta,
                      kUnboundedDelta, kUnboundedDelta});
  Model earl = Model::init(cfg, Task::kEventArgument, vocab, words, rng);
  CHECK(earl.config.delta_schedule ==
        DeltaSchedule{2, 2, 4, 4, kUnboundedDelta, kUnboundedDelta,
                      kUnboundedDelta, kUnboundedDelta});
  CHECK(earl.task == Task::kEventArgument);
  CHECK(earl.classifier.task == Task::kEventArgument);
}

TEST_CASE("batch loss is the mean of the instance losses") {
  TrainFixture fx;
  SentenceBatchContext ctx = fx.data.context();
  std::vector<TaskInstance> pair = {fx.corpus.source_instances[0],
                                    fx.corpus.source_instances[1]};
  Tape tape;
  BoundModel bound = bind_model(tape, fx.model);
  double a = tape.value(
      model_batch_loss(tape, bound, fx.model, {pair[0]}, ctx, {})).at(0, 0);
  double b = tape.value(
      model_batch_loss(tape, bound, fx.model, {pair[1]}, ctx, {})).at(0, 0);
  double both = tape.value(
      model_batch_loss(tape, bound, fx.model, pair, ctx, {})).at(0, 0);
  CHECK(both == (a + b) * 0.5);

  CHECK_THROWS_WITH_AS(model_batch_loss(tape, bound, fx.model, {}, ctx, {}),
                       doctest::Contains("empty batch"), Error);
  TaskInstance stray = pair[0];
  stray.sentence_id = "missing";
  CHECK_THROWS_WITH_AS(
      model_batch_loss(tape, bound, fx.model, {stray}, ctx, {}),
      doctest::Contains("unknown sentence id"), Error);
}

TEST_CASE("training reduces the loss and tracks the best dev epoch") {
  TrainFixture fx;
  TrainResult result = train(fx.model, fx.data, quick_config(6));
  REQUIRE(result.metrics.size() == 6);
  CHECK(result.metrics.back().train_loss < result.metrics.front().train_loss);
  CHECK(result.metrics[3].lr == doctest::Approx(0.09).epsilon(1e-15));

  double best = -1.0;
  size_t best_epoch = 0;
  for (const EpochMetrics& m : result.metrics)
    if (m.dev_f1 > best) {
      best = m.dev_f1;
      best_epoch = m.epoch;
    }
  CHECK(result.best_f1 == best);
  CHECK(result.best_epoch == best_epoch);  // first epoch attaining the max
}

TEST_CASE("training with zero epochs or zero lr changes nothing") {
  TrainFixture fx;
  TrainResult none = train(fx.model, fx.data, quick_config(0));
  CHECK(none.metrics.empty());
  CHECK(none.best_epoch == 0);
  std::vector<Array> orig = collect_params(fx.model);
  std::vector<Array> kept = collect_params(none.best_model);
  REQUIRE(orig.size() == kept.size());
  for (size_t i = 0; i < orig.size(); ++i) CHECK(orig[i].data == kept[i].data);

  TrainConfig frozen = quick_config(2);
  frozen.lr = 0.0;
  TrainResult still = train(fx.model, fx.data, frozen);
  std::vector<Array> after = collect_params(still.final_model);
  for (size_t i = 0; i < orig.size(); ++i) CHECK(orig[i].data == after[i].data);
}

TEST_CASE("the same seed reproduces the run bit for bit") {
  TrainFixture fx;
  TrainResult a = train(fx.model, fx.data, quick_config(4));
  TrainResult b = train(fx.model, fx.data, quick_config(4));
  CHECK(metrics_to_jsonl(a.metrics) == metrics_to_jsonl(b.metrics));
  Checkpoint ca{a.final_model, 4, a.final_rng_state};
  Checkpoint cb{b.final_model, 4, b.final_rng_state};
  CHECK(serialize_checkpoint(ca) == serialize_checkpoint(cb));

  TrainConfig other = quick_config(4);
  other.seed = 10;
  TrainResult c = train(fx.model, fx.data, other);
  CHECK(metrics_to_jsonl(a.metrics) != metrics_to_jsonl(c.metrics));
}

TEST_CASE("a nonsense parameter surfaces as a divergence error") {
  TrainFixture fx;
  // All-positive huge values make the projection row sums overflow for sure.
  for (double& v : fx.model.encoder.word_emb.data) v = 1e154;
  for (double& v : fx.model.encoder.in_proj_w.data) v = 1e154;
  CHECK_THROWS_WITH_AS(train(fx.model, fx.data, quick_config(2)),
                       doctest::Contains("diverged at epoch 1"), NumericError);
}

TEST_CASE("checkpoints roundtrip byte for byte and preserve behavior") {
  TrainFixture fx;
  std::mt19937_64 rng(44);
  rng.discard(7);
  Checkpoint ckpt{fx.model, 3, rng_state_string(rng)};
  std::string bytes = serialize_checkpoint(ckpt);
  Checkpoint back = parse_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.epoch == 3);
  CHECK(back.rng_state == ckpt.rng_state);
  CHECK(back.model.task == fx.model.task);
  CHECK(back.model.config.d_model == fx.model.config.d_model);
  CHECK(back.model.config.delta_schedule == fx.model.config.delta_schedule);
  CHECK(back.model.config.dropout == fx.model.config.dropout);
  CHECK(back.model.vocab.label.names() == fx.model.vocab.label.names());
  CHECK(back.model.words.names() == fx.model.words.names());

  // Identical predictions prove the arrays survived intact.
  SentenceBatchContext ctx = fx.data.context();
  auto before = predict(fx.model, fx.corpus.source_instances, ctx);
  auto after = predict(back.model, fx.corpus.source_instances, ctx);
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(before[i].label == after[i].label);
    CHECK(before[i].probs.data == after[i].probs.data);
  }
}

TEST_CASE("checkpoint files also roundtrip through disk") {
  TrainFixture fx;
  Checkpoint ckpt{fx.model, 1, rng_state_string(std::mt19937_64(1))};
  auto path = testsupport::scratch_dir() / "roundtrip.ckpt";
  save_checkpoint(ckpt, path);
  Checkpoint back = load_checkpoint(path);
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(ckpt));
}

TEST_CASE("corrupted checkpoint bytes fail with a specific parse error") {
  TrainFixture fx;
  Checkpoint ckpt{fx.model, 2, rng_state_string(std::mt19937_64(2))};
  std::string bytes = serialize_checkpoint(ckpt);

  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(parse_checkpoint(wrong_magic),
                       doctest::Contains("not a checkpoint"), ParseError);

  CHECK_THROWS_WITH_AS(parse_checkpoint(bytes.substr(0, 10)),
                       doctest::Contains("not a checkpoint"), ParseError);

  CHECK_THROWS_WITH_AS(parse_checkpoint(bytes.substr(0, 40)),
                       doctest::Contains("truncated"), ParseError);

  CHECK_THROWS_WITH_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 9)),
                       doctest::Contains("truncated checkpoint data"),
                       ParseError);

  CHECK_THROWS_WITH_AS(parse_checkpoint(bytes + "x"),
                       doctest::Contains("trailing bytes"), ParseError);

  std::string garbled = bytes;
  garbled[12] = '{';  // corrupt the JSON header
  CHECK_THROWS_AS(parse_checkpoint(garbled), ParseError);
}

TEST_CASE("rng stream state restores mid-sequence") {
  std::mt19937_64 rng(123);
  rng.discard(11);
  std::string state = rng_state_string(rng);
  std::vector<uint64_t> expect = {rng(), rng(), rng()};
  std::mt19937_64 restored = rng_from_state(state);
  CHECK(restored() == expect[0]);
  CHECK(restored() == expect[1]);
  CHECK(restored() == expect[2]);
  CHECK_THROWS_AS(rng_from_state("not numbers at all !!!"), ParseError);
}
