// Command-line front end: distance dumps, synthetic corpus generation,
// training, evaluation, prediction, and gradient checking.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gate/evaluation.hpp"
#include "gate/io.hpp"
#include "gate/model.hpp"
#include "gate/training.hpp"

namespace {

using namespace gate;

struct ModelFlags {
  std::string task = "RE";
  size_t d_model = 512;
  size_t n_layers = 1;
  size_t n_heads = 8;
  size_t ffn_dim = 2048;
  double dropout = 0.5;
  size_t word_emb_dim = 64;
  size_t feature_emb_dim = 30;
  std::string attention_mode = "gate";
  std::string delta;  // empty = task default; "all-unbounded" = no masking
  bool use_position = false;
  size_t max_len = 256;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--task", f.task, "Task head: RE or EARL")
      ->capture_default_str();
  cmd->add_option("--d-model", f.d_model, "Model width")
      ->capture_default_str();
  cmd->add_option("--layers", f.n_layers, "Encoder layers")
      ->capture_default_str();
  cmd->add_option("--heads", f.n_heads, "Attention heads")
      ->capture_default_str();
  cmd->add_option("--ffn-dim", f.ffn_dim, "Feed-forward width")
      ->capture_default_str();
  cmd->add_option("--dropout", f.dropout, "Dropout rate in [0,1)")
      ->capture_default_str();
  cmd->add_option("--word-dim", f.word_emb_dim, "Word embedding width")
      ->capture_default_str();
  cmd->add_option("--feature-dim", f.feature_emb_dim,
                  "Width of each tag embedding")
      ->capture_default_str();
  cmd->add_option("--attention-mode", f.attention_mode, "gate or plain")
      ->capture_default_str();
  cmd->add_option(
      "--delta", f.delta,
      "Per-head distance thresholds, e.g. 2,2,4,4,inf,inf,inf,inf; "
      "'all-unbounded' disables masking; empty picks the task default");
  cmd->add_flag("--use-position", f.use_position,
                "Add a learned sequential position embedding (breaks "
                "order-agnosticism; ablation control)");
  cmd->add_option("--max-len", f.max_len, "Maximum sentence length")
      ->capture_default_str();
}

EncoderConfig make_config(const ModelFlags& f) {
  EncoderConfig cfg;
  cfg.d_model = f.d_model;
  cfg.n_layers = f.n_layers;
  cfg.n_heads = f.n_heads;
  cfg.ffn_dim = f.ffn_dim;
  cfg.dropout = f.dropout;
  cfg.word_emb_dim = f.word_emb_dim;
  cfg.feature_emb_dim = f.feature_emb_dim;
  cfg.attention_mode = parse_attention_mode(f.attention_mode);
  if (f.delta == "all-unbounded")
    cfg.delta_schedule.assign(f.n_heads, kUnboundedDelta);
  else if (!f.delta.empty())
    cfg.delta_schedule = parse_delta_schedule(f.delta);
  cfg.use_position = f.use_position;
  cfg.max_sentence_len = f.max_len;
  return cfg;
}

void check_instance_tasks(const std::vector<TaskInstance>& instances,
                          Task task, const std::string& file) {
  for (size_t i = 0; i < instances.size(); ++i)
    if (instances[i].task != task)
      throw ConfigError(file + ": instance " + std::to_string(i + 1) +
                        " has task " + task_name(instances[i].task) +
                        ", expected " + task_name(task));
}

int cmd_distances(const std::string& treebank, const std::string& sentence_id,
                  size_t max_len) {
  auto sentences = parse_conllu(read_file(treebank), max_len);
  const DepSentence* found = nullptr;
  for (const auto& s : sentences)
    if (s.id == sentence_id) {
      found = &s;
      break;
    }
  if (!found)
    throw ConfigError("no sentence with id '" + sentence_id + "' in " +
                      treebank);
  DistanceMatrix d = pairwise_distances(*found);
  for (size_t i = 0; i < d.n; ++i) {
    for (size_t j = 0; j < d.n; ++j)
      std::cout << d.at(i, j) << (j + 1 < d.n ? "\t" : "");
    std::cout << "\n";
  }
  return 0;
}

int cmd_synth(const SynthConfig& cfg, uint64_t seed,
              const std::filesystem::path& out) {
  SynthCorpus corpus = generate_synthetic(cfg, seed);
  write_file(out / "source.conllu", to_conllu(corpus.source));
  write_file(out / "reordered.conllu", to_conllu(corpus.reordered));
  write_file(out / "source_instances.jsonl",
             instances_to_jsonl(corpus.source_instances));
  write_file(out / "reordered_instances.jsonl",
             instances_to_jsonl(corpus.reordered_instances));
  write_file(out / "permutations.txt",
             permutations_to_text(corpus.permutations));
  std::cout << "wrote " << corpus.source.size() << " sentence pairs under "
            << out.string() << "\n";
  return 0;
}

struct DataFlags {
  std::string treebank;
  std::string instances;
  std::string features;  // optional TSV of frozen word vectors
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--treebank", f.treebank, "CoNLL-U sentences")->required();
  cmd->add_option("--instances", f.instances, "JSON-Lines task instances")
      ->required();
  cmd->add_option("--features", f.features,
                  "External word-feature TSV (replaces the learned word "
                  "embeddings)");
}

struct LoadedData {
  std::vector<DepSentence> sentences;
  std::vector<TaskInstance> instances;
  FeatureMap features;
  bool has_features = false;
};

LoadedData load_data(const DataFlags& f, size_t max_len, size_t word_dim) {
  LoadedData d;
  d.sentences = parse_conllu(read_file(f.treebank), max_len);
  d.instances =
      parse_instances(read_file(f.instances), index_sentences(d.sentences));
  if (!f.features.empty()) {
    d.features = parse_word_features(read_file(f.features), word_dim);
    d.has_features = true;
  }
  return d;
}

int cmd_train(const ModelFlags& mf, const DataFlags& df,
              const std::string& dev_treebank,
              const std::string& dev_instances, const TrainConfig& tcfg,
              const std::filesystem::path& out) {
  EncoderConfig cfg = make_config(mf);
  Task task = parse_task(mf.task);
  LoadedData data = load_data(df, mf.max_len, cfg.word_emb_dim);
  check_instance_tasks(data.instances, task, df.instances);

  std::vector<DepSentence> all_sentences = data.sentences;
  if (!dev_treebank.empty()) {
    auto extra = parse_conllu(read_file(dev_treebank), mf.max_len);
    all_sentences.insert(all_sentences.end(), extra.begin(), extra.end());
  }
  std::vector<TaskInstance> dev;
  if (!dev_instances.empty()) {
    dev = parse_instances(read_file(dev_instances),
                          index_sentences(all_sentences));
    check_instance_tasks(dev, task, dev_instances);
  }

  Vocab vocab = build_vocab(data.sentences, data.instances);
  StringIndex words = build_word_index(data.sentences);
  std::mt19937_64 init_rng(tcfg.seed);
  Model model = Model::init(cfg, task, vocab, words, init_rng);

  TrainData train_data =
      make_train_data(all_sentences, data.instances, dev,
                      data.has_features ? &data.features : nullptr);
  TrainResult result = train(std::move(model), train_data, tcfg);

  write_file(out / "metrics.jsonl", metrics_to_jsonl(result.metrics));
  save_checkpoint(Checkpoint{result.best_model, result.best_epoch,
                             result.best_rng_state},
                  out / "model.ckpt");
  save_checkpoint(Checkpoint{result.final_model, tcfg.epochs,
                             result.final_rng_state},
                  out / "final.ckpt");
  std::cout << "best epoch " << result.best_epoch << " dev_f1 "
            << result.best_f1 << "; checkpoints and metrics under "
            << out.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& predictions,
             const DataFlags& df, size_t max_len,
             const std::filesystem::path& out) {
  if (checkpoint.empty() == predictions.empty())
    throw ConfigError("pass exactly one of --checkpoint or --predictions");
  std::vector<PredictionRecord> records;
  LoadedData data;
  if (!checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(checkpoint);
    const Model& model = ckpt.model;
    data = load_data(df, model.config.max_sentence_len,
                     model.config.word_emb_dim);
    check_instance_tasks(data.instances, model.task, df.instances);
    SentenceMap by_id = index_sentences(data.sentences);
    auto distances = distance_cache(data.sentences);
    SentenceBatchContext ctx{&by_id, &distances,
                             data.has_features ? &data.features : nullptr};
    records = predict_records(model, data.instances, ctx);
  } else {
    data.sentences = parse_conllu(read_file(df.treebank), max_len);
    data.instances = parse_instances(read_file(df.instances),
                                     index_sentences(data.sentences));
    records = parse_predictions(read_file(predictions));
  }
  ScoreReport report = score(records, data.instances);
  std::cout << report_to_text(report);
  if (!out.empty()) {
    write_file(out / "report.json", report_to_json(report) + "\n");
    write_file(out / "predictions.jsonl", predictions_to_jsonl(records));
  }
  return 0;
}

int cmd_predict(const std::string& checkpoint, const DataFlags& df,
                const std::filesystem::path& out) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  const Model& model = ckpt.model;
  LoadedData data =
      load_data(df, model.config.max_sentence_len, model.config.word_emb_dim);
  check_instance_tasks(data.instances, model.task, df.instances);
  SentenceMap by_id = index_sentences(data.sentences);
  auto distances = distance_cache(data.sentences);
  SentenceBatchContext ctx{&by_id, &distances,
                           data.has_features ? &data.features : nullptr};
  std::vector<PredictionRecord> records =
      predict_records(model, data.instances, ctx);
  write_file(out / "predictions.jsonl", predictions_to_jsonl(records));
  std::cout << "wrote " << records.size() << " predictions under "
            << out.string() << "\n";
  return 0;
}

// Built-in 6-token fixture: two clauses under one root, entity marks on the
// span tokens, one Near and one Far instance.
void gradcheck_fixture(std::vector<DepSentence>& sentences,
                       std::vector<TaskInstance>& instances) {
  DepSentence s;
  s.id = "fixture";
  s.tokens = {
      {"alpha", "NOUN", "nsubj", "PER", 1},
      {"binds", "VERB", "root", "O", kRootHead},
      {"the", "DET", "det", "O", 3},
      {"receptor", "NOUN", "obj", "FAC", 1},
      {"quite", "ADV", "advmod", "O", 5},
      {"tightly", "ADV", "advmod", "GPE", 1},
  };
  sentences.push_back(std::move(s));
  instances.push_back(
      {"fixture", Task::kRelation, Span{0, 1}, Span{3, 4}, "Near"});
  instances.push_back(
      {"fixture", Task::kRelation, Span{0, 2}, Span{4, 6}, "Far"});
}

int cmd_gradcheck(ModelFlags mf, const DataFlags& df, uint64_t seed,
                  double eps, double threshold) {
  mf.dropout = 0.0;  // the loss must be deterministic under re-evaluation
  EncoderConfig cfg = make_config(mf);
  Task task = parse_task(mf.task);

  std::vector<DepSentence> sentences;
  std::vector<TaskInstance> instances;
  FeatureMap features;
  bool has_features = false;
  if (!df.treebank.empty()) {
    LoadedData data = load_data(df, mf.max_len, cfg.word_emb_dim);
    sentences = std::move(data.sentences);
    instances = std::move(data.instances);
    features = std::move(data.features);
    has_features = data.has_features;
    check_instance_tasks(instances, task, df.instances);
  } else {
    gradcheck_fixture(sentences, instances);
  }

  Vocab vocab = build_vocab(sentences, instances);
  StringIndex words = build_word_index(sentences);
  std::mt19937_64 rng(seed);
  Model model = Model::init(cfg, task, vocab, words, rng);
  TrainData data = make_train_data(sentences, instances, {},
                                   has_features ? &features : nullptr);
  SentenceBatchContext ctx = data.context();

  Tape tape;
  BoundModel bound = bind_model(tape, model);
  Var loss =
      model_batch_loss(tape, bound, model, data.train_instances, ctx, {});
  tape.backward(loss);
  std::vector<Array> all_grads = model_gradients(tape, model, bound);

  std::vector<Array*> params;
  std::vector<Array> analytic;
  size_t i = 0;
  for_each_model_param(model, [&](const std::string&, Array& p) {
    if (!p.empty()) {
      params.push_back(&p);
      analytic.push_back(all_grads[i]);
    }
    ++i;
  });
  auto loss_value = [&]() {
    Tape t;
    BoundModel b = bind_model(t, model);
    return t
        .value(model_batch_loss(t, b, model, data.train_instances, ctx, {}))
        .data[0];
  };
  const double max_rel = finite_diff_check(loss_value, params, analytic, eps);
  std::cout << "max relative gradient error " << max_rel << " over "
            << params.size() << " parameter arrays (threshold " << threshold
            << ")\n";
  return max_rel < threshold ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Dependency-distance attention encoder: training and evaluation "
      "tools for relation and event-argument classification"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config appear after the subcommand name

  auto* dist_cmd =
      app.add_subcommand("distances", "Print a sentence's token-distance "
                                      "matrix as TSV");
  std::string dist_treebank, dist_id;
  size_t dist_max_len = 256;
  dist_cmd->add_option("--treebank", dist_treebank, "CoNLL-U file")
      ->required();
  dist_cmd->add_option("--sentence", dist_id, "Sentence id")->required();
  dist_cmd->add_option("--max-len", dist_max_len, "Maximum sentence length")
      ->capture_default_str();

  auto* synth_cmd = app.add_subcommand(
      "synth", "Generate the paired source/reordered synthetic corpus");
  SynthConfig synth_cfg;
  uint64_t synth_seed = 1;
  std::string synth_out;
  synth_cmd->add_option("--count", synth_cfg.count, "Sentence pairs")
      ->required();
  synth_cmd->add_option("--len-min", synth_cfg.len_min, "Minimum tokens")
      ->capture_default_str();
  synth_cmd->add_option("--len-max", synth_cfg.len_max, "Maximum tokens")
      ->capture_default_str();
  synth_cmd
      ->add_option("--near-distance", synth_cfg.near_distance,
                   "Tree distance at or under which the label is Near")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed, "RNG seed")
      ->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  ModelFlags train_mf;
  DataFlags train_df;
  std::string dev_treebank, dev_instances, train_out;
  TrainConfig tcfg;
  add_model_flags(train_cmd, train_mf);
  add_data_flags(train_cmd, train_df);
  train_cmd->add_option("--dev-treebank", dev_treebank,
                        "Extra CoNLL-U sentences for the dev instances");
  train_cmd->add_option("--dev-instances", dev_instances,
                        "Dev instance file (default: score on training "
                        "instances)");
  train_cmd->add_option("--lr", tcfg.lr, "Learning rate")
      ->capture_default_str();
  train_cmd->add_option("--lr-decay", tcfg.lr_decay, "Per-epoch decay factor")
      ->capture_default_str();
  train_cmd
      ->add_option("--decay-start", tcfg.decay_start_epoch,
                   "First epoch the decay applies after")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", tcfg.batch_size, "Instances per step")
      ->capture_default_str();
  train_cmd
      ->add_option("--max-grad-norm", tcfg.max_grad_norm,
                   "Global gradient-norm clip")
      ->capture_default_str();
  train_cmd->add_option("--epochs", tcfg.epochs, "Training epochs")
      ->required();
  train_cmd->add_option("--seed", tcfg.seed, "RNG seed")
      ->capture_default_str();
  train_cmd->add_option("--out", train_out, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand(
      "eval", "Score a checkpoint or a prediction file against gold labels");
  DataFlags eval_df;
  std::string eval_ckpt, eval_preds, eval_out;
  size_t eval_max_len = 256;
  add_data_flags(eval_cmd, eval_df);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint");
  eval_cmd->add_option("--predictions", eval_preds,
                       "Score this prediction file instead of a model");
  eval_cmd->add_option("--max-len", eval_max_len, "Maximum sentence length")
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_out,
                       "Directory for report.json and predictions.jsonl");

  auto* predict_cmd =
      app.add_subcommand("predict", "Write model predictions as JSON-Lines");
  DataFlags pred_df;
  std::string pred_ckpt, pred_out;
  add_data_flags(predict_cmd, pred_df);
  predict_cmd->add_option("--checkpoint", pred_ckpt, "Model checkpoint")
      ->required();
  predict_cmd->add_option("--out", pred_out, "Output directory")->required();

  auto* grad_cmd = app.add_subcommand(
      "gradcheck",
      "Compare analytic gradients against central finite differences");
  ModelFlags grad_mf;
  grad_mf.d_model = 16;
  grad_mf.ffn_dim = 32;
  grad_mf.word_emb_dim = 6;
  grad_mf.feature_emb_dim = 4;
  DataFlags grad_df;
  uint64_t grad_seed = 1;
  double grad_eps = 1e-5, grad_threshold = 1e-4;
  add_model_flags(grad_cmd, grad_mf);
  // data flags optional here: the default is a built-in 6-token fixture
  grad_cmd->add_option("--treebank", grad_df.treebank,
                       "CoNLL-U sentences (default: built-in fixture)");
  grad_cmd->add_option("--instances", grad_df.instances,
                       "JSON-Lines task instances")
      ->needs(grad_cmd->get_option("--treebank"));
  grad_cmd->add_option("--features", grad_df.features,
                       "External word-feature TSV");
  grad_cmd->add_option("--seed", grad_seed, "RNG seed")
      ->capture_default_str();
  grad_cmd->add_option("--eps", grad_eps, "Finite-difference step")
      ->capture_default_str();
  grad_cmd->add_option("--threshold", grad_threshold, "Pass/fail bound")
      ->capture_default_str();

  app.set_config("--config", "",
                 "Read options from a file of subcommand.key=value lines "
                 "(or key=value under a [subcommand] section); flags win");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*dist_cmd) return cmd_distances(dist_treebank, dist_id, dist_max_len);
    if (*synth_cmd) return cmd_synth(synth_cfg, synth_seed, synth_out);
    if (*train_cmd)
      return cmd_train(train_mf, train_df, dev_treebank, dev_instances, tcfg,
                       train_out);
    if (*eval_cmd)
      return cmd_eval(eval_ckpt, eval_preds, eval_df, eval_max_len, eval_out);
    if (*predict_cmd) return cmd_predict(pred_ckpt, pred_df, pred_out);
    if (*grad_cmd)
      return cmd_gradcheck(grad_mf, grad_df, grad_seed, grad_eps,
                           grad_threshold);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
