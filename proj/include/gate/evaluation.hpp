#pragma once

#include <string>
#include <vector>

#include "gate/corpus.hpp"
#include "gate/model.hpp"

namespace gate {

struct PredictionRecord {
  std::string sentence_id;
  Span span_a;
  Span span_b;
  std::string label;
  double probability = 0.0;
};

// Micro-averaged scores over non-None labels plus the full confusion matrix.
// labels[0] is always "None"; confusion rows are gold, columns predicted.
struct ScoreReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t correct = 0;
  size_t predicted_non_none = 0;
  size_t gold_non_none = 0;
  std::vector<std::string> labels;
  std::vector<std::vector<size_t>> confusion;

  size_t cell(const std::string& gold, const std::string& predicted) const;
};

// A prediction is correct iff its key (sentence_id, span_a, span_b) carries
// the same non-None label in gold. Gold keys without a prediction count as
// predicted None. Throws on duplicate keys on either side and on prediction
// keys absent from gold.
ScoreReport score(const std::vector<PredictionRecord>& predictions,
                  const std::vector<TaskInstance>& gold);

// Recomputes micro precision/recall/F1 from the confusion matrix alone;
// equals the scorer's f1 exactly.
double micro_f1_from_confusion(const ScoreReport& report);

std::string report_to_text(const ScoreReport& report);
std::string report_to_json(const ScoreReport& report);

std::vector<PredictionRecord> parse_predictions(const std::string& text);
std::string predictions_to_jsonl(const std::vector<PredictionRecord>& records);

// Runs the model over the instances and attaches label names and argmax
// probabilities to each key.
std::vector<PredictionRecord> predict_records(
    const Model& model, const std::vector<TaskInstance>& instances,
    const SentenceBatchContext& data);

}  // namespace gate
