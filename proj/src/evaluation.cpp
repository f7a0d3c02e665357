#include "gate/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace gate {

using nlohmann::json;

namespace {

using Key = std::tuple<std::string, Span, Span>;

Key key_of(const std::string& id, const Span& a, const Span& b) {
  return Key{id, a, b};
}

std::string key_string(const Key& k) {
  std::ostringstream out;
  out << std::get<0>(k) << " [" << std::get<1>(k).begin << ","
      << std::get<1>(k).end << ") [" << std::get<2>(k).begin << ","
      << std::get<2>(k).end << ")";
  return out.str();
}

double safe_ratio(size_t num, size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

size_t ScoreReport::cell(const std::string& gold,
                         const std::string& predicted) const {
  auto find = [this](const std::string& name) {
    auto it = std::find(labels.begin(), labels.end(), name);
    if (it == labels.end()) throw Error("label '" + name + "' not in report");
    return static_cast<size_t>(it - labels.begin());
  };
  return confusion[find(gold)][find(predicted)];
}

ScoreReport score(const std::vector<PredictionRecord>& predictions,
                  const std::vector<TaskInstance>& gold) {
  std::map<Key, std::string> gold_by_key;
  for (const auto& g : gold) {
    auto [it, fresh] = gold_by_key.emplace(
        key_of(g.sentence_id, g.span_a, g.span_b), g.label);
    if (!fresh) throw Error("duplicate gold key " + key_string(it->first));
  }
  std::map<Key, std::string> pred_by_key;
  for (const auto& p : predictions) {
    Key k = key_of(p.sentence_id, p.span_a, p.span_b);
    if (!gold_by_key.count(k))
      throw Error("prediction for unknown instance " + key_string(k));
    if (!pred_by_key.emplace(k, p.label).second)
      throw Error("duplicate prediction key " + key_string(k));
  }

  ScoreReport report;
  std::set<std::string> names;
  for (const auto& [k, label] : gold_by_key) names.insert(label);
  for (const auto& [k, label] : pred_by_key) names.insert(label);
  names.erase("None");
  report.labels.push_back("None");
  report.labels.insert(report.labels.end(), names.begin(), names.end());
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < report.labels.size(); ++i)
    index[report.labels[i]] = i;
  report.confusion.assign(report.labels.size(),
                          std::vector<size_t>(report.labels.size(), 0));

  for (const auto& [k, gold_label] : gold_by_key) {
    auto pit = pred_by_key.find(k);
    const std::string pred_label =
        pit == pred_by_key.end() ? "None" : pit->second;
    ++report.confusion[index[gold_label]][index[pred_label]];
    if (gold_label != "None") ++report.gold_non_none;
    if (pred_label != "None") {
      ++report.predicted_non_none;
      if (pred_label == gold_label) ++report.correct;
    }
  }

  report.precision = safe_ratio(report.correct, report.predicted_non_none);
  report.recall = safe_ratio(report.correct, report.gold_non_none);
  report.f1 = report.precision + report.recall == 0.0
                  ? 0.0
                  : 2.0 * report.precision * report.recall /
                        (report.precision + report.recall);
  return report;
}

double micro_f1_from_confusion(const ScoreReport& report) {
  size_t correct = 0, predicted = 0, gold = 0;
  const size_t k = report.labels.size();
  for (size_t g = 0; g < k; ++g) {
    for (size_t p = 0; p < k; ++p) {
      const size_t count = report.confusion[g][p];
      if (p != 0) predicted += count;
      if (g != 0) gold += count;
      if (g == p && p != 0) correct += count;
    }
  }
  const double prec = safe_ratio(correct, predicted);
  const double rec = safe_ratio(correct, gold);
  return prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
}

std::string report_to_text(const ScoreReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "precision " << report.precision << " (" << report.correct << "/"
      << report.predicted_non_none << ")\n";
  out << "recall    " << report.recall << " (" << report.correct << "/"
      << report.gold_non_none << ")\n";
  out << "micro-F1  " << report.f1 << "\n\n";

  size_t width = 9;  // fits "gold\\pred"
  for (const auto& l : report.labels) width = std::max(width, l.size());
  out << std::left << std::setw(static_cast<int>(width)) << "gold\\pred";
  for (const auto& l : report.labels)
    out << "  " << std::setw(static_cast<int>(width)) << l;
  out << "\n";
  for (size_t g = 0; g < report.labels.size(); ++g) {
    out << std::setw(static_cast<int>(width)) << report.labels[g];
    for (size_t p = 0; p < report.labels.size(); ++p)
      out << "  " << std::setw(static_cast<int>(width))
          << report.confusion[g][p];
    out << "\n";
  }
  return out.str();
}

std::string report_to_json(const ScoreReport& report) {
  json object;
  object["precision"] = report.precision;
  object["recall"] = report.recall;
  object["f1"] = report.f1;
  object["correct"] = report.correct;
  object["predicted_non_none"] = report.predicted_non_none;
  object["gold_non_none"] = report.gold_non_none;
  object["labels"] = report.labels;
  object["confusion"] = report.confusion;
  return object.dump();
}

std::vector<PredictionRecord> parse_predictions(const std::string& text) {
  std::vector<PredictionRecord> records;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json object;
    try {
      object = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    for (const char* key :
         {"sentence_id", "span_a", "span_b", "label", "probability"}) {
      if (!object.contains(key))
        throw ParseError("line " + std::to_string(line_no) +
                         ": missing key \"" + std::string(key) + "\"");
    }
    PredictionRecord r;
    r.sentence_id = object["sentence_id"].get<std::string>();
    auto span = [&](const char* key) {
      const json& v = object[key];
      if (!v.is_array() || v.size() != 2)
        throw ParseError("line " + std::to_string(line_no) + ": " + key +
                         " must be a [begin, end) pair");
      return Span{v[0].get<size_t>(), v[1].get<size_t>()};
    };
    r.span_a = span("span_a");
    r.span_b = span("span_b");
    r.label = object["label"].get<std::string>();
    r.probability = object["probability"].get<double>();
    records.push_back(std::move(r));
  }
  return records;
}

std::string predictions_to_jsonl(
    const std::vector<PredictionRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) {
    json object;
    object["sentence_id"] = r.sentence_id;
    object["span_a"] = {r.span_a.begin, r.span_a.end};
    object["span_b"] = {r.span_b.begin, r.span_b.end};
    object["label"] = r.label;
    object["probability"] = r.probability;
    out << object.dump() << "\n";
  }
  return out.str();
}

std::vector<PredictionRecord> predict_records(
    const Model& model, const std::vector<TaskInstance>& instances,
    const SentenceBatchContext& data) {
  std::vector<Prediction> raw = predict(model, instances, data);
  std::vector<PredictionRecord> records;
  records.reserve(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    PredictionRecord r;
    r.sentence_id = instances[i].sentence_id;
    r.span_a = instances[i].span_a;
    r.span_b = instances[i].span_b;
    r.label = model.vocab.label.name(raw[i].label);
    r.probability = raw[i].probs.data[raw[i].label];
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace gate
