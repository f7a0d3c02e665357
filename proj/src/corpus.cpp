#include "gate/corpus.hpp"

#include <algorithm>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "gate/syntax.hpp"
#include "json.hpp"

namespace gate {

using nlohmann::json;

Task parse_task(const std::string& tag) {
  if (tag == "RE") return Task::kRelation;
  if (tag == "EARL") return Task::kEventArgument;
  throw ParseError("unknown task tag \"" + tag + "\" (expected RE or EARL)");
}

const char* task_name(Task task) {
  return task == Task::kRelation ? "RE" : "EARL";
}

StringIndex::StringIndex(std::string reserved) {
  names_.push_back(std::move(reserved));
  index_[names_[0]] = 0;
}

StringIndex StringIndex::from_names(const std::vector<std::string>& sorted_unique,
                                    std::string reserved) {
  StringIndex out(std::move(reserved));
  for (const auto& name : sorted_unique) out.add(name);
  return out;
}

size_t StringIndex::add(const std::string& name) {
  auto it = index_.find(name);
  if (it != index_.end()) return it->second;
  size_t id = names_.size();
  names_.push_back(name);
  index_[name] = id;
  return id;
}

size_t StringIndex::lookup(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? 0 : it->second;
}

const std::string& StringIndex::name(size_t index) const {
  if (index >= names_.size()) throw Error("string index out of range");
  return names_[index];
}

void validate_tree(const DepSentence& sentence) {
  const size_t n = sentence.size();
  if (n == 0) throw ParseError("sentence \"" + sentence.id + "\": empty sentence");
  int root = -1;
  for (size_t i = 0; i < n; ++i) {
    int head = sentence.tokens[i].head;
    if (head == kRootHead) {
      if (root >= 0)
        throw ParseError("sentence \"" + sentence.id + "\": multiple roots");
      root = static_cast<int>(i);
      continue;
    }
    if (head < 0 || static_cast<size_t>(head) >= n)
      throw ParseError("sentence \"" + sentence.id + "\": head index out of range");
    if (static_cast<size_t>(head) == i)
      throw ParseError("sentence \"" + sentence.id + "\": token is its own head");
  }
  if (root < 0) throw ParseError("sentence \"" + sentence.id + "\": no root");

  // Every non-root token has exactly one head, so reaching all n tokens from
  // the root is equivalent to the links forming a single tree.
  std::vector<std::vector<size_t>> children(n);
  for (size_t i = 0; i < n; ++i) {
    int head = sentence.tokens[i].head;
    if (head != kRootHead) children[static_cast<size_t>(head)].push_back(i);
  }
  std::vector<char> seen(n, 0);
  std::queue<size_t> queue;
  queue.push(static_cast<size_t>(root));
  seen[static_cast<size_t>(root)] = 1;
  size_t reached = 1;
  while (!queue.empty()) {
    size_t at = queue.front();
    queue.pop();
    for (size_t child : children[at]) {
      if (!seen[child]) {
        seen[child] = 1;
        ++reached;
        queue.push(child);
      }
    }
  }
  if (reached != n)
    throw ParseError("sentence \"" + sentence.id + "\": cycle detected");
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

bool parse_int(const std::string& text, long& out) {
  if (text.empty()) return false;
  size_t pos = 0;
  try {
    out = std::stol(text, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == text.size();
}

std::string misc_entity(const std::string& misc) {
  if (misc == "_" || misc.empty()) return "O";
  for (const auto& item : split(misc, '|')) {
    if (item.rfind("Entity=", 0) == 0) return item.substr(7);
  }
  return "O";
}

struct PendingSentence {
  std::string id;
  std::vector<Token> tokens;
  size_t first_line = 0;
};

}  // namespace

std::vector<DepSentence> parse_conllu(const std::string& text, size_t max_len) {
  std::vector<DepSentence> sentences;
  PendingSentence pending;
  size_t sentence_ordinal = 0;

  auto flush = [&](size_t line_no) {
    if (pending.tokens.empty()) return;
    ++sentence_ordinal;
    DepSentence sent;
    sent.id = pending.id.empty() ? "s" + std::to_string(sentence_ordinal)
                                 : pending.id;
    sent.tokens = std::move(pending.tokens);
    if (sent.size() > max_len)
      throw ParseError("line " + std::to_string(line_no) + ": sentence \"" +
                       sent.id + "\" exceeds maximum length " +
                       std::to_string(max_len));
    try {
      validate_tree(sent);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(pending.first_line) + ": " +
                       e.what());
    }
    sentences.push_back(std::move(sent));
    pending = PendingSentence{};
  };

  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush(line_no);
      continue;
    }
    if (line[0] == '#') {
      const std::string key = "# sent_id = ";
      if (line.rfind(key, 0) == 0) pending.id = line.substr(key.size());
      continue;
    }

    auto fields = split(line, '\t');
    if (fields.size() != 10)
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected 10 tab-separated columns, got " +
                       std::to_string(fields.size()));

    const std::string& id_col = fields[0];
    if (id_col.find('-') != std::string::npos) continue;  // multiword token
    if (id_col.find('.') != std::string::npos) continue;  // empty node

    long token_id = 0;
    if (!parse_int(id_col, token_id) || token_id <= 0)
      throw ParseError("line " + std::to_string(line_no) +
                       ": malformed token id \"" + id_col + "\"");
    if (pending.tokens.empty()) pending.first_line = line_no;
    if (static_cast<size_t>(token_id) != pending.tokens.size() + 1)
      throw ParseError("line " + std::to_string(line_no) +
                       ": token ids must be consecutive from 1, got " +
                       id_col);

    long head = 0;
    if (!parse_int(fields[6], head) || head < 0)
      throw ParseError("line " + std::to_string(line_no) +
                       ": non-integer HEAD \"" + fields[6] + "\"");

    Token token;
    token.form = fields[1];
    token.upos = fields[3];
    token.deprel = fields[7];
    token.entity_type = misc_entity(fields[9]);
    token.head = head == 0 ? kRootHead : static_cast<int>(head - 1);
    pending.tokens.push_back(std::move(token));
  }
  flush(line_no + 1);
  return sentences;
}

std::string to_conllu(const std::vector<DepSentence>& sentences) {
  std::ostringstream out;
  for (const auto& sent : sentences) {
    out << "# sent_id = " << sent.id << "\n";
    for (size_t i = 0; i < sent.size(); ++i) {
      const Token& t = sent.tokens[i];
      out << (i + 1) << '\t' << t.form << '\t' << "_" << '\t' << t.upos << '\t'
          << "_" << '\t' << "_" << '\t'
          << (t.head == kRootHead ? 0 : t.head + 1) << '\t' << t.deprel
          << '\t' << "_" << '\t'
          << (t.entity_type == "O" ? "_" : "Entity=" + t.entity_type) << "\n";
    }
    out << "\n";
  }
  return out.str();
}

SentenceMap index_sentences(const std::vector<DepSentence>& sentences) {
  SentenceMap map;
  for (const auto& sent : sentences) {
    if (!map.emplace(sent.id, &sent).second)
      throw ParseError("duplicate sentence id \"" + sent.id + "\"");
  }
  return map;
}

namespace {

Span parse_span(const json& value, const std::string& key, size_t line_no) {
  if (!value.is_array() || value.size() != 2 || !value[0].is_number_integer() ||
      !value[1].is_number_integer())
    throw ParseError("line " + std::to_string(line_no) + ": " + key +
                     " must be a [begin, end) integer pair");
  long begin = value[0].get<long>();
  long end = value[1].get<long>();
  if (begin < 0 || end < 0)
    throw ParseError("line " + std::to_string(line_no) + ": " + key +
                     " has negative bounds");
  if (begin >= end)
    throw ParseError("line " + std::to_string(line_no) + ": empty span " + key);
  return Span{static_cast<size_t>(begin), static_cast<size_t>(end)};
}

}  // namespace

std::vector<TaskInstance> parse_instances(const std::string& text,
                                          const SentenceMap& sentences) {
  std::vector<TaskInstance> instances;
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
    for (const char* key : {"sentence_id", "task", "span_a", "span_b", "label"}) {
      if (!object.contains(key))
        throw ParseError("line " + std::to_string(line_no) +
                         ": missing key \"" + std::string(key) + "\"");
    }

    TaskInstance inst;
    inst.sentence_id = object["sentence_id"].get<std::string>();
    try {
      inst.task = parse_task(object["task"].get<std::string>());
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    inst.span_a = parse_span(object["span_a"], "span_a", line_no);
    inst.span_b = parse_span(object["span_b"], "span_b", line_no);
    inst.label = object["label"].get<std::string>();

    auto it = sentences.find(inst.sentence_id);
    if (it == sentences.end())
      throw ParseError("line " + std::to_string(line_no) +
                       ": unknown sentence id \"" + inst.sentence_id + "\"");
    size_t n = it->second->size();
    if (inst.span_a.end > n || inst.span_b.end > n)
      throw ParseError("line " + std::to_string(line_no) +
                       ": span out of bounds for sentence \"" +
                       inst.sentence_id + "\" of length " + std::to_string(n));
    instances.push_back(std::move(inst));
  }
  return instances;
}

std::string instances_to_jsonl(const std::vector<TaskInstance>& instances) {
  std::ostringstream out;
  for (const auto& inst : instances) {
    json object;
    object["sentence_id"] = inst.sentence_id;
    object["task"] = task_name(inst.task);
    object["span_a"] = {inst.span_a.begin, inst.span_a.end};
    object["span_b"] = {inst.span_b.begin, inst.span_b.end};
    object["label"] = inst.label;
    out << object.dump() << "\n";
  }
  return out.str();
}

Vocab build_vocab(const std::vector<DepSentence>& sentences,
                  const std::vector<TaskInstance>& instances) {
  std::set<std::string> upos, deprel, entity, labels;
  for (const auto& sent : sentences) {
    for (const auto& token : sent.tokens) {
      upos.insert(token.upos);
      deprel.insert(token.deprel);
      entity.insert(token.entity_type);
    }
  }
  for (const auto& inst : instances) labels.insert(inst.label);

  auto build = [](const std::set<std::string>& names, const char* reserved) {
    StringIndex index(reserved);
    for (const auto& name : names)
      if (name != reserved) index.add(name);  // sets iterate in sorted order
    return index;
  };
  Vocab vocab;
  vocab.upos = build(upos, "UNKNOWN");
  vocab.deprel = build(deprel, "UNKNOWN");
  vocab.entity_type = build(entity, "UNKNOWN");
  vocab.label = build(labels, "None");
  return vocab;
}

namespace {

// Fixed deterministic traversal used for the source-order realization:
// preorder walk from the root, children in ascending node-id order.
std::vector<size_t> preorder(const std::vector<int>& heads) {
  const size_t n = heads.size();
  std::vector<std::vector<size_t>> children(n);
  size_t root = 0;
  for (size_t i = 0; i < n; ++i) {
    if (heads[i] == kRootHead)
      root = i;
    else
      children[static_cast<size_t>(heads[i])].push_back(i);
  }
  std::vector<size_t> order;
  order.reserve(n);
  std::vector<size_t> stack{root};
  while (!stack.empty()) {
    size_t at = stack.back();
    stack.pop_back();
    order.push_back(at);
    for (auto it = children[at].rbegin(); it != children[at].rend(); ++it)
      stack.push_back(*it);
  }
  return order;
}

constexpr const char* kUposChoices[] = {"ADJ", "ADV", "NOUN", "PRON", "VERB"};
constexpr const char* kDeprelChoices[] = {"advmod", "amod",  "conj",
                                          "nmod",   "nsubj", "obj"};

}  // namespace

SynthCorpus generate_synthetic(const SynthConfig& config, uint64_t seed) {
  if (config.len_min < 2 || config.len_min > config.len_max)
    throw ConfigError("empty sentence length range [" +
                      std::to_string(config.len_min) + ", " +
                      std::to_string(config.len_max) + "]");
  if (config.near_distance < 1)
    throw ConfigError("near distance must be >= 1");

  std::mt19937_64 rng(seed);
  SynthCorpus corpus;

  for (size_t s = 0; s < config.count; ++s) {
    const size_t n = config.len_min == config.len_max
                         ? config.len_min
                         : std::uniform_int_distribution<size_t>(
                               config.len_min, config.len_max)(rng);

    // Random recursive tree in node-id space: node 0 is the root, each later
    // node picks an earlier one as head.
    std::vector<int> heads(n, kRootHead);
    for (size_t i = 1; i < n; ++i)
      heads[i] = static_cast<int>(
          std::uniform_int_distribution<size_t>(0, i - 1)(rng));

    std::vector<Token> node_tokens(n);
    for (size_t i = 0; i < n; ++i) {
      Token& t = node_tokens[i];
      t.form = "w" + std::to_string(
                         std::uniform_int_distribution<size_t>(0, 29)(rng));
      t.upos = kUposChoices[std::uniform_int_distribution<size_t>(0, 4)(rng)];
      t.deprel =
          kDeprelChoices[std::uniform_int_distribution<size_t>(0, 5)(rng)];
      t.head = heads[i];
    }

    const auto order = preorder(heads);  // order[k] = node id at position k
    std::vector<size_t> position_of(n);
    for (size_t k = 0; k < n; ++k) position_of[order[k]] = k;

    DepSentence source;
    source.id = "syn" + std::to_string(s);
    source.tokens.resize(n);
    for (size_t k = 0; k < n; ++k) {
      Token t = node_tokens[order[k]];
      t.head = t.head == kRootHead
                   ? kRootHead
                   : static_cast<int>(position_of[static_cast<size_t>(t.head)]);
      source.tokens[k] = std::move(t);
    }

    const DistanceMatrix dist = pairwise_distances(source);

    // Pick the two marked tokens, alternating the target label so both
    // classes are represented; fall back to any pair when the target class
    // does not exist in this tree.
    const bool want_near = s % 2 == 0;
    std::uniform_int_distribution<size_t> pick(0, n - 1);
    size_t a = 0, b = 1;
    for (int attempt = 0; attempt < 64; ++attempt) {
      size_t ca = pick(rng);
      size_t cb = pick(rng);
      if (ca == cb) continue;
      a = ca;
      b = cb;
      if ((dist.at(a, b) <= config.near_distance) == want_near) break;
    }
    const std::string label =
        dist.at(a, b) <= config.near_distance ? "Near" : "None";
    source.tokens[a].entity_type = "PER";
    source.tokens[b].entity_type = "FAC";

    TaskInstance inst;
    inst.sentence_id = source.id;
    inst.task = Task::kRelation;
    inst.span_a = Span{a, a + 1};
    inst.span_b = Span{b, b + 1};
    inst.label = label;

    // Seeded permutation: perm[i] = reordered position of source position i.
    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);

    DepSentence reordered;
    reordered.id = source.id;
    reordered.tokens.resize(n);
    for (size_t i = 0; i < n; ++i) {
      Token t = source.tokens[i];
      t.head = t.head == kRootHead
                   ? kRootHead
                   : static_cast<int>(perm[static_cast<size_t>(t.head)]);
      reordered.tokens[perm[i]] = std::move(t);
    }

    TaskInstance reordered_inst = inst;
    reordered_inst.span_a = Span{perm[a], perm[a] + 1};
    reordered_inst.span_b = Span{perm[b], perm[b] + 1};

    corpus.source.push_back(std::move(source));
    corpus.reordered.push_back(std::move(reordered));
    corpus.source_instances.push_back(std::move(inst));
    corpus.reordered_instances.push_back(std::move(reordered_inst));
    corpus.permutations.push_back(std::move(perm));
  }
  return corpus;
}

std::string permutations_to_text(
    const std::vector<std::vector<size_t>>& permutations) {
  std::ostringstream out;
  for (const auto& perm : permutations) {
    for (size_t i = 0; i < perm.size(); ++i) {
      if (i) out << ' ';
      out << perm[i];
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace gate
