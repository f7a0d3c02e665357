#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "gate/error.hpp"

namespace gate {

// Head value marking the root token of a sentence.
inline constexpr int kRootHead = -1;

struct Token {
  std::string form;
  std::string upos;
  std::string deprel;
  std::string entity_type = "O";
  int head = kRootHead;  // 0-based index of the head token, kRootHead for the root
};

struct DepSentence {
  std::string id;
  std::vector<Token> tokens;

  size_t size() const { return tokens.size(); }
};

enum class Task { kRelation, kEventArgument };

Task parse_task(const std::string& tag);  // "RE" or "EARL"
const char* task_name(Task task);

// Half-open token range [begin, end).
struct Span {
  size_t begin = 0;
  size_t end = 0;

  size_t length() const { return end - begin; }
  bool operator==(const Span&) const = default;
  bool operator<(const Span& o) const {
    return begin != o.begin ? begin < o.begin : end < o.end;
  }
};

struct TaskInstance {
  std::string sentence_id;
  Task task = Task::kRelation;
  Span span_a;  // subject entity (RE) or event trigger (EARL)
  Span span_b;  // object entity (RE) or argument candidate (EARL)
  std::string label;
};

// String-to-index map with a reserved entry at index 0.
class StringIndex {
 public:
  explicit StringIndex(std::string reserved = "UNKNOWN");

  // Builds from already sorted unique names; entries get indices 1..n.
  static StringIndex from_names(const std::vector<std::string>& sorted_unique,
                                std::string reserved = "UNKNOWN");

  size_t add(const std::string& name);
  size_t lookup(const std::string& name) const;  // 0 when unknown
  const std::string& name(size_t index) const;
  size_t size() const { return names_.size(); }
  const std::string& reserved() const { return names_[0]; }
  const std::vector<std::string>& names() const { return names_; }
  bool operator==(const StringIndex& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, size_t> index_;
};

// Vocabularies for the language-universal features and the task labels.
// Index 0 is reserved in each map: UNKNOWN for the feature maps, None for
// the label map (an unknown label is scored as None).
struct Vocab {
  StringIndex upos;
  StringIndex deprel;
  StringIndex entity_type;
  StringIndex label;

  Vocab()
      : upos("UNKNOWN"),
        deprel("UNKNOWN"),
        entity_type("UNKNOWN"),
        label("None") {}

  bool operator==(const Vocab&) const = default;
};

// Throws ParseError unless the head links form a single-rooted tree.
void validate_tree(const DepSentence& sentence);

// Parses CoNLL-U text (10 tab-separated columns, blank-line separated
// sentences). Multiword-token ranges and empty nodes are skipped. HEAD=0
// becomes the root marker. Entity types come from the MISC key "Entity=".
std::vector<DepSentence> parse_conllu(const std::string& text,
                                      size_t max_len = 256);

std::string to_conllu(const std::vector<DepSentence>& sentences);

using SentenceMap = std::map<std::string, const DepSentence*>;
SentenceMap index_sentences(const std::vector<DepSentence>& sentences);

// Parses JSON-Lines task instances and validates them against the sentences.
std::vector<TaskInstance> parse_instances(const std::string& text,
                                          const SentenceMap& sentences);

std::string instances_to_jsonl(const std::vector<TaskInstance>& instances);

Vocab build_vocab(const std::vector<DepSentence>& sentences,
                  const std::vector<TaskInstance>& instances);

// Synthetic word-order-transfer corpus: random labeled trees realized twice,
// once in a fixed deterministic traversal order and once under a seeded
// token permutation. Tree topology, tags, spans and labels agree across the
// pair; the instance label is "Near" iff the tree distance between the two
// spans is at most near_distance.
struct SynthConfig {
  size_t count = 0;
  size_t len_min = 5;
  size_t len_max = 20;
  int near_distance = 2;
};

struct SynthCorpus {
  std::vector<DepSentence> source;
  std::vector<DepSentence> reordered;
  std::vector<TaskInstance> source_instances;
  std::vector<TaskInstance> reordered_instances;
  // permutations[s][i] = position in the reordered realization of the token
  // at source position i.
  std::vector<std::vector<size_t>> permutations;
};

SynthCorpus generate_synthetic(const SynthConfig& config, uint64_t seed);

std::string permutations_to_text(
    const std::vector<std::vector<size_t>>& permutations);

}  // namespace gate
