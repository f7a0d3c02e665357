#include "gate/corpus.hpp"

#include <set>

#include "doctest.h"
#include "gate/syntax.hpp"
#include "support.hpp"

using namespace gate;

namespace {

const char* kTinyTreebank =
    "# sent_id = fire-01\n"
    "# text = ignored comment\n"
    "1\tThe\t_\tDET\t_\t_\t2\tdet\t_\t_\n"
    "2\tfire\t_\tNOUN\t_\t_\t3\tnsubj\t_\tEntity=EVENT\n"
    "3-4\tleft's\t_\t_\t_\t_\t_\t_\t_\t_\n"
    "3\tleft\t_\tVERB\t_\t_\t0\troot\t_\t_\n"
    "4\tpeople\t_\tNOUN\t_\t_\t3\tobj\t_\tLoc=x|Entity=PER\n"
    "4.1\telided\t_\t_\t_\t_\t_\t_\t_\t_\n"
    "5\tdead\t_\tADJ\t_\t_\t4\tamod\t_\t_\n"
    "\n";

}  // namespace

TEST_CASE("conllu parsing extracts tokens, heads, and entity marks") {
  auto sentences = parse_conllu(kTinyTreebank);
  REQUIRE(sentences.size() == 1);
  const DepSentence& s = sentences[0];
  CHECK(s.id == "fire-01");
  REQUIRE(s.size() == 5);  // the 3-4 range line and the 4.1 node are skipped
  CHECK(s.tokens[0].form == "The");
  CHECK(s.tokens[0].head == 1);
  CHECK(s.tokens[1].entity_type == "EVENT");
  CHECK(s.tokens[2].head == kRootHead);
  CHECK(s.tokens[3].entity_type == "PER");  // second key in MISC
  CHECK(s.tokens[4].entity_type == "O");
  CHECK(s.tokens[4].upos == "ADJ");
  CHECK(s.tokens[4].deprel == "amod");
}

TEST_CASE("conllu sentences without sent_id get ordinal ids") {
  auto sentences = parse_conllu(
      "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n\n"
      "1\tb\t_\tX\t_\t_\t0\troot\t_\t_\n\n");
  REQUIRE(sentences.size() == 2);
  CHECK(sentences[0].id == "s1");
  CHECK(sentences[1].id == "s2");
}

TEST_CASE("conllu roundtrip preserves every field") {
  auto first = parse_conllu(kTinyTreebank);
  auto second = parse_conllu(to_conllu(first));
  REQUIRE(second.size() == first.size());
  for (size_t i = 0; i < first[0].size(); ++i) {
    CHECK(first[0].tokens[i].form == second[0].tokens[i].form);
    CHECK(first[0].tokens[i].upos == second[0].tokens[i].upos);
    CHECK(first[0].tokens[i].deprel == second[0].tokens[i].deprel);
    CHECK(first[0].tokens[i].entity_type == second[0].tokens[i].entity_type);
    CHECK(first[0].tokens[i].head == second[0].tokens[i].head);
  }
}

TEST_CASE("conllu parse errors name the offending line") {
  CHECK_THROWS_WITH_AS(parse_conllu("1\ta\tb\n"),
                       doctest::Contains("line 1: expected 10"), ParseError);
  CHECK_THROWS_WITH_AS(
      parse_conllu("1\ta\t_\tX\t_\t_\tz\troot\t_\t_\n"),
      doctest::Contains("non-integer HEAD"), ParseError);
  CHECK_THROWS_WITH_AS(
      parse_conllu("2\ta\t_\tX\t_\t_\t0\troot\t_\t_\n"),
      doctest::Contains("consecutive"), ParseError);
  // 1 -> 2 -> 1 cycle with a root elsewhere
  CHECK_THROWS_WITH_AS(parse_conllu("1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n"
                                    "2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n"
                                    "3\tc\t_\tX\t_\t_\t0\troot\t_\t_\n\n"),
                       doctest::Contains("cycle"), ParseError);
  CHECK_THROWS_WITH_AS(parse_conllu("1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n"
                                    "2\tb\t_\tX\t_\t_\t0\troot\t_\t_\n\n"),
                       doctest::Contains("multiple roots"), ParseError);
  CHECK_THROWS_WITH_AS(parse_conllu("1\ta\t_\tX\t_\t_\t9\tdep\t_\t_\n"
                                    "2\tb\t_\tX\t_\t_\t0\troot\t_\t_\n\n"),
                       doctest::Contains("head index out of range"),
                       ParseError);
}

TEST_CASE("max sentence length is enforced at parse time") {
  std::string text;
  for (int i = 1; i <= 4; ++i)
    text += std::to_string(i) + "\tw\t_\tX\t_\t_\t" +
            (i == 1 ? std::string("0\troot") : std::string("1\tdep")) +
            "\t_\t_\n";
  text += "\n";
  CHECK(parse_conllu(text, 4).size() == 1);
  CHECK_THROWS_WITH_AS(parse_conllu(text, 3),
                       doctest::Contains("exceeds maximum length 3"),
                       ParseError);
}

TEST_CASE("validate_tree rejects malformed head structures") {
  DepSentence s;
  s.id = "bad";
  CHECK_THROWS_WITH_AS(validate_tree(s), doctest::Contains("empty"),
                       ParseError);
  s.tokens = {{"a", "X", "dep", "O", 0}};
  CHECK_THROWS_WITH_AS(validate_tree(s), doctest::Contains("own head"),
                       ParseError);
  s.tokens = {{"a", "X", "dep", "O", 1}, {"b", "X", "dep", "O", 0}};
  CHECK_THROWS_WITH_AS(validate_tree(s), doctest::Contains("no root"),
                       ParseError);
}

TEST_CASE("index_sentences rejects duplicate ids") {
  auto sentences = parse_conllu(
      "# sent_id = dup\n1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n\n"
      "# sent_id = dup\n1\tb\t_\tX\t_\t_\t0\troot\t_\t_\n\n");
  CHECK_THROWS_WITH_AS(index_sentences(sentences),
                       doctest::Contains("duplicate sentence id"), ParseError);
}

TEST_CASE("StringIndex reserves slot zero and is idempotent") {
  StringIndex idx("UNKNOWN");
  CHECK(idx.size() == 1);
  CHECK(idx.lookup("x") == 0);
  size_t first = idx.add("x");
  CHECK(first == 1);
  CHECK(idx.add("x") == 1);
  CHECK(idx.add("y") == 2);
  CHECK(idx.lookup("y") == 2);
  CHECK(idx.name(2) == "y");
  CHECK_THROWS_AS(idx.name(3), Error);
  auto from = StringIndex::from_names({"a", "b"}, "None");
  CHECK(from.reserved() == "None");
  CHECK(from.lookup("b") == 2);
}

TEST_CASE("task tags parse both ways") {
  CHECK(parse_task("RE") == Task::kRelation);
  CHECK(parse_task("EARL") == Task::kEventArgument);
  CHECK(std::string(task_name(Task::kEventArgument)) == "EARL");
  CHECK_THROWS_AS(parse_task("re"), ParseError);
}

TEST_CASE("instance parsing validates spans against the sentences") {
  auto sentences = parse_conllu(
      "# sent_id = s\n"
      "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n"
      "2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n"
      "3\tc\t_\tX\t_\t_\t1\tdep\t_\t_\n\n");
  auto map = index_sentences(sentences);

  auto good = parse_instances(
      R"({"sentence_id":"s","task":"RE","span_a":[0,1],"span_b":[1,3],"label":"R"})"
      "\n",
      map);
  REQUIRE(good.size() == 1);
  CHECK(good[0].span_b == Span{1, 3});
  CHECK(good[0].label == "R");

  CHECK_THROWS_WITH_AS(
      parse_instances(
          R"({"sentence_id":"s","task":"RE","span_a":[1,1],"span_b":[1,2],"label":"R"})",
          map),
      doctest::Contains("empty span"), ParseError);
  CHECK_THROWS_WITH_AS(
      parse_instances(
          R"({"sentence_id":"s","task":"RE","span_a":[0,1],"span_b":[2,4],"label":"R"})",
          map),
      doctest::Contains("out of bounds"), ParseError);
  CHECK_THROWS_WITH_AS(
      parse_instances(
          R"({"sentence_id":"nope","task":"RE","span_a":[0,1],"span_b":[1,2],"label":"R"})",
          map),
      doctest::Contains("unknown sentence id"), ParseError);
  CHECK_THROWS_WITH_AS(
      parse_instances(
          R"({"sentence_id":"s","task":"XX","span_a":[0,1],"span_b":[1,2],"label":"R"})",
          map),
      doctest::Contains("unknown task tag"), ParseError);
  CHECK_THROWS_WITH_AS(
      parse_instances(R"({"task":"RE","span_a":[0,1],"span_b":[1,2]})", map),
      doctest::Contains("missing key"), ParseError);
  CHECK_THROWS_WITH_AS(parse_instances("{not json", map),
                       doctest::Contains("line 1"), ParseError);
}

TEST_CASE("instances roundtrip through jsonl") {
  auto sentences = parse_conllu(
      "# sent_id = s\n"
      "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n"
      "2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\n");
  auto map = index_sentences(sentences);
  std::vector<TaskInstance> instances = {
      {"s", Task::kRelation, {0, 1}, {1, 2}, "Near"},
      {"s", Task::kEventArgument, {1, 2}, {0, 1}, "None"},
  };
  auto parsed = parse_instances(instances_to_jsonl(instances), map);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].task == Task::kRelation);
  CHECK(parsed[1].task == Task::kEventArgument);
  CHECK(parsed[1].span_a == Span{1, 2});
  CHECK(parsed[1].label == "None");
}

TEST_CASE("build_vocab sorts names after the reserved slot") {
  auto sentences = parse_conllu(
      "1\tzz\t_\tVERB\t_\t_\t0\troot\t_\tEntity=PER\n"
      "2\taa\t_\tNOUN\t_\t_\t1\tnsubj\t_\t_\n\n");
  std::vector<TaskInstance> instances = {
      {"s1", Task::kRelation, {0, 1}, {1, 2}, "B"},
      {"s1", Task::kRelation, {1, 2}, {0, 1}, "A"},
  };
  Vocab v = build_vocab(sentences, instances);
  CHECK(v.upos.names() == std::vector<std::string>{"UNKNOWN", "NOUN", "VERB"});
  CHECK(v.entity_type.names() ==
        std::vector<std::string>{"UNKNOWN", "O", "PER"});
  CHECK(v.label.names() == std::vector<std::string>{"None", "A", "B"});
  CHECK(v.upos.lookup("X") == 0);
  CHECK(v.label.lookup("None") == 0);
}

TEST_CASE("synthetic corpus is deterministic and label-consistent") {
  SynthConfig cfg;
  cfg.count = 40;
  cfg.len_min = 4;
  cfg.len_max = 12;
  SynthCorpus a = generate_synthetic(cfg, 123);
  SynthCorpus b = generate_synthetic(cfg, 123);
  CHECK(to_conllu(a.source) == to_conllu(b.source));
  CHECK(to_conllu(a.reordered) == to_conllu(b.reordered));
  CHECK(instances_to_jsonl(a.source_instances) ==
        instances_to_jsonl(b.source_instances));
  CHECK(permutations_to_text(a.permutations) ==
        permutations_to_text(b.permutations));
  SynthCorpus c = generate_synthetic(cfg, 124);
  CHECK(to_conllu(a.source) != to_conllu(c.source));

  REQUIRE(a.source.size() == cfg.count);
  REQUIRE(a.reordered.size() == cfg.count);
  std::set<std::string> labels;
  for (size_t s = 0; s < cfg.count; ++s) {
    const DepSentence& src = a.source[s];
    CHECK(src.size() >= cfg.len_min);
    CHECK(src.size() <= cfg.len_max);
    CHECK_NOTHROW(validate_tree(src));
    CHECK_NOTHROW(validate_tree(a.reordered[s]));

    // The label restates the tree distance rule.
    const TaskInstance& inst = a.source_instances[s];
    DistanceMatrix d = pairwise_distances(src);
    bool near = d.at(inst.span_a.begin, inst.span_b.begin) <=
                cfg.near_distance;
    CHECK(inst.label == (near ? "Near" : "None"));
    labels.insert(inst.label);
    CHECK(src.tokens[inst.span_a.begin].entity_type == "PER");
    CHECK(src.tokens[inst.span_b.begin].entity_type == "FAC");

    // The reordered realization is the source under the recorded permutation.
    const auto& perm = a.permutations[s];
    const DepSentence& re = a.reordered[s];
    REQUIRE(perm.size() == src.size());
    for (size_t i = 0; i < src.size(); ++i) {
      const Token& st = src.tokens[i];
      const Token& rt = re.tokens[perm[i]];
      CHECK(st.form == rt.form);
      CHECK(st.upos == rt.upos);
      CHECK(st.deprel == rt.deprel);
      CHECK(st.entity_type == rt.entity_type);
      if (st.head == kRootHead)
        CHECK(rt.head == kRootHead);
      else
        CHECK(rt.head == static_cast<int>(perm[static_cast<size_t>(st.head)]));
    }
    const TaskInstance& rinst = a.reordered_instances[s];
    CHECK(rinst.label == inst.label);
    CHECK(rinst.span_a.begin == perm[inst.span_a.begin]);
    CHECK(rinst.span_b.begin == perm[inst.span_b.begin]);
  }
  CHECK(labels.size() == 2);  // both classes are represented

  CHECK_THROWS_AS(generate_synthetic(SynthConfig{5, 9, 3, 2}, 1), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(SynthConfig{5, 1, 3, 2}, 1), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(SynthConfig{5, 4, 8, 0}, 1), ConfigError);
}

TEST_CASE("permutation text is one space-separated line per sentence") {
  CHECK(permutations_to_text({{2, 0, 1}, {0, 1}}) == "2 0 1\n0 1\n");
}
