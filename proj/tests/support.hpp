#pragma once

// Shared fixtures for the unit tests: random trees, token permutations,
// random arrays, and a scratch directory for file-based tests.

#include <filesystem>
#include <random>
#include <unistd.h>
#include <string>
#include <vector>

#include "gate/corpus.hpp"
#include "gate/numerics.hpp"

namespace testsupport {

inline gate::Array random_array(size_t rows, size_t cols, std::mt19937_64& rng,
                                double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  gate::Array a(rows, cols);
  for (double& v : a.data) v = dist(rng);
  return a;
}

// Random single-rooted tree: token i's head is uniform over earlier tokens.
inline gate::DepSentence random_tree(size_t n, std::mt19937_64& rng,
                                     const std::string& id = "t") {
  static const char* kUpos[] = {"NOUN", "VERB", "ADJ", "ADV", "PRON"};
  static const char* kDeprel[] = {"nsubj", "obj", "amod", "advmod", "conj"};
  gate::DepSentence s;
  s.id = id;
  s.tokens.resize(n);
  for (size_t i = 0; i < n; ++i) {
    gate::Token& t = s.tokens[i];
    t.form = "w" + std::to_string(rng() % (n + 2));
    t.upos = kUpos[rng() % 5];
    t.deprel = i == 0 ? "root" : kDeprel[rng() % 5];
    t.entity_type = rng() % 4 == 0 ? "PER" : "O";
    t.head = i == 0 ? gate::kRootHead
                    : static_cast<int>(rng() % i);
  }
  return s;
}

// Applies a token permutation: the token at source position i moves to
// position perm[i], heads relabeled to match.
inline gate::DepSentence permute_sentence(const gate::DepSentence& s,
                                          const std::vector<size_t>& perm) {
  gate::DepSentence out;
  out.id = s.id + "_perm";
  out.tokens.resize(s.tokens.size());
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    gate::Token t = s.tokens[i];
    if (t.head != gate::kRootHead)
      t.head = static_cast<int>(perm[static_cast<size_t>(t.head)]);
    out.tokens[perm[i]] = std::move(t);
  }
  return out;
}

inline std::vector<size_t> random_permutation(size_t n, std::mt19937_64& rng) {
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

// Per-process scratch directory, created on first use.
inline std::filesystem::path scratch_dir() {
  static const std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() /
             ("gate_tests_" + std::to_string(::getpid()));
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

}  // namespace testsupport
