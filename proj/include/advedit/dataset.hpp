#pragma once

// Labeled tree datasets: line-delimited JSON records
//   {"tree": "<tree>", "label": <k>}
// and a synthetic motif generator.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advedit/error.hpp"
#include "advedit/random.hpp"
#include "advedit/tree.hpp"

namespace advedit {

struct Dataset {
  std::string name;
  std::vector<Tree> trees;
  std::vector<int> labels;
  Alphabet alphabet;
  int num_classes = 0;

  std::size_t size() const noexcept { return trees.size(); }
};

// Fills alphabet and num_classes; labels must cover 1..L without gaps.
inline void finalize_dataset(Dataset& d) {
  if (d.trees.empty()) throw DatasetError("dataset '" + d.name + "' is empty");
  if (d.trees.size() != d.labels.size()) throw DatasetError("dataset: one label per tree expected");
  int max_label = 0;
  for (int l : d.labels) {
    if (l < 1) throw DatasetError("dataset: labels must be >= 1, got " + std::to_string(l));
    max_label = std::max(max_label, l);
  }
  std::vector<bool> seen(static_cast<std::size_t>(max_label) + 1, false);
  for (int l : d.labels) seen[static_cast<std::size_t>(l)] = true;
  for (int l = 1; l <= max_label; ++l) {
    if (!seen[static_cast<std::size_t>(l)]) {
      throw DatasetError("dataset: labels must form 1.." + std::to_string(max_label) + " but " + std::to_string(l) +
                         " is missing");
    }
  }
  d.num_classes = max_label;
  d.alphabet = alphabet_of(d.trees);
}

inline Dataset read_dataset(std::istream& in, std::string name = "dataset") {
  Dataset d;
  d.name = std::move(name);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json rec = nlohmann::json::parse(line);
      if (!rec.is_object() || !rec.contains("tree") || !rec.contains("label")) {
        throw DatasetError("expected an object with \"tree\" and \"label\"");
      }
      d.trees.push_back(parse(rec.at("tree").get<std::string>()));
      d.labels.push_back(rec.at("label").get<int>());
    } catch (const std::exception& e) {
      throw DatasetError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  finalize_dataset(d);
  return d;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset file '" + path + "'");
  std::string name = path.substr(path.find_last_of('/') == std::string::npos ? 0 : path.find_last_of('/') + 1);
  return read_dataset(in, name);
}

inline void write_dataset(std::ostream& out, const Dataset& d) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << nlohmann::json{{"tree", serialize(d.trees[i])}, {"label", d.labels[i]}}.dump() << '\n';
  }
}

inline void save_dataset(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write dataset file '" + path + "'");
  write_dataset(out, d);
}

// ---------------------------------------------------------------------------
// Synthetic motif data. Every tree is a random background tree under a root
// labeled `root_label`; class 2 trees additionally carry the motif as a child
// of the root at a random child position (or under a random node when
// `motif_anywhere` is set). Background nodes use the alphabet minus the motif
// and root labels, so class 1 trees cannot contain the motif.

struct SynthSpec {
  std::size_t n_examples = 60;
  Alphabet alphabet{"a", "b", "c", "d", "m", "p", "q", "r"};
  std::size_t max_depth = 2;  // root has depth 0
  std::size_t max_children = 3;
  std::string motif = "m(p,q)";
  std::string root_label = "r";
  bool motif_anywhere = false;
  std::string name = "synthetic";
};

inline bool contains_subtree(const Tree& t, const Tree& pattern) {
  if (t == pattern) return true;
  for (const Tree& c : t.children()) {
    if (contains_subtree(c, pattern)) return true;
  }
  return false;
}

namespace detail {

inline Tree background_tree(Rng& rng, const Alphabet& labels, std::size_t depth, const SynthSpec& spec) {
  const std::string& label = labels[uniform_index(rng, 0, labels.size() - 1)];
  std::vector<Tree> kids;
  if (depth < spec.max_depth) {
    // The root always has a child so the motif position varies.
    const std::size_t n = uniform_index(rng, depth == 0 ? 1 : 0, spec.max_children);
    for (std::size_t k = 0; k < n; ++k) kids.push_back(background_tree(rng, labels, depth + 1, spec));
  }
  return Tree(label, std::move(kids));
}

// Attaches `motif` as child number `position` (0-based) of the preorder node `target`.
inline Tree attach(const Tree& t, std::size_t& counter, std::size_t target, std::size_t position, const Tree& motif) {
  const std::size_t self = ++counter;
  std::vector<Tree> kids;
  for (const Tree& c : t.children()) kids.push_back(attach(c, counter, target, position, motif));
  if (self == target) kids.insert(kids.begin() + static_cast<std::ptrdiff_t>(position), motif);
  return Tree(t.label(), std::move(kids));
}

}  // namespace detail

inline Dataset synth_generate(const SynthSpec& spec, Rng& rng) {
  if (spec.n_examples < 4) throw DatasetError("synthetic data needs at least 2 examples per class");
  const Tree motif = parse(spec.motif);
  const Alphabet alphabet = make_alphabet(spec.alphabet);
  Alphabet reserved{spec.root_label};
  collect_labels(motif, reserved);
  reserved = make_alphabet(reserved);
  for (const auto& l : reserved) {
    if (!std::binary_search(alphabet.begin(), alphabet.end(), l)) {
      throw DatasetError("label '" + l + "' of the motif or root is not in the synthetic alphabet");
    }
  }
  Alphabet background;
  for (const auto& l : alphabet) {
    if (!std::binary_search(reserved.begin(), reserved.end(), l)) background.push_back(l);
  }
  if (background.empty()) throw DatasetError("synthetic alphabet has no labels besides the motif and root labels");

  Dataset d;
  d.name = spec.name;
  for (std::size_t i = 0; i < spec.n_examples; ++i) {
    const Tree bg = detail::background_tree(rng, background, 0, spec);
    Tree t(spec.root_label, std::vector<Tree>(bg.children().begin(), bg.children().end()));
    const int label = static_cast<int>(i % 2) + 1;
    if (label == 2) {
      const std::size_t target = spec.motif_anywhere ? uniform_index(rng, 1, t.size()) : 1;
      const std::size_t position = uniform_index(rng, 0, PreorderView(t).arity(target));
      std::size_t counter = 0;
      t = detail::attach(t, counter, target, position, motif);
    }
    d.trees.push_back(std::move(t));
    d.labels.push_back(label);
  }
  finalize_dataset(d);
  return d;
}

}  // namespace advedit
