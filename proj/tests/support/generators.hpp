#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "advedit/random.hpp"
#include "advedit/tree.hpp"

namespace advedit::testing {

struct GrowNode {
  std::string label;
  std::vector<std::size_t> children;
};

// Random ordered tree with exactly `size` nodes: each new node is attached to a
// uniformly chosen existing node at a uniformly chosen child position.
inline Tree random_tree(Rng& rng, std::size_t size, const std::vector<std::string>& alphabet) {
  std::vector<GrowNode> nodes;
  nodes.reserve(size);
  auto label = [&]() { return alphabet[uniform_index(rng, 0, alphabet.size() - 1)]; };
  nodes.push_back({label(), {}});
  for (std::size_t k = 1; k < size; ++k) {
    std::size_t parent = uniform_index(rng, 0, nodes.size() - 1);
    std::size_t pos = uniform_index(rng, 0, nodes[parent].children.size());
    nodes.push_back({label(), {}});
    auto& kids = nodes[parent].children;
    kids.insert(kids.begin() + static_cast<std::ptrdiff_t>(pos), nodes.size() - 1);
  }
  auto build = [&](auto&& self, std::size_t at) -> Tree {
    std::vector<Tree> kids;
    for (std::size_t c : nodes[at].children) kids.push_back(self(self, c));
    return Tree(nodes[at].label, std::move(kids));
  };
  return build(build, 0);
}

inline Tree random_tree_upto(Rng& rng, std::size_t max_size, const std::vector<std::string>& alphabet) {
  return random_tree(rng, uniform_index(rng, 1, max_size), alphabet);
}

inline const std::vector<std::string>& abc() {
  static const std::vector<std::string> labels{"a", "b", "c"};
  return labels;
}

// All ordered trees with exactly n nodes over `alphabet`.
inline std::vector<Tree> all_trees(std::size_t n, const std::vector<std::string>& alphabet);

// All forests (ordered sequences of trees) with exactly n nodes in total.
inline std::vector<std::vector<Tree>> all_forests(std::size_t n, const std::vector<std::string>& alphabet) {
  std::vector<std::vector<Tree>> out;
  if (n == 0) {
    out.emplace_back();
    return out;
  }
  for (std::size_t first = 1; first <= n; ++first) {
    auto heads = all_trees(first, alphabet);
    auto tails = all_forests(n - first, alphabet);
    for (const Tree& h : heads) {
      for (const auto& tail : tails) {
        std::vector<Tree> f{h};
        f.insert(f.end(), tail.begin(), tail.end());
        out.push_back(std::move(f));
      }
    }
  }
  return out;
}

inline std::vector<Tree> all_trees(std::size_t n, const std::vector<std::string>& alphabet) {
  std::vector<Tree> out;
  if (n == 0) return out;
  for (const auto& forest : all_forests(n - 1, alphabet)) {
    for (const auto& label : alphabet) out.emplace_back(label, forest);
  }
  return out;
}

}  // namespace advedit::testing
