#pragma once

// Tree edit distance (Zhang & Shasha, unit costs) and backtracing to a
// sequentially applicable co-optimal edit script.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advedit/edits.hpp"
#include "advedit/parallel.hpp"
#include "advedit/tree.hpp"

namespace advedit {

// A tree annotated for the distance computation: postorder numbering,
// leftmost-leaf descendants and keyroots. Self-contained (copies labels).
class PreparedTree {
 public:
  explicit PreparedTree(const Tree& t) : view_(t) {
    const std::size_t n = view_.size();
    post_of_pre_.assign(n + 1, 0);
    pre_of_post_.assign(n + 1, 0);
    std::size_t counter = 0;
    number_postorder(1, counter);

    lmd_.assign(n + 1, 0);
    for (std::size_t k = 1; k <= n; ++k) lmd_[k] = k + 1 - view_.subtree_size(pre_of_post_[k]);

    // A keyroot is the highest node for its leftmost leaf.
    std::vector<std::size_t> highest(n + 1, 0);
    for (std::size_t k = 1; k <= n; ++k) highest[lmd_[k]] = k;
    for (std::size_t l = 1; l <= n; ++l) {
      if (highest[l] != 0) keyroots_.push_back(highest[l]);
    }
    std::sort(keyroots_.begin(), keyroots_.end());
  }

  std::size_t size() const noexcept { return view_.size(); }
  const PreorderView& preorder() const noexcept { return view_; }

  // Postorder accessors (1-based).
  const std::string& post_label(std::size_t k) const { return view_.label(pre_of_post_[k]); }
  std::size_t lmd(std::size_t k) const { return lmd_[k]; }
  std::size_t pre_of_post(std::size_t k) const { return pre_of_post_[k]; }
  std::size_t post_of_pre(std::size_t i) const { return post_of_pre_[i]; }
  std::span<const std::size_t> keyroots() const noexcept { return keyroots_; }

 private:
  void number_postorder(std::size_t node, std::size_t& counter) {
    for (std::size_t child : view_.children(node)) number_postorder(child, counter);
    ++counter;
    post_of_pre_[node] = counter;
    pre_of_post_[counter] = node;
  }

  PreorderView view_;
  std::vector<std::size_t> post_of_pre_;
  std::vector<std::size_t> pre_of_post_;
  std::vector<std::size_t> lmd_;
  std::vector<std::size_t> keyroots_;
};

// Node correspondence of a co-optimal edit script, in 1-based preorder indices.
// Unlisted nodes of the source are deleted, unlisted nodes of the target inserted.
struct TreeMapping {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

namespace detail {

class ZhangShasha {
 public:
  ZhangShasha(const PreparedTree& a, const PreparedTree& b)
      : a_(a), b_(b), cols_(b.size() + 1), td_((a.size() + 1) * (b.size() + 1), 0) {}

  int distance() {
    for (std::size_t i : a_.keyroots()) {
      for (std::size_t j : b_.keyroots()) forest_distance(i, j);
    }
    return td(a_.size(), b_.size());
  }

  // Requires distance() to have filled the tree-distance table.
  TreeMapping mapping() {
    TreeMapping result;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{a_.size(), b_.size()}};
    while (!stack.empty()) {
      auto [i, j] = stack.back();
      stack.pop_back();
      forest_distance(i, j);
      const std::size_t li = a_.lmd(i);
      const std::size_t lj = b_.lmd(j);
      const std::size_t fcols = j - lj + 2;
      auto fd = [&](std::size_t x, std::size_t y) { return fd_[x * fcols + y]; };
      std::size_t x = i - li + 1;
      std::size_t y = j - lj + 1;
      // Preference: match/replacement (or aligned subtree pair) > deletion > insertion.
      while (x > 0 || y > 0) {
        const std::size_t di = li + x - 1;
        const std::size_t dj = lj + y - 1;
        if (x > 0 && y > 0) {
          if (a_.lmd(di) == li && b_.lmd(dj) == lj) {
            int cost = a_.post_label(di) == b_.post_label(dj) ? 0 : 1;
            if (fd(x, y) == fd(x - 1, y - 1) + cost) {
              result.pairs.emplace_back(a_.pre_of_post(di), b_.pre_of_post(dj));
              --x;
              --y;
              continue;
            }
          } else {
            const std::size_t px = a_.lmd(di) - li;
            const std::size_t py = b_.lmd(dj) - lj;
            if (fd(x, y) == fd(px, py) + td(di, dj)) {
              stack.emplace_back(di, dj);
              x = px;
              y = py;
              continue;
            }
          }
        }
        if (x > 0 && fd(x, y) == fd(x - 1, y) + 1) {
          --x;
        } else {
          --y;
        }
      }
    }
    std::sort(result.pairs.begin(), result.pairs.end());
    return result;
  }

 private:
  int td(std::size_t i, std::size_t j) const { return td_[i * cols_ + j]; }

  void forest_distance(std::size_t i, std::size_t j) {
    const std::size_t li = a_.lmd(i);
    const std::size_t lj = b_.lmd(j);
    const std::size_t rows = i - li + 2;
    const std::size_t fcols = j - lj + 2;
    fd_.assign(rows * fcols, 0);
    for (std::size_t x = 1; x < rows; ++x) fd_[x * fcols] = static_cast<int>(x);
    for (std::size_t y = 1; y < fcols; ++y) fd_[y] = static_cast<int>(y);
    for (std::size_t x = 1; x < rows; ++x) {
      const std::size_t di = li + x - 1;
      const bool a_whole = a_.lmd(di) == li;
      for (std::size_t y = 1; y < fcols; ++y) {
        const std::size_t dj = lj + y - 1;
        const int del = fd_[(x - 1) * fcols + y] + 1;
        const int ins = fd_[x * fcols + y - 1] + 1;
        int best = std::min(del, ins);
        if (a_whole && b_.lmd(dj) == lj) {
          const int rep = fd_[(x - 1) * fcols + y - 1] + (a_.post_label(di) == b_.post_label(dj) ? 0 : 1);
          best = std::min(best, rep);
          td_[di * cols_ + dj] = best;
        } else {
          const std::size_t px = a_.lmd(di) - li;
          const std::size_t py = b_.lmd(dj) - lj;
          best = std::min(best, fd_[px * fcols + py] + td_[di * cols_ + dj]);
        }
        fd_[x * fcols + y] = best;
      }
    }
  }

  const PreparedTree& a_;
  const PreparedTree& b_;
  std::size_t cols_;
  std::vector<int> td_;
  std::vector<int> fd_;
};

}  // namespace detail

inline int ted(const PreparedTree& x, const PreparedTree& y) {
  return detail::ZhangShasha(x, y).distance();
}

inline int ted(const Tree& x, const Tree& y) { return ted(PreparedTree(x), PreparedTree(y)); }

inline TreeMapping ted_mapping(const PreparedTree& x, const PreparedTree& y) {
  detail::ZhangShasha dp(x, y);
  dp.distance();
  return dp.mapping();
}

// Turns a valid tree mapping into a script whose prefixes are all applicable:
// deletions in decreasing source preorder, then replacements, then insertions
// in increasing target preorder.
inline EditScript script_from_mapping(const PreorderView& x, const PreorderView& y,
                                      const TreeMapping& mapping) {
  const std::size_t nx = x.size();
  const std::size_t ny = y.size();
  std::vector<std::size_t> image(nx + 1, 0);
  std::vector<bool> present(ny + 1, false);
  for (auto [i, j] : mapping.pairs) {
    image[i] = j;
    present[j] = true;
  }

  EditScript script;
  for (std::size_t i = nx; i >= 1; --i) {
    if (image[i] == 0) script.emplace_back(Deletion{i});
  }

  std::size_t rank = 0;
  for (std::size_t i = 1; i <= nx; ++i) {
    if (image[i] == 0) continue;
    ++rank;
    if (x.label(i) != y.label(image[i])) script.emplace_back(Replacement{rank, y.label(image[i])});
  }

  // The working tree is always y restricted to `present`.
  auto nearest_present_ancestor = [&](std::size_t w) {
    std::size_t p = y.parent(w);
    while (p != 0 && !present[p]) p = y.parent(p);
    return p;
  };
  for (std::size_t u = 1; u <= ny; ++u) {
    if (present[u]) continue;
    if (u == 1) {
      script.emplace_back(Insertion{0, 1, 1, y.label(1)});
      present[1] = true;
      continue;
    }
    const std::size_t p = y.parent(u);
    std::size_t index = 0;
    for (std::size_t w = 1; w <= p; ++w) index += present[w] ? 1 : 0;
    std::size_t position = 1;
    std::size_t adopted = 0;
    const std::size_t end = p + y.subtree_size(p);
    for (std::size_t w = p + 1; w < end; ++w) {
      if (!present[w] || nearest_present_ancestor(w) != p) continue;
      if (w < u) {
        ++position;
      } else if (y.contains(u, w)) {
        ++adopted;
      }
    }
    script.emplace_back(Insertion{index, position, adopted, y.label(u)});
    present[u] = true;
  }
  return script;
}

inline EditScript backtrace(const PreparedTree& x, const PreparedTree& y) {
  return script_from_mapping(x.preorder(), y.preorder(), ted_mapping(x, y));
}

inline EditScript backtrace(const Tree& x, const Tree& y) {
  return backtrace(PreparedTree(x), PreparedTree(y));
}

// Symmetric matrix of pairwise distances, stored row-major.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), values_(n * n, 0) {}

  std::size_t size() const noexcept { return n_; }
  int operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, int d) {
    values_[i * n_ + j] = d;
    values_[j * n_ + i] = d;
  }

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<int> values_;
};

inline DistanceMatrix pairwise_ted(std::span<const PreparedTree> trees, std::size_t threads = 0) {
  const std::size_t n = trees.size();
  DistanceMatrix result(n);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * (n - (n > 0 ? 1 : 0)) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  std::vector<int> values(pairs.size());
  parallel_for(
      pairs.size(), [&](std::size_t k) { values[k] = ted(trees[pairs[k].first], trees[pairs[k].second]); },
      threads);
  for (std::size_t k = 0; k < pairs.size(); ++k) result.set(pairs[k].first, pairs[k].second, values[k]);
  return result;
}

inline DistanceMatrix pairwise_ted(std::span<const Tree> trees, std::size_t threads = 0) {
  std::vector<PreparedTree> prepared;
  prepared.reserve(trees.size());
  for (const Tree& t : trees) prepared.emplace_back(t);
  return pairwise_ted(std::span<const PreparedTree>(prepared), threads);
}

}  // namespace advedit
