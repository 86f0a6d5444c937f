#pragma once

// Exhaustive fragment-enumeration oracles for the tree kernels. Each tree is
// mapped to an explicit feature vector (fragment -> weight); a kernel value is
// the inner product of two such vectors. Fragment encodings:
//   expanded node : label[child,child,...]   (label[] for an expanded leaf)
//   frontier node : label                    (SST only: production not included)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "advedit/tree.hpp"

namespace advedit::testing {

using FeatureVector = std::unordered_map<std::string, double>;

inline double dot(const FeatureVector& a, const FeatureVector& b) {
  const FeatureVector& small = a.size() <= b.size() ? a : b;
  const FeatureVector& large = a.size() <= b.size() ? b : a;
  double sum = 0.0;
  for (const auto& [key, w] : small) {
    if (auto it = large.find(key); it != large.end()) sum += w * it->second;
  }
  return sum;
}

inline std::string complete_subtree(const Tree& t) {
  std::string s = t.label() + "[";
  for (std::size_t k = 0; k < t.arity(); ++k) {
    if (k > 0) s += ',';
    s += complete_subtree(t.child(k));
  }
  return s + "]";
}

inline void for_each_node(const Tree& t, const auto& fn) {
  fn(t);
  for (const Tree& c : t.children()) for_each_node(c, fn);
}

// ST: features are complete subtrees, each with weight lambda^(size/2) per side.
inline FeatureVector st_features(const Tree& t, double lambda) {
  FeatureVector f;
  for_each_node(t, [&](const Tree& v) {
    f[complete_subtree(v)] += std::pow(lambda, 0.5 * static_cast<double>(v.size()));
  });
  return f;
}

// Fragments rooted at v that contain v's whole production; each child is either
// a frontier node or one of its own fragments. Second: number of expanded nodes.
inline std::vector<std::pair<std::string, int>> sst_fragments(const Tree& v) {
  std::vector<std::pair<std::string, int>> partial{{"", 1}};
  for (std::size_t k = 0; k < v.arity(); ++k) {
    const Tree& c = v.child(k);
    std::vector<std::pair<std::string, int>> options{{c.label(), 0}};
    for (auto& frag : sst_fragments(c)) options.push_back(std::move(frag));
    std::vector<std::pair<std::string, int>> next;
    for (const auto& [prefix, count] : partial) {
      for (const auto& [frag, expanded] : options) {
        next.emplace_back(prefix + (k > 0 ? "," : "") + frag, count + expanded);
      }
    }
    partial = std::move(next);
  }
  std::vector<std::pair<std::string, int>> out;
  for (auto& [body, count] : partial) out.emplace_back(v.label() + "[" + body + "]", count);
  return out;
}

inline FeatureVector sst_features(const Tree& t, double lambda) {
  FeatureVector f;
  for_each_node(t, [&](const Tree& v) {
    for (const auto& [frag, expanded] : sst_fragments(v)) {
      f[frag] += std::pow(lambda, 0.5 * static_cast<double>(expanded));
    }
  });
  return f;
}

// Partial-tree embeddings rooted at v: any ordered subsequence of children,
// each replaced by one of its own embeddings. The per-side weight is
// sqrt(mu) * lambda^span (lambda for the empty subsequence) times the
// children's weights, with mu = lambda.
inline std::vector<std::pair<std::string, double>> pt_embeddings(const Tree& v, double lambda) {
  const std::size_t m = v.arity();
  std::vector<std::vector<std::pair<std::string, double>>> child_emb;
  for (std::size_t k = 0; k < m; ++k) child_emb.push_back(pt_embeddings(v.child(k), lambda));
  std::vector<std::pair<std::string, double>> out;
  const double root = std::sqrt(lambda);
  out.emplace_back(v.label() + "[]", root * lambda);
  for (std::size_t mask = 1; mask < (std::size_t{1} << m); ++mask) {
    std::vector<std::size_t> chosen;
    for (std::size_t k = 0; k < m; ++k) {
      if ((mask >> k) & 1U) chosen.push_back(k);
    }
    const double span = static_cast<double>(chosen.back() - chosen.front() + 1);
    std::vector<std::pair<std::string, double>> partial{{"", root * std::pow(lambda, span)}};
    for (std::size_t idx = 0; idx < chosen.size(); ++idx) {
      std::vector<std::pair<std::string, double>> next;
      for (const auto& [prefix, w] : partial) {
        for (const auto& [emb, cw] : child_emb[chosen[idx]]) {
          next.emplace_back(prefix + (idx > 0 ? "," : "") + emb, w * cw);
        }
      }
      partial = std::move(next);
    }
    for (auto& [body, w] : partial) out.emplace_back(v.label() + "[" + body + "]", w);
  }
  return out;
}

inline FeatureVector pt_features(const Tree& t, double lambda) {
  FeatureVector f;
  for_each_node(t, [&](const Tree& v) {
    for (const auto& [frag, w] : pt_embeddings(v, lambda)) f[frag] += w;
  });
  return f;
}

// Sparse feature vectors with fragment strings interned to integer ids, for
// exhaustive sweeps over many tree pairs.
using SparseFeatures = std::vector<std::pair<std::size_t, double>>;

class FragmentInterner {
 public:
  SparseFeatures intern(const FeatureVector& f) {
    SparseFeatures out;
    out.reserve(f.size());
    for (const auto& [key, w] : f) {
      auto [it, inserted] = ids_.try_emplace(key, ids_.size());
      out.emplace_back(it->second, w);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::unordered_map<std::string, std::size_t> ids_;
};

inline double dot(const SparseFeatures& a, const SparseFeatures& b) {
  double sum = 0.0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (i->first < j->first) {
      ++i;
    } else if (j->first < i->first) {
      ++j;
    } else {
      sum += i->second * j->second;
      ++i;
      ++j;
    }
  }
  return sum;
}

}  // namespace advedit::testing
