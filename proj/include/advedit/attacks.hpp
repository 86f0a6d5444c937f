#pragma once

// Black-box edit attacks: a random baseline (doubling plus bisection) and the
// backtracing attack that walks a co-optimal script towards a reference tree.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advedit/classifier.hpp"
#include "advedit/edits.hpp"
#include "advedit/error.hpp"
#include "advedit/random.hpp"
#include "advedit/ted.hpp"
#include "advedit/tree.hpp"

namespace advedit {

enum class AttackMethod { random, backtracing };

inline std::string method_name(AttackMethod m) { return m == AttackMethod::random ? "random" : "backtrace"; }

inline AttackMethod method_from_name(const std::string& name) {
  if (name == "random") return AttackMethod::random;
  if (name == "backtrace" || name == "backtracing") return AttackMethod::backtracing;
  throw AttackError("unknown attack method '" + name + "'");
}

struct AttackResult {
  AttackMethod method = AttackMethod::backtracing;
  Tree origin{"x"};
  std::optional<Tree> adversarial;   // absent when the attack failed to change the label
  EditScript prefix;                 // applied edits; adversarial = apply_script(origin, prefix)
  std::size_t queries = 0;
  std::optional<int> adversarial_label;
  std::optional<int> d_zx;
  std::optional<int> d_zy;           // to the nearest disqualifying pool member
  std::optional<double> ratio;
  std::optional<std::size_t> reference;  // pool index of the backtracing target
  bool success = false;
  bool no_disqualifier = false;      // pool had no member with another label
  std::string failure;               // reason when no adversarial tree was produced
};

// Correctly classified training points.
class ReferencePool {
 public:
  struct Member {
    Tree tree;
    PreparedTree prepared;
    int label;
  };

  ReferencePool() = default;

  void add(const Tree& t, int label) { members_.push_back({t, PreparedTree(t), label}); }

  std::size_t size() const noexcept { return members_.size(); }
  bool empty() const noexcept { return members_.empty(); }
  const Member& operator[](std::size_t i) const { return members_.at(i); }
  std::span<const Member> members() const noexcept { return members_; }

 private:
  std::vector<Member> members_;
};

// Keeps the examples the classifier labels correctly.
inline ReferencePool build_reference_pool(std::span<const Tree> trees, std::span<const int> labels,
                                          const Classifier& model) {
  if (trees.size() != labels.size()) throw AttackError("reference pool: one label per tree expected");
  ReferencePool pool;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    if (model.predict(trees[i]) == labels[i]) pool.add(trees[i], labels[i]);
  }
  return pool;
}

// Nearest eligible member (label == target, or label != true_label when
// untargeted); ties go to the smallest index.
inline std::size_t select_reference(const Tree& x, int true_label, const ReferencePool& pool,
                                    std::optional<int> target = std::nullopt) {
  PreparedTree px(x);
  std::optional<std::size_t> best;
  int best_d = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& m = pool[i];
    const bool eligible = target ? m.label == *target : m.label != true_label;
    if (!eligible) continue;
    const int d = ted(px, m.prepared);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (!best) {
    throw AttackError(target ? "no reference tree with label " + std::to_string(*target) + " in the pool"
                             : "no reference tree with a label other than " + std::to_string(true_label));
  }
  return *best;
}

// Bisection over the prefixes of backtrace(x, y) for the shortest
// one the classifier assigns to `target_label` (the label of y).
inline AttackResult backtracing_attack(const Tree& x, ClassifierHandle& f, const Tree& y, int target_label) {
  EditScript script = backtrace(x, y);
  if (script.empty()) throw AttackError("backtracing attack: origin and reference are identical");
  const std::size_t before = f.query_count();

  // trees[j] = prefix-j application, built once.
  std::vector<Tree> trees;
  trees.reserve(script.size() + 1);
  trees.push_back(x);
  for (const TreeEdit& e : script) trees.push_back(apply_edit(trees.back(), e));

  std::size_t lo = 1;
  std::size_t hi = script.size();
  while (lo < hi) {
    const std::size_t j = (lo + hi) / 2;
    if (f.predict(trees[j]) != target_label) {
      lo = j + 1;
    } else {
      hi = j;
    }
  }

  AttackResult r;
  r.method = AttackMethod::backtracing;
  r.origin = x;
  r.adversarial = trees[hi];
  r.prefix.assign(script.begin(), script.begin() + static_cast<std::ptrdiff_t>(hi));
  r.adversarial_label = target_label;
  r.queries = f.query_count() - before;
  r.d_zx = ted(*r.adversarial, x);
  return r;
}

// Draws the next edit of a random script; the default is random_edit.
using EditSampler = std::function<TreeEdit(const Tree&, Rng&)>;

// Random baseline: queries f(x), then grows one random script and probes the
// lengths 1, 2, 4, ... (clamped to `cap`) until the label changes; the
// shortest label-changing prefix is then located by bisection between the
// last unchanged probe and the first changed one.
inline AttackResult random_attack(const Tree& x, ClassifierHandle& f, std::span<const std::string> alphabet, Rng& rng,
                                  std::size_t cap = 100, const EditSampler& sampler = {}) {
  if (cap == 0) throw AttackError("random attack: the edit budget must be at least 1");
  const std::size_t before = f.query_count();
  AttackResult r;
  r.method = AttackMethod::random;
  r.origin = x;

  const int original = f.predict(x);
  EditScript script;
  std::vector<Tree> trees{x};
  auto grow_to = [&](std::size_t length) {
    while (script.size() < length) {
      script.push_back(sampler ? sampler(trees.back(), rng) : random_edit(trees.back(), alphabet, rng));
      trees.push_back(apply_edit(trees.back(), script.back()));
    }
  };

  std::size_t previous = 0;
  std::size_t length = 1;
  std::optional<int> flipped_label;
  for (;;) {
    grow_to(length);
    const int label = f.predict(trees[length]);
    if (label != original) {
      flipped_label = label;
      break;
    }
    if (length == cap) break;
    previous = length;
    length = std::min(2 * length, cap);
  }

  if (!flipped_label) {
    r.queries = f.query_count() - before;
    r.failure = "label unchanged after " + std::to_string(cap) + " edits";
    return r;
  }

  // The prefix `hi` always carries an observed label change, so no final re-query is needed.
  std::size_t lo = previous + 1;
  std::size_t hi = length;
  int hi_label = *flipped_label;
  while (lo < hi) {
    const std::size_t j = (lo + hi) / 2;
    const int label = f.predict(trees[j]);
    if (label == original) {
      lo = j + 1;
    } else {
      hi = j;
      hi_label = label;
    }
  }

  r.adversarial = trees[hi];
  r.prefix.assign(script.begin(), script.begin() + static_cast<std::ptrdiff_t>(hi));
  r.adversarial_label = hi_label;
  r.queries = f.query_count() - before;
  r.d_zx = ted(*r.adversarial, x);
  return r;
}

struct SuccessVerdict {
  bool success = false;
  int d_zx = 0;
  std::optional<int> d_zy;
  std::optional<double> ratio;
  std::optional<std::size_t> nearest;
  bool no_disqualifier = false;
};

// z succeeds if it is strictly closer to x than to every pool member whose
// label differs from x's true label.
inline SuccessVerdict evaluate_success(const Tree& x, int x_label, const Tree& z, const ReferencePool& pool) {
  SuccessVerdict v;
  PreparedTree pz(z);
  v.d_zx = ted(pz, PreparedTree(x));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].label == x_label) continue;
    const int d = ted(pz, pool[i].prepared);
    if (!v.d_zy || d < *v.d_zy) {
      v.d_zy = d;
      v.nearest = i;
    }
  }
  if (!v.d_zy) {
    v.success = true;
    v.no_disqualifier = true;
    return v;
  }
  v.success = v.d_zx < *v.d_zy;
  // z coinciding with a pool member leaves the ratio undefined.
  if (*v.d_zy > 0) v.ratio = static_cast<double>(v.d_zx) / static_cast<double>(*v.d_zy);
  return v;
}

struct AttackOptions {
  AttackMethod method = AttackMethod::backtracing;
  std::size_t cap = 100;
  bool targeted = false;  // target the next class cyclically instead of the nearest other label
};

// Attacks one correctly classified point and evaluates the outcome. Uses a
// fresh handle so the recorded queries belong to this attack alone.
inline AttackResult attack_point(const Tree& x, int x_label, const Classifier& model, const ReferencePool& pool,
                                 std::span<const std::string> alphabet, const AttackOptions& options, Rng& rng) {
  ClassifierHandle f(model);
  AttackResult r;
  if (options.method == AttackMethod::backtracing) {
    std::optional<int> target;
    if (options.targeted) target = x_label % model.num_classes() + 1;
    std::size_t ref = 0;
    try {
      ref = select_reference(x, x_label, pool, target);
    } catch (const AttackError& e) {
      r.method = AttackMethod::backtracing;
      r.origin = x;
      r.failure = e.what();
      return r;
    }
    r = backtracing_attack(x, f, pool[ref].tree, pool[ref].label);
    r.reference = ref;
  } else {
    r = random_attack(x, f, alphabet, rng, options.cap);
  }
  if (!r.adversarial) return r;
  SuccessVerdict v = evaluate_success(x, x_label, *r.adversarial, pool);
  r.d_zx = v.d_zx;
  r.d_zy = v.d_zy;
  r.ratio = v.ratio;
  r.no_disqualifier = v.no_disqualifier;
  r.success = v.success && r.adversarial_label.has_value() && *r.adversarial_label != x_label;
  return r;
}

}  // namespace advedit
