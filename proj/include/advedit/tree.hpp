#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "advedit/error.hpp"

namespace advedit {

// A label is a non-empty token over [A-Za-z0-9_].
inline bool is_valid_label(std::string_view label) noexcept {
  if (label.empty()) return false;
  return std::all_of(label.begin(), label.end(), [](unsigned char ch) {
    return std::isalnum(ch) != 0 || ch == '_';
  });
}

// Ordered, labeled, rooted tree. Immutable once constructed; edits build new trees.
class Tree {
 public:
  explicit Tree(std::string label, std::vector<Tree> children = {})
      : label_(std::move(label)), children_(std::move(children)), size_(1) {
    if (!is_valid_label(label_)) {
      throw std::invalid_argument("invalid tree label '" + label_ + "'");
    }
    for (const Tree& child : children_) size_ += child.size_;
  }

  const std::string& label() const noexcept { return label_; }
  std::span<const Tree> children() const noexcept { return children_; }
  const Tree& child(std::size_t position) const { return children_.at(position); }
  std::size_t arity() const noexcept { return children_.size(); }
  bool is_leaf() const noexcept { return children_.empty(); }

  // Number of nodes, 1 + sum over children.
  std::size_t size() const noexcept { return size_; }

  friend bool operator==(const Tree& a, const Tree& b) {
    return a.size_ == b.size_ && a.label_ == b.label_ && a.children_ == b.children_;
  }

 private:
  std::string label_;
  std::vector<Tree> children_;
  std::size_t size_;
};

inline std::size_t size(const Tree& t) noexcept { return t.size(); }

namespace detail {

class TreeParser {
 public:
  explicit TreeParser(std::string_view text) : text_(text) {}

  Tree parse_all() {
    Tree result = parse_tree();
    skip_space();
    if (pos_ != text_.size()) throw ParseError("trailing input", pos_);
    return result;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])) != 0) ++pos_;
  }

  std::string parse_label() {
    skip_space();
    std::size_t start = pos_;
    while (pos_ < text_.size()) {
      unsigned char ch = static_cast<unsigned char>(text_[pos_]);
      if (std::isalnum(ch) == 0 && ch != '_') break;
      ++pos_;
    }
    if (start == pos_) {
      if (pos_ == text_.size()) throw ParseError("expected label, found end of input", pos_);
      throw ParseError(std::string("expected label, found '") + text_[pos_] + "'", pos_);
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  Tree parse_tree() {
    std::string label = parse_label();
    skip_space();
    std::vector<Tree> children;
    if (pos_ < text_.size() && text_[pos_] == '(') {
      ++pos_;
      children.push_back(parse_tree());
      for (;;) {
        skip_space();
        if (pos_ == text_.size()) throw ParseError("unbalanced parentheses: missing ')'", pos_);
        if (text_[pos_] == ',') {
          ++pos_;
          children.push_back(parse_tree());
        } else if (text_[pos_] == ')') {
          ++pos_;
          break;
        } else {
          throw ParseError(std::string("expected ',' or ')', found '") + text_[pos_] + "'", pos_);
        }
      }
    }
    return Tree(std::move(label), std::move(children));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

inline void serialize_into(const Tree& t, std::string& out) {
  out += t.label();
  if (t.is_leaf()) return;
  out += '(';
  bool first = true;
  for (const Tree& child : t.children()) {
    if (!first) out += ',';
    first = false;
    serialize_into(child, out);
  }
  out += ')';
}

}  // namespace detail

// Grammar: Tree := Label | Label '(' Tree (',' Tree)* ')', whitespace allowed between tokens.
inline Tree parse(std::string_view text) { return detail::TreeParser(text).parse_all(); }

inline std::string serialize(const Tree& t) {
  std::string out;
  out.reserve(t.size() * 3);
  detail::serialize_into(t, out);
  return out;
}

// Flattened 1-based preorder view. Index 0 is the virtual parent of the root,
// so parent(1) == 0 and every array has size()+1 slots.
class PreorderView {
 public:
  explicit PreorderView(const Tree& t) {
    const std::size_t n = t.size();
    labels_.resize(n + 1);
    parent_.assign(n + 1, 0);
    position_.assign(n + 1, 0);
    subtree_size_.assign(n + 1, 0);
    children_.resize(n + 1);
    std::size_t next = 1;
    visit(t, 0, 0, next);
    children_[0] = {1};
  }

  std::size_t size() const noexcept { return labels_.size() - 1; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  std::size_t parent(std::size_t i) const { return parent_.at(i); }
  // 1-based position among the parent's children (0 for the root).
  std::size_t child_position(std::size_t i) const { return position_.at(i); }
  std::size_t subtree_size(std::size_t i) const { return subtree_size_.at(i); }
  std::size_t arity(std::size_t i) const { return children_.at(i).size(); }
  std::span<const std::size_t> children(std::size_t i) const { return children_.at(i); }

  // True if j lies in the subtree rooted at i (including i itself).
  bool contains(std::size_t i, std::size_t j) const noexcept {
    return j >= i && j < i + subtree_size_[i];
  }

 private:
  void visit(const Tree& t, std::size_t parent, std::size_t position, std::size_t& next) {
    const std::size_t self = next++;
    labels_[self] = t.label();
    parent_[self] = parent;
    position_[self] = position;
    subtree_size_[self] = t.size();
    children_[self].reserve(t.arity());
    std::size_t pos = 1;
    for (const Tree& child : t.children()) {
      children_[self].push_back(next);
      visit(child, self, pos++, next);
    }
  }

  std::vector<std::string> labels_;
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> position_;
  std::vector<std::size_t> subtree_size_;
  std::vector<std::vector<std::size_t>> children_;
};

struct NodeInfo {
  std::string label;
  std::optional<std::size_t> parent;  // absent for the root
  std::size_t child_position = 0;     // 1-based; 0 for the root
};

inline NodeInfo node_at(const Tree& t, std::size_t index) {
  if (index < 1 || index > t.size()) {
    throw std::out_of_range("node index " + std::to_string(index) + " out of range 1.." +
                            std::to_string(t.size()));
  }
  // Walk down without flattening the whole tree.
  const Tree* node = &t;
  std::size_t current = 1;
  std::optional<std::size_t> parent;
  std::size_t position = 0;
  while (current != index) {
    std::size_t child_index = current + 1;
    std::size_t pos = 1;
    for (const Tree& child : node->children()) {
      if (index < child_index + child.size()) {
        parent = current;
        position = pos;
        node = &child;
        current = child_index;
        break;
      }
      child_index += child.size();
      ++pos;
    }
  }
  return NodeInfo{node->label(), parent, position};
}

// Sorted, duplicate-free set of labels.
using Alphabet = std::vector<std::string>;

inline void collect_labels(const Tree& t, Alphabet& out) {
  out.push_back(t.label());
  for (const Tree& child : t.children()) collect_labels(child, out);
}

inline Alphabet make_alphabet(Alphabet labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

inline Alphabet alphabet_of(std::span<const Tree> trees) {
  Alphabet labels;
  for (const Tree& t : trees) collect_labels(t, labels);
  return make_alphabet(std::move(labels));
}

}  // namespace advedit
