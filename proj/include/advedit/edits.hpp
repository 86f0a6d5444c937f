#pragma once

#include <cctype>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "advedit/error.hpp"
#include "advedit/random.hpp"
#include "advedit/tree.hpp"

namespace advedit {

// del(i): remove node i, splicing its children into its parent at its position.
struct Deletion {
  std::size_t node = 0;
  friend bool operator==(const Deletion&, const Deletion&) = default;
};

// rep(i,a): relabel node i with a.
struct Replacement {
  std::size_t node = 0;
  std::string label;
  friend bool operator==(const Replacement&, const Replacement&) = default;
};

// ins(i,c,C,a): new node labeled a becomes the c-th child of node i and adopts
// the C former children at positions c..c+C-1. Node 0 is the virtual parent of
// the root; ins(0,1,1,a) puts a new root above the current one.
struct Insertion {
  std::size_t node = 0;
  std::size_t position = 1;
  std::size_t adopted = 0;
  std::string label;
  friend bool operator==(const Insertion&, const Insertion&) = default;
};

using TreeEdit = std::variant<Deletion, Replacement, Insertion>;
using EditScript = std::vector<TreeEdit>;

inline std::string to_string(const TreeEdit& edit) {
  struct Printer {
    std::string operator()(const Deletion& d) const { return "del(" + std::to_string(d.node) + ")"; }
    std::string operator()(const Replacement& r) const {
      return "rep(" + std::to_string(r.node) + "," + r.label + ")";
    }
    std::string operator()(const Insertion& i) const {
      return "ins(" + std::to_string(i.node) + "," + std::to_string(i.position) + "," +
             std::to_string(i.adopted) + "," + i.label + ")";
    }
  };
  return std::visit(Printer{}, edit);
}

inline std::string to_string(std::span<const TreeEdit> script) {
  std::string out;
  for (std::size_t k = 0; k < script.size(); ++k) {
    if (k > 0) out += ';';
    out += to_string(script[k]);
  }
  return out;
}

namespace detail {

inline std::size_t node_arity(const Tree& t, std::size_t index) {
  const Tree* node = &t;
  std::size_t current = 1;
  while (current != index) {
    std::size_t child_index = current + 1;
    for (const Tree& child : node->children()) {
      if (index < child_index + child.size()) {
        node = &child;
        current = child_index;
        break;
      }
      child_index += child.size();
    }
  }
  return node->arity();
}

class EditParser {
 public:
  explicit EditParser(std::string_view text) : text_(text) {}

  EditScript parse_script() {
    EditScript script;
    skip_space();
    if (pos_ == text_.size()) return script;
    script.push_back(parse_edit());
    for (;;) {
      skip_space();
      if (pos_ == text_.size()) break;
      expect(';');
      script.push_back(parse_edit());
    }
    return script;
  }

  TreeEdit parse_single() {
    TreeEdit edit = parse_edit();
    skip_space();
    if (pos_ != text_.size()) throw ParseError("trailing input", pos_);
    return edit;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])) != 0) ++pos_;
  }

  void expect(char ch) {
    skip_space();
    if (pos_ == text_.size() || text_[pos_] != ch) {
      throw ParseError(std::string("expected '") + ch + "'", pos_);
    }
    ++pos_;
  }

  std::string token() {
    skip_space();
    std::size_t start = pos_;
    while (pos_ < text_.size()) {
      unsigned char ch = static_cast<unsigned char>(text_[pos_]);
      if (std::isalnum(ch) == 0 && ch != '_') break;
      ++pos_;
    }
    if (start == pos_) throw ParseError("expected token", pos_);
    return std::string(text_.substr(start, pos_ - start));
  }

  std::size_t number() {
    skip_space();
    std::size_t at = pos_;
    std::string tok = token();
    if (tok.find_first_not_of("0123456789") != std::string::npos || tok.size() > 18) {
      throw ParseError("expected non-negative integer", at);
    }
    return static_cast<std::size_t>(std::stoull(tok));
  }

  TreeEdit parse_edit() {
    skip_space();
    std::size_t at = pos_;
    std::string kind = token();
    expect('(');
    TreeEdit edit;
    if (kind == "del") {
      edit = Deletion{number()};
    } else if (kind == "rep") {
      std::size_t node = number();
      expect(',');
      edit = Replacement{node, token()};
    } else if (kind == "ins") {
      Insertion ins;
      ins.node = number();
      expect(',');
      ins.position = number();
      expect(',');
      ins.adopted = number();
      expect(',');
      ins.label = token();
      edit = std::move(ins);
    } else {
      throw ParseError("unknown edit '" + kind + "'", at);
    }
    expect(')');
    return edit;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// Returns the reason an edit is not applicable, or nullopt.
inline std::optional<std::string> edit_violation(const Tree& t, const TreeEdit& edit) {
  const std::size_t n = t.size();
  auto out_of_range = [n](std::size_t i) {
    return "node index " + std::to_string(i) + " out of range 1.." + std::to_string(n);
  };
  if (const auto* d = std::get_if<Deletion>(&edit)) {
    if (d->node < 1 || d->node > n) return out_of_range(d->node);
    if (d->node == 1 && t.arity() != 1) {
      return "cannot delete a root with " + std::to_string(t.arity()) + " children";
    }
    return std::nullopt;
  }
  if (const auto* r = std::get_if<Replacement>(&edit)) {
    if (r->node < 1 || r->node > n) return out_of_range(r->node);
    if (!is_valid_label(r->label)) return "invalid label '" + r->label + "'";
    return std::nullopt;
  }
  const auto& ins = std::get<Insertion>(edit);
  if (!is_valid_label(ins.label)) return "invalid label '" + ins.label + "'";
  if (ins.node == 0) {
    if (ins.position != 1 || ins.adopted != 1) {
      return "insertion above the root must be ins(0,1,1,a)";
    }
    return std::nullopt;
  }
  if (ins.node > n) return out_of_range(ins.node);
  const std::size_t arity = node_arity(t, ins.node);
  if (ins.position < 1 || ins.position > arity + 1) {
    return "child position " + std::to_string(ins.position) + " out of range 1.." +
           std::to_string(arity + 1);
  }
  if (ins.position - 1 + ins.adopted > arity) {
    return "cannot adopt " + std::to_string(ins.adopted) + " children from position " +
           std::to_string(ins.position) + " of a node with " + std::to_string(arity) + " children";
  }
  return std::nullopt;
}

// Rebuilds `t` (whose preorder index is `self`) with the edit applied below or at it.
inline Tree rebuild(const Tree& t, std::size_t self, const TreeEdit& edit, std::size_t target) {
  if (target < self || target >= self + t.size()) return t;
  std::vector<Tree> kids;
  kids.reserve(t.arity() + 2);
  std::size_t child_index = self + 1;
  const auto* del = std::get_if<Deletion>(&edit);
  for (const Tree& child : t.children()) {
    if (del != nullptr && child_index == target) {
      for (const Tree& grandchild : child.children()) kids.push_back(grandchild);
    } else {
      kids.push_back(rebuild(child, child_index, edit, target));
    }
    child_index += child.size();
  }
  std::string label = t.label();
  if (self == target) {
    if (const auto* rep = std::get_if<Replacement>(&edit)) {
      label = rep->label;
    } else if (const auto* ins = std::get_if<Insertion>(&edit)) {
      auto first = kids.begin() + static_cast<std::ptrdiff_t>(ins->position - 1);
      auto last = first + static_cast<std::ptrdiff_t>(ins->adopted);
      std::vector<Tree> adopted(std::make_move_iterator(first), std::make_move_iterator(last));
      auto it = kids.erase(first, last);
      kids.insert(it, Tree(ins->label, std::move(adopted)));
    }
  }
  return Tree(std::move(label), std::move(kids));
}

}  // namespace detail

inline TreeEdit parse_edit(std::string_view text) { return detail::EditParser(text).parse_single(); }
inline EditScript parse_script(std::string_view text) { return detail::EditParser(text).parse_script(); }

inline bool is_applicable(const Tree& t, const TreeEdit& edit) {
  return !detail::edit_violation(t, edit).has_value();
}

inline Tree apply_edit(const Tree& t, const TreeEdit& edit) {
  if (auto why = detail::edit_violation(t, edit)) throw EditError(to_string(edit) + ": " + *why);
  if (const auto* d = std::get_if<Deletion>(&edit); d != nullptr && d->node == 1) {
    return t.children().front();
  }
  if (const auto* ins = std::get_if<Insertion>(&edit); ins != nullptr && ins->node == 0) {
    return Tree(ins->label, {t});
  }
  std::size_t target = std::visit([](const auto& e) { return e.node; }, edit);
  return detail::rebuild(t, 1, edit, target);
}

inline Tree apply_script(const Tree& t, std::span<const TreeEdit> script) {
  Tree current = t;
  for (std::size_t k = 0; k < script.size(); ++k) {
    if (auto why = detail::edit_violation(current, script[k])) {
      throw ScriptError(to_string(script[k]) + ": " + *why, k);
    }
    current = apply_edit(current, script[k]);
  }
  return current;
}

// Uniform over applicable edit types, then uniform over each valid parameter.
inline TreeEdit random_edit(const Tree& t, std::span<const std::string> alphabet, Rng& rng) {
  if (alphabet.empty()) throw std::invalid_argument("random_edit needs a non-empty alphabet");
  const PreorderView view(t);
  const std::size_t n = view.size();
  std::vector<std::size_t> deletable;
  if (view.arity(1) == 1) deletable.push_back(1);
  for (std::size_t i = 2; i <= n; ++i) deletable.push_back(i);

  enum class Kind { del, rep, ins };
  std::vector<Kind> kinds;
  if (!deletable.empty()) kinds.push_back(Kind::del);
  kinds.push_back(Kind::rep);
  kinds.push_back(Kind::ins);

  auto pick_label = [&]() { return alphabet[uniform_index(rng, 0, alphabet.size() - 1)]; };
  switch (kinds[uniform_index(rng, 0, kinds.size() - 1)]) {
    case Kind::del:
      return Deletion{deletable[uniform_index(rng, 0, deletable.size() - 1)]};
    case Kind::rep: {
      std::size_t node = uniform_index(rng, 1, n);
      return Replacement{node, pick_label()};
    }
    case Kind::ins:
      break;
  }
  Insertion ins;
  ins.node = uniform_index(rng, 0, n);
  const std::size_t arity = view.arity(ins.node);
  if (ins.node == 0) {
    ins.position = 1;
    ins.adopted = 1;
  } else {
    ins.position = uniform_index(rng, 1, arity + 1);
    ins.adopted = uniform_index(rng, 0, arity + 1 - ins.position);
  }
  ins.label = pick_label();
  return ins;
}

}  // namespace advedit
