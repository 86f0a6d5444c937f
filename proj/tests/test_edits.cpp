#include <gtest/gtest.h>

#include <set>

#include "advedit/edits.hpp"
#include "advedit/ted.hpp"
#include "support/generators.hpp"

namespace advedit {
namespace {

TEST(ApplyEdit, ThreeEditExampleSteps) {
  Tree t0 = parse("a(b(c,d),e)");
  Tree t1 = apply_edit(t0, Deletion{2});
  EXPECT_EQ(serialize(t1), "a(c,d,e)");
  Tree t2 = apply_edit(t1, Replacement{4, "f"});
  EXPECT_EQ(serialize(t2), "a(c,d,f)");
  Tree t3 = apply_edit(t2, Insertion{1, 2, 1, "g"});
  EXPECT_EQ(serialize(t3), "a(c,g(d),f)");
}

TEST(ApplyEdit, RootDeletionNeedsExactlyOneChild) {
  EXPECT_EQ(apply_edit(parse("a(b(c,d))"), Deletion{1}), parse("b(c,d)"));
  EXPECT_THROW(apply_edit(parse("a(b,c)"), Deletion{1}), EditError);
  EXPECT_THROW(apply_edit(parse("a"), Deletion{1}), EditError);
}

TEST(ApplyEdit, InsertionAboveRoot) {
  EXPECT_EQ(apply_edit(parse("a(b)"), Insertion{0, 1, 1, "r"}), parse("r(a(b))"));
  EXPECT_THROW(apply_edit(parse("a"), Insertion{0, 1, 0, "r"}), EditError);
  EXPECT_THROW(apply_edit(parse("a"), Insertion{0, 2, 0, "r"}), EditError);
}

TEST(ApplyEdit, InsertionAsLeafAndAdoptingAll) {
  EXPECT_EQ(apply_edit(parse("a(b,c)"), Insertion{1, 3, 0, "z"}), parse("a(b,c,z)"));
  EXPECT_EQ(apply_edit(parse("a(b,c)"), Insertion{1, 1, 2, "z"}), parse("a(z(b,c))"));
  EXPECT_EQ(apply_edit(parse("a(b,c)"), Insertion{3, 1, 0, "z"}), parse("a(b,c(z))"));
}

TEST(ApplyEdit, RejectsInvalidEdits) {
  Tree t = parse("a(b,c)");
  EXPECT_THROW(apply_edit(t, Deletion{0}), EditError);
  EXPECT_THROW(apply_edit(t, Deletion{4}), EditError);
  EXPECT_THROW(apply_edit(t, Replacement{4, "x"}), EditError);
  EXPECT_THROW(apply_edit(t, Replacement{1, ""}), EditError);
  EXPECT_THROW(apply_edit(t, Insertion{1, 4, 0, "x"}), EditError);
  EXPECT_THROW(apply_edit(t, Insertion{1, 2, 2, "x"}), EditError);
  EXPECT_THROW(apply_edit(t, Insertion{1, 0, 0, "x"}), EditError);
  EXPECT_THROW(apply_edit(t, Insertion{5, 1, 0, "x"}), EditError);
}

TEST(ApplyScript, ThreeEditExampleScript) {
  EditScript script{Deletion{2}, Replacement{4, "f"}, Insertion{1, 2, 1, "g"}};
  EXPECT_EQ(apply_script(parse("a(b(c,d),e)"), script), parse("a(c,g(d),f)"));
  EXPECT_EQ(to_string(script), "del(2);rep(4,f);ins(1,2,1,g)");
}

TEST(ApplyScript, EmptyScriptIsIdentityAndInversePairCancels) {
  Tree t = parse("a(b(c,d),e)");
  EXPECT_EQ(apply_script(t, EditScript{}), t);
  EditScript pair{Replacement{1, "b"}, Replacement{1, "a"}};
  EXPECT_EQ(apply_script(parse("a"), pair), parse("a"));
}

TEST(ApplyScript, ReportsFirstFailingEdit) {
  EditScript script{Replacement{1, "x"}, Deletion{9}, Deletion{1}};
  try {
    apply_script(parse("a(b)"), script);
    FAIL() << "expected a script error";
  } catch (const ScriptError& e) {
    EXPECT_EQ(e.position(), 1u);
  }
}

TEST(EditNotation, ParsesBackToSameEdits) {
  EditScript script = parse_script("del(2); rep(4,f);ins(1,2,1,g)");
  EditScript expected{Deletion{2}, Replacement{4, "f"}, Insertion{1, 2, 1, "g"}};
  EXPECT_EQ(script, expected);
  EXPECT_TRUE(parse_script("").empty());
  EXPECT_THROW(parse_script("mov(1)"), ParseError);
  EXPECT_THROW(parse_script("del(1);"), ParseError);
}

TEST(EditProperties, SizeAccounting) {
  Rng rng(21);
  for (int k = 0; k < 500; ++k) {
    Tree t = testing::random_tree_upto(rng, 12, testing::abc());
    TreeEdit e = random_edit(t, testing::abc(), rng);
    Tree u = apply_edit(t, e);
    long delta = static_cast<long>(u.size()) - static_cast<long>(t.size());
    if (std::holds_alternative<Deletion>(e)) {
      EXPECT_EQ(delta, -1);
    }
    if (std::holds_alternative<Replacement>(e)) {
      EXPECT_EQ(delta, 0);
    }
    if (std::holds_alternative<Insertion>(e)) {
      EXPECT_EQ(delta, 1);
    }
  }
}

// Index of a node inserted by ins(i,c,C,a): the c-th child of i.
std::size_t inserted_index(const Tree& after, const Insertion& ins) {
  if (ins.node == 0) return 1;
  PreorderView view(after);
  return view.children(ins.node)[ins.position - 1];
}

TEST(EditProperties, DeletionUndoesInsertion) {
  Rng rng(5);
  for (int k = 0; k < 500; ++k) {
    Tree t = testing::random_tree_upto(rng, 10, testing::abc());
    TreeEdit e = random_edit(t, testing::abc(), rng);
    const auto* ins = std::get_if<Insertion>(&e);
    if (ins == nullptr) continue;
    Tree u = apply_edit(t, e);
    EXPECT_EQ(apply_edit(u, Deletion{inserted_index(u, *ins)}), t) << to_string(e);
  }
}

TEST(EditProperties, ScriptConcatenationComposes) {
  Rng rng(8);
  for (int k = 0; k < 200; ++k) {
    Tree t = testing::random_tree_upto(rng, 8, testing::abc());
    EditScript s;
    Tree cur = t;
    for (int j = 0; j < 6; ++j) {
      s.push_back(random_edit(cur, testing::abc(), rng));
      cur = apply_edit(cur, s.back());
    }
    EditScript s1(s.begin(), s.begin() + 3);
    EditScript s2(s.begin() + 3, s.end());
    EXPECT_EQ(apply_script(t, s), apply_script(apply_script(t, s1), s2));
    EXPECT_EQ(apply_script(t, s), cur);
    EXPECT_LE(ted(t, cur), static_cast<int>(s.size()));
  }
}

TEST(RandomEdit, SingleNodeTreeNeverDeletes) {
  Rng rng(1);
  const std::vector<std::string> alphabet{"a"};
  Tree leaf = parse("a");
  for (int k = 0; k < 200; ++k) {
    TreeEdit e = random_edit(leaf, alphabet, rng);
    EXPECT_FALSE(std::holds_alternative<Deletion>(e));
    EXPECT_NO_THROW(apply_edit(leaf, e));
  }
}

TEST(RandomEdit, AllTypesObservedOnFiveNodeTree) {
  Rng rng(2024);
  Tree t = parse("a(b(c,d),e)");
  std::set<std::size_t> kinds;
  for (int k = 0; k < 10000; ++k) kinds.insert(random_edit(t, testing::abc(), rng).index());
  EXPECT_EQ(kinds.size(), 3u);
}

TEST(RandomEdit, AlwaysApplicable) {
  Rng rng(99);
  for (int k = 0; k < 2000; ++k) {
    Tree t = testing::random_tree_upto(rng, 15, testing::abc());
    TreeEdit e = random_edit(t, testing::abc(), rng);
    EXPECT_TRUE(is_applicable(t, e)) << serialize(t) << " " << to_string(e);
  }
  EXPECT_THROW(random_edit(parse("a"), std::vector<std::string>{}, rng), std::invalid_argument);
}

}  // namespace
}  // namespace advedit
