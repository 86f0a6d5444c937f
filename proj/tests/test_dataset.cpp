#include <gtest/gtest.h>

#include <sstream>

#include "advedit/dataset.hpp"
#include "advedit/ted.hpp"

namespace advedit {
namespace {

TEST(Dataset, ReadWriteRoundTrip) {
  std::istringstream in("{\"tree\": \"a(b,c)\", \"label\": 1}\n\n{\"tree\": \"x\", \"label\": 2}\n");
  Dataset d = read_dataset(in);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.num_classes, 2);
  EXPECT_EQ(d.alphabet, (Alphabet{"a", "b", "c", "x"}));
  std::ostringstream out;
  write_dataset(out, d);
  std::istringstream again(out.str());
  Dataset e = read_dataset(again);
  EXPECT_EQ(e.trees, d.trees);
  EXPECT_EQ(e.labels, d.labels);
}

TEST(Dataset, ErrorsNameTheLine) {
  std::istringstream bad("{\"tree\": \"a\", \"label\": 1}\n{\"tree\": \"a(\", \"label\": 2}\n");
  try {
    read_dataset(bad);
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream missing("{\"tree\": \"a\"}\n");
  EXPECT_THROW(read_dataset(missing), DatasetError);
  std::istringstream gap("{\"tree\": \"a\", \"label\": 1}\n{\"tree\": \"b\", \"label\": 3}\n");
  EXPECT_THROW(read_dataset(gap), DatasetError);
  std::istringstream empty("");
  EXPECT_THROW(read_dataset(empty), DatasetError);
  EXPECT_THROW(load_dataset("/nonexistent/file.jsonl"), DatasetError);
}

TEST(Synth, MotifMarksExactlyTheSecondClass) {
  SynthSpec spec;
  spec.n_examples = 20;
  spec.motif = "m(p)";
  Rng rng(1);
  Dataset d = synth_generate(spec, rng);
  const Tree motif = parse("m(p)");
  std::size_t with = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool has = contains_subtree(d.trees[i], motif);
    EXPECT_EQ(has, d.labels[i] == 2);
    with += has;
  }
  EXPECT_EQ(with, 10u);
}

TEST(Synth, DeterministicAndValidated) {
  SynthSpec spec;
  Rng a(9), b(9);
  Dataset x = synth_generate(spec, a);
  Dataset y = synth_generate(spec, b);
  EXPECT_EQ(x.trees, y.trees);
  spec.motif = "m(z)";
  EXPECT_THROW(synth_generate(spec, a), DatasetError);
  spec.motif = "m(p)";
  spec.root_label = "s";
  EXPECT_THROW(synth_generate(spec, a), DatasetError);
}

TEST(Synth, MotifAnywhereStillSeparatesTheClasses) {
  SynthSpec spec;
  spec.n_examples = 21;
  spec.motif_anywhere = true;
  Rng rng(4);
  Dataset d = synth_generate(spec, rng);
  const Tree motif = parse(spec.motif);
  std::size_t with = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d.trees[i].label(), "r");
    EXPECT_EQ(contains_subtree(d.trees[i], motif), d.labels[i] == 2);
    with += d.labels[i] == 2;
  }
  EXPECT_EQ(with, 10u);  // classes balanced within one
}

// 1-NN under TED with 5 folds is a sanity check that the data is learnable.
TEST(Synth, NearestNeighbourLearnsTheMotif) {
  SynthSpec spec;
  Rng rng(42);
  Dataset d = synth_generate(spec, rng);
  DistanceMatrix D = pairwise_ted(std::span<const Tree>(d.trees));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    int best = std::numeric_limits<int>::max();
    int label = 0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (i % 5 == j % 5) continue;
      if (D(i, j) < best) {
        best = D(i, j);
        label = d.labels[j];
      }
    }
    correct += label == d.labels[i];
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(d.size()), 0.8);
}

}  // namespace
}  // namespace advedit
