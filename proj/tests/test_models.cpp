#include <gtest/gtest.h>

#include <sstream>

#include "advedit/models.hpp"
#include "support/generators.hpp"
#include "support/gradient_check.hpp"

namespace advedit {
namespace {

// Two clusters of points in the plane with a linear kernel.
Eigen::MatrixXd blob_gram(Rng& rng, std::vector<int>& labels, std::size_t per_class, double gap) {
  std::normal_distribution<double> noise(0.0, 0.3);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(2 * per_class), 2);
  labels.clear();
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int l = i < per_class ? 1 : 2;
    labels.push_back(l);
    x(static_cast<Eigen::Index>(i), 0) = (l == 1 ? -gap : gap) + noise(rng);
    x(static_cast<Eigen::Index>(i), 1) = noise(rng);
  }
  return x * x.transpose();
}

TEST(Svm, OrthogonalPointsKeepTheirLabels) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Identity(2, 2);
  std::vector<int> labels{1, 2};
  SvmModel m = svm_train(k, labels, 1.0);
  EXPECT_EQ(m.predict(k.row(0).transpose()), 1);
  EXPECT_EQ(m.predict(k.row(1).transpose()), 2);
  for (const auto& b : m.machines) {
    EXPECT_GE(b.alpha.minCoeff(), 0.0);
    EXPECT_LE(b.alpha.maxCoeff(), 1.0);
  }
}

TEST(Svm, BlockDiagonalGramIsSeparated) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(6, 6);
  k.topLeftCorner(3, 3).setConstant(1.0);
  k.bottomRightCorner(3, 3).setConstant(1.0);
  k.diagonal().array() += 0.1;
  std::vector<int> labels{1, 1, 1, 2, 2, 2};
  SvmModel m = svm_train(k, labels, 10.0);
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_EQ(m.predict(k.row(i).transpose()), labels[static_cast<std::size_t>(i)]);
}

TEST(Svm, KktAndBoxConstraintsOnNoisyData) {
  Rng rng(1);
  std::vector<int> labels;
  Eigen::MatrixXd k = blob_gram(rng, labels, 25, 0.5);
  for (double c : {0.1, 1.0, 10.0, 100.0}) {
    SvmModel m = svm_train(k, labels, c);
    for (std::size_t l = 0; l < m.machines.size(); ++l) {
      Eigen::VectorXd y(k.rows());
      for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = labels[static_cast<std::size_t>(i)] == int(l) + 1 ? 1 : -1;
      const BinarySvm& b = m.machines[l];
      EXPECT_TRUE(b.converged);
      EXPECT_GE(b.alpha.minCoeff(), 0.0);
      EXPECT_LE(b.alpha.maxCoeff(), c);
      EXPECT_NEAR(b.alpha.dot(y), 0.0, 1e-9);
      EXPECT_LE(smo_kkt_gap(k, y, b, c), 1e-3);
    }
  }
}

TEST(Svm, SwappingLabelEncodingKeepsAssignments) {
  Rng rng(2);
  std::vector<int> labels;
  Eigen::MatrixXd k = blob_gram(rng, labels, 20, 0.4);
  std::vector<int> swapped;
  for (int l : labels) swapped.push_back(3 - l);
  SvmModel a = svm_train(k, labels, 1.0);
  SvmModel b = svm_train(k, swapped, 1.0);
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    Eigen::VectorXd row = k.row(i).transpose();
    EXPECT_EQ(a.predict(row), 3 - b.predict(row));
    // Class 1 of the swapped encoding is the old class 2: opposite decision sign.
    const double da = a.machines[0].decision(row);
    const double db = b.machines[0].decision(row);
    if (std::abs(da) > 1e-2) {
      EXPECT_LT(da * db, 0.0);
    }
    EXPECT_NEAR(da, -db, 1e-2 * std::max(1.0, std::abs(da)));
    EXPECT_EQ(a.machines[0].decision(row), b.machines[1].decision(row));
  }
}

TEST(Svm, PredictionIsDeterministicAndChecksLength) {
  Rng rng(3);
  std::vector<int> labels;
  Eigen::MatrixXd k = blob_gram(rng, labels, 10, 1.0);
  SvmModel m = svm_train(k, labels, 1.0);
  Eigen::VectorXd row = k.row(4).transpose();
  EXPECT_EQ(m.decision_values(row), m.decision_values(row));
  Eigen::VectorXd zeros = Eigen::VectorXd::Zero(k.rows());
  Eigen::VectorXd d = m.decision_values(zeros);
  EXPECT_DOUBLE_EQ(d(0), -m.machines[0].rho);
  EXPECT_THROW(m.predict(Eigen::VectorXd::Zero(3)), ModelError);
}

TEST(Svm, MulticlassTiesGoToSmallestClass) {
  SvmModel m;
  m.num_classes = 3;
  for (int l = 0; l < 3; ++l) {
    BinarySvm b;
    b.coef = Eigen::VectorXd::Zero(1);
    b.alpha = b.coef;
    b.rho = 0.0;
    m.machines.push_back(b);
  }
  EXPECT_EQ(m.predict(Eigen::VectorXd::Zero(1)), 1);
  m.machines[0].rho = 1.0;
  EXPECT_EQ(m.predict(Eigen::VectorXd::Zero(1)), 2);
}

TEST(Svm, RejectsBadInput) {
  Eigen::MatrixXd k = Eigen::MatrixXd::Identity(3, 3);
  std::vector<int> one_class{1, 1, 1};
  EXPECT_THROW(svm_train(k, one_class, 1.0), ModelError);
  std::vector<int> labels{1, 2, 1};
  Eigen::MatrixXd indefinite(3, 3);
  indefinite << 0, 1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_THROW(svm_train(indefinite, labels, 1.0), ModelError);
  EXPECT_THROW(svm_train(Eigen::MatrixXd::Identity(2, 2), labels, 1.0), ModelError);
}

// ---------------------------------------------------------------------------

TEST(RecNet, EmbeddingOfLeaves) {
  Rng rng(4);
  RecursiveParams p = recnet_init({"x"}, 4, 2, rng);
  for (auto [ptr, len] : p.blocks()) std::fill(ptr, ptr + len, 0.0);
  EXPECT_EQ(recnet_embed(p, parse("x")), Eigen::VectorXd::Constant(4, 0.5));
  p = testing::random_params(rng, {"x"}, 4, 2, 1.0);
  Eigen::VectorXd expected = p.b[0].unaryExpr([](double a) { return 1.0 / (1.0 + std::exp(-a)); });
  EXPECT_LT((recnet_embed(p, parse("x")) - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RecNet, EmbeddingIsInsideUnitCubeAndRejectsUnknownSymbols) {
  Rng rng(5);
  RecursiveParams p = testing::random_params(rng, testing::abc(), 6, 2, 2.0);
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd e = recnet_embed(p, testing::random_tree_upto(rng, 20, testing::abc()));
    EXPECT_GT(e.minCoeff(), 0.0);
    EXPECT_LT(e.maxCoeff(), 1.0);
  }
  try {
    recnet_embed(p, parse("a(zz)"));
    FAIL() << "expected an unknown-symbol error";
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

TEST(RecNet, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    RecursiveParams p = testing::random_params(rng, testing::abc(), 3, 3, 1.0);
    std::vector<Tree> trees;
    std::vector<int> labels;
    for (int e = 0; e < 3; ++e) {
      trees.push_back(testing::random_tree_upto(rng, 7, testing::abc()));
      labels.push_back(e % 3 + 1);
    }
    EXPECT_LT(testing::gradient_check(p, trees, labels), 1e-4);
  }
}

TEST(RecNet, LearnsRootLabelTask) {
  Rng rng(7);
  const Alphabet labels_ab{"a", "b", "c"};
  std::vector<Tree> trees;
  std::vector<int> labels;
  for (int k = 0; k < 10; ++k) {
    Tree t = testing::random_tree_upto(rng, 6, labels_ab);
    const std::string root = k % 2 == 0 ? "a" : "b";
    std::vector<Tree> kids(t.children().begin(), t.children().end());
    trees.emplace_back(root, kids);
    labels.push_back(k % 2 + 1);
  }
  RecNetOptions options;
  Rng train_rng(11);
  RecNetTraining run = recnet_train(trees, labels, options, train_rng);
  EXPECT_TRUE(run.converged) << run.warning;
  EXPECT_LT(run.loss_history.back(), 0.01);
  RecursiveClassifier clf(run.params, "rec");
  for (std::size_t i = 0; i < trees.size(); ++i) EXPECT_EQ(clf.predict(trees[i]), labels[i]);
  // Averaged over windows of 50 steps the loss does not increase.
  const auto& h = run.loss_history;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start + 50 <= h.size(); start += 50) {
    double mean = 0.0;
    for (std::size_t k = start; k < start + 50; ++k) mean += h[k] / 50.0;
    EXPECT_LE(mean, previous + 1e-12);
    previous = mean;
  }
}

TEST(RecNet, SingleExampleConverges) {
  std::vector<Tree> trees{parse("a(b)")};
  std::vector<int> labels{1};
  Rng rng(1);
  RecNetOptions options;
  RecNetTraining run = recnet_train(trees, labels, options, rng);
  EXPECT_TRUE(run.converged);
}

TEST(RecNet, IterationCapReportsWarning) {
  std::vector<Tree> trees{parse("a"), parse("a")};
  std::vector<int> labels{1, 2};
  Rng rng(1);
  RecNetOptions options;
  options.max_iterations = 30;
  RecNetTraining run = recnet_train(trees, labels, options, rng);
  EXPECT_FALSE(run.converged);
  EXPECT_FALSE(run.warning.empty());
  EXPECT_EQ(run.loss_history.size(), 31u);
}

TEST(RecNet, DivergenceAborts) {
  std::vector<Tree> trees{parse("a"), parse("b")};
  std::vector<int> labels{1, 2};
  Rng rng(1);
  RecNetOptions options;
  options.learning_rate = std::numeric_limits<double>::infinity();
  EXPECT_THROW(recnet_train(trees, labels, options, rng), ModelError);
}

// ---------------------------------------------------------------------------

TEST(Tes, ReservoirIsScaledAndSeedDeterministic) {
  Rng a(9), b(9);
  RecursiveParams pa = tes_reservoir(testing::abc(), 8, 0.9, 2, a);
  RecursiveParams pb = tes_reservoir(testing::abc(), 8, 0.9, 2, b);
  EXPECT_EQ(pa, pb);
  for (const auto& w : pa.w) {
    EXPECT_NEAR(Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues()(0), 0.9, 1e-12);
  }
}

TEST(Tes, TrainingOnlyTouchesReadout) {
  Rng rng(10);
  std::vector<Tree> trees;
  std::vector<int> labels;
  for (int k = 0; k < 30; ++k) {
    trees.push_back(testing::random_tree_upto(rng, 8, testing::abc()));
    labels.push_back(k % 2 + 1);
  }
  Rng r1(3), r2(3);
  RecursiveParams reservoir = tes_reservoir(alphabet_of(trees), 10, 1.0, 2, r1);
  TesOptions options;
  RecursiveParams trained = tes_train(trees, labels, options, r2);
  EXPECT_EQ(trained.w, reservoir.w);
  EXPECT_EQ(trained.b, reservoir.b);
  EXPECT_NE(trained.v, reservoir.v);
}

TEST(Tes, HugeRidgePredictsThePrior) {
  Rng rng(12);
  std::vector<Tree> trees;
  std::vector<int> labels;
  for (int k = 0; k < 31; ++k) {
    trees.push_back(testing::random_tree_upto(rng, 8, testing::abc()));
    labels.push_back(k % 3 == 0 ? 1 : 2);
  }
  TesOptions options;
  options.ridge = 1e12;
  RecursiveParams p = tes_train(trees, labels, options, rng);
  EXPECT_LT(p.v.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(p.c(0), 11.0 / 31.0, 1e-9);
  RecursiveClassifier clf(p, "tes");
  for (const Tree& t : trees) EXPECT_EQ(clf.predict(t), 2);
}

TEST(Tes, SeparatesRootLabelsAtSmallRidge) {
  Rng rng(13);
  std::vector<Tree> trees;
  std::vector<int> labels;
  for (int k = 0; k < 40; ++k) {
    Tree t = testing::random_tree_upto(rng, 6, testing::abc());
    std::vector<Tree> kids(t.children().begin(), t.children().end());
    trees.emplace_back(k % 2 == 0 ? "a" : "b", kids);
    labels.push_back(k % 2 + 1);
  }
  TesOptions options;
  options.dim = 20;
  RecursiveParams p = tes_train(trees, labels, options, rng);
  RecursiveClassifier clf(p, "tes");
  for (std::size_t i = 0; i < trees.size(); ++i) EXPECT_EQ(clf.predict(trees[i]), labels[i]);
}

TEST(Tes, DegenerateEmbeddingsFallBackToPseudoinverse) {
  std::vector<Tree> trees{parse("a"), parse("a"), parse("a"), parse("b")};
  std::vector<int> labels{1, 1, 2, 2};
  TesOptions options;
  options.ridge = 0.0;
  Rng rng(1);
  RecursiveParams p = tes_train(trees, labels, options, rng);
  EXPECT_TRUE(p.v.allFinite());
  EXPECT_TRUE(p.c.allFinite());
}

// ---------------------------------------------------------------------------

struct SmallData {
  std::vector<Tree> trees;
  std::vector<int> labels;
};

SmallData motif_data(Rng& rng, std::size_t n) {
  SmallData d;
  for (std::size_t k = 0; k < n; ++k) {
    Tree t = testing::random_tree_upto(rng, 6, testing::abc());
    std::vector<Tree> kids(t.children().begin(), t.children().end());
    if (k % 2 == 1) kids.push_back(parse("m(p,q)"));
    d.trees.emplace_back(t.label(), kids);
    d.labels.push_back(static_cast<int>(k % 2) + 1);
  }
  return d;
}

void expect_same_predictions(const Classifier& a, const Classifier& b, std::span<const Tree> batch) {
  for (const Tree& t : batch) EXPECT_EQ(a.predict(t), b.predict(t));
}

StoredModel round_trip(StoredModel m) {
  std::stringstream buffer;
  save_model(buffer, m);
  return load_model(buffer);
}

TEST(KernelSvm, DistanceKernelsClassifyAndRoundTrip) {
  Rng rng(14);
  SmallData d = motif_data(rng, 24);
  Eigen::MatrixXd dist = to_matrix(pairwise_ted(std::span<const Tree>(d.trees)));
  std::vector<std::size_t> train;
  std::vector<int> train_labels;
  for (std::size_t i = 0; i < 18; ++i) {
    train.push_back(i);
    train_labels.push_back(d.labels[i]);
  }
  for (KernelKind kind : {KernelKind::linear, KernelKind::rbf}) {
    auto clf = train_distance_svm(d.trees, dist, train, train_labels, kind, 3.0, 10.0);
    // Reference rows reproduce the clipped Gram matrix.
    const auto& emb = std::get<DistanceKernelEmbedding>(clf->embedding());
    for (std::size_t i = 0; i < d.trees.size(); i += 5) {
      Eigen::VectorXd row = clf->kernel_row(d.trees[i]);
      for (std::size_t a = 0; a < train.size(); ++a) {
        EXPECT_NEAR(row(static_cast<Eigen::Index>(a)),
                    emb.clipped_gram()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(train[a])), 1e-8);
      }
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < 18; ++i) correct += clf->predict(d.trees[i]) == d.labels[i] ? 1 : 0;
    EXPECT_GE(correct, 16u) << kernel_name(kind);

    StoredModel stored{std::move(clf), {}, {{"C", 10.0}}};
    StoredModel loaded = round_trip(std::move(stored));
    Rng probe(1);
    std::vector<Tree> batch = d.trees;
    for (int k = 0; k < 10; ++k) batch.push_back(testing::random_tree_upto(probe, 8, {"a", "b", "c", "m", "p"}));
    auto fresh = train_distance_svm(d.trees, dist, train, train_labels, kind, 3.0, 10.0);
    expect_same_predictions(*fresh, *loaded.classifier, batch);
    const nlohmann::json first = model_to_json(loaded);
    EXPECT_EQ(first, model_to_json(round_trip(std::move(loaded))));
  }
}

TEST(KernelSvm, TreeKernelsClassifyAndRoundTrip) {
  Rng rng(15);
  SmallData d = motif_data(rng, 24);
  for (KernelKind kind : {KernelKind::subtree, KernelKind::subset_tree, KernelKind::partial_tree}) {
    for (bool normalize : {false, true}) {
      auto clf = train_tree_kernel_svm(d.trees, d.labels, kind, 0.1, normalize, 100.0);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < d.trees.size(); ++i) correct += clf->predict(d.trees[i]) == d.labels[i] ? 1 : 0;
      EXPECT_GE(correct, 22u) << kernel_name(kind);
      std::vector<LabeledTree> training;
      for (std::size_t i = 0; i < d.trees.size(); ++i) training.push_back({d.trees[i], d.labels[i]});
      auto copy = train_tree_kernel_svm(d.trees, d.labels, kind, 0.1, normalize, 100.0);
      StoredModel loaded = round_trip(StoredModel{std::move(clf), training, {}});
      EXPECT_EQ(loaded.training.size(), d.trees.size());
      expect_same_predictions(*copy, *loaded.classifier, d.trees);
    }
  }
}

TEST(ModelFile, RecursiveModelsRoundTripExactly) {
  Rng rng(16);
  RecursiveParams p = testing::random_params(rng, testing::abc(), 5, 3, 1.0);
  StoredModel loaded = round_trip(StoredModel{std::make_unique<RecursiveClassifier>(p, "rec"), {}, {}});
  const auto* rec = dynamic_cast<const RecursiveClassifier*>(loaded.classifier.get());
  ASSERT_NE(rec, nullptr);
  EXPECT_EQ(rec->params(), p);
  EXPECT_EQ(rec->kind(), "rec");
}

TEST(ModelFile, RejectsGarbage) {
  std::stringstream garbage("{\"format\": \"other\"}");
  EXPECT_THROW(load_model(garbage), ModelError);
  std::stringstream broken("{");
  EXPECT_THROW(load_model(broken), ModelError);
}

TEST(ClassifierHandle, CountsQueries) {
  FunctionClassifier f([](const Tree& t) { return t.size() > 2 ? 2 : 1; }, 2);
  ClassifierHandle h(f);
  EXPECT_EQ(h.query_count(), 0u);
  EXPECT_EQ(h.predict(parse("a")), 1);
  EXPECT_EQ(h.predict(parse("a(b,c)")), 2);
  EXPECT_EQ(h.query_count(), 2u);
}

}  // namespace
}  // namespace advedit
