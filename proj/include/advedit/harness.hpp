#pragma once

// Experiment protocol: stratified outer folds, nested grid search on the
// outer-training split, per-fold attacks on correctly classified test points,
// and aggregation into report rows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "advedit/attacks.hpp"
#include "advedit/dataset.hpp"
#include "advedit/error.hpp"
#include "advedit/kernels.hpp"
#include "advedit/models.hpp"
#include "advedit/neural.hpp"
#include "advedit/parallel.hpp"
#include "advedit/random.hpp"
#include "advedit/ted.hpp"

namespace advedit {

// ---------------------------------------------------------------------------
// Configuration

struct HyperGrids {
  std::vector<double> c{0.1, 1.0, 10.0, 100.0};
  std::vector<double> sigma_factor{0.5, 1.0, 2.0};  // multiples of the mean training distance
  std::vector<double> lambda{0.001, 0.01, 0.1};
  std::vector<double> tes_scale{0.7, 0.9, 1.0, 1.5, 2.0};
  std::vector<std::size_t> tes_dim{10, 50, 100};
  std::vector<std::size_t> rec_dim{10};
};

struct AttackSettings {
  std::vector<AttackMethod> methods{AttackMethod::random, AttackMethod::backtracing};
  std::size_t cap = 100;
  bool targeted = false;
};

struct RecSettings {
  double learning_rate = 1e-3;
  double loss_threshold = 0.01;
  std::size_t max_iterations = 20000;
};

struct ExperimentConfig {
  std::optional<std::string> dataset_path;
  std::optional<SynthSpec> synthetic;
  std::uint64_t synthetic_seed = 0;
  std::vector<std::string> classifiers{"linear", "rbf", "st", "sst", "pt", "rec", "tes"};
  HyperGrids grids;
  std::size_t folds = 5;
  std::size_t inner_folds = 3;
  std::uint64_t seed = 1;
  AttackSettings attacks;
  bool normalize = false;  // cosine-normalize tree kernels
  RecSettings rec;
  double tes_ridge = 1e-8;
  std::size_t threads = 0;  // 0: hardware concurrency
};

inline const std::vector<std::string>& known_classifiers() {
  static const std::vector<std::string> names{"linear", "rbf", "st", "sst", "pt", "rec", "tes"};
  return names;
}

inline void validate_config(const ExperimentConfig& c) {
  if (c.folds < 2) throw DatasetError("config: folds must be at least 2");
  if (c.inner_folds < 2) throw DatasetError("config: inner_folds must be at least 2");
  if (c.classifiers.empty()) throw DatasetError("config: no classifiers selected");
  for (const auto& k : c.classifiers) {
    if (std::find(known_classifiers().begin(), known_classifiers().end(), k) == known_classifiers().end()) {
      throw DatasetError("config: unknown classifier '" + k + "'");
    }
  }
  const auto& g = c.grids;
  if (g.c.empty() || g.sigma_factor.empty() || g.lambda.empty() || g.tes_scale.empty() || g.tes_dim.empty() ||
      g.rec_dim.empty()) {
    throw DatasetError("config: hyperparameter grids must be non-empty");
  }
  if (c.attacks.methods.empty()) throw DatasetError("config: no attack methods selected");
  if (c.attacks.cap == 0) throw DatasetError("config: attack cap must be positive");
  if (c.dataset_path.has_value() == c.synthetic.has_value()) {
    throw DatasetError("config: give exactly one of \"dataset\" and \"synthetic\"");
  }
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  if (c.dataset_path) j["dataset"] = *c.dataset_path;
  if (c.synthetic) {
    const SynthSpec& s = *c.synthetic;
    j["synthetic"] = {{"n_examples", s.n_examples}, {"alphabet", s.alphabet}, {"max_depth", s.max_depth},
                      {"max_children", s.max_children}, {"motif", s.motif},   {"root_label", s.root_label},
                      {"motif_anywhere", s.motif_anywhere},   {"seed", c.synthetic_seed}};
  }
  nlohmann::json methods = nlohmann::json::array();
  for (AttackMethod m : c.attacks.methods) methods.push_back(method_name(m));
  j["classifiers"] = c.classifiers;
  j["grids"] = {{"C", c.grids.c},
                {"sigma_factor", c.grids.sigma_factor},
                {"lambda", c.grids.lambda},
                {"tes_scale", c.grids.tes_scale},
                {"tes_dim", c.grids.tes_dim},
                {"rec_dim", c.grids.rec_dim}};
  j["folds"] = c.folds;
  j["inner_folds"] = c.inner_folds;
  j["seed"] = c.seed;
  j["attacks"] = {{"methods", methods}, {"cap", c.attacks.cap}, {"targeted", c.attacks.targeted}};
  j["normalize"] = c.normalize;
  j["rec"] = {{"learning_rate", c.rec.learning_rate},
              {"loss_threshold", c.rec.loss_threshold},
              {"max_iterations", c.rec.max_iterations}};
  j["tes_ridge"] = c.tes_ridge;
  j["threads"] = c.threads;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> keys{"dataset", "synthetic", "classifier", "classifiers", "grids",
                                             "folds",   "inner_folds", "seed",     "attacks",     "normalize",
                                             "rec",     "tes_ridge",   "threads"};
  if (!j.is_object()) throw DatasetError("config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw DatasetError("config: unknown key '" + key + "'");
  }
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) c.dataset_path = j.at("dataset").get<std::string>();
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      SynthSpec spec;
      spec.n_examples = s.value("n_examples", spec.n_examples);
      spec.alphabet = s.value("alphabet", spec.alphabet);
      spec.max_depth = s.value("max_depth", spec.max_depth);
      spec.max_children = s.value("max_children", spec.max_children);
      spec.motif = s.value("motif", spec.motif);
      spec.root_label = s.value("root_label", spec.root_label);
      spec.motif_anywhere = s.value("motif_anywhere", spec.motif_anywhere);
      c.synthetic_seed = s.value("seed", std::uint64_t{0});
      c.synthetic = spec;
    }
    if (j.contains("classifier")) c.classifiers = {j.at("classifier").get<std::string>()};
    if (j.contains("classifiers")) c.classifiers = j.at("classifiers").get<std::vector<std::string>>();
    if (j.contains("grids")) {
      const auto& g = j.at("grids");
      c.grids.c = g.value("C", c.grids.c);
      c.grids.sigma_factor = g.value("sigma_factor", c.grids.sigma_factor);
      c.grids.lambda = g.value("lambda", c.grids.lambda);
      c.grids.tes_scale = g.value("tes_scale", c.grids.tes_scale);
      c.grids.tes_dim = g.value("tes_dim", c.grids.tes_dim);
      c.grids.rec_dim = g.value("rec_dim", c.grids.rec_dim);
    }
    c.folds = j.value("folds", c.folds);
    c.inner_folds = j.value("inner_folds", c.inner_folds);
    c.seed = j.value("seed", c.seed);
    if (j.contains("attacks")) {
      const auto& a = j.at("attacks");
      if (a.contains("methods")) {
        c.attacks.methods.clear();
        for (const auto& m : a.at("methods")) c.attacks.methods.push_back(method_from_name(m.get<std::string>()));
      }
      c.attacks.cap = a.value("cap", c.attacks.cap);
      c.attacks.targeted = a.value("targeted", c.attacks.targeted);
    }
    c.normalize = j.value("normalize", c.normalize);
    if (j.contains("rec")) {
      const auto& r = j.at("rec");
      c.rec.learning_rate = r.value("learning_rate", c.rec.learning_rate);
      c.rec.loss_threshold = r.value("loss_threshold", c.rec.loss_threshold);
      c.rec.max_iterations = r.value("max_iterations", c.rec.max_iterations);
    }
    c.tes_ridge = j.value("tes_ridge", c.tes_ridge);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("config: ") + e.what());
  } catch (const AttackError& e) {
    throw DatasetError(std::string("config: ") + e.what());
  }
  validate_config(c);
  return c;
}

inline Dataset load_experiment_data(const ExperimentConfig& c) {
  if (c.dataset_path) return load_dataset(*c.dataset_path);
  Rng rng(c.synthetic_seed);
  return synth_generate(*c.synthetic, rng);
}

// ---------------------------------------------------------------------------
// Folds

struct FoldAssignment {
  std::vector<std::size_t> fold_of;  // per example
  std::size_t folds = 0;
  bool stratified = true;

  std::vector<std::size_t> test(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] == f) out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> train(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] != f) out.push_back(i);
    }
    return out;
  }
};

// Shuffles each class and deals it round-robin over the folds, continuing
// where the previous class stopped. Falls back to an unstratified deal (with
// `warning` set) when some class has fewer members than folds.
inline FoldAssignment stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed,
                                       std::string* warning = nullptr) {
  if (folds < 2) throw DatasetError("folds must be at least 2");
  if (labels.size() < folds) throw DatasetError("fewer examples than folds");
  Rng rng(seed);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  FoldAssignment a;
  a.folds = folds;
  a.fold_of.assign(labels.size(), 0);
  for (const auto& [label, members] : by_class) {
    if (members.size() < folds) a.stratified = false;
  }
  std::size_t offset = 0;
  auto deal = [&](std::vector<std::size_t> members) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) a.fold_of[i] = offset++ % folds;
  };
  if (a.stratified) {
    for (const auto& [label, members] : by_class) deal(members);
  } else {
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    deal(all);
    if (warning != nullptr) {
      *warning = "a class has fewer examples than the " + std::to_string(folds) + " folds; using unstratified folds";
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Instrumented data access

enum class Phase { selection, final_training, evaluation, attack };

inline std::string phase_name(Phase p) {
  switch (p) {
    case Phase::selection: return "selection";
    case Phase::final_training: return "final_training";
    case Phase::evaluation: return "evaluation";
    case Phase::attack: return "attack";
  }
  return "?";
}

struct DataAccess {
  Phase phase;
  std::size_t fold;
  char what;  // 't' tree, 'l' label, 'd' distance
  std::size_t index;
};

using AccessHook = std::function<void(const DataAccess&)>;

// Dataset reads during an experiment go through this view so tests can check
// what each phase touched. The full TED matrix is computed once on first use.
class DataView {
 public:
  DataView(const Dataset& data, AccessHook hook = {}, std::size_t threads = 0)
      : data_(data), hook_(std::move(hook)), threads_(threads) {}

  void set_context(std::size_t fold, Phase phase) {
    fold_ = fold;
    phase_ = phase;
  }
  Phase phase() const noexcept { return phase_; }

  const Dataset& dataset() const noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }

  const Tree& tree(std::size_t i) const {
    note('t', i);
    return data_.trees.at(i);
  }
  int label(std::size_t i) const {
    note('l', i);
    return data_.labels.at(i);
  }
  int distance(std::size_t i, std::size_t j) {
    note('d', i);
    note('d', j);
    if (!distances_) distances_ = pairwise_ted(std::span<const Tree>(data_.trees), threads_);
    return (*distances_)(i, j);
  }

 private:
  void note(char what, std::size_t i) const {
    if (hook_) hook_(DataAccess{phase_, fold_, what, i});
  }

  const Dataset& data_;
  AccessHook hook_;
  std::size_t threads_;
  std::optional<DistanceMatrix> distances_;
  std::size_t fold_ = 0;
  Phase phase_ = Phase::selection;
};

// ---------------------------------------------------------------------------
// Model specifications

// Per outer fold state shared by all fits of that fold.
struct FitContext {
  FitContext(DataView& v, const ExperimentConfig& c, std::size_t fold, std::vector<std::size_t> train)
      : view(v), config(c), outer_fold(fold), outer_train(std::move(train)) {}

  DataView& view;
  const ExperimentConfig& config;
  std::size_t outer_fold;
  std::vector<std::size_t> outer_train;
  std::vector<std::string> warnings;

  // Mean pairwise TED over the outer-training split.
  double mean_distance() {
    if (!dbar_) {
      double sum = 0.0;
      std::size_t pairs = 0;
      for (std::size_t a = 0; a < outer_train.size(); ++a) {
        for (std::size_t b = a + 1; b < outer_train.size(); ++b) {
          sum += view.distance(outer_train[a], outer_train[b]);
          ++pairs;
        }
      }
      dbar_ = pairs > 0 ? sum / static_cast<double>(pairs) : 1.0;
      if (*dbar_ <= 0.0) dbar_ = 1.0;
    }
    return *dbar_;
  }

  // Tree-kernel Gram matrix over the outer-training split, one per (kernel, lambda).
  const Eigen::MatrixXd& outer_gram(KernelKind kind, double lambda) {
    const auto key = std::make_pair(static_cast<int>(kind), lambda);
    auto it = grams_.find(key);
    if (it == grams_.end()) {
      std::vector<PreorderView> views;
      views.reserve(outer_train.size());
      for (std::size_t i : outer_train) views.emplace_back(view.tree(i));
      GramMatrix g = tree_kernel_gram(kind, views, lambda, config.normalize, config.threads);
      it = grams_.emplace(key, std::move(g.values)).first;
    }
    return it->second;
  }

  std::size_t outer_position(std::size_t index) {
    if (positions_.empty()) {
      for (std::size_t p = 0; p < outer_train.size(); ++p) positions_[outer_train[p]] = p;
    }
    auto it = positions_.find(index);
    if (it == positions_.end()) throw DatasetError("example is not in the outer-training split");
    return it->second;
  }

 private:
  std::optional<double> dbar_;
  std::map<std::pair<int, double>, Eigen::MatrixXd> grams_;
  std::unordered_map<std::size_t, std::size_t> positions_;
};

struct FitOutcome {
  std::unique_ptr<Classifier> model;
  std::vector<int> predictions;  // for the evaluation indices, when requested
};

struct ModelSpec {
  std::string name;
  std::vector<nlohmann::json> grid;  // declared order
  // Trains on `train`. With `predict_eval` the outcome carries predictions
  // for `eval`; distance kernels also use `eval` as extra reference trees.
  std::function<FitOutcome(FitContext&, std::span<const std::size_t> train, std::span<const std::size_t> eval,
                           const nlohmann::json& hp, std::uint64_t seed, bool predict_eval)>
      fit;
};

namespace detail {

inline std::vector<int> labels_of(DataView& view, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(view.label(i));
  return out;
}

inline std::vector<Tree> trees_of(DataView& view, std::span<const std::size_t> idx) {
  std::vector<Tree> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(view.tree(i));
  return out;
}

inline std::vector<int> predict_all(const Classifier& m, DataView& view, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(m.predict(view.tree(i)));
  return out;
}

inline FitOutcome fit_distance_svm(KernelKind kind, FitContext& ctx, std::span<const std::size_t> train,
                                   std::span<const std::size_t> eval, const nlohmann::json& hp, bool predict_eval) {
  std::vector<std::size_t> refs(train.begin(), train.end());
  refs.insert(refs.end(), eval.begin(), eval.end());
  const auto n = static_cast<Eigen::Index>(refs.size());
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    d(a, a) = 0.0;
    for (Eigen::Index b = a + 1; b < n; ++b) {
      d(a, b) = d(b, a) = ctx.view.distance(refs[static_cast<std::size_t>(a)], refs[static_cast<std::size_t>(b)]);
    }
  }
  std::vector<std::size_t> train_pos(train.size());
  for (std::size_t p = 0; p < train.size(); ++p) train_pos[p] = p;
  const double sigma = kind == KernelKind::rbf ? hp.at("sigma_factor").get<double>() * ctx.mean_distance() : 0.0;
  const std::vector<int> labels = labels_of(ctx.view, train);
  auto model = train_distance_svm(trees_of(ctx.view, refs), d, train_pos, labels, kind, sigma, hp.at("C").get<double>());
  FitOutcome out;
  if (predict_eval) {
    const auto& emb = std::get<DistanceKernelEmbedding>(model->embedding());
    for (std::size_t e = 0; e < eval.size(); ++e) {
      const Eigen::VectorXd row = emb.row_from_distances(d.row(static_cast<Eigen::Index>(train.size() + e)).transpose());
      out.predictions.push_back(model->svm().predict(row));
    }
  }
  out.model = std::move(model);
  return out;
}

inline FitOutcome fit_tree_svm(KernelKind kind, FitContext& ctx, std::span<const std::size_t> train,
                               std::span<const std::size_t> eval, const nlohmann::json& hp, bool predict_eval) {
  const double lambda = hp.at("lambda").get<double>();
  const Eigen::MatrixXd& g = ctx.outer_gram(kind, lambda);
  std::vector<Eigen::Index> tp;
  for (std::size_t i : train) tp.push_back(static_cast<Eigen::Index>(ctx.outer_position(i)));
  const auto n = static_cast<Eigen::Index>(tp.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) k(a, b) = g(tp[static_cast<std::size_t>(a)], tp[static_cast<std::size_t>(b)]);
  }
  const std::vector<int> labels = labels_of(ctx.view, train);
  auto model = train_tree_kernel_svm(trees_of(ctx.view, train), labels, kind, lambda, ctx.config.normalize,
                                     hp.at("C").get<double>(), &k);
  FitOutcome out;
  if (predict_eval) {
    for (std::size_t i : eval) {
      const auto e = static_cast<Eigen::Index>(ctx.outer_position(i));
      Eigen::VectorXd row(n);
      for (Eigen::Index a = 0; a < n; ++a) row(a) = g(e, tp[static_cast<std::size_t>(a)]);
      out.predictions.push_back(model->svm().predict(row));
    }
  }
  out.model = std::move(model);
  return out;
}

}  // namespace detail

inline ModelSpec make_model_spec(const std::string& kind, const ExperimentConfig& config) {
  ModelSpec spec;
  spec.name = kind;
  const HyperGrids& g = config.grids;
  if (kind == "linear" || kind == "rbf") {
    const KernelKind k = kernel_from_name(kind);
    for (double c : g.c) {
      if (k == KernelKind::linear) {
        spec.grid.push_back({{"C", c}});
      } else {
        for (double s : g.sigma_factor) spec.grid.push_back({{"C", c}, {"sigma_factor", s}});
      }
    }
    spec.fit = [k](FitContext& ctx, std::span<const std::size_t> train, std::span<const std::size_t> eval,
                   const nlohmann::json& hp, std::uint64_t, bool predict_eval) {
      return detail::fit_distance_svm(k, ctx, train, eval, hp, predict_eval);
    };
  } else if (kind == "st" || kind == "sst" || kind == "pt") {
    const KernelKind k = kernel_from_name(kind);
    for (double c : g.c) {
      for (double l : g.lambda) spec.grid.push_back({{"C", c}, {"lambda", l}});
    }
    spec.fit = [k](FitContext& ctx, std::span<const std::size_t> train, std::span<const std::size_t> eval,
                   const nlohmann::json& hp, std::uint64_t, bool predict_eval) {
      return detail::fit_tree_svm(k, ctx, train, eval, hp, predict_eval);
    };
  } else if (kind == "rec") {
    for (std::size_t d : g.rec_dim) spec.grid.push_back({{"dim", d}});
    spec.fit = [](FitContext& ctx, std::span<const std::size_t> train, std::span<const std::size_t> eval,
                  const nlohmann::json& hp, std::uint64_t seed, bool predict_eval) {
      RecNetOptions o;
      o.dim = hp.at("dim").get<std::size_t>();
      o.learning_rate = ctx.config.rec.learning_rate;
      o.loss_threshold = ctx.config.rec.loss_threshold;
      o.max_iterations = ctx.config.rec.max_iterations;
      o.alphabet = ctx.view.dataset().alphabet;
      Rng rng(seed);
      const std::vector<Tree> trees = detail::trees_of(ctx.view, train);
      const std::vector<int> labels = detail::labels_of(ctx.view, train);
      RecNetTraining t = recnet_train(trees, labels, o, rng);
      if (!t.warning.empty()) ctx.warnings.push_back("fold " + std::to_string(ctx.outer_fold) + ": " + t.warning);
      FitOutcome out;
      out.model = std::make_unique<RecursiveClassifier>(std::move(t.params), "rec");
      if (predict_eval) out.predictions = detail::predict_all(*out.model, ctx.view, eval);
      return out;
    };
  } else if (kind == "tes") {
    for (double s : g.tes_scale) {
      for (std::size_t d : g.tes_dim) spec.grid.push_back({{"scale", s}, {"dim", d}});
    }
    spec.fit = [](FitContext& ctx, std::span<const std::size_t> train, std::span<const std::size_t> eval,
                  const nlohmann::json& hp, std::uint64_t seed, bool predict_eval) {
      TesOptions o;
      o.dim = hp.at("dim").get<std::size_t>();
      o.scale = hp.at("scale").get<double>();
      o.ridge = ctx.config.tes_ridge;
      o.alphabet = ctx.view.dataset().alphabet;
      Rng rng(seed);
      const std::vector<Tree> trees = detail::trees_of(ctx.view, train);
      const std::vector<int> labels = detail::labels_of(ctx.view, train);
      FitOutcome out;
      out.model = std::make_unique<RecursiveClassifier>(tes_train(trees, labels, o, rng), "tes");
      if (predict_eval) out.predictions = detail::predict_all(*out.model, ctx.view, eval);
      return out;
    };
  } else {
    throw DatasetError("unknown classifier '" + kind + "'");
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Nested crossvalidation

struct FoldModel {
  std::size_t fold = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  nlohmann::json hyperparameters;
  std::vector<double> inner_scores;  // mean inner accuracy per grid point; empty when the grid has one point
  std::unique_ptr<Classifier> model;
  std::vector<int> predictions;  // black-box predictions for `test`
  double accuracy = 0.0;
};

struct CrossValidation {
  FoldAssignment folds;
  std::map<std::string, std::vector<FoldModel>> models;  // per classifier name
  std::vector<std::string> warnings;
};

inline std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::size_t count_correct(std::span<const int> predicted, std::span<const int> truth) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) n += predicted[i] == truth[i];
  return n;
}

inline CrossValidation crossvalidate(DataView& view, const ExperimentConfig& config, std::span<const ModelSpec> specs) {
  const Dataset& data = view.dataset();
  CrossValidation cv;
  std::string warning;
  cv.folds = stratified_folds(data.labels, config.folds, derive_seed(config.seed, {1}), &warning);
  if (!warning.empty()) cv.warnings.push_back(warning);

  for (std::size_t f = 0; f < config.folds; ++f) {
    const std::vector<std::size_t> train = cv.folds.train(f);
    const std::vector<std::size_t> test = cv.folds.test(f);
    view.set_context(f, Phase::selection);
    const std::vector<int> train_labels = detail::labels_of(view, train);
    for (int l = 1; l <= data.num_classes; ++l) {
      if (std::find(train_labels.begin(), train_labels.end(), l) == train_labels.end()) {
        throw DatasetError("class " + std::to_string(l) + " is absent from the training split of fold " +
                           std::to_string(f));
      }
    }
    // Inner folds depend on the outer fold only, so every classifier sees the same splits.
    std::string inner_warning;
    const FoldAssignment inner =
        stratified_folds(train_labels, config.inner_folds, derive_seed(config.seed, {2, f}), &inner_warning);
    if (!inner_warning.empty()) cv.warnings.push_back("fold " + std::to_string(f) + " inner: " + inner_warning);

    FitContext ctx(view, config, f, train);
    for (const ModelSpec& spec : specs) {
      const std::uint64_t id = name_hash(spec.name);
      view.set_context(f, Phase::selection);
      FoldModel fm;
      fm.fold = f;
      fm.train = train;
      fm.test = test;
      std::size_t best = 0;
      if (spec.grid.size() > 1) {
        for (std::size_t gi = 0; gi < spec.grid.size(); ++gi) {
          double total = 0.0;
          for (std::size_t k = 0; k < config.inner_folds; ++k) {
            std::vector<std::size_t> itrain, ival;
            for (std::size_t p = 0; p < train.size(); ++p) (inner.fold_of[p] == k ? ival : itrain).push_back(train[p]);
            FitOutcome o = spec.fit(ctx, itrain, ival, spec.grid[gi], derive_seed(config.seed, {3, f, id, gi, k}), true);
            std::vector<int> truth;
            for (std::size_t p = 0; p < train.size(); ++p) {
              if (inner.fold_of[p] == k) truth.push_back(train_labels[p]);
            }
            total += ival.empty() ? 0.0
                                  : static_cast<double>(count_correct(o.predictions, truth)) /
                                        static_cast<double>(ival.size());
          }
          fm.inner_scores.push_back(total / static_cast<double>(config.inner_folds));
          if (fm.inner_scores[gi] > fm.inner_scores[best]) best = gi;
        }
      }
      fm.hyperparameters = spec.grid.at(best);

      view.set_context(f, Phase::final_training);
      FitOutcome o =
          spec.fit(ctx, train, test, fm.hyperparameters, derive_seed(config.seed, {3, f, id, best, config.inner_folds}),
                   false);
      fm.model = std::move(o.model);

      view.set_context(f, Phase::evaluation);
      fm.predictions = detail::predict_all(*fm.model, view, test);
      const std::vector<int> truth = detail::labels_of(view, test);
      fm.accuracy = static_cast<double>(count_correct(fm.predictions, truth)) / static_cast<double>(test.size());
      cv.models[spec.name].push_back(std::move(fm));
    }
    for (auto& w : ctx.warnings) cv.warnings.push_back(w);
  }
  return cv;
}

// ---------------------------------------------------------------------------
// Experiment and report

struct PointAttack {
  std::size_t index;  // dataset index of the attacked point
  AttackResult result;
};

struct FoldAttacks {
  std::size_t fold = 0;
  std::size_t attacked = 0;
  std::size_t successes = 0;
  std::vector<PointAttack> points;
  double success_rate = 0.0;
  std::optional<double> mean_ratio;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

// Population standard deviation.
inline Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

struct ReportRow {
  std::string classifier;
  std::string attack;
  Summary accuracy;
  Summary success;
  std::optional<Summary> ratio;  // absent: no fold produced a defined ratio
};

struct ExperimentResult {
  std::vector<ReportRow> rows;
  CrossValidation cv;
  std::map<std::pair<std::string, std::string>, std::vector<FoldAttacks>> attacks;  // (classifier, method)
  std::vector<std::string> warnings;
};

inline FoldAttacks attack_fold(DataView& view, const ExperimentConfig& config, const FoldModel& fm,
                               const std::string& classifier, AttackMethod method) {
  view.set_context(fm.fold, Phase::attack);
  const Dataset& data = view.dataset();
  const std::vector<Tree> train_trees = detail::trees_of(view, fm.train);
  const std::vector<int> train_labels = detail::labels_of(view, fm.train);
  const ReferencePool pool = build_reference_pool(train_trees, train_labels, *fm.model);

  FoldAttacks out;
  out.fold = fm.fold;
  for (std::size_t p = 0; p < fm.test.size(); ++p) {
    if (fm.predictions[p] == view.label(fm.test[p])) out.points.push_back({fm.test[p], AttackResult{}});
  }
  AttackOptions options;
  options.method = method;
  options.cap = config.attacks.cap;
  options.targeted = config.attacks.targeted;
  const std::uint64_t id = name_hash(classifier);
  const auto mid = static_cast<std::uint64_t>(method);
  parallel_for(
      out.points.size(),
      [&](std::size_t k) {
        const std::size_t i = out.points[k].index;
        Rng rng(derive_seed(config.seed, {4, fm.fold, id, i, mid}));
        out.points[k].result =
            attack_point(data.trees[i], data.labels[i], *fm.model, pool, data.alphabet, options, rng);
      },
      config.threads);

  std::vector<double> ratios;
  for (const auto& pa : out.points) {
    out.successes += pa.result.success;
    if (pa.result.ratio) ratios.push_back(*pa.result.ratio);
  }
  out.attacked = out.points.size();
  out.success_rate =
      out.attacked == 0 ? 0.0 : static_cast<double>(out.successes) / static_cast<double>(out.attacked);
  if (!ratios.empty()) out.mean_ratio = summarize(ratios).mean;
  return out;
}

inline ExperimentResult run_experiment(const Dataset& data, const ExperimentConfig& config,
                                       std::span<const ModelSpec> specs, AccessHook hook = {}) {
  DataView view(data, std::move(hook), config.threads);
  ExperimentResult r;
  r.cv = crossvalidate(view, config, specs);
  r.warnings = r.cv.warnings;
  for (const ModelSpec& spec : specs) {
    const auto& folds = r.cv.models.at(spec.name);
    std::vector<double> acc;
    for (const auto& fm : folds) acc.push_back(fm.accuracy);
    for (AttackMethod m : config.attacks.methods) {
      std::vector<FoldAttacks> per_fold;
      std::vector<double> rates, ratios;
      for (const auto& fm : folds) {
        per_fold.push_back(attack_fold(view, config, fm, spec.name, m));
        rates.push_back(per_fold.back().success_rate);
        if (per_fold.back().mean_ratio) ratios.push_back(*per_fold.back().mean_ratio);
      }
      ReportRow row;
      row.classifier = spec.name;
      row.attack = method_name(m);
      row.accuracy = summarize(acc);
      row.success = summarize(rates);
      if (!ratios.empty()) row.ratio = summarize(ratios);
      r.rows.push_back(row);
      r.attacks[{spec.name, method_name(m)}] = std::move(per_fold);
    }
  }
  return r;
}

inline ExperimentResult run_experiment(const Dataset& data, const ExperimentConfig& config, AccessHook hook = {}) {
  validate_config(config);
  std::vector<ModelSpec> specs;
  for (const auto& k : config.classifiers) specs.push_back(make_model_spec(k, config));
  return run_experiment(data, config, specs, std::move(hook));
}

inline const char* report_header() {
  return "classifier,attack,accuracy_mean,accuracy_std,success_mean,success_std,ratio_mean,ratio_std";
}

inline std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline void write_report_csv(std::ostream& out, std::span<const ReportRow> rows) {
  out << report_header() << '\n';
  for (const ReportRow& r : rows) {
    out << r.classifier << ',' << r.attack << ',' << format_metric(r.accuracy.mean) << ','
        << format_metric(r.accuracy.std) << ',' << format_metric(r.success.mean) << ','
        << format_metric(r.success.std) << ',';
    if (r.ratio) {
      out << format_metric(r.ratio->mean) << ',' << format_metric(r.ratio->std);
    } else {
      out << "n.a.,n.a.";
    }
    out << '\n';
  }
}

inline nlohmann::json report_metadata(const Dataset& data, const ExperimentConfig& config,
                                      const ExperimentResult& r) {
  nlohmann::json folds = nlohmann::json::object();
  for (const auto& [name, models] : r.cv.models) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& fm : models) {
      per.push_back({{"fold", fm.fold},
                     {"hyperparameters", fm.hyperparameters},
                     {"inner_scores", fm.inner_scores},
                     {"accuracy", fm.accuracy},
                     {"test_size", fm.test.size()}});
    }
    folds[name] = per;
  }
  nlohmann::json attacks = nlohmann::json::array();
  for (const auto& [key, per_fold] : r.attacks) {
    for (const auto& fa : per_fold) {
      attacks.push_back({{"classifier", key.first},
                         {"attack", key.second},
                         {"fold", fa.fold},
                         {"attacked", fa.attacked},
                         {"successes", fa.successes},
                         {"mean_ratio", fa.mean_ratio ? nlohmann::json(*fa.mean_ratio) : nlohmann::json()}});
    }
  }
  return {{"dataset", {{"name", data.name}, {"size", data.size()}, {"classes", data.num_classes},
                       {"alphabet", data.alphabet}}},
          {"config", config_to_json(config)},
          {"stratified", r.cv.folds.stratified},
          {"conventions",
           {"std is the population standard deviation across outer folds",
            "success rate = successes / attacked points per fold; only correctly classified test points are attacked",
            "a fold without attacked points contributes success rate 0 and no ratio",
            "ratio = d(z,x)/d(z,y) with y the nearest training point of another label; folds average their defined "
            "ratios; n.a. when no fold has one",
            "hyperparameters chosen by mean inner accuracy, ties to the first grid point in declared order"}},
          {"folds", folds},
          {"attacks", attacks},
          {"warnings", r.warnings}};
}

}  // namespace advedit
