#pragma once

// Kernel SVM classifiers on trees and model persistence.

#include <Eigen/Dense>
#include <cstddef>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "advedit/classifier.hpp"
#include "advedit/error.hpp"
#include "advedit/kernels.hpp"
#include "advedit/neural.hpp"
#include "advedit/svm.hpp"
#include "advedit/ted.hpp"
#include "advedit/tree.hpp"

namespace advedit {

// Kernel rows for the linear and RBF kernels. The reference set is the
// fold's training and evaluation trees; the Gram matrix over it is clipped
// once, and any new row k is mapped to P k with P the projector onto the
// positive eigenspace, which reproduces the clipped matrix on the references.
class DistanceKernelEmbedding {
 public:
  DistanceKernelEmbedding() = default;

  // `distances` holds the pairwise TED over `references`.
  DistanceKernelEmbedding(std::vector<Tree> references, const Eigen::MatrixXd& distances, KernelKind kind,
                          double sigma, std::vector<std::size_t> train_indices)
      : kind_(kind), sigma_(sigma), references_(std::move(references)), train_(std::move(train_indices)) {
    if (!is_distance_kernel(kind)) throw ModelError("distance embedding needs the linear or rbf kernel");
    if (distances.rows() != static_cast<Eigen::Index>(references_.size())) {
      throw ModelError("distance matrix does not match the reference set");
    }
    GramMatrix raw = kind == KernelKind::linear ? linear_kernel(distances) : rbf_kernel(distances, sigma);
    if (kind == KernelKind::linear) {
      const Eigen::MatrixXd sq = distances.array().square().matrix();
      sq_row_mean_ = sq.rowwise().mean();
      sq_grand_mean_ = sq_row_mean_.size() > 0 ? sq_row_mean_.mean() : 0.0;
    }
    ClipCorrection corr = clip_correction(raw.values);
    projector_ = std::move(corr.projector);
    clipped_ = clip_psd(raw).values;
    prepare();
  }

  KernelKind kind() const noexcept { return kind_; }
  double sigma() const noexcept { return sigma_; }
  std::span<const Tree> references() const noexcept { return references_; }
  std::span<const std::size_t> train_indices() const noexcept { return train_; }

  // Clipped Gram matrix over the references.
  const Eigen::MatrixXd& clipped_gram() const noexcept { return clipped_; }

  Eigen::MatrixXd training_gram() const {
    const auto n = static_cast<Eigen::Index>(train_.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = 0; b < n; ++b) {
        k(a, b) = clipped_(static_cast<Eigen::Index>(train_[static_cast<std::size_t>(a)]),
                           static_cast<Eigen::Index>(train_[static_cast<std::size_t>(b)]));
      }
    }
    return k;
  }

  // Corrected kernel row against the training references, from distances to every reference.
  Eigen::VectorXd row_from_distances(const Eigen::VectorXd& d) const {
    if (d.size() != static_cast<Eigen::Index>(references_.size())) {
      throw ModelError("distance row has the wrong length");
    }
    Eigen::VectorXd raw(d.size());
    if (kind_ == KernelKind::linear) {
      const Eigen::VectorXd sq = d.array().square().matrix();
      const double own_mean = sq.size() > 0 ? sq.mean() : 0.0;
      for (Eigen::Index j = 0; j < d.size(); ++j) {
        raw(j) = -0.5 * (sq(j) - own_mean - sq_row_mean_(j) + sq_grand_mean_);
      }
    } else {
      for (Eigen::Index j = 0; j < d.size(); ++j) raw(j) = rbf_value(d(j), sigma_);
    }
    return train_projector_ * raw;
  }

  Eigen::VectorXd row(const Tree& t) const {
    PreparedTree z(t);
    Eigen::VectorXd d(static_cast<Eigen::Index>(prepared_.size()));
    for (std::size_t j = 0; j < prepared_.size(); ++j) d(static_cast<Eigen::Index>(j)) = ted(z, prepared_[j]);
    return row_from_distances(d);
  }

  // Persistence hooks.
  nlohmann::json to_json() const;
  static DistanceKernelEmbedding from_json(const nlohmann::json& j);

 private:
  void prepare() {
    prepared_.clear();
    for (const Tree& t : references_) prepared_.emplace_back(t);
    const auto m = static_cast<Eigen::Index>(train_.size());
    train_projector_.resize(m, projector_.cols());
    for (Eigen::Index a = 0; a < m; ++a) {
      if (train_[static_cast<std::size_t>(a)] >= references_.size()) throw ModelError("training index out of range");
      train_projector_.row(a) = projector_.row(static_cast<Eigen::Index>(train_[static_cast<std::size_t>(a)]));
    }
  }

  KernelKind kind_ = KernelKind::linear;
  double sigma_ = 0.0;
  std::vector<Tree> references_;
  std::vector<std::size_t> train_;
  Eigen::VectorXd sq_row_mean_;
  double sq_grand_mean_ = 0.0;
  Eigen::MatrixXd projector_;
  Eigen::MatrixXd clipped_;
  std::vector<PreparedTree> prepared_;
  Eigen::MatrixXd train_projector_;
};

// Kernel rows for the ST, SST and PT kernels against the training trees.
class TreeKernelEmbedding {
 public:
  TreeKernelEmbedding() = default;
  TreeKernelEmbedding(std::vector<Tree> references, KernelKind kind, double lambda, bool normalize)
      : kind_(kind), lambda_(lambda), normalize_(normalize), references_(std::move(references)) {
    if (is_distance_kernel(kind)) throw ModelError("tree kernel embedding needs st, sst or pt");
    detail::check_decay(lambda);
    prepare();
  }

  KernelKind kind() const noexcept { return kind_; }
  double lambda() const noexcept { return lambda_; }
  bool normalized() const noexcept { return normalize_; }
  std::span<const Tree> references() const noexcept { return references_; }

  // Gram matrix over the references, normalized if configured.
  GramMatrix gram(std::size_t threads = 0) const {
    return tree_kernel_gram(kind_, views_, lambda_, normalize_, threads);
  }

  Eigen::VectorXd row(const Tree& t) const {
    PreorderView z(t);
    Eigen::VectorXd k(static_cast<Eigen::Index>(views_.size()));
    for (std::size_t j = 0; j < views_.size(); ++j) {
      k(static_cast<Eigen::Index>(j)) = tree_kernel(kind_, z, views_[j], lambda_);
    }
    if (normalize_) {
      const double self = tree_kernel(kind_, z, z, lambda_);
      for (Eigen::Index j = 0; j < k.size(); ++j) {
        k(j) = normalized_kernel(k(j), self, self_[static_cast<std::size_t>(j)]);
      }
    }
    return k;
  }

  nlohmann::json to_json() const;
  static TreeKernelEmbedding from_json(const nlohmann::json& j);

 private:
  void prepare() {
    views_.clear();
    self_.clear();
    for (const Tree& t : references_) {
      views_.emplace_back(t);
      self_.push_back(tree_kernel(kind_, views_.back(), views_.back(), lambda_));
    }
  }

  KernelKind kind_ = KernelKind::subtree;
  double lambda_ = 0.1;
  bool normalize_ = false;
  std::vector<Tree> references_;
  std::vector<PreorderView> views_;
  std::vector<double> self_;
};

using KernelEmbedding = std::variant<DistanceKernelEmbedding, TreeKernelEmbedding>;

class KernelSvmClassifier final : public Classifier {
 public:
  KernelSvmClassifier(KernelEmbedding embedding, SvmModel svm)
      : embedding_(std::move(embedding)), svm_(std::move(svm)) {}

  Eigen::VectorXd kernel_row(const Tree& t) const {
    return std::visit([&](const auto& e) { return e.row(t); }, embedding_);
  }
  int predict(const Tree& t) const override { return svm_.predict(kernel_row(t)); }
  int num_classes() const override { return svm_.num_classes; }
  std::string kind() const override {
    return std::visit([](const auto& e) { return kernel_name(e.kind()); }, embedding_);
  }
  const SvmModel& svm() const noexcept { return svm_; }
  const KernelEmbedding& embedding() const noexcept { return embedding_; }

 private:
  KernelEmbedding embedding_;
  SvmModel svm_;
};

// Linear/RBF SVM on the references' clipped Gram matrix restricted to the
// training indices.
inline std::unique_ptr<KernelSvmClassifier> train_distance_svm(std::vector<Tree> references,
                                                               const Eigen::MatrixXd& distances,
                                                               std::vector<std::size_t> train_indices,
                                                               std::span<const int> train_labels, KernelKind kind,
                                                               double sigma, double c) {
  DistanceKernelEmbedding emb(std::move(references), distances, kind, sigma, std::move(train_indices));
  SvmModel svm = svm_train(emb.training_gram(), train_labels, c);
  return std::make_unique<KernelSvmClassifier>(std::move(emb), std::move(svm));
}

// ST/SST/PT SVM; `gram` may carry a precomputed Gram matrix over `train`.
inline std::unique_ptr<KernelSvmClassifier> train_tree_kernel_svm(std::vector<Tree> train,
                                                                  std::span<const int> labels, KernelKind kind,
                                                                  double lambda, bool normalize, double c,
                                                                  const Eigen::MatrixXd* gram = nullptr) {
  TreeKernelEmbedding emb(std::move(train), kind, lambda, normalize);
  SvmModel svm = gram != nullptr ? svm_train(*gram, labels, c) : svm_train(emb.gram().values, labels, c);
  return std::make_unique<KernelSvmClassifier>(std::move(emb), std::move(svm));
}

// ---------------------------------------------------------------------------
// Persistence. A model file is one JSON document:
//   {"format": "advedit-model", "version": 1, "model": <kind>, "num_classes": L,
//    "training": [{"tree": "...", "label": k}, ...], ...kind-specific fields}
// Doubles are written in shortest round-trip form.

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : cols_if_empty;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ModelError("model file: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline nlohmann::json trees_to_json(std::span<const Tree> trees) {
  nlohmann::json out = nlohmann::json::array();
  for (const Tree& t : trees) out.push_back(serialize(t));
  return out;
}

inline std::vector<Tree> trees_from_json(const nlohmann::json& j) {
  std::vector<Tree> out;
  for (const auto& s : j) out.push_back(parse(s.get<std::string>()));
  return out;
}

inline nlohmann::json svm_to_json(const SvmModel& m) {
  nlohmann::json machines = nlohmann::json::array();
  for (const BinarySvm& b : m.machines) {
    machines.push_back({{"alpha", vector_to_json(b.alpha)}, {"coef", vector_to_json(b.coef)}, {"rho", b.rho}});
  }
  return {{"C", m.c}, {"num_classes", m.num_classes}, {"machines", machines}};
}

inline SvmModel svm_from_json(const nlohmann::json& j) {
  SvmModel m;
  m.c = j.at("C").get<double>();
  m.num_classes = j.at("num_classes").get<int>();
  for (const auto& b : j.at("machines")) {
    BinarySvm bin;
    bin.alpha = vector_from_json(b.at("alpha"));
    bin.coef = vector_from_json(b.at("coef"));
    bin.rho = b.at("rho").get<double>();
    m.machines.push_back(std::move(bin));
  }
  return m;
}

inline nlohmann::json params_to_json(const RecursiveParams& p) {
  nlohmann::json w = nlohmann::json::array();
  nlohmann::json b = nlohmann::json::array();
  for (std::size_t s = 0; s < p.alphabet.size(); ++s) {
    w.push_back(matrix_to_json(p.w[s]));
    b.push_back(vector_to_json(p.b[s]));
  }
  return {{"dim", p.dim}, {"alphabet", p.alphabet}, {"W", w}, {"b", b}, {"V", matrix_to_json(p.v)},
          {"c", vector_to_json(p.c)}};
}

inline RecursiveParams params_from_json(const nlohmann::json& j) {
  RecursiveParams p;
  p.dim = j.at("dim").get<std::size_t>();
  p.alphabet = j.at("alphabet").get<Alphabet>();
  const auto n = static_cast<Eigen::Index>(p.dim);
  for (const auto& w : j.at("W")) p.w.push_back(matrix_from_json(w, n));
  for (const auto& b : j.at("b")) p.b.push_back(vector_from_json(b));
  p.v = matrix_from_json(j.at("V"), n);
  p.c = vector_from_json(j.at("c"));
  if (p.w.size() != p.alphabet.size() || p.b.size() != p.alphabet.size()) {
    throw ModelError("model file: one W and b per alphabet symbol expected");
  }
  return p;
}

}  // namespace detail

inline nlohmann::json DistanceKernelEmbedding::to_json() const {
  nlohmann::json train = nlohmann::json::array();
  for (std::size_t i : train_) train.push_back(i);
  return {{"kernel", kernel_name(kind_)},
          {"sigma", sigma_},
          {"references", detail::trees_to_json(references_)},
          {"train_indices", train},
          {"sq_row_mean", detail::vector_to_json(sq_row_mean_)},
          {"sq_grand_mean", sq_grand_mean_},
          {"projector", detail::matrix_to_json(projector_)},
          {"clipped_gram", detail::matrix_to_json(clipped_)}};
}

inline DistanceKernelEmbedding DistanceKernelEmbedding::from_json(const nlohmann::json& j) {
  DistanceKernelEmbedding e;
  e.kind_ = kernel_from_name(j.at("kernel").get<std::string>());
  e.sigma_ = j.at("sigma").get<double>();
  e.references_ = detail::trees_from_json(j.at("references"));
  e.train_ = j.at("train_indices").get<std::vector<std::size_t>>();
  e.sq_row_mean_ = detail::vector_from_json(j.at("sq_row_mean"));
  e.sq_grand_mean_ = j.at("sq_grand_mean").get<double>();
  e.projector_ = detail::matrix_from_json(j.at("projector"));
  e.clipped_ = detail::matrix_from_json(j.at("clipped_gram"));
  e.prepare();
  return e;
}

inline nlohmann::json TreeKernelEmbedding::to_json() const {
  return {{"kernel", kernel_name(kind_)},
          {"lambda", lambda_},
          {"normalize", normalize_},
          {"references", detail::trees_to_json(references_)}};
}

inline TreeKernelEmbedding TreeKernelEmbedding::from_json(const nlohmann::json& j) {
  return TreeKernelEmbedding(detail::trees_from_json(j.at("references")),
                             kernel_from_name(j.at("kernel").get<std::string>()), j.at("lambda").get<double>(),
                             j.at("normalize").get<bool>());
}

struct LabeledTree {
  Tree tree;
  int label = 1;
};

// A classifier together with the examples it was trained on; the training
// examples define the reference pool for attacks.
struct StoredModel {
  std::unique_ptr<Classifier> classifier;
  std::vector<LabeledTree> training;
  nlohmann::json hyperparameters = nlohmann::json::object();
};

inline nlohmann::json model_to_json(const StoredModel& m) {
  nlohmann::json training = nlohmann::json::array();
  for (const auto& ex : m.training) training.push_back({{"tree", serialize(ex.tree)}, {"label", ex.label}});
  nlohmann::json out = {{"format", "advedit-model"},
                        {"version", 1},
                        {"model", m.classifier->kind()},
                        {"num_classes", m.classifier->num_classes()},
                        {"hyperparameters", m.hyperparameters},
                        {"training", training}};
  if (const auto* svm = dynamic_cast<const KernelSvmClassifier*>(m.classifier.get())) {
    out["svm"] = detail::svm_to_json(svm->svm());
    out["embedding"] = std::visit([](const auto& e) { return e.to_json(); }, svm->embedding());
    out["embedding"]["type"] = std::holds_alternative<DistanceKernelEmbedding>(svm->embedding()) ? "distance" : "tree";
  } else if (const auto* rec = dynamic_cast<const RecursiveClassifier*>(m.classifier.get())) {
    out["params"] = detail::params_to_json(rec->params());
  } else {
    throw ModelError("cannot save a model of kind '" + m.classifier->kind() + "'");
  }
  return out;
}

inline StoredModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "advedit-model") throw ModelError("not a model file");
    StoredModel m;
    for (const auto& ex : j.at("training")) {
      m.training.push_back({parse(ex.at("tree").get<std::string>()), ex.at("label").get<int>()});
    }
    m.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
    const std::string kind = j.at("model").get<std::string>();
    if (j.contains("svm")) {
      const auto& e = j.at("embedding");
      KernelEmbedding emb = e.at("type").get<std::string>() == "distance"
                                ? KernelEmbedding(DistanceKernelEmbedding::from_json(e))
                                : KernelEmbedding(TreeKernelEmbedding::from_json(e));
      m.classifier = std::make_unique<KernelSvmClassifier>(std::move(emb), detail::svm_from_json(j.at("svm")));
    } else if (j.contains("params")) {
      m.classifier = std::make_unique<RecursiveClassifier>(detail::params_from_json(j.at("params")), kind);
    } else {
      throw ModelError("model file: unknown model kind '" + kind + "'");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("model file: ") + e.what());
  }
}

inline void save_model(std::ostream& out, const StoredModel& m) { out << model_to_json(m).dump(1) << '\n'; }

inline StoredModel load_model(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("model file: ") + e.what());
  }
  return model_from_json(j);
}

}  // namespace advedit
