#pragma once

// Recursive neural networks and tree echo state networks. Both embed a tree
// bottom-up with G(x(T_1..T_m)) = sigm(W^x sum_i G(T_i) + b^x) and classify
// with a linear layer V G(T) + c.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "advedit/classifier.hpp"
#include "advedit/error.hpp"
#include "advedit/random.hpp"
#include "advedit/tree.hpp"

namespace advedit {

struct RecursiveParams {
  std::size_t dim = 0;
  Alphabet alphabet;                // sorted; symbol k owns w[k], b[k]
  std::vector<Eigen::MatrixXd> w;   // dim x dim
  std::vector<Eigen::VectorXd> b;   // dim
  Eigen::MatrixXd v;                // classes x dim
  Eigen::VectorXd c;                // classes

  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(c.size()); }

  std::size_t symbol(const std::string& label) const {
    auto it = std::lower_bound(alphabet.begin(), alphabet.end(), label);
    if (it == alphabet.end() || *it != label) throw ModelError("no parameters for symbol '" + label + "'");
    return static_cast<std::size_t>(it - alphabet.begin());
  }

  // Same shapes, all zeros.
  RecursiveParams zeros_like() const {
    RecursiveParams z;
    z.dim = dim;
    z.alphabet = alphabet;
    for (const auto& m : w) z.w.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
    for (const auto& m : b) z.b.push_back(Eigen::VectorXd::Zero(m.size()));
    z.v = Eigen::MatrixXd::Zero(v.rows(), v.cols());
    z.c = Eigen::VectorXd::Zero(c.size());
    return z;
  }

  // Contiguous views of every parameter block, in a fixed order.
  std::vector<std::pair<double*, std::size_t>> blocks() {
    std::vector<std::pair<double*, std::size_t>> out;
    for (auto& m : w) out.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
    for (auto& m : b) out.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
    out.emplace_back(v.data(), static_cast<std::size_t>(v.size()));
    out.emplace_back(c.data(), static_cast<std::size_t>(c.size()));
    return out;
  }

  bool operator==(const RecursiveParams&) const = default;
};

namespace detail {

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Postorder encoding: node k's children all have indices < k; the root is last.
struct EncodedTree {
  std::vector<std::size_t> symbol;
  std::vector<std::vector<std::size_t>> children;
};

inline std::size_t encode_into(const Tree& t, const RecursiveParams& p, EncodedTree& out) {
  std::vector<std::size_t> kids;
  kids.reserve(t.arity());
  for (const Tree& c : t.children()) kids.push_back(encode_into(c, p, out));
  out.symbol.push_back(p.symbol(t.label()));
  out.children.push_back(std::move(kids));
  return out.symbol.size() - 1;
}

inline EncodedTree encode(const Tree& t, const RecursiveParams& p) {
  EncodedTree out;
  encode_into(t, p, out);
  return out;
}

// Column k holds the embedding of node k.
inline Eigen::MatrixXd forward(const RecursiveParams& p, const EncodedTree& t) {
  const std::size_t n = t.symbol.size();
  Eigen::MatrixXd h(static_cast<Eigen::Index>(p.dim), static_cast<Eigen::Index>(n));
  Eigen::VectorXd sum(static_cast<Eigen::Index>(p.dim));
  for (std::size_t k = 0; k < n; ++k) {
    sum.setZero();
    for (std::size_t child : t.children[k]) sum += h.col(static_cast<Eigen::Index>(child));
    const std::size_t s = t.symbol[k];
    h.col(static_cast<Eigen::Index>(k)) = (p.w[s] * sum + p.b[s]).unaryExpr([](double a) { return sigmoid(a); });
  }
  return h;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& o) {
  Eigen::VectorXd e = (o.array() - o.maxCoeff()).exp().matrix();
  return e / e.sum();
}

inline int argmax_label(const Eigen::VectorXd& o) {
  Eigen::Index best = 0;
  for (Eigen::Index l = 1; l < o.size(); ++l) {
    if (o(l) > o(best)) best = l;
  }
  return static_cast<int>(best) + 1;
}

inline int max_label(std::span<const int> labels) {
  int m = 0;
  for (int l : labels) {
    if (l < 1) throw ModelError("labels must be >= 1");
    m = std::max(m, l);
  }
  return m;
}

inline Alphabet training_alphabet(std::span<const Tree> trees, const std::optional<Alphabet>& declared) {
  Alphabet found = alphabet_of(trees);
  if (!declared) return found;
  Alphabet merged = *declared;
  merged.insert(merged.end(), found.begin(), found.end());
  return make_alphabet(std::move(merged));
}

}  // namespace detail

inline Eigen::VectorXd recnet_embed(const RecursiveParams& p, const Tree& t) {
  Eigen::MatrixXd h = detail::forward(p, detail::encode(t, p));
  return h.col(h.cols() - 1);
}

inline Eigen::VectorXd recnet_output(const RecursiveParams& p, const Tree& t) {
  return p.v * recnet_embed(p, t) + p.c;
}

// Mean crossentropy over the data set; fills `grad` (same shapes as p) when given.
inline double recnet_loss(const RecursiveParams& p, std::span<const Tree> trees, std::span<const int> labels,
                          RecursiveParams* grad = nullptr) {
  if (trees.size() != labels.size() || trees.empty()) throw ModelError("recnet: need one label per tree");
  if (grad != nullptr) *grad = p.zeros_like();
  const double scale = 1.0 / static_cast<double>(trees.size());
  double loss = 0.0;
  for (std::size_t e = 0; e < trees.size(); ++e) {
    const detail::EncodedTree enc = detail::encode(trees[e], p);
    const Eigen::MatrixXd h = detail::forward(p, enc);
    const Eigen::Index root = h.cols() - 1;
    const Eigen::VectorXd out = p.v * h.col(root) + p.c;
    const Eigen::VectorXd prob = detail::softmax(out);
    const auto target = static_cast<Eigen::Index>(labels[e] - 1);
    if (target < 0 || target >= out.size()) throw ModelError("recnet: label out of range");
    const double shift = out.maxCoeff();
    loss -= scale * (out(target) - shift - std::log((out.array() - shift).exp().sum()));
    if (grad == nullptr) continue;

    Eigen::VectorXd d_out = prob;
    d_out(target) -= 1.0;
    d_out *= scale;
    grad->v += d_out * h.col(root).transpose();
    grad->c += d_out;
    Eigen::MatrixXd d_h = Eigen::MatrixXd::Zero(h.rows(), h.cols());
    d_h.col(root) = p.v.transpose() * d_out;
    Eigen::VectorXd sum(h.rows());
    for (Eigen::Index k = root; k >= 0; --k) {
      const auto uk = static_cast<std::size_t>(k);
      const std::size_t s = enc.symbol[uk];
      Eigen::VectorXd d_a = d_h.col(k).cwiseProduct(h.col(k).cwiseProduct((1.0 - h.col(k).array()).matrix()));
      sum.setZero();
      for (std::size_t child : enc.children[uk]) sum += h.col(static_cast<Eigen::Index>(child));
      grad->w[s] += d_a * sum.transpose();
      grad->b[s] += d_a;
      if (enc.children[uk].empty()) continue;
      const Eigen::VectorXd d_sum = p.w[s].transpose() * d_a;
      for (std::size_t child : enc.children[uk]) d_h.col(static_cast<Eigen::Index>(child)) += d_sum;
    }
  }
  return loss;
}

// Uniform(-1/sqrt(n), 1/sqrt(n)) weights, zero biases.
inline RecursiveParams recnet_init(const Alphabet& alphabet, std::size_t dim, int classes, Rng& rng) {
  if (dim == 0) throw ModelError("embedding dimension must be positive");
  RecursiveParams p;
  p.dim = dim;
  p.alphabet = make_alphabet(alphabet);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  const auto n = static_cast<Eigen::Index>(dim);
  for (std::size_t s = 0; s < p.alphabet.size(); ++s) {
    p.w.push_back(Eigen::MatrixXd::NullaryExpr(n, n, [&]() { return u(rng); }));
    p.b.push_back(Eigen::VectorXd::Zero(n));
  }
  p.v = Eigen::MatrixXd::NullaryExpr(classes, n, [&]() { return u(rng); });
  p.c = Eigen::VectorXd::Zero(classes);
  return p;
}

struct RecNetOptions {
  std::size_t dim = 10;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double loss_threshold = 0.01;
  std::size_t max_iterations = 20000;
  std::optional<Alphabet> alphabet;  // symbols beyond those in the training trees
};

struct RecNetTraining {
  RecursiveParams params;
  std::vector<double> loss_history;  // loss before each update
  bool converged = false;
  std::string warning;
};

// Full-batch Adam on the mean crossentropy.
inline RecNetTraining recnet_train(std::span<const Tree> trees, std::span<const int> labels,
                                   const RecNetOptions& options, Rng& rng) {
  if (trees.empty() || trees.size() != labels.size()) throw ModelError("recnet: need one label per tree");
  const int classes = detail::max_label(labels);
  RecNetTraining result;
  result.params = recnet_init(detail::training_alphabet(trees, options.alphabet), options.dim, classes, rng);
  RecursiveParams& p = result.params;
  RecursiveParams grad;
  auto param_blocks = p.blocks();
  std::vector<Eigen::VectorXd> m1, m2;
  for (const auto& [ptr, len] : param_blocks) {
    m1.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(len)));
    m2.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(len)));
  }
  double b1t = 1.0;
  double b2t = 1.0;
  for (std::size_t it = 0;; ++it) {
    const double loss = recnet_loss(p, trees, labels, &grad);
    if (!std::isfinite(loss)) {
      throw ModelError("recnet: non-finite loss at iteration " + std::to_string(it) + " (last finite loss " +
                       (result.loss_history.empty() ? std::string("none") : std::to_string(result.loss_history.back())) +
                       ")");
    }
    result.loss_history.push_back(loss);
    if (loss < options.loss_threshold) {
      result.converged = true;
      break;
    }
    if (it >= options.max_iterations) {
      result.warning = "recnet: stopped after " + std::to_string(options.max_iterations) +
                       " iterations with training loss " + std::to_string(loss);
      break;
    }
    b1t *= options.beta1;
    b2t *= options.beta2;
    auto grad_blocks = grad.blocks();
    for (std::size_t k = 0; k < param_blocks.size(); ++k) {
      const auto len = static_cast<Eigen::Index>(param_blocks[k].second);
      Eigen::Map<Eigen::VectorXd> theta(param_blocks[k].first, len);
      Eigen::Map<const Eigen::VectorXd> g(grad_blocks[k].first, len);
      m1[k] = options.beta1 * m1[k] + (1.0 - options.beta1) * g;
      m2[k] = options.beta2 * m2[k] + (1.0 - options.beta2) * g.cwiseAbs2();
      theta.array() -= options.learning_rate * (m1[k].array() / (1.0 - b1t)) /
                       ((m2[k].array() / (1.0 - b2t)).sqrt() + options.epsilon);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Tree echo state network

struct TesOptions {
  std::size_t dim = 10;
  double scale = 1.0;   // largest singular value of every W^x
  double ridge = 1e-8;  // readout regularization
  std::optional<Alphabet> alphabet;
};

// W^x uniform in [-1,1] rescaled to spectral norm `scale`; b^x uniform in [-1,1].
inline RecursiveParams tes_reservoir(const Alphabet& alphabet, std::size_t dim, double scale, int classes, Rng& rng) {
  if (dim == 0) throw ModelError("reservoir dimension must be positive");
  if (!(scale > 0.0)) throw ModelError("reservoir scale must be positive");
  RecursiveParams p;
  p.dim = dim;
  p.alphabet = make_alphabet(alphabet);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto n = static_cast<Eigen::Index>(dim);
  for (std::size_t s = 0; s < p.alphabet.size(); ++s) {
    Eigen::MatrixXd w = Eigen::MatrixXd::NullaryExpr(n, n, [&]() { return u(rng); });
    const double top = Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues()(0);
    if (top > 0.0) w *= scale / top;
    p.w.push_back(std::move(w));
    p.b.push_back(Eigen::VectorXd::NullaryExpr(n, [&]() { return u(rng); }));
  }
  p.v = Eigen::MatrixXd::Zero(classes, n);
  p.c = Eigen::VectorXd::Zero(classes);
  return p;
}

// Ridge regression of one-hot targets on root embeddings; the offset is not
// regularized. Fills p.v and p.c only.
inline void tes_fit_readout(RecursiveParams& p, std::span<const Tree> trees, std::span<const int> labels,
                            double ridge) {
  if (trees.empty() || trees.size() != labels.size()) throw ModelError("tes: need one label per tree");
  if (!(ridge >= 0.0)) throw ModelError("tes: ridge must be non-negative");
  const auto n = static_cast<Eigen::Index>(trees.size());
  const auto dim = static_cast<Eigen::Index>(p.dim);
  const auto classes = p.c.size();
  Eigen::MatrixXd h(n, dim);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    h.row(i) = recnet_embed(p, trees[static_cast<std::size_t>(i)]).transpose();
    const int l = labels[static_cast<std::size_t>(i)];
    if (l < 1 || l > classes) throw ModelError("tes: label out of range");
    y(i, l - 1) = 1.0;
  }
  const Eigen::RowVectorXd h_mean = h.colwise().mean();
  const Eigen::RowVectorXd y_mean = y.colwise().mean();
  const Eigen::MatrixXd hc = h.rowwise() - h_mean;
  const Eigen::MatrixXd yc = y.rowwise() - y_mean;
  Eigen::MatrixXd a = hc.transpose() * hc;
  a.diagonal().array() += ridge;
  const Eigen::MatrixXd rhs = hc.transpose() * yc;
  Eigen::MatrixXd coef;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  bool solved = false;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    const double min_pivot = ldlt.vectorD().cwiseAbs().minCoeff();
    const double max_pivot = ldlt.vectorD().cwiseAbs().maxCoeff();
    if (min_pivot > 1e-12 * std::max(max_pivot, 1e-300)) {
      coef = ldlt.solve(rhs);
      solved = coef.allFinite();
    }
  }
  if (!solved) coef = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(a).solve(rhs);
  p.v = coef.transpose();
  p.c = y_mean.transpose() - p.v * h_mean.transpose();
}

inline RecursiveParams tes_train(std::span<const Tree> trees, std::span<const int> labels, const TesOptions& options,
                                 Rng& rng) {
  if (trees.empty() || trees.size() != labels.size()) throw ModelError("tes: need one label per tree");
  const int classes = detail::max_label(labels);
  RecursiveParams p =
      tes_reservoir(detail::training_alphabet(trees, options.alphabet), options.dim, options.scale, classes, rng);
  tes_fit_readout(p, trees, labels, options.ridge);
  return p;
}

// Classifier over either kind of recursive parameters.
class RecursiveClassifier final : public Classifier {
 public:
  RecursiveClassifier(RecursiveParams params, std::string kind) : params_(std::move(params)), kind_(std::move(kind)) {}
  int predict(const Tree& t) const override { return detail::argmax_label(recnet_output(params_, t)); }
  int num_classes() const override { return static_cast<int>(params_.num_classes()); }
  std::string kind() const override { return kind_; }
  const RecursiveParams& params() const noexcept { return params_; }

 private:
  RecursiveParams params_;
  std::string kind_;
};

}  // namespace advedit
