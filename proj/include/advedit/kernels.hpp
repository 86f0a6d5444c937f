#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "advedit/error.hpp"
#include "advedit/parallel.hpp"
#include "advedit/ted.hpp"
#include "advedit/tree.hpp"

namespace advedit {

enum class KernelKind { linear, rbf, subtree, subset_tree, partial_tree };

inline std::string kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::linear: return "linear";
    case KernelKind::rbf: return "rbf";
    case KernelKind::subtree: return "st";
    case KernelKind::subset_tree: return "sst";
    case KernelKind::partial_tree: return "pt";
  }
  return "unknown";
}

inline KernelKind kernel_from_name(const std::string& name) {
  for (KernelKind k : {KernelKind::linear, KernelKind::rbf, KernelKind::subtree, KernelKind::subset_tree,
                       KernelKind::partial_tree}) {
    if (kernel_name(k) == name) return k;
  }
  throw KernelError("unknown kernel '" + name + "'");
}

inline bool is_distance_kernel(KernelKind kind) { return kind == KernelKind::linear || kind == KernelKind::rbf; }

struct KernelProvenance {
  KernelKind kind = KernelKind::linear;
  double parameter = 0.0;  // sigma for rbf, lambda for tree kernels, unused for linear
  bool normalized = false;
  bool clipped = false;
};

struct GramMatrix {
  Eigen::MatrixXd values;
  KernelProvenance provenance;
};

// ---------------------------------------------------------------------------
// Distance-based kernels

inline Eigen::MatrixXd to_matrix(const DistanceMatrix& d) {
  const auto n = static_cast<Eigen::Index>(d.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      m(i, j) = d(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
  }
  return m;
}

namespace detail {

inline void check_distance_matrix(const Eigen::MatrixXd& d) {
  if (d.rows() != d.cols()) throw KernelError("distance matrix must be square");
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    if (d(i, i) != 0.0) throw KernelError("distance matrix must have a zero diagonal");
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (!std::isfinite(d(i, j)) || d(i, j) < 0.0) throw KernelError("distances must be finite and non-negative");
      if (d(i, j) != d(j, i)) throw KernelError("distance matrix must be symmetric");
    }
  }
}

}  // namespace detail

// Double centering: K = -1/2 J D^2 J with J = I - 11^T/n.
inline GramMatrix linear_kernel(const Eigen::MatrixXd& d) {
  detail::check_distance_matrix(d);
  const Eigen::Index n = d.rows();
  Eigen::MatrixXd sq = d.array().square().matrix();
  Eigen::VectorXd row_mean = sq.rowwise().mean();
  const double grand = n > 0 ? row_mean.mean() : 0.0;
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = -0.5 * (sq(i, j) - row_mean(i) - row_mean(j) + grand);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return {k, {KernelKind::linear, 0.0, false, false}};
}

inline double rbf_value(double distance, double sigma) {
  return std::exp(-0.5 * distance * distance / (sigma * sigma));
}

inline GramMatrix rbf_kernel(const Eigen::MatrixXd& d, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw KernelError("rbf bandwidth must be positive");
  detail::check_distance_matrix(d);
  Eigen::MatrixXd k = d.unaryExpr([sigma](double v) { return rbf_value(v, sigma); });
  return {k, {KernelKind::rbf, sigma, false, false}};
}

// ---------------------------------------------------------------------------
// Tree kernels. All three evaluate a node-pair recursion bottom-up over the
// preorder views (children have larger preorder indices than their parents).

namespace detail {

inline void check_decay(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw KernelError("kernel decay must be positive");
}

template <typename NodePair>
double sum_node_pairs(const PreorderView& x, const PreorderView& y, NodePair&& delta) {
  const std::size_t nx = x.size();
  const std::size_t ny = y.size();
  std::vector<double> table((nx + 1) * (ny + 1), 0.0);
  auto at = [&](std::size_t v, std::size_t w) -> double { return table[v * (ny + 1) + w]; };
  double total = 0.0;
  for (std::size_t v = nx; v >= 1; --v) {
    for (std::size_t w = ny; w >= 1; --w) {
      const double value = delta(v, w, at);
      table[v * (ny + 1) + w] = value;
      total += value;
    }
  }
  return total;
}

}  // namespace detail

// Subtree kernel: sum over node pairs with identical complete subtrees of lambda^size.
inline double st_kernel(const PreorderView& x, const PreorderView& y, double lambda) {
  detail::check_decay(lambda);
  // delta stores 1 for identical subtrees, 0 otherwise; the weight is applied on summation.
  double total = 0.0;
  detail::sum_node_pairs(x, y, [&](std::size_t v, std::size_t w, auto&& same) {
    if (x.label(v) != y.label(w) || x.arity(v) != y.arity(w) || x.subtree_size(v) != y.subtree_size(w)) {
      return 0.0;
    }
    auto cv = x.children(v);
    auto cw = y.children(w);
    for (std::size_t k = 0; k < cv.size(); ++k) {
      if (same(cv[k], cw[k]) == 0.0) return 0.0;
    }
    total += std::pow(lambda, static_cast<double>(x.subtree_size(v)));
    return 1.0;
  });
  return total;
}

// Subset tree kernel (shared fragments that keep whole productions).
inline double sst_kernel(const PreorderView& x, const PreorderView& y, double lambda) {
  detail::check_decay(lambda);
  return detail::sum_node_pairs(x, y, [&](std::size_t v, std::size_t w, auto&& delta) {
    if (x.label(v) != y.label(w) || x.arity(v) != y.arity(w)) return 0.0;
    auto cv = x.children(v);
    auto cw = y.children(w);
    for (std::size_t k = 0; k < cv.size(); ++k) {
      if (x.label(cv[k]) != y.label(cw[k])) return 0.0;
    }
    double product = lambda;
    for (std::size_t k = 0; k < cv.size(); ++k) product *= 1.0 + delta(cv[k], cw[k]);
    return product;
  });
}

// Partial tree kernel with depth decay mu = lambda. Child subsequence pairs are
// weighted by lambda^(span1 + span2).
inline double pt_kernel(const PreorderView& x, const PreorderView& y, double lambda) {
  detail::check_decay(lambda);
  const double mu = lambda;
  const double lambda2 = lambda * lambda;
  std::vector<double> prefix;
  return detail::sum_node_pairs(x, y, [&](std::size_t v, std::size_t w, auto&& delta) {
    if (x.label(v) != y.label(w)) return 0.0;
    auto cv = x.children(v);
    auto cw = y.children(w);
    const std::size_t m1 = cv.size();
    const std::size_t m2 = cw.size();
    double sequences = 0.0;
    if (m1 > 0 && m2 > 0) {
      // e(i,j): weighted sum over sequence pairs ending exactly at children (i,j);
      // prefix(i,j) = sum over i'<=i, j'<=j of e(i',j') * lambda^((i-i')+(j-j')).
      const std::size_t stride = m2 + 1;
      prefix.assign((m1 + 1) * stride, 0.0);
      for (std::size_t i = 1; i <= m1; ++i) {
        for (std::size_t j = 1; j <= m2; ++j) {
          const double d = delta(cv[i - 1], cw[j - 1]);
          const double e = d == 0.0 ? 0.0 : d * lambda2 * (1.0 + prefix[(i - 1) * stride + j - 1]);
          prefix[i * stride + j] = e + lambda * prefix[(i - 1) * stride + j] +
                                   lambda * prefix[i * stride + j - 1] -
                                   lambda2 * prefix[(i - 1) * stride + j - 1];
          sequences += e;
        }
      }
    }
    return mu * (lambda2 + sequences);
  });
}

inline double tree_kernel(KernelKind kind, const PreorderView& x, const PreorderView& y, double lambda) {
  switch (kind) {
    case KernelKind::subtree: return st_kernel(x, y, lambda);
    case KernelKind::subset_tree: return sst_kernel(x, y, lambda);
    case KernelKind::partial_tree: return pt_kernel(x, y, lambda);
    default: throw KernelError("'" + kernel_name(kind) + "' is not a tree kernel");
  }
}

inline double st_kernel(const Tree& x, const Tree& y, double lambda) {
  return st_kernel(PreorderView(x), PreorderView(y), lambda);
}
inline double sst_kernel(const Tree& x, const Tree& y, double lambda) {
  return sst_kernel(PreorderView(x), PreorderView(y), lambda);
}
inline double pt_kernel(const Tree& x, const Tree& y, double lambda) {
  return pt_kernel(PreorderView(x), PreorderView(y), lambda);
}

inline double normalized_kernel(double xy, double xx, double yy) {
  const double denom = std::sqrt(xx * yy);
  return denom > 0.0 ? xy / denom : 0.0;
}

// Gram matrix over `trees`; only the upper triangle is evaluated.
inline GramMatrix tree_kernel_gram(KernelKind kind, std::span<const PreorderView> trees, double lambda,
                                   bool normalize = false, std::size_t threads = 0) {
  const std::size_t n = trees.size();
  Eigen::MatrixXd k(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  parallel_for(
      n,
      [&](std::size_t i) {
        for (std::size_t j = i; j < n; ++j) {
          k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = tree_kernel(kind, trees[i], trees[j], lambda);
        }
      },
      threads);
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) k(i, j) = k(j, i);
  }
  if (normalize) {
    Eigen::VectorXd diag = k.diagonal();
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
      for (Eigen::Index j = 0; j < k.cols(); ++j) k(i, j) = normalized_kernel(k(i, j), diag(i), diag(j));
    }
  }
  return {k, {kind, lambda, normalize, false}};
}

// ---------------------------------------------------------------------------
// Clip eigenvalue correction

// Orthogonal projector onto the eigenspace of positive eigenvalues. For a Gram
// matrix K, K * P equals the clipped matrix, and a kernel row k of a new point
// maps to P k in the same corrected space.
struct ClipCorrection {
  Eigen::MatrixXd projector;
  Eigen::VectorXd eigenvalues;  // before clipping, ascending
};

inline ClipCorrection clip_correction(const Eigen::MatrixXd& k) {
  if (k.rows() != k.cols()) throw KernelError("clip correction needs a square matrix");
  if (!k.allFinite()) throw KernelError("clip correction: matrix has non-finite entries");
  const double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw KernelError("clip correction needs a symmetric matrix");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (k + k.transpose()));
  if (solver.info() != Eigen::Success) throw KernelError("eigendecomposition failed");
  const Eigen::VectorXd& values = solver.eigenvalues();
  const Eigen::MatrixXd& vectors = solver.eigenvectors();
  const double norm = values.size() > 0 ? values.cwiseAbs().maxCoeff() : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values(i) > 1e-12 * norm) keep.push_back(i);
  }
  Eigen::MatrixXd basis(k.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) basis.col(static_cast<Eigen::Index>(c)) = vectors.col(keep[c]);
  return {basis * basis.transpose(), values};
}

// K' = U max(Lambda, 0) U^T.
inline GramMatrix clip_psd(const GramMatrix& k) {
  if (k.values.rows() != k.values.cols()) throw KernelError("clip_psd needs a square matrix");
  if (!k.values.allFinite()) throw KernelError("clip_psd: matrix has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (k.values + k.values.transpose()));
  if (solver.info() != Eigen::Success) throw KernelError("eigendecomposition failed");
  Eigen::VectorXd values = solver.eigenvalues();
  // Eigenvalues in [-1e-12 |K|, 0) are numerical noise; all negatives end up at zero.
  values = values.cwiseMax(0.0);
  const Eigen::MatrixXd& u = solver.eigenvectors();
  Eigen::MatrixXd clipped = u * values.asDiagonal() * u.transpose();
  GramMatrix out{0.5 * (clipped + clipped.transpose()), k.provenance};
  out.provenance.clipped = true;
  return out;
}

inline GramMatrix clip_psd(const Eigen::MatrixXd& k) { return clip_psd(GramMatrix{k, {}}); }

inline double min_eigenvalue(const Eigen::MatrixXd& k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (k + k.transpose()), Eigen::EigenvaluesOnly);
  return solver.eigenvalues().size() > 0 ? solver.eigenvalues()(0) : 0.0;
}

inline double spectral_norm(const Eigen::MatrixXd& k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (k + k.transpose()), Eigen::EigenvaluesOnly);
  return solver.eigenvalues().size() > 0 ? solver.eigenvalues().cwiseAbs().maxCoeff() : 0.0;
}

// ---------------------------------------------------------------------------
// Persistence: "n" on the first line, then n rows of n decimals. Provenance
// goes to a sidecar written by the caller (see tools).

inline void write_gram(std::ostream& out, const Eigen::MatrixXd& k) {
  out << k.rows() << '\n';
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      if (j > 0) out << ' ';
      out << k(i, j);
    }
    out << '\n';
  }
}

inline Eigen::MatrixXd read_gram(std::istream& in) {
  long long n = -1;
  if (!(in >> n) || n < 0) throw KernelError("gram file: expected the matrix size on the first line");
  Eigen::MatrixXd k(n, n);
  for (long long i = 0; i < n; ++i) {
    for (long long j = 0; j < n; ++j) {
      if (!(in >> k(i, j))) {
        throw KernelError("gram file: missing value at row " + std::to_string(i + 1) + ", column " +
                          std::to_string(j + 1));
      }
    }
  }
  return k;
}

}  // namespace advedit
