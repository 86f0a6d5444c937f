#pragma once

// Kernel SVM on a precomputed Gram matrix. Binary subproblems are solved with
// SMO using second-order working-set selection (Fan, Chen & Lin 2005);
// multiclass problems use one-vs-rest.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "advedit/error.hpp"

namespace advedit {

struct SmoOptions {
  double tolerance = 1e-3;
  std::size_t max_iterations = 0;  // 0: max(10^7, 100 n)
};

struct BinarySvm {
  Eigen::VectorXd alpha;  // dual variables in [0, C]
  Eigen::VectorXd coef;   // alpha_i * y_i
  double rho = 0.0;       // decision(x) = sum_i coef_i k(x_i, x) - rho
  std::size_t iterations = 0;
  bool converged = true;

  double decision(const Eigen::Ref<const Eigen::VectorXd>& k_row) const { return coef.dot(k_row) - rho; }
};

namespace detail {

inline constexpr double kTau = 1e-12;

// Largest KKT violation m(alpha) - M(alpha) for a solved binary problem.
inline double kkt_gap(const Eigen::VectorXd& y, const Eigen::VectorXd& alpha, const Eigen::VectorXd& grad,
                      double c) {
  double up = -std::numeric_limits<double>::infinity();
  double low = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    const double v = -y(t) * grad(t);
    const bool in_up = (y(t) > 0 && alpha(t) < c) || (y(t) < 0 && alpha(t) > 0);
    const bool in_low = (y(t) > 0 && alpha(t) > 0) || (y(t) < 0 && alpha(t) < c);
    if (in_up) up = std::max(up, v);
    if (in_low) low = std::min(low, v);
  }
  if (!std::isfinite(up) || !std::isfinite(low)) return 0.0;
  return up - low;
}

}  // namespace detail

// Solves min 1/2 a^T Q a - e^T a, 0 <= a <= C, y^T a = 0 with Q_ij = y_i y_j K_ij.
// y entries must be +1 or -1.
inline BinarySvm smo_solve(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, double c,
                           const SmoOptions& options = {}) {
  const Eigen::Index n = y.size();
  if (k.rows() != n || k.cols() != n) throw ModelError("smo: Gram matrix size does not match the labels");
  if (!(c > 0.0) || !std::isfinite(c)) throw ModelError("smo: C must be positive");
  const std::size_t max_iter =
      options.max_iterations > 0 ? options.max_iterations : std::max<std::size_t>(10000000, 100 * static_cast<std::size_t>(n));

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
  auto q = [&](Eigen::Index i, Eigen::Index j) { return y(i) * y(j) * k(i, j); };
  auto is_up = [&](Eigen::Index t) { return (y(t) > 0 && alpha(t) < c) || (y(t) < 0 && alpha(t) > 0); };
  auto is_low = [&](Eigen::Index t) { return (y(t) > 0 && alpha(t) > 0) || (y(t) < 0 && alpha(t) < c); };

  BinarySvm out;
  std::size_t iter = 0;
  for (; iter < max_iter; ++iter) {
    // i: maximal violating index in I_up.
    Eigen::Index i = -1;
    double g_max = -std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (is_up(t) && -y(t) * grad(t) > g_max) {
        g_max = -y(t) * grad(t);
        i = t;
      }
    }
    // j: second-order choice in I_low.
    Eigen::Index j = -1;
    double g_min = std::numeric_limits<double>::infinity();
    double best_obj = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!is_low(t)) continue;
      const double v = -y(t) * grad(t);
      g_min = std::min(g_min, v);
      if (i < 0) continue;
      const double b = g_max - v;
      if (b > 0.0) {
        double a = k(i, i) + k(t, t) - 2.0 * k(i, t);
        if (a <= 0.0) a = detail::kTau;
        const double obj = -(b * b) / a;
        if (obj < best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    if (i < 0 || j < 0 || g_max - g_min < options.tolerance) break;

    const double old_ai = alpha(i);
    const double old_aj = alpha(j);
    double a = k(i, i) + k(j, j) - 2.0 * k(i, j);
    if (a <= 0.0) a = detail::kTau;
    if (y(i) != y(j)) {
      const double delta = (-grad(i) - grad(j)) / a;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0) {
        if (alpha(j) < 0) {
          alpha(j) = 0;
          alpha(i) = diff;
        }
      } else if (alpha(i) < 0) {
        alpha(i) = 0;
        alpha(j) = -diff;
      }
      if (diff > 0) {
        if (alpha(i) > c) {
          alpha(i) = c;
          alpha(j) = c - diff;
        }
      } else if (alpha(j) > c) {
        alpha(j) = c;
        alpha(i) = c + diff;
      }
    } else {
      const double delta = (grad(i) - grad(j)) / a;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > c) {
        if (alpha(i) > c) {
          alpha(i) = c;
          alpha(j) = sum - c;
        }
      } else if (alpha(j) < 0) {
        alpha(j) = 0;
        alpha(i) = sum;
      }
      if (sum > c) {
        if (alpha(j) > c) {
          alpha(j) = c;
          alpha(i) = sum - c;
        }
      } else if (alpha(i) < 0) {
        alpha(i) = 0;
        alpha(j) = sum;
      }
    }
    const double di = alpha(i) - old_ai;
    const double dj = alpha(j) - old_aj;
    for (Eigen::Index t = 0; t < n; ++t) grad(t) += q(t, i) * di + q(t, j) * dj;
  }
  out.iterations = iter;
  out.converged = iter < max_iter;

  // Bias: average over free vectors, otherwise the midpoint of the feasible range.
  double sum_free = 0.0;
  std::size_t n_free = 0;
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y(t) * grad(t);
    if (alpha(t) >= c) {
      if (y(t) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha(t) <= 0) {
      if (y(t) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  if (n_free > 0) {
    out.rho = sum_free / static_cast<double>(n_free);
  } else if (std::isfinite(ub) && std::isfinite(lb)) {
    out.rho = 0.5 * (ub + lb);
  } else {
    out.rho = std::isfinite(ub) ? ub : (std::isfinite(lb) ? lb : 0.0);
  }
  out.alpha = alpha;
  out.coef = alpha.cwiseProduct(y);
  return out;
}

// Gradient of the dual objective at the returned solution; used for KKT checks.
inline Eigen::VectorXd smo_gradient(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, const Eigen::VectorXd& alpha) {
  Eigen::VectorXd ya = alpha.cwiseProduct(y);
  return y.cwiseProduct(k * ya) - Eigen::VectorXd::Ones(y.size());
}

inline double smo_kkt_gap(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, const BinarySvm& m, double c) {
  return detail::kkt_gap(y, m.alpha, smo_gradient(k, y, m.alpha), c);
}

// One-vs-rest multiclass SVM over labels 1..L.
struct SvmModel {
  double c = 1.0;
  int num_classes = 0;
  std::vector<BinarySvm> machines;  // machines[l-1] separates class l from the rest

  Eigen::VectorXd decision_values(const Eigen::Ref<const Eigen::VectorXd>& k_row) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(machines.size()));
    for (std::size_t l = 0; l < machines.size(); ++l) {
      if (k_row.size() != machines[l].coef.size()) {
        throw ModelError("svm: kernel row has length " + std::to_string(k_row.size()) + ", expected " +
                         std::to_string(machines[l].coef.size()));
      }
      out(static_cast<Eigen::Index>(l)) = machines[l].decision(k_row);
    }
    return out;
  }

  // Argmax of the decision values; ties go to the smallest class.
  int predict(const Eigen::Ref<const Eigen::VectorXd>& k_row) const {
    Eigen::VectorXd d = decision_values(k_row);
    Eigen::Index best = 0;
    for (Eigen::Index l = 1; l < d.size(); ++l) {
      if (d(l) > d(best)) best = l;
    }
    return static_cast<int>(best) + 1;
  }
};

namespace detail {

inline int check_labels(std::span<const int> labels) {
  if (labels.empty()) throw ModelError("svm: empty training set");
  int max_label = 0;
  for (int l : labels) {
    if (l < 1) throw ModelError("svm: labels must be >= 1");
    max_label = std::max(max_label, l);
  }
  std::vector<bool> seen(static_cast<std::size_t>(max_label) + 1, false);
  for (int l : labels) seen[static_cast<std::size_t>(l)] = true;
  int present = 0;
  for (int l = 1; l <= max_label; ++l) present += seen[static_cast<std::size_t>(l)] ? 1 : 0;
  if (present < 2) throw ModelError("svm: training set needs at least two classes");
  return max_label;
}

}  // namespace detail

inline void check_psd(const Eigen::MatrixXd& k, double relative_tolerance = 1e-8) {
  if (k.rows() != k.cols()) throw ModelError("Gram matrix must be square");
  if (!k.allFinite()) throw ModelError("Gram matrix has non-finite entries");
  if (k.size() == 0) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (k + k.transpose()), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = solver.eigenvalues();
  const double norm = ev.cwiseAbs().maxCoeff();
  if (ev(0) < -relative_tolerance * std::max(norm, 1.0)) {
    throw ModelError("Gram matrix is not positive semi-definite (min eigenvalue " + std::to_string(ev(0)) + ")");
  }
}

// Labels are 1..L; classes absent from the training set get a machine that
// never wins (all-negative problem is skipped and its decision is -inf-like).
inline SvmModel svm_train(const Eigen::MatrixXd& k, std::span<const int> labels, double c,
                          const SmoOptions& options = {}) {
  if (k.rows() != static_cast<Eigen::Index>(labels.size()) || k.cols() != k.rows()) {
    throw ModelError("svm: Gram matrix size does not match the number of labels");
  }
  const int classes = detail::check_labels(labels);
  check_psd(k);
  SvmModel model;
  model.c = c;
  model.num_classes = classes;
  const Eigen::Index n = k.rows();
  for (int l = 1; l <= classes; ++l) {
    Eigen::VectorXd y(n);
    bool any = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      y(i) = labels[static_cast<std::size_t>(i)] == l ? 1.0 : -1.0;
      any = any || y(i) > 0;
    }
    if (!any) {
      BinarySvm absent;
      absent.alpha = Eigen::VectorXd::Zero(n);
      absent.coef = Eigen::VectorXd::Zero(n);
      absent.rho = std::numeric_limits<double>::max();
      model.machines.push_back(std::move(absent));
      continue;
    }
    model.machines.push_back(smo_solve(k, y, c, options));
  }
  return model;
}

}  // namespace advedit
