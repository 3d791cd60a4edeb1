#pragma once

// Independent brute-force oracles for the objective math. Everything here is
// written with explicit loops against plain Eigen values so it shares no code
// path with the tape-based implementations it checks.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace oracles {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Mat standardize_columns(const Mat& z, double eps = 1e-5) {
  const Eigen::Index b = z.rows(), d = z.cols();
  Mat out(b, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double mean = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) mean += z(i, j);
    mean /= static_cast<double>(b);
    double var = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) var += (z(i, j) - mean) * (z(i, j) - mean);
    var /= static_cast<double>(b);
    const double sd = std::max(std::sqrt(var), eps);
    for (Eigen::Index i = 0; i < b; ++i) out(i, j) = (z(i, j) - mean) / sd;
  }
  return out;
}

/// Eq.-style batch cross-correlation as an explicit triple loop.
inline Mat cross_correlation(const Mat& za, const Mat& zb, bool standardize = true,
                             double eps = 1e-5) {
  Mat a = standardize ? standardize_columns(za, eps) : za;
  Mat b = standardize ? standardize_columns(zb, eps) : zb;
  const Eigen::Index batch = a.rows(), d = a.cols();
  Mat c = Mat::Zero(d, d);
  for (Eigen::Index k = 0; k < d; ++k)
    for (Eigen::Index l = 0; l < d; ++l) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < batch; ++i) acc += a(i, k) * b(i, l);
      c(k, l) = acc / static_cast<double>(batch);
    }
  return c;
}

/// Identity-target penalty: sum_k (C_kk - 1)^2 + lambda * sum_{k!=l} C_kl^2.
inline double identity_penalty(const Mat& c, double lambda) {
  double diag = 0.0, off = 0.0;
  for (Eigen::Index k = 0; k < c.rows(); ++k)
    for (Eigen::Index l = 0; l < c.cols(); ++l) {
      if (k == l)
        diag += (c(k, l) - 1.0) * (c(k, l) - 1.0);
      else
        off += c(k, l) * c(k, l);
    }
  return diag + lambda * off;
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

/// InfoNCE alignment loss over (views..., fused) against text, per the
/// printed formula: image rows against all text candidates.
inline double vl_align(const std::vector<Mat>& views, const Mat& fused, const Mat& text,
                       double tau) {
  std::vector<const Mat*> groups;
  for (const Mat& v : views) groups.push_back(&v);
  groups.push_back(&fused);
  const Eigen::Index b = text.rows();
  double acc = 0.0;
  for (const Mat* g : groups) {
    for (Eigen::Index i = 0; i < b; ++i) {
      double denom = 0.0;
      double pos = 0.0;
      // Stabilize the softmax the straightforward way: shift by the max.
      std::vector<double> sims(static_cast<std::size_t>(b));
      double mx = -1e300;
      for (Eigen::Index j = 0; j < b; ++j) {
        sims[static_cast<std::size_t>(j)] =
            cosine(g->row(i).transpose(), text.row(j).transpose()) / tau;
        mx = std::max(mx, sims[static_cast<std::size_t>(j)]);
      }
      for (Eigen::Index j = 0; j < b; ++j) denom += std::exp(sims[static_cast<std::size_t>(j)] - mx);
      pos = sims[static_cast<std::size_t>(i)] - mx;
      acc += -(pos - std::log(denom));
    }
  }
  return acc / (static_cast<double>(groups.size()) * static_cast<double>(b));
}

}  // namespace oracles
