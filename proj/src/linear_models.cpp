#include <algorithm>
#include <cmath>
#include <numeric>

#include "model_state.hpp"

namespace tscompress::detail {

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  const auto n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean().transpose();
  s.scale = Eigen::VectorXd::Ones(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean(j)).square().sum() / std::max(1.0, n);
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(s.mean(j)))) s.scale(j) = sd;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd z = x.rowwise() - mean.transpose();
  return z.array().rowwise() / scale.transpose().array();
}

Eigen::VectorXd Standardizer::apply_row(std::span<const double> row) const {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index j = 0; j < mean.size(); ++j) z(j) = (row[static_cast<std::size_t>(j)] - mean(j)) / scale(j);
  return z;
}

LinearFit fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double penalty) {
  LinearFit fit;
  const Eigen::VectorXd x_mean = x.colwise().mean().transpose();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean.transpose();
  const Eigen::VectorXd yc = y.array() - y_mean;

  if (penalty > 0.0) {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += penalty;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    fit.coefficients = ldlt.solve(xc.transpose() * yc);
    if (ldlt.info() != Eigen::Success || !fit.coefficients.allFinite()) {
      fit.coefficients = xc.completeOrthogonalDecomposition().solve(yc);
    }
  } else {
    // Minimum-norm least squares; exact on interpolating data and safe when rank-deficient.
    fit.coefficients = xc.completeOrthogonalDecomposition().solve(yc);
  }
  if (!fit.coefficients.allFinite()) fit.coefficients.setZero(x.cols());
  fit.intercept = y_mean - x_mean.dot(fit.coefficients);
  return fit;
}

namespace {

double kernel_value(Kernel kernel, double bandwidth, int degree, const Eigen::Ref<const Eigen::VectorXd>& a,
                    const Eigen::Ref<const Eigen::VectorXd>& b) {
  const auto p = static_cast<double>(a.size());
  switch (kernel) {
    case Kernel::rbf:
      return std::exp(-(a - b).squaredNorm() / (2.0 * bandwidth * bandwidth * p));
    case Kernel::laplace:
      return std::exp(-(a - b).norm() / (bandwidth * std::sqrt(p)));
    case Kernel::polynomial:
      return std::pow(1.0 + a.dot(b) / p, degree);
  }
  return 0.0;
}

}  // namespace

KernelFit fit_kernel_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelRidgeParams& params) {
  KernelFit fit;
  fit.kernel = params.kernel;
  fit.bandwidth = params.bandwidth;
  fit.degree = params.degree;

  const Eigen::Index keep = std::min<Eigen::Index>(x.rows(), static_cast<Eigen::Index>(params.max_rows));
  const Eigen::MatrixXd xs = x.bottomRows(keep);
  const Eigen::VectorXd ys = y.tail(keep);

  fit.standardizer = Standardizer::fit(xs);
  fit.support = fit.standardizer.apply(xs);
  fit.offset = ys.mean();

  Eigen::MatrixXd k(keep, keep);
  for (Eigen::Index i = 0; i < keep; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = kernel_value(fit.kernel, fit.bandwidth, fit.degree, fit.support.row(i).transpose(),
                                    fit.support.row(j).transpose());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  k.diagonal().array() += params.penalty;
  const Eigen::VectorXd rhs = ys.array() - fit.offset;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() == Eigen::Success) {
    fit.dual = llt.solve(rhs);
  } else {
    fit.dual = k.ldlt().solve(rhs);
  }
  if (!fit.dual.allFinite()) fit.dual.setZero(keep);
  return fit;
}

double kernel_predict(const KernelFit& fit, std::span<const double> row) {
  const Eigen::VectorXd z = fit.standardizer.apply_row(row);
  double s = fit.offset;
  for (Eigen::Index i = 0; i < fit.support.rows(); ++i) {
    s += fit.dual(i) * kernel_value(fit.kernel, fit.bandwidth, fit.degree, fit.support.row(i).transpose(), z);
  }
  return s;
}

KnnFit fit_knn(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KnnParams& params) {
  KnnFit fit;
  fit.k = std::min<std::size_t>(params.k, static_cast<std::size_t>(x.rows()));
  fit.standardizer = Standardizer::fit(x);
  fit.points = fit.standardizer.apply(x);
  fit.targets = y;
  return fit;
}

double knn_predict(const KnnFit& fit, std::span<const double> row) {
  const Eigen::VectorXd z = fit.standardizer.apply_row(row);
  const auto n = static_cast<std::size_t>(fit.points.rows());
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = {(fit.points.row(static_cast<Eigen::Index>(i)).transpose() - z).squaredNorm(), i};
  }
  // Equal distances resolve to the earlier row.
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(fit.k), dist.end());
  double s = 0.0;
  for (std::size_t i = 0; i < fit.k; ++i) s += fit.targets(static_cast<Eigen::Index>(dist[i].second));
  return s / static_cast<double>(fit.k);
}

}  // namespace tscompress::detail
