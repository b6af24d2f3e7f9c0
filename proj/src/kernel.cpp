#include "gppriv/kernel.hpp"

#include <Eigen/Cholesky>
#include <sstream>
#include <stdexcept>

namespace gppriv {

double se_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& x2,
                 const SEKernelParams& p) {
  if (x.size() != x2.size()) {
    std::ostringstream msg;
    msg << "se_kernel: dimension mismatch (" << x.size() << " vs " << x2.size()
        << ")";
    throw std::invalid_argument(msg.str());
  }
  if (!std::isfinite(p.log_amplitude) || !std::isfinite(p.log_scale)) {
    throw std::invalid_argument("se_kernel: non-finite kernel parameters");
  }
  const double d2 = (x - x2).squaredNorm();
  return p.amplitude() * std::exp(-0.5 * d2 / p.scale());
}

PSDMatrix kernel_matrix(const Eigen::Ref<const Eigen::MatrixXd>& X,
                        const SEKernelParams& p) {
  const Eigen::Index n = X.rows();
  if (n < 1) throw std::invalid_argument("kernel_matrix: empty input");
  const double theta = p.amplitude();
  const double inv2l = 0.5 / p.scale();
  PSDMatrix out;
  out.entries.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.entries(i, i) = theta;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d2 = (X.row(i) - X.row(j)).squaredNorm();
      const double k = theta * std::exp(-d2 * inv2l);
      out.entries(i, j) = k;
      out.entries(j, i) = k;
    }
  }
  return out;
}

Eigen::MatrixXd kernel_matrix_grad_log_scale(
    const Eigen::Ref<const Eigen::MatrixXd>& X, const SEKernelParams& p) {
  const Eigen::Index n = X.rows();
  const double theta = p.amplitude();
  const double l = p.scale();
  Eigen::MatrixXd grad(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    grad(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d2 = (X.row(i) - X.row(j)).squaredNorm();
      const double g = theta * std::exp(-0.5 * d2 / l) * 0.5 * d2 / l;
      grad(i, j) = g;
      grad(j, i) = g;
    }
  }
  return grad;
}

Eigen::MatrixXd kernel_cross(const Eigen::Ref<const Eigen::MatrixXd>& X,
                             const Eigen::Ref<const Eigen::MatrixXd>& Xnew,
                             const SEKernelParams& p) {
  if (X.cols() != Xnew.cols()) {
    std::ostringstream msg;
    msg << "kernel_cross: feature dimension mismatch (" << X.cols() << " vs "
        << Xnew.cols() << ")";
    throw std::invalid_argument(msg.str());
  }
  const double theta = p.amplitude();
  const double inv2l = 0.5 / p.scale();
  Eigen::MatrixXd out(X.rows(), Xnew.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < Xnew.rows(); ++j) {
      const double d2 = (X.row(i) - Xnew.row(j)).squaredNorm();
      out(i, j) = theta * std::exp(-d2 * inv2l);
    }
  }
  return out;
}

CholeskyResult chol_with_jitter(const Eigen::MatrixXd& m, double base_jitter) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument("chol_with_jitter: matrix not square");
  }
  const Eigen::Index n = m.rows();
  constexpr int kMaxRetries = 6;
  double jitter = 0.0;
  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    Eigen::MatrixXd shifted = m;
    if (jitter > 0.0) shifted.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd lower = llt.matrixL();
      if (lower.diagonal().allFinite()) {
        return CholeskyResult{std::move(lower), jitter};
      }
    }
    jitter = (attempt == 0) ? base_jitter : jitter * 10.0;
  }
  std::ostringstream msg;
  msg << "chol_with_jitter: factorization failed after " << kMaxRetries
      << " retries (n=" << n << ", max jitter=" << jitter / 10.0
      << ", diag range=[" << m.diagonal().minCoeff() << ", "
      << m.diagonal().maxCoeff()
      << "], asymmetry=" << (m - m.transpose()).cwiseAbs().maxCoeff() << ")";
  throw std::runtime_error(msg.str());
}

}  // namespace gppriv
