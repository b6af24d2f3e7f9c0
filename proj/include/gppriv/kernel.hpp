#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace gppriv {

// Squared-exponential kernel k(x, x') = theta * exp(-||x - x'||^2 / (2 l)).
// A single scalar l divides the squared distance. Hyperparameters live in the
// log domain so positivity holds by construction.
struct SEKernelParams {
  double log_amplitude = 0.0;  // log(theta)
  double log_scale = 0.0;      // log(l)

  double amplitude() const { return std::exp(log_amplitude); }
  double scale() const { return std::exp(log_scale); }
};

double se_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& x2,
                 const SEKernelParams& p);

// Dense Gram matrix with a record of any diagonal jitter applied to it.
struct PSDMatrix {
  Eigen::MatrixXd entries;
  double jitter_applied = 0.0;

  Eigen::Index size() const { return entries.rows(); }
};

// Rows of X are points.
PSDMatrix kernel_matrix(const Eigen::Ref<const Eigen::MatrixXd>& X,
                        const SEKernelParams& p);

// Entrywise dK/dlog(l) for the same Gram matrix.
Eigen::MatrixXd kernel_matrix_grad_log_scale(
    const Eigen::Ref<const Eigen::MatrixXd>& X, const SEKernelParams& p);

// Cross-covariance between training rows X and query rows Xnew: N x M.
Eigen::MatrixXd kernel_cross(const Eigen::Ref<const Eigen::MatrixXd>& X,
                             const Eigen::Ref<const Eigen::MatrixXd>& Xnew,
                             const SEKernelParams& p);

struct CholeskyResult {
  Eigen::MatrixXd lower;
  double jitter_used = 0.0;
};

// Lower Cholesky factor of m + jitter*I. Starts without jitter, then retries
// with base_jitter escalating x10, at most 6 retries. Throws std::runtime_error
// with condition diagnostics if every attempt fails.
CholeskyResult chol_with_jitter(const Eigen::MatrixXd& m, double base_jitter);

struct GaussianPosterior {
  Eigen::VectorXd mean;
  PSDMatrix covariance;
};

}  // namespace gppriv
