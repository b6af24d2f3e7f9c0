#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <stdexcept>

#include "gppriv/kernel.hpp"
#include "gppriv/rng.hpp"
#include "oracles.hpp"

using namespace gppriv;

TEST_CASE("se_kernel point values") {
  SEKernelParams p;  // theta = 1, l = 1
  Eigen::VectorXd x(2), x2(2);
  x << 0.3, -1.2;
  CHECK(se_kernel(x, x, p) == doctest::Approx(1.0).epsilon(1e-14));

  x << 0.0, 0.0;
  x2 << 1.0, 1.0;  // squared distance 2
  CHECK(se_kernel(x, x2, p) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  p.log_scale = std::log(2.0);
  CHECK(se_kernel(x, x2, p) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("se_kernel rejects dimension mismatch") {
  SEKernelParams p;
  Eigen::VectorXd x(2), x2(3);
  x.setZero();
  x2.setZero();
  CHECK_THROWS_AS(se_kernel(x, x2, p), std::invalid_argument);
}

TEST_CASE("se_kernel symmetry and coordinate permutation invariance") {
  Rng rng(7);
  SEKernelParams p{std::log(1.7), std::log(0.6)};
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd x(4), x2(4);
    for (int j = 0; j < 4; ++j) {
      x(j) = rng.normal();
      x2(j) = rng.normal();
    }
    CHECK(se_kernel(x, x2, p) == doctest::Approx(se_kernel(x2, x, p)));
    // simultaneous coordinate permutation (reverse both)
    const Eigen::VectorXd xr = x.reverse();
    const Eigen::VectorXd x2r = x2.reverse();
    CHECK(se_kernel(xr, x2r, p) == doctest::Approx(se_kernel(x, x2, p)));
    // value in (0, theta]
    const double k = se_kernel(x, x2, p);
    CHECK(k > 0.0);
    CHECK(k <= p.amplitude() + 1e-15);
  }
}

TEST_CASE("larger length scale never decreases off-diagonal covariance") {
  Rng rng(11);
  Eigen::MatrixXd X(6, 3);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = rng.normal();
  }
  SEKernelParams narrow{0.0, std::log(0.5)};
  SEKernelParams wide{0.0, std::log(1.0)};
  const auto k1 = kernel_matrix(X, narrow);
  const auto k2 = kernel_matrix(X, wide);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      CHECK(k2.entries(i, j) >= k1.entries(i, j) - 1e-15);
    }
  }
}

TEST_CASE("kernel_matrix basics") {
  SEKernelParams p;
  Eigen::MatrixXd one(1, 2);
  one << 0.4, 0.5;
  const auto k1 = kernel_matrix(one, p);
  CHECK(k1.entries.rows() == 1);
  CHECK(k1.entries(0, 0) == doctest::Approx(1.0));

  // duplicate rows: rank deficient, all entries theta, still factors
  Eigen::MatrixXd dup(2, 2);
  dup << 1.0, 2.0, 1.0, 2.0;
  const auto kd = kernel_matrix(dup, p);
  CHECK(kd.entries(0, 1) == doctest::Approx(1.0));
  const auto chol = chol_with_jitter(kd.entries, 1e-8);
  CHECK(chol.jitter_used <= 1e-2);
}

TEST_CASE("kernel_matrix is numerically PSD") {
  Rng rng(3);
  Eigen::MatrixXd X(5, 4);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 4; ++j) X(i, j) = rng.normal();
  }
  SEKernelParams p{0.0, std::log(0.8)};
  const auto k = kernel_matrix(X, p);
  CHECK((k.entries - k.entries.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k.entries);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * p.amplitude() * 5);
}

TEST_CASE("chol_with_jitter") {
  SUBCASE("identity factors without jitter") {
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(3, 3);
    const auto r = chol_with_jitter(eye, 1e-8);
    CHECK(r.jitter_used == 0.0);
    CHECK((r.lower - eye).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("singular all-ones succeeds with small jitter") {
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(2, 2);
    const auto r = chol_with_jitter(ones, 1e-8);
    CHECK(r.jitter_used > 0.0);
    CHECK(r.jitter_used <= 1e-2);
  }
  SUBCASE("reconstructs a random PSD matrix") {
    Rng rng(19);
    Eigen::MatrixXd a(6, 6);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) a(i, j) = rng.normal();
    }
    const Eigen::MatrixXd psd = a * a.transpose() + Eigen::MatrixXd::Identity(6, 6);
    const auto r = chol_with_jitter(psd, 1e-10);
    const Eigen::MatrixXd rebuilt =
        r.lower * r.lower.transpose() -
        r.jitter_used * Eigen::MatrixXd::Identity(6, 6);
    const double rel = (rebuilt - psd).norm() / psd.norm();
    CHECK(rel < 1e-8);
  }
  SUBCASE("hopeless matrix raises with diagnostics") {
    Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(chol_with_jitter(neg, 1e-8), std::runtime_error);
  }
}

TEST_CASE("kernel gradient matches finite differences") {
  Rng rng(23);
  Eigen::MatrixXd X(4, 2);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 2; ++j) X(i, j) = rng.normal();
  }
  SEKernelParams p{0.0, std::log(0.9)};
  const Eigen::MatrixXd grad = kernel_matrix_grad_log_scale(X, p);
  const double h = 1e-6;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double fd = oracle::central_diff(
          [&](double ls) {
            SEKernelParams q{0.0, ls};
            return kernel_matrix(X, q).entries(i, j);
          },
          p.log_scale, h);
      CHECK(grad(i, j) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}
