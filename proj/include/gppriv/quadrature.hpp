#pragma once

#include <Eigen/Dense>

namespace gppriv {

// Gauss-Hermite rule in the physicists' convention: integrates against
// exp(-t^2) on the real line.
struct GHRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  int order() const { return static_cast<int>(nodes.size()); }
};

GHRule gauss_hermite(int order);  // 1 <= order <= 128

double std_norm_cdf(double u);
// Accurate in the log down to strongly negative arguments; never -inf for
// finite input.
double log_std_norm_cdf(double u);
double std_norm_logpdf(double u);

// Marginal means/variances of the approximate posterior with one factor
// removed. v_g = 0 marks the degenerate path where the noise latent carries
// no uncertainty.
struct CavityMoments {
  double m_f = 0.0;
  double v_f = 1.0;
  double m_g = 0.0;
  double v_g = 0.0;
};

// log Z_n of the tilted distribution and its four partial derivatives with
// respect to the cavity means and variances.
struct TiltedMoments {
  double log_z = 0.0;
  double d_mf = 0.0;
  double d_vf = 0.0;
  double d_mg = 0.0;
  double d_vg = 0.0;
};

// Homoscedastic case: Z = Phi(y m / sqrt(v + noise_var)), closed form.
// y in {-1, +1}.
TiltedMoments tilted_gpc(int y, double m, double v, double noise_var);

// Heteroscedastic case:
//   Z = integral Phi(y m_f / sqrt(v_f + exp(g))) N(g | m_g, v_g) dg,
// evaluated with the given rule via g = m_g + sqrt(2 v_g) t, accumulating in
// the log domain. The four partials come from differentiating under the
// integral sign, so five quadratures total. v_g == 0 falls back to the exact
// degenerate expressions.
TiltedMoments tilted_gpc_plus(int y, const CavityMoments& cav,
                              const GHRule& rule);

}  // namespace gppriv
