#include "gppriv/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace gppriv {

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2 pi))

// log(sum exp(a_i)) over a vector, tolerating -inf entries.
double log_sum_exp(const Eigen::VectorXd& a) {
  const double m = a.maxCoeff();
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += std::exp(a(i) - m);
  return m + std::log(s);
}

}  // namespace

GHRule gauss_hermite(int order) {
  if (order < 1 || order > 128) {
    std::ostringstream msg;
    msg << "gauss_hermite: order " << order << " outside [1, 128]";
    throw std::invalid_argument(msg.str());
  }
  GHRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);

  // Newton iteration on the orthonormal Hermite recurrence, largest root
  // first, exploiting symmetry about zero.
  const int n = order;
  const double pim4 = 0.7511255444649425;  // pi^(-1/4)
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * rule.nodes(n - 1);
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * rule.nodes(n - 2);
    } else {
      z = 2.0 * z - rule.nodes(n - i + 1);
    }
    double pp = 0.0;
    for (int it = 0; it < 128; ++it) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 -
             std::sqrt(static_cast<double>(j) / (j + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    rule.nodes(n - 1 - i) = z;
    rule.nodes(i) = -z;
    rule.weights(i) = 2.0 / (pp * pp);
    rule.weights(n - 1 - i) = rule.weights(i);
  }
  if (n % 2 == 1) rule.nodes((n - 1) / 2) = 0.0;
  return rule;
}

double std_norm_cdf(double u) { return 0.5 * std::erfc(-u * M_SQRT1_2); }

double log_std_norm_cdf(double u) {
  if (u > -1.0) {
    // log1p keeps precision where Phi is close to 1
    return std::log1p(-0.5 * std::erfc(u * M_SQRT1_2));
  }
  if (u > -36.5) {
    return std::log(0.5 * std::erfc(-u * M_SQRT1_2));
  }
  // Asymptotic tail: Phi(u) ~ phi(u)/|u| * (1 - 1/u^2 + 3/u^4 - 15/u^6 + ...)
  const double u2 = u * u;
  const double series =
      1.0 - 1.0 / u2 + 3.0 / (u2 * u2) - 15.0 / (u2 * u2 * u2);
  return -0.5 * u2 - kLogSqrt2Pi - std::log(-u) + std::log(series);
}

double std_norm_logpdf(double u) { return -0.5 * u * u - kLogSqrt2Pi; }

TiltedMoments tilted_gpc(int y, double m, double v, double noise_var) {
  if (y != 1 && y != -1) {
    throw std::invalid_argument("tilted_gpc: label must be +1 or -1");
  }
  if (v < 0.0 || noise_var <= 0.0) {
    throw std::invalid_argument(
        "tilted_gpc: needs v >= 0 and noise_var > 0");
  }
  const double s2 = v + noise_var;
  const double s = std::sqrt(s2);
  const double u = y * m / s;
  TiltedMoments tm;
  tm.log_z = log_std_norm_cdf(u);
  const double ratio = std::exp(std_norm_logpdf(u) - tm.log_z);  // phi/Phi
  tm.d_mf = y * ratio / s;
  tm.d_vf = -0.5 * ratio * u / s2;
  tm.d_mg = 0.0;
  tm.d_vg = 0.0;
  return tm;
}

namespace {

// Exact expressions for v_g == 0, where Z = Phi(y m_f / sqrt(v_f + e^{m_g})).
TiltedMoments tilted_degenerate(int y, const CavityMoments& cav) {
  double u, r, s2, s;
  if (cav.m_g > 350.0) {
    s2 = std::numeric_limits<double>::infinity();
    s = std::exp(0.5 * cav.m_g);
    u = y * cav.m_f / s;
    r = 1.0;
  } else {
    const double eg = std::exp(cav.m_g);
    s2 = cav.v_f + eg;
    s = std::sqrt(s2);
    u = y * cav.m_f / s;
    r = eg / s2;
  }
  TiltedMoments tm;
  tm.log_z = log_std_norm_cdf(u);
  const double ratio = std::exp(std_norm_logpdf(u) - tm.log_z);
  tm.d_mf = y * ratio / s;
  tm.d_vf = -0.5 * ratio * u / s2;
  tm.d_mg = -0.5 * ratio * u * r;
  // Limit v_g -> 0 of the derivative equals half the second g-derivative.
  tm.d_vg = -0.25 * ratio * u * r * (0.5 * u * u * r - 1.5 * r + 1.0);
  return tm;
}

// u(g) = y m_f / sqrt(v_f + e^g) and companions, overflow-safe.
struct NoiseArg {
  double u;
  double log_s2;
  double r;  // e^g / (v_f + e^g)
};

NoiseArg noise_arg(double y_mf, double v_f, double g) {
  NoiseArg out;
  if (g > 350.0) {
    out.log_s2 = g;
    out.u = y_mf * std::exp(-0.5 * g);
    out.r = 1.0;
  } else {
    const double eg = std::exp(g);
    const double s2 = v_f + eg;
    out.log_s2 = std::log(s2);
    out.u = y_mf / std::sqrt(s2);
    out.r = eg / s2;
  }
  return out;
}

// Log integrand of Z as a function of g, with its first two derivatives.
// psi(g) = log Phi(u(g)) + log N(g | m_g, v_g).
struct PsiDerivs {
  double d1;
  double d2;
};

PsiDerivs psi_derivs(double y_mf, double v_f, double m_g, double v_g,
                     double g) {
  const NoiseArg a = noise_arg(y_mf, v_f, g);
  const double rho =
      std::exp(std_norm_logpdf(a.u) - log_std_norm_cdf(a.u));
  const double cdf_d1 = -0.5 * rho * a.u * a.r;
  const double cdf_d2 =
      -0.5 * rho * a.u * a.r * (0.5 * a.u * a.u * a.r - 1.5 * a.r + 1.0) -
      cdf_d1 * cdf_d1;
  PsiDerivs out;
  out.d1 = cdf_d1 - (g - m_g) / v_g;
  out.d2 = cdf_d2 - 1.0 / v_g;
  return out;
}

// Mode of psi by safeguarded Newton from m_g; the integrand is smooth and
// effectively unimodal for this likelihood.
double psi_mode(double y_mf, double v_f, double m_g, double v_g) {
  double g = m_g;
  const double span = 30.0 * std::sqrt(v_g) + 30.0;
  for (int it = 0; it < 100; ++it) {
    const PsiDerivs d = psi_derivs(y_mf, v_f, m_g, v_g, g);
    if (!(d.d2 < 0.0)) break;
    double step = -d.d1 / d.d2;
    const double cap = 2.0 * std::sqrt(v_g) + 2.0;
    step = std::clamp(step, -cap, cap);
    g += step;
    g = std::clamp(g, m_g - span, m_g + span);
    if (std::abs(step) < 1e-11 * (1.0 + std::abs(g))) return g;
  }
  return g;
}

// Gauss-Legendre on [-1, 1], cached per order.
struct GLRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

const GLRule& gauss_legendre_cached(int order) {
  static std::mutex mutex;
  static std::map<int, GLRule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;

  GLRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  const int m = (order + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (order + 0.5));
    double pp = 0.0;
    for (int it2 = 0; it2 < 100; ++it2) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < order; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
      }
      pp = order * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    rule.nodes(i) = -z;
    rule.nodes(order - 1 - i) = z;
    rule.weights(i) = 2.0 / ((1.0 - z * z) * pp * pp);
    rule.weights(order - 1 - i) = rule.weights(i);
  }
  return cache.emplace(order, std::move(rule)).first->second;
}

}  // namespace

TiltedMoments tilted_gpc_plus(int y, const CavityMoments& cav,
                              const GHRule& rule) {
  if (y != 1 && y != -1) {
    throw std::invalid_argument("tilted_gpc_plus: label must be +1 or -1");
  }
  if (cav.v_f < 0.0) {
    throw std::invalid_argument("tilted_gpc_plus: v_f must be non-negative");
  }
  if (cav.v_g < 0.0) {
    throw std::invalid_argument("tilted_gpc_plus: v_g must be non-negative");
  }
  if (cav.v_g == 0.0) {
    return tilted_degenerate(y, cav);
  }
  if (rule.order() < 8) {
    throw std::invalid_argument("tilted_gpc_plus: quadrature order below 8");
  }

  const double y_mf = y * cav.m_f;
  const double sqrt_vg = std::sqrt(cav.v_g);
  const double log_vg_norm = -0.5 * std::log(2.0 * M_PI * cav.v_g);

  // Node layout. Narrow cavities: one rule, centred and scaled at the
  // integrand's mode. Wide cavities: the exp(g) transition is finer than any
  // single affine substitution can resolve, so tile the prior's z range with
  // Gauss-Legendre panels; panel count grows with sqrt(v_g). Either way every
  // node carries log(weight x prior density x measure), and all five
  // quantities share the same evaluations.
  std::vector<double> base_terms, gvals;
  constexpr double kSingleRuleMaxVar = 0.60;
  if (cav.v_g <= kSingleRuleMaxVar) {
    const double mode = psi_mode(y_mf, cav.v_f, cav.m_g, cav.v_g);
    const double curv = psi_derivs(y_mf, cav.v_f, cav.m_g, cav.v_g, mode).d2;
    const double sigma2 =
        (curv < 0.0) ? std::min(-1.0 / curv, 1.5 * cav.v_g) : cav.v_g;
    const double step = std::sqrt(2.0 * sigma2);
    const double log_step = 0.5 * std::log(2.0 * sigma2);
    for (int i = 0; i < rule.order(); ++i) {
      const double t = rule.nodes(i);
      const double g = mode + step * t;
      const double zg = g - cav.m_g;
      base_terms.push_back(std::log(rule.weights(i)) + t * t + log_vg_norm -
                           0.5 * zg * zg / cav.v_g + log_step);
      gvals.push_back(g);
    }
  } else {
    constexpr double kZMax = 13.0;
    const int panels =
        std::min(16, 2 + static_cast<int>(std::ceil(1.5 * sqrt_vg)));
    const GLRule& gl = gauss_legendre_cached(rule.order());
    const double width = 2.0 * kZMax / panels;
    for (int p = 0; p < panels; ++p) {
      const double z_lo = -kZMax + p * width;
      const double mid = z_lo + 0.5 * width;
      const double half = 0.5 * width;
      for (int i = 0; i < gl.nodes.size(); ++i) {
        const double z = mid + half * gl.nodes(i);
        const double g = cav.m_g + sqrt_vg * z;
        base_terms.push_back(std::log(gl.weights(i) * half * sqrt_vg) +
                             log_vg_norm - 0.5 * z * z);
        gvals.push_back(g);
      }
    }
  }

  const int q = static_cast<int>(base_terms.size());
  Eigen::VectorXd log_cdf_terms(q);  // base + log Phi(u)
  Eigen::VectorXd log_pdf_s(q);      // Phi replaced by phi / s
  Eigen::VectorXd log_pdf_us2(q);    // Phi replaced by phi |u| / s2
  for (int i = 0; i < q; ++i) {
    const NoiseArg a = noise_arg(y_mf, cav.v_f, gvals[static_cast<std::size_t>(i)]);
    const double base = base_terms[static_cast<std::size_t>(i)];
    log_cdf_terms(i) = base + log_std_norm_cdf(a.u);
    log_pdf_s(i) = base + std_norm_logpdf(a.u) - 0.5 * a.log_s2;
    log_pdf_us2(i) =
        (a.u == 0.0)
            ? -std::numeric_limits<double>::infinity()
            : base + std_norm_logpdf(a.u) + std::log(std::abs(a.u)) - a.log_s2;
  }

  const double lse_z = log_sum_exp(log_cdf_terms);

  TiltedMoments tm;
  tm.log_z = lse_z;
  tm.d_mf = y * std::exp(log_sum_exp(log_pdf_s) - lse_z);
  const double sign_u = (y_mf > 0.0) ? 1.0 : ((y_mf < 0.0) ? -1.0 : 0.0);
  tm.d_vf = -0.5 * sign_u * std::exp(log_sum_exp(log_pdf_us2) - lse_z);

  // d_mg and d_vg share the Phi weighting with Z, so after the common shift
  // they reduce to stable weighted averages of the prior score factors.
  double wsum = 0.0, mg_sum = 0.0, vg_sum = 0.0;
  for (int i = 0; i < q; ++i) {
    const double w = std::exp(log_cdf_terms(i) - lse_z);
    const double zg = gvals[static_cast<std::size_t>(i)] - cav.m_g;
    wsum += w;
    mg_sum += w * zg / cav.v_g;
    vg_sum += w * (zg * zg - cav.v_g) / (2.0 * cav.v_g * cav.v_g);
  }
  tm.d_mg = mg_sum / wsum;
  tm.d_vg = vg_sum / wsum;
  return tm;
}

}  // namespace gppriv
