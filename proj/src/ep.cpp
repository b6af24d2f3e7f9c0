#include "gppriv/ep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gppriv/rng.hpp"

namespace gppriv {

namespace {

constexpr double kPosteriorJitter = 1e-12;

struct BlockFactors {
  Eigen::MatrixXd L;    // chol(K + jitter I)
  Eigen::MatrixXd Lm;   // chol(I + L^T diag(tau) L)
  Eigen::MatrixXd W;    // L Lm^{-T}; posterior covariance = W W^T
};

BlockFactors factor_block(const PSDMatrix& gram, const Eigen::VectorXd& tau) {
  BlockFactors out;
  const double theta = gram.entries.diagonal().maxCoeff();
  out.L = chol_with_jitter(gram.entries, 1e-8 * theta).lower;
  const Eigen::Index n = gram.size();
  Eigen::MatrixXd inner =
      Eigen::MatrixXd::Identity(n, n) +
      out.L.transpose() * tau.asDiagonal() * out.L;
  out.Lm = chol_with_jitter(inner, kPosteriorJitter).lower;
  // W = L Lm^{-T}
  out.W = out.Lm.triangularView<Eigen::Lower>()
              .solve(out.L.transpose())
              .transpose();
  return out;
}

void refresh_block(const PSDMatrix& gram, const Eigen::VectorXd& tau,
                   const Eigen::VectorXd& nu, GaussianPosterior& post) {
  const BlockFactors fac = factor_block(gram, tau);
  post.covariance.entries = fac.W * fac.W.transpose();
  post.covariance.jitter_applied = 0.0;
  post.mean = fac.W * (fac.W.transpose() * nu);
}

struct NaturalPair {
  double precision = 0.0;
  double shift = 0.0;  // precision * mean
};

// log of int exp(-tau x^2/2 + nu x) N(x | cavity) dx; the piece that fixes
// log_zbar so the site integrates like the exact factor.
bool gaussian_product_lognorm(const NaturalPair& cav_nat, double tau, double nu,
                              double& out) {
  const double lam = cav_nat.precision;
  const double eta = cav_nat.shift;
  const double total = lam + tau;
  if (total <= 0.0 || lam <= 0.0) return false;
  out = 0.5 * std::log(lam / total) +
        (eta + nu) * (eta + nu) / (2.0 * total) - eta * eta / (2.0 * lam);
  return true;
}

double gauss_part_log_evidence(const PSDMatrix& gram,
                               const Eigen::VectorXd& tau,
                               const Eigen::VectorXd& nu) {
  const BlockFactors fac = factor_block(gram, tau);
  const Eigen::VectorXd wt_nu = fac.W.transpose() * nu;
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < fac.Lm.rows(); ++i) {
    log_det += std::log(fac.Lm(i, i));
  }
  return -log_det + 0.5 * wt_nu.squaredNorm();
}

void collect_site_naturals(const EPState& state, Eigen::VectorXd& tau_f,
                           Eigen::VectorXd& nu_f, Eigen::VectorXd& tau_g,
                           Eigen::VectorXd& nu_g) {
  const Eigen::Index n = static_cast<Eigen::Index>(state.sites.size());
  tau_f.resize(n);
  nu_f.resize(n);
  tau_g.resize(n);
  nu_g.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    tau_f(i) = state.sites[i].tau_f;
    nu_f(i) = state.sites[i].nu_f;
    tau_g(i) = state.sites[i].tau_g;
    nu_g(i) = state.sites[i].nu_g;
  }
}

// P = (K + diag(tau)^{-1})^{-1} computed as tau - V^T V with
// V = Lm^{-1} L^T diag(tau); valid for zero or negative site precisions.
Eigen::MatrixXd projection_matrix(const PSDMatrix& gram,
                                  const Eigen::VectorXd& tau) {
  const BlockFactors fac = factor_block(gram, tau);
  const Eigen::MatrixXd lt_tau = fac.L.transpose() * tau.asDiagonal();
  const Eigen::MatrixXd v = fac.Lm.triangularView<Eigen::Lower>().solve(lt_tau);
  Eigen::MatrixXd p = -v.transpose() * v;
  p.diagonal() += tau;
  return p;
}

}  // namespace

std::optional<CavityMoments> cavity(const EPProblem& problem,
                                    const EPState& state, Eigen::Index n,
                                    double min_cavity_var) {
  const SiteParams& site = state.sites[static_cast<std::size_t>(n)];
  CavityMoments cav;

  const double v_post_f = state.posterior_f.covariance.entries(n, n);
  const double m_post_f = state.posterior_f.mean(n);
  const double lam_f = 1.0 / v_post_f - site.tau_f;
  if (lam_f <= 0.0 || 1.0 / lam_f < min_cavity_var) return std::nullopt;
  cav.v_f = 1.0 / lam_f;
  cav.m_f = (m_post_f / v_post_f - site.nu_f) * cav.v_f;

  if (problem.variant == Variant::GPCPlus) {
    const double v_post_g = state.posterior_g.covariance.entries(n, n);
    const double m_post_g = state.posterior_g.mean(n);
    const double lam_g = 1.0 / v_post_g - site.tau_g;
    if (lam_g <= 0.0 || 1.0 / lam_g < min_cavity_var) return std::nullopt;
    cav.v_g = 1.0 / lam_g;
    cav.m_g = (m_post_g / v_post_g - site.nu_g) * cav.v_g;
  } else {
    cav.m_g = 0.0;
    cav.v_g = 0.0;
  }
  return cav;
}

std::optional<MatchedMoments> moment_match(const TiltedMoments& tm,
                                           const CavityMoments& cav) {
  if (!std::isfinite(tm.d_mf) || !std::isfinite(tm.d_vf) ||
      !std::isfinite(tm.d_mg) || !std::isfinite(tm.d_vg)) {
    return std::nullopt;
  }
  MatchedMoments out;
  out.m_f = cav.m_f + cav.v_f * tm.d_mf;
  out.v_f = cav.v_f - cav.v_f * cav.v_f * (tm.d_mf * tm.d_mf - 2.0 * tm.d_vf);
  if (out.v_f <= 0.0) return std::nullopt;
  if (cav.v_g > 0.0) {
    out.m_g = cav.m_g + cav.v_g * tm.d_mg;
    out.v_g =
        cav.v_g - cav.v_g * cav.v_g * (tm.d_mg * tm.d_mg - 2.0 * tm.d_vg);
    if (out.v_g <= 0.0) return std::nullopt;
  } else {
    out.m_g = cav.m_g;
    out.v_g = cav.v_g;
  }
  return out;
}

void refresh_posterior(const EPProblem& problem, EPState& state) {
  Eigen::VectorXd tau_f, nu_f, tau_g, nu_g;
  collect_site_naturals(state, tau_f, nu_f, tau_g, nu_g);
  refresh_block(problem.gram_f, tau_f, nu_f, state.posterior_f);
  if (problem.variant == Variant::GPCPlus) {
    refresh_block(problem.gram_g, tau_g, nu_g, state.posterior_g);
  }
}

SweepStats ep_sweep(const EPProblem& problem, EPState& state,
                    const EPConfig& config, const GHRule& rule,
                    int sweep_index) {
  const Eigen::Index n = problem.size();
  SweepStats stats;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  if (config.shuffle_order) {
    Rng rng(config.shuffle_seed + 0x9e3779b97f4a7c15ull *
                                      static_cast<std::uint64_t>(sweep_index + 1));
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(
          rng.integer(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(j)]);
    }
  }

  for (const Eigen::Index idx : order) {
    SiteParams& site = state.sites[static_cast<std::size_t>(idx)];
    const auto cav = cavity(problem, state, idx, config.min_cavity_var);
    if (!cav) {
      ++stats.skipped;
      continue;
    }

    TiltedMoments tm;
    if (problem.variant == Variant::GPC) {
      tm = tilted_gpc(problem.y(idx), cav->m_f, cav->v_f, problem.noise_var);
    } else {
      tm = tilted_gpc_plus(problem.y(idx), *cav, rule);
    }

    const auto matched = moment_match(tm, *cav);
    if (!matched) {
      ++stats.skipped;
      continue;
    }

    const NaturalPair cav_f{1.0 / cav->v_f, cav->m_f / cav->v_f};
    const double tau_f_raw = 1.0 / matched->v_f - cav_f.precision;
    const double nu_f_raw = matched->m_f / matched->v_f - cav_f.shift;
    double tau_f_new = config.damping * tau_f_raw +
                       (1.0 - config.damping) * site.tau_f;
    double nu_f_new =
        config.damping * nu_f_raw + (1.0 - config.damping) * site.nu_f;

    double tau_g_new = site.tau_g;
    double nu_g_new = site.nu_g;
    NaturalPair cav_g{0.0, 0.0};
    if (problem.variant == Variant::GPCPlus) {
      cav_g = NaturalPair{1.0 / cav->v_g, cav->m_g / cav->v_g};
      const double tau_g_raw = 1.0 / matched->v_g - cav_g.precision;
      const double nu_g_raw = matched->m_g / matched->v_g - cav_g.shift;
      tau_g_new =
          config.damping * tau_g_raw + (1.0 - config.damping) * site.tau_g;
      nu_g_new =
          config.damping * nu_g_raw + (1.0 - config.damping) * site.nu_g;
    }

    // log_zbar keeps the site integrating like the exact factor against the
    // cavity; needs the combined precision positive in every block.
    double corr_f = 0.0, corr_g = 0.0;
    if (!gaussian_product_lognorm(cav_f, tau_f_new, nu_f_new, corr_f)) {
      ++stats.skipped;
      continue;
    }
    if (problem.variant == Variant::GPCPlus &&
        !gaussian_product_lognorm(cav_g, tau_g_new, nu_g_new, corr_g)) {
      ++stats.skipped;
      continue;
    }

    stats.max_delta = std::max(
        {stats.max_delta, std::abs(tau_f_new - site.tau_f),
         std::abs(nu_f_new - site.nu_f), std::abs(tau_g_new - site.tau_g),
         std::abs(nu_g_new - site.nu_g)});

    site.tau_f = tau_f_new;
    site.nu_f = nu_f_new;
    site.tau_g = tau_g_new;
    site.nu_g = nu_g_new;
    site.log_zbar = tm.log_z - corr_f - corr_g;
  }

  refresh_posterior(problem, state);
  return stats;
}

EPState run_ep(const EPProblem& problem, const EPConfig& config) {
  if (config.damping <= 0.0 || config.damping > 1.0) {
    throw std::invalid_argument("run_ep: damping must be in (0, 1]");
  }
  if (config.tol <= 0.0) {
    throw std::invalid_argument("run_ep: tol must be positive");
  }
  const Eigen::Index n = problem.size();
  if (n < 1) throw std::invalid_argument("run_ep: empty problem");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (problem.y(i) != 1 && problem.y(i) != -1) {
      throw std::invalid_argument("run_ep: labels must be +1/-1");
    }
  }
  if (problem.variant == Variant::GPCPlus && problem.gram_g.size() != n) {
    throw std::invalid_argument("run_ep: privileged Gram matrix missing");
  }
  if (problem.variant == Variant::GPC && problem.noise_var <= 0.0) {
    throw std::invalid_argument("run_ep: noise_var must be positive");
  }

  const GHRule rule = gauss_hermite(config.quadrature_order);

  EPState state;
  state.sites.assign(static_cast<std::size_t>(n), SiteParams{});
  refresh_posterior(problem, state);  // posterior = prior with zero sites

  for (int sweep = 0; sweep < config.max_sweeps; ++sweep) {
    const SweepStats stats = ep_sweep(problem, state, config, rule, sweep);
    state.iterations = sweep + 1;
    state.skipped_updates += stats.skipped;
    // a sweep that skipped every site is a stall, not a fixed point
    if (stats.max_delta < config.tol && stats.skipped < n) {
      state.converged = true;
      break;
    }
  }
  state.log_evidence = log_evidence(problem, state);
  return state;
}

double log_evidence(const EPProblem& problem, const EPState& state) {
  Eigen::VectorXd tau_f, nu_f, tau_g, nu_g;
  collect_site_naturals(state, tau_f, nu_f, tau_g, nu_g);
  double total = 0.0;
  for (const SiteParams& s : state.sites) total += s.log_zbar;
  total += gauss_part_log_evidence(problem.gram_f, tau_f, nu_f);
  if (problem.variant == Variant::GPCPlus) {
    total += gauss_part_log_evidence(problem.gram_g, tau_g, nu_g);
  }
  return total;
}

double evidence_grad_prior(const EPProblem& problem, const EPState& state,
                           Block block, const Eigen::MatrixXd& gram_dot) {
  if (!state.converged) {
    throw std::runtime_error(
        "evidence_grad_prior: EP state not converged; gradient assumes "
        "stationary site parameters");
  }
  Eigen::VectorXd tau_f, nu_f, tau_g, nu_g;
  collect_site_naturals(state, tau_f, nu_f, tau_g, nu_g);
  const bool f_block = (block == Block::F);
  if (!f_block && problem.variant != Variant::GPCPlus) {
    throw std::invalid_argument(
        "evidence_grad_prior: no g block in a GPC problem");
  }
  const PSDMatrix& gram = f_block ? problem.gram_f : problem.gram_g;
  const Eigen::VectorXd& tau = f_block ? tau_f : tau_g;
  const Eigen::VectorXd& nu = f_block ? nu_f : nu_g;

  const Eigen::MatrixXd p = projection_matrix(gram, tau);
  const Eigen::VectorXd b = nu - p * (gram.entries * nu);
  const double quad = 0.5 * b.dot(gram_dot * b);
  const double trace = 0.5 * p.cwiseProduct(gram_dot).sum();
  return quad - trace;
}

double evidence_grad_noise(const EPProblem& problem, const EPState& state,
                           double min_cavity_var) {
  if (!state.converged) {
    throw std::runtime_error(
        "evidence_grad_noise: EP state not converged; gradient assumes "
        "stationary site parameters");
  }
  if (problem.variant != Variant::GPC) {
    throw std::invalid_argument("evidence_grad_noise: GPC only");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < problem.size(); ++i) {
    const auto cav = cavity(problem, state, i, min_cavity_var);
    if (!cav) continue;
    const TiltedMoments tm =
        tilted_gpc(problem.y(i), cav->m_f, cav->v_f, problem.noise_var);
    acc += tm.d_vf;  // noise_var and v_f enter Z symmetrically
  }
  return acc * problem.noise_var;  // chain rule to log(noise_var)
}

PosteriorFactors posterior_factors(const PSDMatrix& gram,
                                   const Eigen::VectorXd& tau,
                                   const Eigen::VectorXd& nu) {
  PosteriorFactors out;
  out.tau = tau;
  out.nu = nu;
  const BlockFactors fac = factor_block(gram, tau);
  out.chol_prior = fac.L;
  out.chol_inner = fac.Lm;
  const Eigen::MatrixXd p = projection_matrix(gram, tau);
  out.weights = nu - p * (gram.entries * nu);
  return out;
}

void predict_latent(const PosteriorFactors& f, const Eigen::VectorXd& k_star,
                    double k_self, double& mean_out, double& var_out) {
  mean_out = k_star.dot(f.weights);
  const Eigen::VectorXd z1 = f.tau.cwiseProduct(k_star);
  const Eigen::VectorXd z2 = f.chol_inner.triangularView<Eigen::Lower>().solve(
      f.chol_prior.transpose() * z1);
  var_out = k_self - k_star.dot(z1) + z2.squaredNorm();
}

}  // namespace gppriv
