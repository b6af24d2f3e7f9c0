#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "gppriv/kernel.hpp"
#include "gppriv/quadrature.hpp"

namespace gppriv {

enum class Variant { GPC, GPCPlus };

// Per-factor approximation in natural parameters: tau = 1/vbar,
// nu = mbar/vbar. The g pair is only meaningful for GPC+.
struct SiteParams {
  double log_zbar = 0.0;
  double tau_f = 0.0;
  double nu_f = 0.0;
  double tau_g = 0.0;
  double nu_g = 0.0;
};

struct EPConfig {
  int max_sweeps = 200;
  double tol = 1e-4;          // max abs change of site naturals
  double damping = 0.8;       // in (0, 1]
  int quadrature_order = 32;
  double min_cavity_var = 1e-10;
  bool shuffle_order = false;  // fixed ascending order by default
  std::uint64_t shuffle_seed = 0;
};

// Inference inputs. Gram matrices enter precomputed so the engine never sees
// raw features; the model layer owns kernels.
struct EPProblem {
  Variant variant = Variant::GPC;
  Eigen::VectorXi y;       // entries in {-1, +1}
  PSDMatrix gram_f;
  PSDMatrix gram_g;        // empty unless GPCPlus
  double noise_var = 1.0;  // GPC only

  Eigen::Index size() const { return y.size(); }
};

struct EPState {
  std::vector<SiteParams> sites;
  GaussianPosterior posterior_f;
  GaussianPosterior posterior_g;  // empty for GPC
  double log_evidence = 0.0;
  int iterations = 0;
  bool converged = false;
  int skipped_updates = 0;  // cumulative over the run
};

// Posterior marginal minus the site, in moments. Returns nullopt when the
// cavity variance falls below min_cavity_var (skip-update signal).
std::optional<CavityMoments> cavity(const EPProblem& problem,
                                    const EPState& state, Eigen::Index n,
                                    double min_cavity_var);

struct MatchedMoments {
  double m_f = 0.0;
  double v_f = 0.0;
  double m_g = 0.0;
  double v_g = 0.0;
};

// m_new = m + v dlogZ/dm, v_new = v - v^2 ((dlogZ/dm)^2 - 2 dlogZ/dv), applied
// to the f and g coordinates independently. Returns nullopt when a matched
// variance is non-positive (rejected-update signal).
std::optional<MatchedMoments> moment_match(const TiltedMoments& tm,
                                           const CavityMoments& cav);

// Rebuilds posterior_f / posterior_g from the prior Gram matrices and the
// current site naturals. Throws on factorization failure.
void refresh_posterior(const EPProblem& problem, EPState& state);

struct SweepStats {
  double max_delta = 0.0;
  int skipped = 0;
};

// One pass visiting every site once, then a posterior refresh.
SweepStats ep_sweep(const EPProblem& problem, EPState& state,
                    const EPConfig& config, const GHRule& rule,
                    int sweep_index);

EPState run_ep(const EPProblem& problem, const EPConfig& config);

// EP approximation of the log marginal likelihood for the given sites.
double log_evidence(const EPProblem& problem, const EPState& state);

enum class Block { F, G };

// d log Z / d h for a prior hyperparameter h with entrywise Gram derivative
// gram_dot, holding site parameters fixed. Requires a converged state.
double evidence_grad_prior(const EPProblem& problem, const EPState& state,
                           Block block, const Eigen::MatrixXd& gram_dot);

// d log Z / d log(noise_var) for baseline GPC, via the tilted derivatives at
// the converged cavities. Requires a converged state.
double evidence_grad_noise(const EPProblem& problem, const EPState& state,
                           double min_cavity_var);

// Cached factors for predictive queries: mean_* = k_*^T weights and
// var_* = k_** - k_*^T z1 + |Lm^{-1} (L^T z1)|^2 with z1 = tau .* k_*.
struct PosteriorFactors {
  Eigen::VectorXd tau;
  Eigen::VectorXd nu;
  Eigen::MatrixXd chol_prior;   // L with L L^T = K + jitter I
  Eigen::MatrixXd chol_inner;   // Lm with Lm Lm^T = I + L^T diag(tau) L
  Eigen::VectorXd weights;      // (I - P K) nu
};

PosteriorFactors posterior_factors(const PSDMatrix& gram,
                                   const Eigen::VectorXd& tau,
                                   const Eigen::VectorXd& nu);

// Predictive latent mean/variance for one query column of cross-covariances.
void predict_latent(const PosteriorFactors& f, const Eigen::VectorXd& k_star,
                    double k_self, double& mean_out, double& var_out);

}  // namespace gppriv
