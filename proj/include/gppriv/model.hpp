#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "gppriv/data.hpp"
#include "gppriv/ep.hpp"
#include "gppriv/kernel.hpp"

namespace gppriv {

struct FitOptions {
  int max_evals = 40;    // EP evaluations per restart
  int restarts = 3;
  double scale_bound_factor = 1e3;  // log l bounded around the median distance
  double noise_lo = 1e-4;
  double noise_hi = 1e2;
  double amplitude = 1.0;  // kernel amplitude, fixed during the search
  std::uint64_t seed = 0;
  EPConfig ep;
  // GPC+ test-time noise: 1.0 by default (prior-centred), or the average of
  // the posterior noise over training sites when set.
  bool posterior_test_noise = false;
};

struct GPCModel {
  Variant variant = Variant::GPC;
  Eigen::MatrixXd X;  // training inputs in the model's feature space
  SEKernelParams kernel_f;
  SEKernelParams kernel_g;     // GPC+ only
  double noise_var = 1.0;      // GPC only
  double test_noise_var = 1.0;
  std::vector<SiteParams> sites;
  bool ep_converged = false;
  double log_evidence = 0.0;
  std::string preproc_id;
  std::optional<PreprocRecipe> preproc;

  // prediction cache, rebuilt on load
  PosteriorFactors factors_f;
};

struct FitReport {
  std::vector<double> evidence_trace;  // best-so-far per evaluation
  std::vector<double> restart_evidence;
  int evaluations = 0;
  bool ep_converged = false;
};

// Type-II maximum likelihood over (log l, log noise_var) for GPC and
// (log l_f, log l_g) for GPC+, by gradient ascent with backtracking line
// search from several restarts. Labels must be in {0, 1}.
GPCModel fit(const Dataset& data, Variant variant, const FitOptions& opts,
             FitReport* report = nullptr);

// Probability of label 1 per row of Xnew; privileged data is never read.
Eigen::VectorXd predict_proba(const GPCModel& model,
                              const Eigen::Ref<const Eigen::MatrixXd>& Xnew);

// 1 iff probability >= 0.5 (ties resolve to 1).
std::vector<int> predict_label(const GPCModel& model,
                               const Eigen::Ref<const Eigen::MatrixXd>& Xnew);

void save_model(const GPCModel& model, const std::string& path);
GPCModel load_model(const std::string& path);

// Helpers shared with the CLI / bindings.
EPProblem build_problem(const Eigen::Ref<const Eigen::MatrixXd>& X,
                        const std::optional<Eigen::MatrixXd>& Xstar,
                        const std::vector<int>& labels, Variant variant,
                        const SEKernelParams& kf, const SEKernelParams& kg,
                        double noise_var);

double median_pairwise_sqdist(const Eigen::Ref<const Eigen::MatrixXd>& X);

}  // namespace gppriv
