#include "gppriv/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gppriv {

using nlohmann::json;

namespace {

Eigen::VectorXi to_pm_labels(const std::vector<int>& y) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) {
      throw std::invalid_argument("fit: labels must be 0 or 1");
    }
    out(static_cast<Eigen::Index>(i)) = y[i] == 1 ? 1 : -1;
  }
  return out;
}

struct Objective {
  const Eigen::MatrixXd& X;
  const Eigen::MatrixXd* Xstar;
  Eigen::VectorXi y;
  Variant variant;
  double amplitude;
  const EPConfig& ep;

  struct Eval {
    double evidence = -std::numeric_limits<double>::infinity();
    EPState state;
    EPProblem problem;
    bool ok = false;
  };

  // params: GPC -> (log l, log noise_var); GPC+ -> (log l_f, log l_g)
  Eval operator()(const Eigen::Vector2d& params) const {
    Eval out;
    SEKernelParams kf{std::log(amplitude), params(0)};
    SEKernelParams kg{std::log(amplitude),
                      variant == Variant::GPCPlus ? params(1) : 0.0};
    const double noise =
        variant == Variant::GPC ? std::exp(params(1)) : 1.0;
    try {
      out.problem.variant = variant;
      out.problem.y = y;
      out.problem.gram_f = kernel_matrix(X, kf);
      if (variant == Variant::GPCPlus) {
        out.problem.gram_g = kernel_matrix(*Xstar, kg);
      }
      out.problem.noise_var = noise;
      out.state = run_ep(out.problem, ep);
      out.evidence = out.state.log_evidence;
      out.ok = std::isfinite(out.evidence);
    } catch (const std::exception&) {
      out.ok = false;
      out.evidence = -std::numeric_limits<double>::infinity();
    }
    return out;
  }

  // Gradient in the same coordinates; requires a converged state.
  bool gradient(const Eigen::Vector2d& params, const Eval& eval,
                Eigen::Vector2d& grad) const {
    if (!eval.state.converged) return false;
    try {
      SEKernelParams kf{std::log(amplitude), params(0)};
      const Eigen::MatrixXd kdot_f = kernel_matrix_grad_log_scale(X, kf);
      grad(0) = evidence_grad_prior(eval.problem, eval.state, Block::F, kdot_f);
      if (variant == Variant::GPCPlus) {
        SEKernelParams kg{std::log(amplitude), params(1)};
        const Eigen::MatrixXd kdot_g =
            kernel_matrix_grad_log_scale(*Xstar, kg);
        grad(1) =
            evidence_grad_prior(eval.problem, eval.state, Block::G, kdot_g);
      } else {
        grad(1) =
            evidence_grad_noise(eval.problem, eval.state, ep.min_cavity_var);
      }
      return grad.allFinite();
    } catch (const std::exception&) {
      return false;
    }
  }
};

Eigen::Vector2d clamp_params(Eigen::Vector2d p, const Eigen::Vector2d& lo,
                             const Eigen::Vector2d& hi) {
  for (int i = 0; i < 2; ++i) p(i) = std::clamp(p(i), lo(i), hi(i));
  return p;
}

}  // namespace

double median_pairwise_sqdist(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  const Eigen::Index n = X.rows();
  if (n < 2) return 1.0;
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d2.push_back((X.row(i) - X.row(j)).squaredNorm());
    }
  }
  const std::size_t mid = d2.size() / 2;
  std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid),
                   d2.end());
  const double med = d2[mid];
  return med > 0.0 ? med : 1.0;
}

EPProblem build_problem(const Eigen::Ref<const Eigen::MatrixXd>& X,
                        const std::optional<Eigen::MatrixXd>& Xstar,
                        const std::vector<int>& labels, Variant variant,
                        const SEKernelParams& kf, const SEKernelParams& kg,
                        double noise_var) {
  EPProblem problem;
  problem.variant = variant;
  problem.y = to_pm_labels(labels);
  problem.gram_f = kernel_matrix(X, kf);
  if (variant == Variant::GPCPlus) {
    if (!Xstar) {
      throw std::invalid_argument("build_problem: GPC+ needs privileged data");
    }
    problem.gram_g = kernel_matrix(*Xstar, kg);
  }
  problem.noise_var = noise_var;
  return problem;
}

GPCModel fit(const Dataset& data, Variant variant, const FitOptions& opts,
             FitReport* report) {
  if (data.size() < 1) throw std::invalid_argument("fit: empty dataset");
  if (variant == Variant::GPCPlus && !data.has_privileged()) {
    throw std::invalid_argument("fit: GPC+ requires privileged features");
  }
  if (opts.restarts < 1) throw std::invalid_argument("fit: restarts >= 1");

  Objective obj{data.X,
                data.has_privileged() ? &*data.Xstar : nullptr,
                to_pm_labels(data.y),
                variant,
                opts.amplitude,
                opts.ep};

  const double dbar_f = median_pairwise_sqdist(data.X);
  const double dbar_g =
      variant == Variant::GPCPlus ? median_pairwise_sqdist(*data.Xstar) : 1.0;

  Eigen::Vector2d lo, hi;
  lo(0) = std::log(dbar_f / opts.scale_bound_factor);
  hi(0) = std::log(dbar_f * opts.scale_bound_factor);
  if (variant == Variant::GPCPlus) {
    lo(1) = std::log(dbar_g / opts.scale_bound_factor);
    hi(1) = std::log(dbar_g * opts.scale_bound_factor);
  } else {
    lo(1) = std::log(opts.noise_lo);
    hi(1) = std::log(opts.noise_hi);
  }

  static const double kMultipliers[] = {1.0, 0.1, 10.0, 0.01, 100.0};
  const int n_starts = opts.restarts;

  Objective::Eval best;
  Eigen::Vector2d best_params = Eigen::Vector2d::Zero();
  FitReport rep;

  for (int r = 0; r < n_starts; ++r) {
    const double mult = kMultipliers[static_cast<std::size_t>(r) %
                                     (sizeof(kMultipliers) / sizeof(double))];
    Eigen::Vector2d p;
    p(0) = std::log(mult * dbar_f);
    p(1) = variant == Variant::GPCPlus ? std::log(mult * dbar_g) : 0.0;
    p = clamp_params(p, lo, hi);

    auto cur = obj(p);
    ++rep.evaluations;
    rep.evidence_trace.push_back(
        std::max(cur.evidence, best.ok ? best.evidence
                                       : -std::numeric_limits<double>::infinity()));
    int evals = 1;

    while (cur.ok && evals < opts.max_evals) {
      Eigen::Vector2d grad;
      if (!obj.gradient(p, cur, grad)) break;
      if (grad.cwiseAbs().maxCoeff() < 1e-3) break;

      double step = 1.0;
      bool accepted = false;
      while (evals < opts.max_evals && step >= 1e-4) {
        const Eigen::Vector2d p_try = clamp_params(p + step * grad, lo, hi);
        if ((p_try - p).cwiseAbs().maxCoeff() < 1e-10) break;
        auto trial = obj(p_try);
        ++evals;
        ++rep.evaluations;
        rep.evidence_trace.push_back(std::max(
            std::max(trial.evidence, cur.evidence),
            best.ok ? best.evidence : -std::numeric_limits<double>::infinity()));
        if (trial.ok &&
            trial.evidence >
                cur.evidence + 1e-4 * grad.dot(p_try - p) * step) {
          p = p_try;
          cur = std::move(trial);
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }

    rep.restart_evidence.push_back(cur.evidence);
    if (cur.ok && (!best.ok || cur.evidence > best.evidence)) {
      best = std::move(cur);
      best_params = p;
    }
  }

  if (!best.ok) {
    throw std::runtime_error("fit: every hyperparameter evaluation failed");
  }

  GPCModel model;
  model.variant = variant;
  model.X = data.X;
  model.kernel_f = SEKernelParams{std::log(opts.amplitude), best_params(0)};
  if (variant == Variant::GPCPlus) {
    model.kernel_g = SEKernelParams{std::log(opts.amplitude), best_params(1)};
    model.noise_var = 1.0;
    if (opts.posterior_test_noise) {
      // average posterior mean of exp(g) over training sites
      double acc = 0.0;
      const auto& pg = best.state.posterior_g;
      for (Eigen::Index i = 0; i < pg.mean.size(); ++i) {
        acc += std::exp(pg.mean(i) + 0.5 * pg.covariance.entries(i, i));
      }
      model.test_noise_var = acc / static_cast<double>(pg.mean.size());
    } else {
      model.test_noise_var = 1.0;
    }
  } else {
    model.noise_var = std::exp(best_params(1));
    model.test_noise_var = model.noise_var;
  }
  model.sites = best.state.sites;
  model.ep_converged = best.state.converged;
  model.log_evidence = best.evidence;

  Eigen::VectorXd tau(model.X.rows()), nu(model.X.rows());
  for (Eigen::Index i = 0; i < model.X.rows(); ++i) {
    tau(i) = model.sites[static_cast<std::size_t>(i)].tau_f;
    nu(i) = model.sites[static_cast<std::size_t>(i)].nu_f;
  }
  model.factors_f = posterior_factors(best.problem.gram_f, tau, nu);

  rep.ep_converged = best.state.converged;
  if (report) *report = rep;
  return model;
}

Eigen::VectorXd predict_proba(const GPCModel& model,
                              const Eigen::Ref<const Eigen::MatrixXd>& Xnew) {
  if (Xnew.cols() != model.X.cols()) {
    std::ostringstream msg;
    msg << "predict_proba: feature dimension mismatch (model " << model.X.cols()
        << ", input " << Xnew.cols() << ")";
    throw std::invalid_argument(msg.str());
  }
  const Eigen::MatrixXd cross = kernel_cross(model.X, Xnew, model.kernel_f);
  const double k_self = model.kernel_f.amplitude();
  Eigen::VectorXd proba(Xnew.rows());
  for (Eigen::Index i = 0; i < Xnew.rows(); ++i) {
    double mu = 0.0, var = 0.0;
    predict_latent(model.factors_f, cross.col(i), k_self, mu, var);
    var = std::max(var, 0.0);
    proba(i) = std_norm_cdf(mu / std::sqrt(var + model.test_noise_var));
  }
  return proba;
}

std::vector<int> predict_label(const GPCModel& model,
                               const Eigen::Ref<const Eigen::MatrixXd>& Xnew) {
  const Eigen::VectorXd proba = predict_proba(model, Xnew);
  std::vector<int> labels(static_cast<std::size_t>(proba.size()));
  for (Eigen::Index i = 0; i < proba.size(); ++i) {
    labels[static_cast<std::size_t>(i)] = proba(i) >= 0.5 ? 1 : 0;
  }
  return labels;
}

namespace {

json standardizer_to_json(const Standardizer& s) {
  json j;
  j["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
  j["std"] = std::vector<double>(s.std_dev.data(),
                                 s.std_dev.data() + s.std_dev.size());
  j["kept"] = s.kept;
  j["dropped"] = s.dropped;
  return j;
}

Standardizer standardizer_from_json(const json& j) {
  Standardizer s;
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("std").get<std::vector<double>>();
  s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                             static_cast<Eigen::Index>(mean.size()));
  s.std_dev = Eigen::Map<const Eigen::VectorXd>(
      sd.data(), static_cast<Eigen::Index>(sd.size()));
  s.kept = j.at("kept").get<std::vector<int>>();
  s.dropped = j.at("dropped").get<std::vector<int>>();
  return s;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(i, c) = j.at(static_cast<std::size_t>(i))
                    .at(static_cast<std::size_t>(c))
                    .get<double>();
    }
  }
  return m;
}

json domain_to_json(const DomainRecipe& r) {
  json j;
  j["pre_std"] = r.pre_std ? standardizer_to_json(*r.pre_std) : json();
  if (r.pca) {
    json p;
    p["components"] = matrix_to_json(r.pca->components);
    p["eigenvalues"] = std::vector<double>(
        r.pca->eigenvalues.data(),
        r.pca->eigenvalues.data() + r.pca->eigenvalues.size());
    p["total_variance"] = r.pca->total_variance;
    j["pca"] = std::move(p);
  } else {
    j["pca"] = json();
  }
  j["post_std"] = r.post_std ? standardizer_to_json(*r.post_std) : json();
  return j;
}

DomainRecipe domain_from_json(const json& j) {
  DomainRecipe r;
  if (!j.at("pre_std").is_null()) {
    r.pre_std = standardizer_from_json(j.at("pre_std"));
  }
  if (!j.at("pca").is_null()) {
    PCABasis basis;
    basis.components = matrix_from_json(j.at("pca").at("components"));
    const auto ev = j.at("pca").at("eigenvalues").get<std::vector<double>>();
    basis.eigenvalues = Eigen::Map<const Eigen::VectorXd>(
        ev.data(), static_cast<Eigen::Index>(ev.size()));
    basis.total_variance = j.at("pca").at("total_variance").get<double>();
    r.pca = std::move(basis);
  }
  if (!j.at("post_std").is_null()) {
    r.post_std = standardizer_from_json(j.at("post_std"));
  }
  return r;
}

}  // namespace

void save_model(const GPCModel& model, const std::string& path) {
  json j;
  j["model_version"] = 1;
  j["variant"] = model.variant == Variant::GPC ? "gpc" : "gpc+";
  j["kernel_f"] = {{"log_amplitude", model.kernel_f.log_amplitude},
                   {"log_scale", model.kernel_f.log_scale}};
  if (model.variant == Variant::GPCPlus) {
    j["kernel_g"] = {{"log_amplitude", model.kernel_g.log_amplitude},
                     {"log_scale", model.kernel_g.log_scale}};
  }
  j["noise_var"] = model.noise_var;
  j["test_noise_var"] = model.test_noise_var;
  j["ep_converged"] = model.ep_converged;
  j["log_evidence"] = model.log_evidence;
  json sites = json::array();
  for (const SiteParams& s : model.sites) {
    sites.push_back({s.log_zbar, s.tau_f, s.nu_f, s.tau_g, s.nu_g});
  }
  j["sites"] = std::move(sites);
  j["X"] = matrix_to_json(model.X);
  if (model.preproc) {
    json p;
    p["id"] = model.preproc->id;
    p["original"] = domain_to_json(model.preproc->original);
    p["privileged"] = domain_to_json(model.preproc->privileged);
    p["warnings"] = model.preproc->warnings;
    j["preproc"] = std::move(p);
  } else {
    j["preproc"] = json();
  }
  j["preproc_id"] = model.preproc_id;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

GPCModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open '" + path + "'");
  json j;
  in >> j;
  if (j.at("model_version").get<int>() != 1) {
    throw std::runtime_error("load_model: unsupported model_version");
  }
  GPCModel model;
  const std::string variant = j.at("variant").get<std::string>();
  if (variant == "gpc") {
    model.variant = Variant::GPC;
  } else if (variant == "gpc+") {
    model.variant = Variant::GPCPlus;
  } else {
    throw std::runtime_error("load_model: unknown variant '" + variant + "'");
  }
  model.kernel_f.log_amplitude =
      j.at("kernel_f").at("log_amplitude").get<double>();
  model.kernel_f.log_scale = j.at("kernel_f").at("log_scale").get<double>();
  if (model.variant == Variant::GPCPlus) {
    model.kernel_g.log_amplitude =
        j.at("kernel_g").at("log_amplitude").get<double>();
    model.kernel_g.log_scale = j.at("kernel_g").at("log_scale").get<double>();
  }
  model.noise_var = j.at("noise_var").get<double>();
  model.test_noise_var = j.at("test_noise_var").get<double>();
  model.ep_converged = j.at("ep_converged").get<bool>();
  model.log_evidence = j.at("log_evidence").get<double>();
  for (const auto& s : j.at("sites")) {
    SiteParams site;
    site.log_zbar = s.at(0).get<double>();
    site.tau_f = s.at(1).get<double>();
    site.nu_f = s.at(2).get<double>();
    site.tau_g = s.at(3).get<double>();
    site.nu_g = s.at(4).get<double>();
    model.sites.push_back(site);
  }
  model.X = matrix_from_json(j.at("X"));
  if (!j.at("preproc").is_null()) {
    PreprocRecipe recipe;
    recipe.id = j.at("preproc").at("id").get<std::string>();
    recipe.original = domain_from_json(j.at("preproc").at("original"));
    recipe.privileged = domain_from_json(j.at("preproc").at("privileged"));
    recipe.warnings =
        j.at("preproc").at("warnings").get<std::vector<std::string>>();
    model.preproc = std::move(recipe);
  }
  model.preproc_id = j.at("preproc_id").get<std::string>();

  Eigen::VectorXd tau(model.X.rows()), nu(model.X.rows());
  for (Eigen::Index i = 0; i < model.X.rows(); ++i) {
    tau(i) = model.sites[static_cast<std::size_t>(i)].tau_f;
    nu(i) = model.sites[static_cast<std::size_t>(i)].nu_f;
  }
  model.factors_f =
      posterior_factors(kernel_matrix(model.X, model.kernel_f), tau, nu);
  return model;
}

}  // namespace gppriv
