// Acceptance suite: eight numbered criteria, one [PASS]/[FAIL] line each.
// Run all with no arguments or a single criterion by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "gppriv/data.hpp"
#include "gppriv/ep.hpp"
#include "gppriv/evaluation.hpp"
#include "gppriv/model.hpp"
#include "gppriv/quadrature.hpp"
#include "gppriv/rng.hpp"
#include "oracles.hpp"

using namespace gppriv;

namespace {

const std::string kDataDir = GPPRIV_DATA_DIR;

struct Checker {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

Eigen::MatrixXd random_inputs(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.normal();
  }
  return x;
}

// --- criterion 1: likelihood slope modulation ------------------------------

bool criterion_slope_modulation(Checker& c) {
  const GHRule rule = gauss_hermite(32);
  const double hard = std::exp(
      tilted_gpc_plus(1, CavityMoments{1.0, 0.0, std::log(5.0), 0.0}, rule)
          .log_z);
  const double easy = std::exp(
      tilted_gpc_plus(1, CavityMoments{1.0, 0.0, std::log(0.5), 0.0}, rule)
          .log_z);
  const double ref_hard = oracle::ref_norm_cdf(1.0 / std::sqrt(5.0));
  const double ref_easy = oracle::ref_norm_cdf(1.0 / std::sqrt(0.5));
  c.expect(std::abs(hard - ref_hard) <= 1e-4,
           "Pr at exp(g)=5 off: " + std::to_string(hard));
  c.expect(std::abs(easy - ref_easy) <= 1e-4,
           "Pr at exp(g)=0.5 off: " + std::to_string(easy));
  c.expect(std::abs(hard - 0.6725) <= 1e-3, "expected about 0.6725");
  c.expect(std::abs(easy - 0.9214) <= 1e-3, "expected about 0.9214");

  double prev = 1.0;
  for (double mg = -4.0; mg <= 4.0; mg += 0.125) {
    const double p = std::exp(
        tilted_gpc_plus(1, CavityMoments{1.0, 0.0, mg, 0.0}, rule).log_z);
    c.expect(p < prev, "likelihood not strictly decreasing in m_g");
    prev = p;
  }
  return c.ok;
}

// --- criterion 2: tilted-moment oracle -------------------------------------

bool criterion_tilted_oracle(Checker& c) {
  const GHRule rule = gauss_hermite(32);
  Rng rng(2024);
  double worst_lz = 0.0, worst_d = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int y = rng.uniform() < 0.5 ? 1 : -1;
    CavityMoments cav;
    cav.m_f = 3.0 * (2.0 * rng.uniform() - 1.0);
    cav.v_f = 0.01 + 9.99 * rng.uniform();
    cav.m_g = 3.0 * (2.0 * rng.uniform() - 1.0);
    cav.v_g = 0.01 + 9.99 * rng.uniform();
    const TiltedMoments tm = tilted_gpc_plus(y, cav, rule);
    const oracle::RefTilted ref =
        oracle::ref_tilted_privileged(y, cav.m_f, cav.v_f, cav.m_g, cav.v_g);
    worst_lz = std::max(worst_lz, std::abs(tm.log_z - ref.log_z));
    worst_d = std::max({worst_d, std::abs(tm.d_mf - ref.d_mf),
                        std::abs(tm.d_vf - ref.d_vf),
                        std::abs(tm.d_mg - ref.d_mg),
                        std::abs(tm.d_vg - ref.d_vg)});
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "worst log Z err %.2e, worst partial err %.2e", worst_lz,
                worst_d);
  c.expect(worst_lz <= 1e-8, buf);
  c.expect(worst_d <= 1e-6, buf);
  c.detail = std::string(buf) + (c.ok ? "" : " -- " + c.detail);
  return c.ok;
}

// --- criterion 3: derivative checks ----------------------------------------

bool criterion_derivatives(Checker& c) {
  const GHRule rule = gauss_hermite(32);
  Rng rng(3030);

  // five tilted partials vs central differences
  for (int t = 0; t < 20; ++t) {
    const int y = rng.uniform() < 0.5 ? 1 : -1;
    CavityMoments cav;
    cav.m_f = 3.0 * (2.0 * rng.uniform() - 1.0);
    cav.v_f = 0.05 + 8.0 * rng.uniform();
    cav.m_g = 3.0 * (2.0 * rng.uniform() - 1.0);
    cav.v_g = 0.05 + 8.0 * rng.uniform();
    const TiltedMoments tm = tilted_gpc_plus(y, cav, rule);
    const double h = 1e-5;
    const auto lz = [&](const CavityMoments& cc) {
      return tilted_gpc_plus(y, cc, rule).log_z;
    };
    const auto near = [&](double an, double fd) {
      return std::abs(an - fd) <=
             1e-4 * std::max({std::abs(an), std::abs(fd), 1e-4});
    };
    CavityMoments a = cav, b = cav;
    a.m_f += h;
    b.m_f -= h;
    c.expect(near(tm.d_mf, (lz(a) - lz(b)) / (2 * h)), "d_mf fd mismatch");
    a = b = cav;
    a.v_f += h;
    b.v_f -= h;
    c.expect(near(tm.d_vf, (lz(a) - lz(b)) / (2 * h)), "d_vf fd mismatch");
    a = b = cav;
    a.m_g += h;
    b.m_g -= h;
    c.expect(near(tm.d_mg, (lz(a) - lz(b)) / (2 * h)), "d_mg fd mismatch");
    a = b = cav;
    a.v_g += h;
    b.v_g -= h;
    c.expect(near(tm.d_vg, (lz(a) - lz(b)) / (2 * h)), "d_vg fd mismatch");

    // homoscedastic pair as well
    const TiltedMoments tb = tilted_gpc(y, cav.m_f, cav.v_f, 1.0 + cav.v_g);
    const auto lzb = [&](double m, double v) {
      return tilted_gpc(y, m, v, 1.0 + cav.v_g).log_z;
    };
    c.expect(near(tb.d_mf,
                  (lzb(cav.m_f + h, cav.v_f) - lzb(cav.m_f - h, cav.v_f)) /
                      (2 * h)),
             "gpc d_m fd mismatch");
    c.expect(near(tb.d_vf,
                  (lzb(cav.m_f, cav.v_f + h) - lzb(cav.m_f, cav.v_f - h)) /
                      (2 * h)),
             "gpc d_v fd mismatch");
  }

  // EP evidence gradient vs re-run central differences on N=8 problems
  EPConfig cfg;
  cfg.tol = 1e-11;
  cfg.max_sweeps = 3000;
  cfg.damping = 0.7;
  for (int t = 0; t < 20; ++t) {
    const bool plus = t % 2 == 1;
    const Eigen::MatrixXd x = random_inputs(rng, 8, 2);
    const Eigen::MatrixXd xs = random_inputs(rng, 8, 1);
    Eigen::VectorXi y(8);
    for (Eigen::Index i = 0; i < 8; ++i) y(i) = rng.uniform() < 0.5 ? -1 : 1;
    const double ls_f = 0.4 * rng.normal();
    const double ls_g = 0.4 * rng.normal();
    const double lnoise = 0.4 * rng.normal();

    const auto evidence_at = [&](double lf, double lg_or_noise) {
      EPProblem p;
      p.y = y;
      p.variant = plus ? Variant::GPCPlus : Variant::GPC;
      p.gram_f = kernel_matrix(x, SEKernelParams{0.0, lf});
      if (plus) {
        p.gram_g = kernel_matrix(xs, SEKernelParams{0.0, lg_or_noise});
      } else {
        p.noise_var = std::exp(lg_or_noise);
      }
      return run_ep(p, cfg).log_evidence;
    };

    EPProblem p;
    p.y = y;
    p.variant = plus ? Variant::GPCPlus : Variant::GPC;
    p.gram_f = kernel_matrix(x, SEKernelParams{0.0, ls_f});
    if (plus) {
      p.gram_g = kernel_matrix(xs, SEKernelParams{0.0, ls_g});
    } else {
      p.noise_var = std::exp(lnoise);
    }
    const EPState state = run_ep(p, cfg);
    if (!state.converged) continue;

    const double second = plus ? ls_g : lnoise;
    const double h = 1e-4;
    const double gf = evidence_grad_prior(
        p, state, Block::F, kernel_matrix_grad_log_scale(x, {0.0, ls_f}));
    const double fd_f =
        (evidence_at(ls_f + h, second) - evidence_at(ls_f - h, second)) /
        (2 * h);
    c.expect(std::abs(gf - fd_f) <=
                 1e-2 * std::max({std::abs(gf), std::abs(fd_f), 1e-3}),
             "evidence d/dlog l_f mismatch");

    double g2 = 0.0;
    if (plus) {
      g2 = evidence_grad_prior(p, state, Block::G,
                               kernel_matrix_grad_log_scale(xs, {0.0, ls_g}));
    } else {
      g2 = evidence_grad_noise(p, state, cfg.min_cavity_var);
    }
    const double fd_2 =
        (evidence_at(ls_f, second + h) - evidence_at(ls_f, second - h)) /
        (2 * h);
    c.expect(std::abs(g2 - fd_2) <=
                 1e-2 * std::max({std::abs(g2), std::abs(fd_2), 1e-3}),
             plus ? "evidence d/dlog l_g mismatch"
                  : "evidence d/dlog noise mismatch");
  }
  return c.ok;
}

// --- criterion 4: EP vs brute force ----------------------------------------

bool criterion_brute_force(Checker& c) {
  EPConfig cfg;
  cfg.tol = 1e-11;
  cfg.max_sweeps = 3000;

  {  // N = 1 to high accuracy
    EPProblem p;
    p.variant = Variant::GPCPlus;
    p.y.resize(1);
    p.y << 1;
    p.gram_f.entries = Eigen::MatrixXd::Constant(1, 1, 1.0);
    p.gram_g.entries = Eigen::MatrixXd::Constant(1, 1, 1.0);
    const EPState state = run_ep(p, cfg);
    const auto grid = oracle::grid_posterior_privileged(
        p.gram_f.entries, p.gram_g.entries, p.y, 120);
    c.expect(std::abs(state.posterior_f.mean(0) - grid.mean_f(0)) <= 1e-6,
             "N=1 f mean");
    c.expect(std::abs(state.posterior_f.covariance.entries(0, 0) -
                      grid.var_f(0)) <= 1e-6,
             "N=1 f var");
    c.expect(std::abs(state.posterior_g.mean(0) - grid.mean_g(0)) <= 1e-6,
             "N=1 g mean");
    c.expect(std::abs(state.posterior_g.covariance.entries(0, 0) -
                      grid.var_g(0)) <= 1e-6,
             "N=1 g var");
  }

  Rng rng(4040);
  for (const int n : {2, 3}) {
    for (int rep = 0; rep < 2; ++rep) {
      const Eigen::MatrixXd x = random_inputs(rng, n, 2);
      const Eigen::MatrixXd xs = random_inputs(rng, n, 1);
      Eigen::VectorXi y(n);
      for (int i = 0; i < n; ++i) y(i) = rng.uniform() < 0.5 ? -1 : 1;

      EPProblem gpc;
      gpc.variant = Variant::GPC;
      gpc.y = y;
      gpc.gram_f = kernel_matrix(x, SEKernelParams{});
      gpc.noise_var = 1.0;
      const EPState sb = run_ep(gpc, cfg);
      const auto gridb =
          oracle::grid_posterior_probit(gpc.gram_f.entries, 1.0, y, 48);
      for (int i = 0; i < n; ++i) {
        c.expect(std::abs(sb.posterior_f.mean(i) - gridb.mean_f(i)) <= 5e-2,
                 "gpc N=" + std::to_string(n) + " mean");
      }

      EPProblem plus;
      plus.variant = Variant::GPCPlus;
      plus.y = y;
      plus.gram_f = gpc.gram_f;
      plus.gram_g = kernel_matrix(xs, SEKernelParams{});
      const EPState sp = run_ep(plus, cfg);
      const auto gridp = oracle::grid_posterior_privileged(
          plus.gram_f.entries, plus.gram_g.entries, y, n == 2 ? 36 : 16);
      for (int i = 0; i < n; ++i) {
        c.expect(std::abs(sp.posterior_f.mean(i) - gridp.mean_f(i)) <= 5e-2,
                 "gpc+ N=" + std::to_string(n) + " f mean");
        c.expect(std::abs(sp.posterior_g.mean(i) - gridp.mean_g(i)) <= 5e-2,
                 "gpc+ N=" + std::to_string(n) + " g mean");
      }
    }
  }
  return c.ok;
}

// --- criterion 5: degenerate equivalence -----------------------------------

bool criterion_degenerate(Checker& c) {
  Rng rng(5050);
  const Eigen::Index n = 40;
  const Eigen::MatrixXd x = random_inputs(rng, n, 2);
  const Eigen::MatrixXd xs = random_inputs(rng, n, 1);
  Eigen::VectorXi y(n);
  std::vector<int> y01(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = x(i, 0) + 0.5 * rng.normal() >= 0 ? 1 : -1;
    y01[static_cast<std::size_t>(i)] = y(i) == 1 ? 1 : 0;
  }
  EPConfig cfg;
  cfg.tol = 1e-9;
  cfg.max_sweeps = 1000;

  EPProblem plus;
  plus.variant = Variant::GPCPlus;
  plus.y = y;
  plus.gram_f = kernel_matrix(x, SEKernelParams{});
  plus.gram_g = kernel_matrix(xs, SEKernelParams{std::log(1e-8), 0.0});
  const EPState sp = run_ep(plus, cfg);

  EPProblem base;
  base.variant = Variant::GPC;
  base.y = y;
  base.gram_f = plus.gram_f;
  base.noise_var = 1.0;
  const EPState sb = run_ep(base, cfg);

  const auto probs = [&](const EPState& state, double test_noise,
                         const Eigen::MatrixXd& xq) {
    Eigen::VectorXd tau(n), nu(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      tau(i) = state.sites[static_cast<std::size_t>(i)].tau_f;
      nu(i) = state.sites[static_cast<std::size_t>(i)].nu_f;
    }
    const PosteriorFactors fac = posterior_factors(plus.gram_f, tau, nu);
    const Eigen::MatrixXd cross = kernel_cross(x, xq, SEKernelParams{});
    Eigen::VectorXd out(xq.rows());
    for (Eigen::Index i = 0; i < xq.rows(); ++i) {
      double mu = 0.0, var = 0.0;
      predict_latent(fac, cross.col(i), 1.0, mu, var);
      out(i) = std_norm_cdf(mu / std::sqrt(std::max(var, 0.0) + test_noise));
    }
    return out;
  };

  const Eigen::MatrixXd xq = random_inputs(rng, 50, 2);
  const Eigen::VectorXd p_plus = probs(sp, 1.0, xq);
  const Eigen::VectorXd p_base = probs(sb, base.noise_var, xq);
  const double worst = (p_plus - p_base).cwiseAbs().maxCoeff();
  char buf[80];
  std::snprintf(buf, sizeof(buf), "max predictive gap %.2e", worst);
  c.expect(worst <= 1e-3, buf);
  c.detail = std::string(buf) + (c.ok ? "" : " -- " + c.detail);
  return c.ok;
}

// --- criterion 6: paper-statistics fixtures --------------------------------

bool criterion_fixtures(Checker& c) {
  const ErrorTable decaf =
      load_error_table_csv(kDataDir + "/awa_decaf_errors.csv");
  const ErrorTable attr =
      load_error_table_csv(kDataDir + "/awa_attributes_errors.csv");
  const ErrorTable ad =
      load_error_table_csv(kDataDir + "/attribute_discovery_errors.csv");

  const auto close = [](double a, double b, double tol) {
    return std::abs(a - b) < tol;
  };

  const auto rd = average_ranks(decaf);
  c.expect(close(rd[0], 2.09, 0.01) && close(rd[1], 1.40, 0.01) &&
               close(rd[2], 3.71, 0.01) && close(rd[3], 2.80, 0.01),
           "decaf ranks off");
  const Eigen::VectorXd md = decaf.mean_error.colwise().mean();
  c.expect(close(md(0), 17.60, 0.01) && close(md(1), 17.47, 0.01) &&
               close(md(2), 18.21, 0.01) && close(md(3), 17.80, 0.01),
           "decaf means off");

  const auto ra = average_ranks(attr);
  c.expect(close(ra[0], 1.98, 0.01) && close(ra[1], 1.40, 0.01) &&
               close(ra[2], 3.44, 0.01) && close(ra[3], 3.18, 0.01),
           "attributes ranks off");
  const Eigen::VectorXd ma = attr.mean_error.colwise().mean();
  c.expect(close(ma(0), 17.60, 0.01) && close(ma(1), 17.48, 0.01) &&
               close(ma(2), 18.21, 0.01) && close(ma(3), 18.06, 0.01),
           "attributes means off");

  const auto rt = average_ranks(ad);
  c.expect(close(rt[0], 3.0, 0.05) && close(rt[1], 1.8, 0.05) &&
               close(rt[2], 2.7, 0.05) && close(rt[3], 2.5, 0.05),
           "attribute-discovery ranks off");

  const double cd = nemenyi_cd(4, 45, 0.10);
  c.expect(close(cd, 0.6235, 1e-3), "critical distance off");

  const auto has_pair = [](const RankSummary& rs, int a, int b) {
    return std::find(rs.significant_pairs.begin(), rs.significant_pairs.end(),
                     std::make_pair(a, b)) != rs.significant_pairs.end();
  };
  c.expect(has_pair(rank_summary(decaf, 0.10), 0, 1),
           "gpc+ vs gpc should be significant on decaf");
  c.expect(!has_pair(rank_summary(attr, 0.10), 0, 1),
           "gpc+ vs gpc should not be significant on attributes");
  return c.ok;
}

// --- criterion 7: synthetic LUPI benefit -----------------------------------

bool criterion_lupi_benefit(Checker& c) {
  TaskSpec task;
  task.name = "synth_lupi";
  task.synth = SynthSpec{500, 2, NoiseLaw::bimodal(0.1, 5.0)};
  task.split = SplitSpec{100, 0, 0};
  task.preproc.standardize = true;

  MethodSpec gpc;
  gpc.name = "gpc";
  gpc.variant = Variant::GPC;
  gpc.fit.max_evals = 12;
  gpc.fit.restarts = 1;

  MethodSpec plus = gpc;
  plus.name = "gpc_plus";
  plus.variant = Variant::GPCPlus;

  const RepeatSummary summary =
      repeat_experiment(task, {gpc, plus}, 50, 7000);
  const CellResult& cell_gpc = summary.cells[0];
  const CellResult& cell_plus = summary.cells[1];
  c.expect(cell_gpc.n_failed == 0 && cell_plus.n_failed == 0,
           "repeats failed");

  std::vector<double> diffs;
  for (std::size_t r = 0; r < cell_gpc.per_repeat.size(); ++r) {
    if (!std::isnan(cell_gpc.per_repeat[r]) &&
        !std::isnan(cell_plus.per_repeat[r])) {
      diffs.push_back(cell_gpc.per_repeat[r] - cell_plus.per_repeat[r]);
    }
  }
  const CellResult diff_stats = summarize_errors(diffs);
  c.expect(cell_plus.mean_error <= cell_gpc.mean_error,
           "gpc+ mean error above gpc");
  c.expect(diff_stats.mean_error > 2.0 * diff_stats.std_error,
           "paired improvement below 2 standard errors");
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "gpc %.3f%% +- %.3f, gpc+ %.3f%% +- %.3f, paired diff %.3f "
                "+- %.3f",
                cell_gpc.mean_error, cell_gpc.std_error, cell_plus.mean_error,
                cell_plus.std_error, diff_stats.mean_error,
                diff_stats.std_error);
  c.detail = std::string(buf) + (c.ok ? "" : " -- " + c.detail);
  return c.ok;
}

// --- criterion 8: protocol scale -------------------------------------------

bool criterion_protocol_scale(Checker& c) {
  // timed full fit at the protocol size
  const Dataset data = synth_lupi(200, 50, NoiseLaw::bimodal(0.1, 5.0), 800);
  FitOptions opts;  // defaults: 3 restarts, 40 evals, default EP settings
  const auto t0 = std::chrono::steady_clock::now();
  FitReport report;
  const GPCModel model = fit(data, Variant::GPCPlus, opts, &report);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  c.expect(seconds < 300.0, "fit took " + std::to_string(seconds) + "s");
  c.expect(std::isfinite(model.log_evidence), "fit produced no evidence");

  // EP convergence rate across seeded runs at the same scale
  int converged = 0;
  const int runs = 20;
  for (int s = 0; s < runs; ++s) {
    const Dataset d =
        synth_lupi(200, 50, NoiseLaw::bimodal(0.1, 5.0),
                   900 + static_cast<std::uint64_t>(s));
    EPProblem p;
    p.variant = Variant::GPCPlus;
    p.y.resize(200);
    for (int i = 0; i < 200; ++i) {
      p.y(i) = d.y[static_cast<std::size_t>(i)] == 1 ? 1 : -1;
    }
    const double dbar_f = median_pairwise_sqdist(d.X);
    const double dbar_g = median_pairwise_sqdist(*d.Xstar);
    p.gram_f = kernel_matrix(d.X, SEKernelParams{0.0, std::log(dbar_f)});
    p.gram_g = kernel_matrix(*d.Xstar, SEKernelParams{0.0, std::log(dbar_g)});
    const EPState state = run_ep(p, EPConfig{});
    if (state.converged) ++converged;
  }
  c.expect(converged >= 19, "only " + std::to_string(converged) +
                                "/20 EP runs converged");
  char buf[120];
  std::snprintf(buf, sizeof(buf), "fit %.1fs, EP converged %d/%d", seconds,
                converged, runs);
  c.detail = std::string(buf) + (c.ok ? "" : " -- " + c.detail);
  return c.ok;
}

struct Criterion {
  int number;
  const char* name;
  std::function<bool(Checker&)> fn;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "likelihood slope modulation", criterion_slope_modulation},
      {2, "tilted moments vs adaptive integration", criterion_tilted_oracle},
      {3, "derivative checks vs finite differences", criterion_derivatives},
      {4, "EP vs dense-grid posteriors", criterion_brute_force},
      {5, "degenerate GPC+ equals baseline GPC", criterion_degenerate},
      {6, "benchmark statistics fixtures", criterion_fixtures},
      {7, "synthetic privileged-information benefit", criterion_lupi_benefit},
      {8, "protocol-scale fit and EP convergence", criterion_protocol_scale},
  };

  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);

  int failures = 0;
  for (const Criterion& crit : criteria) {
    if (only != 0 && crit.number != only) continue;
    Checker checker;
    bool ok = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ok = crit.fn(checker);
    } catch (const std::exception& e) {
      checker.ok = false;
      checker.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n",
                ok && checker.ok ? "PASS" : "FAIL", crit.number, crit.name,
                secs, checker.detail.empty() ? "" : " -- ",
                checker.detail.c_str());
    std::fflush(stdout);
    if (!(ok && checker.ok)) ++failures;
  }
  return failures;
}
