// gppriv: Gaussian process classification with privileged noise.
//
// Subcommands: train, predict, benchmark, ranks, synth. Runs are driven by a
// JSON config with --set overrides; every command with a --seed is
// reproducible byte for byte. Logs go to stderr, data products only to the
// declared output paths. GPPRIV_THREADS caps worker parallelism.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "gppriv/data.hpp"
#include "gppriv/evaluation.hpp"
#include "gppriv/model.hpp"

using nlohmann::json;
using namespace gppriv;

namespace {

bool g_quiet = false;

void log_line(const std::string& msg) {
  if (!g_quiet) std::cerr << "[gppriv] " << msg << '\n';
}

json default_config() {
  json cfg;
  cfg["seed"] = 0;
  cfg["dataset"] = {{"csv", ""},
                    {"label_column", "label"},
                    {"privileged_prefix", "priv_"}};
  cfg["synth"] = {{"enabled", false},
                  {"n", 500},
                  {"d", 2},
                  {"noise", {{"kind", "bimodal"},
                             {"scale", 0.0},
                             {"low", 0.1},
                             {"high", 5.0},
                             {"p_high", 0.5}}}};
  cfg["preproc"] = {{"standardize", true},
                    {"pca_k", 0},
                    {"pca_domains", "both"}};
  cfg["model"] = {{"variant", "gpc"},
                  {"amplitude", 1.0},
                  {"test_noise", "unit"}};
  cfg["fit"] = {{"max_evals", 40},
                {"restarts", 3},
                {"scale_bound_factor", 1e3},
                {"noise_lo", 1e-4},
                {"noise_hi", 1e2}};
  cfg["ep"] = {{"max_sweeps", 200},
               {"tol", 1e-4},
               {"damping", 0.8},
               {"quadrature_order", 32},
               {"min_cavity_var", 1e-10},
               {"shuffle_order", false}};
  cfg["split"] = {{"enabled", false}, {"n_train", 200}, {"n_val", 200}};
  cfg["benchmark"] = {{"n_repeats", 100},
                      {"methods", json::array({"gpc", "gpc+"})},
                      {"alpha", 0.10},
                      {"tasks", json::array()}};
  return cfg;
}

void merge_into(json& base, const json& overlay) {
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) &&
        base[it.key()].is_object()) {
      merge_into(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
}

json load_config(const std::string& path,
                 const std::vector<std::string>& overrides,
                 std::optional<std::uint64_t> seed_flag) {
  json cfg = default_config();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    json user;
    in >> user;
    merge_into(cfg, user);
  }
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    }
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;  // plain string
    }
    json* node = &cfg;
    std::istringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      node = &((*node)[parts[i]]);
    }
    (*node)[parts.back()] = value;
  }
  if (seed_flag) cfg["seed"] = *seed_flag;
  return cfg;
}

CsvSchema schema_from(const json& cfg) {
  CsvSchema schema;
  schema.label_column = cfg.at("dataset").at("label_column").get<std::string>();
  schema.privileged_prefix =
      cfg.at("dataset").at("privileged_prefix").get<std::string>();
  return schema;
}

NoiseLaw noise_from(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") return NoiseLaw::constant(j.at("scale").get<double>());
  if (kind == "bimodal") {
    return NoiseLaw::bimodal(j.at("low").get<double>(),
                             j.at("high").get<double>(),
                             j.at("p_high").get<double>());
  }
  throw std::runtime_error("unknown noise kind '" + kind + "'");
}

PreprocOptions preproc_from(const json& cfg) {
  PreprocOptions opts;
  opts.standardize = cfg.at("preproc").at("standardize").get<bool>();
  opts.pca_k = cfg.at("preproc").at("pca_k").get<int>();
  const std::string domains =
      cfg.at("preproc").at("pca_domains").get<std::string>();
  if (domains == "both") {
    opts.pca_domains = PreprocOptions::PCADomains::Both;
  } else if (domains == "original_only") {
    opts.pca_domains = PreprocOptions::PCADomains::OriginalOnly;
  } else {
    throw std::runtime_error("preproc.pca_domains must be both|original_only");
  }
  return opts;
}

EPConfig ep_from(const json& cfg) {
  EPConfig ep;
  ep.max_sweeps = cfg.at("ep").at("max_sweeps").get<int>();
  ep.tol = cfg.at("ep").at("tol").get<double>();
  ep.damping = cfg.at("ep").at("damping").get<double>();
  ep.quadrature_order = cfg.at("ep").at("quadrature_order").get<int>();
  ep.min_cavity_var = cfg.at("ep").at("min_cavity_var").get<double>();
  ep.shuffle_order = cfg.at("ep").at("shuffle_order").get<bool>();
  return ep;
}

FitOptions fit_from(const json& cfg, std::uint64_t seed) {
  FitOptions opts;
  opts.max_evals = cfg.at("fit").at("max_evals").get<int>();
  opts.restarts = cfg.at("fit").at("restarts").get<int>();
  opts.scale_bound_factor =
      cfg.at("fit").at("scale_bound_factor").get<double>();
  opts.noise_lo = cfg.at("fit").at("noise_lo").get<double>();
  opts.noise_hi = cfg.at("fit").at("noise_hi").get<double>();
  opts.amplitude = cfg.at("model").at("amplitude").get<double>();
  opts.seed = seed;
  opts.ep = ep_from(cfg);
  opts.posterior_test_noise =
      cfg.at("model").at("test_noise").get<std::string>() == "posterior";
  return opts;
}

Variant variant_from(const std::string& name) {
  if (name == "gpc") return Variant::GPC;
  if (name == "gpc+") return Variant::GPCPlus;
  throw std::runtime_error("model.variant must be gpc|gpc+ , got '" + name +
                           "'");
}

Dataset load_input_data(const json& cfg, std::uint64_t seed) {
  if (cfg.at("synth").at("enabled").get<bool>()) {
    const auto& s = cfg.at("synth");
    return synth_lupi(s.at("n").get<Eigen::Index>(),
                      s.at("d").get<Eigen::Index>(),
                      noise_from(s.at("noise")), seed);
  }
  const std::string csv = cfg.at("dataset").at("csv").get<std::string>();
  if (csv.empty()) {
    throw std::runtime_error(
        "no input data: set dataset.csv or synth.enabled=true");
  }
  return load_csv(csv, schema_from(cfg));
}

std::string config_digest(const json& cfg) {
  const std::string text = cfg.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

int cmd_train(const json& cfg, const std::string& out_path,
              const std::string& log_path) {
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  const Variant variant =
      variant_from(cfg.at("model").at("variant").get<std::string>());
  Dataset data = load_input_data(cfg, seed);
  if (variant == Variant::GPCPlus && !data.has_privileged()) {
    throw std::runtime_error(
        "variant gpc+ needs privileged columns (prefix '" +
        schema_from(cfg).privileged_prefix + "') in the training data");
  }

  if (cfg.at("split").at("enabled").get<bool>()) {
    SplitSpec spec;
    spec.n_train = cfg.at("split").at("n_train").get<Eigen::Index>();
    spec.n_val = cfg.at("split").at("n_val").get<Eigen::Index>();
    spec.seed = seed;
    data = split(data, spec).train;
    log_line("training on a split of " + std::to_string(data.size()) +
             " rows");
  }

  const PreprocRecipe recipe = fit_preproc(data, preproc_from(cfg));
  for (const std::string& w : recipe.warnings) log_line("warning: " + w);
  const Dataset prepared = apply_preproc(recipe, data);

  FitReport report;
  GPCModel model = fit(prepared, variant, fit_from(cfg, seed), &report);
  model.preproc = recipe;
  model.preproc_id = recipe.id;
  save_model(model, out_path);

  std::ostringstream trace;
  trace << "evidence trace (best so far):";
  for (const double e : report.evidence_trace) trace << ' ' << e;
  log_line(trace.str());
  log_line("log evidence " + std::to_string(model.log_evidence) +
           ", ep converged: " + (model.ep_converged ? "yes" : "no"));
  log_line("model written to " + out_path);

  if (!log_path.empty()) {
    json jlog;
    jlog["evidence_trace"] = report.evidence_trace;
    jlog["restart_evidence"] = report.restart_evidence;
    jlog["evaluations"] = report.evaluations;
    jlog["ep_converged"] = report.ep_converged;
    jlog["log_evidence"] = model.log_evidence;
    jlog["config_hash"] = config_digest(cfg);
    std::ofstream out(log_path);
    if (!out) throw std::runtime_error("cannot write log '" + log_path + "'");
    out << jlog.dump(2) << '\n';
  }
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& in_path,
                const std::string& out_path, const json& cfg) {
  const GPCModel model = load_model(model_path);
  CsvSchema schema = schema_from(cfg);
  schema.label_required = false;
  const Dataset raw = load_csv(in_path, schema);
  if (raw.has_privileged()) {
    log_line(
        "warning: privileged columns present in the input are ignored at "
        "prediction time");
  }
  Eigen::MatrixXd features = raw.X;
  if (model.preproc) {
    Dataset transformed = apply_preproc(*model.preproc, raw);
    features = transformed.X;
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
  out << "index,proba,label\n";
  if (raw.size() > 0) {
    const Eigen::VectorXd proba = predict_proba(model, features);
    char buf[40];
    for (Eigen::Index i = 0; i < proba.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", proba(i));
      out << i << ',' << buf << ',' << (proba(i) >= 0.5 ? 1 : 0) << '\n';
    }
  }
  log_line("predictions written to " + out_path);
  return 0;
}

TaskSpec task_from_json(const json& jt, const json& cfg) {
  TaskSpec task;
  task.name = jt.value("name", std::string("task"));
  task.schema = schema_from(cfg);
  if (jt.contains("csv") && !jt.at("csv").get<std::string>().empty()) {
    task.csv_path = jt.at("csv").get<std::string>();
  } else if (jt.contains("synth")) {
    SynthSpec synth;
    synth.n = jt.at("synth").at("n").get<Eigen::Index>();
    synth.d = jt.at("synth").at("d").get<Eigen::Index>();
    synth.law = noise_from(jt.at("synth").at("noise"));
    task.synth = synth;
  } else {
    throw std::runtime_error("benchmark task '" + task.name +
                             "' needs csv or synth");
  }
  task.preproc = preproc_from(cfg);
  task.split.n_train = cfg.at("split").at("n_train").get<Eigen::Index>();
  task.split.n_val = cfg.at("split").at("n_val").get<Eigen::Index>();
  return task;
}

int cmd_benchmark(const json& cfg, const std::string& out_path,
                  const std::string& format) {
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  const int n_repeats = cfg.at("benchmark").at("n_repeats").get<int>();
  const double alpha = cfg.at("benchmark").at("alpha").get<double>();

  std::vector<MethodSpec> methods;
  for (const auto& name : cfg.at("benchmark").at("methods")) {
    MethodSpec m;
    m.name = name.get<std::string>() == "gpc+" ? "gpc_plus" : "gpc";
    m.variant = variant_from(name.get<std::string>());
    m.fit = fit_from(cfg, seed);
    methods.push_back(std::move(m));
  }

  json jtasks = cfg.at("benchmark").at("tasks");
  if (jtasks.empty()) {
    // fall back to the top-level dataset / synth definition as a single task
    json jt;
    jt["name"] = "default";
    if (cfg.at("synth").at("enabled").get<bool>()) {
      jt["synth"] = cfg.at("synth");
    } else {
      jt["csv"] = cfg.at("dataset").at("csv");
    }
    jtasks.push_back(jt);
  }

  Report report;
  report.base_seed = seed;
  report.n_repeats = n_repeats;
  report.config_hash = config_digest(cfg);
  report.table.tasks.clear();
  for (const auto& m : methods) report.table.methods.push_back(m.name);
  report.table.mean_error.resize(static_cast<Eigen::Index>(jtasks.size()),
                                 static_cast<Eigen::Index>(methods.size()));
  Eigen::MatrixXd se(report.table.mean_error.rows(),
                     report.table.mean_error.cols());
  for (std::size_t t = 0; t < jtasks.size(); ++t) {
    const TaskSpec task = task_from_json(jtasks[t], cfg);
    log_line("task " + task.name + " (" + std::to_string(n_repeats) +
             " repeats)");
    const RepeatSummary summary =
        repeat_experiment(task, methods, n_repeats, seed);
    report.table.tasks.push_back(task.name);
    std::vector<int> failures;
    for (std::size_t m = 0; m < methods.size(); ++m) {
      report.table.mean_error(static_cast<Eigen::Index>(t),
                              static_cast<Eigen::Index>(m)) =
          summary.cells[m].mean_error;
      se(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(m)) =
          summary.cells[m].std_error;
      failures.push_back(summary.cells[m].n_failed);
      log_line("  " + methods[m].name + ": " +
               std::to_string(summary.cells[m].mean_error) + " +- " +
               std::to_string(summary.cells[m].std_error) +
               (summary.cells[m].n_failed > 0
                    ? " (" + std::to_string(summary.cells[m].n_failed) +
                          " failed repeats)"
                    : ""));
    }
    report.failures.push_back(failures);
  }
  report.table.std_error = se;
  if (methods.size() >= 2 && !report.table.tasks.empty()) {
    report.ranks = rank_summary(report.table, alpha);
  }
  write_report(report, out_path, format);
  log_line("report written to " + out_path);
  return 0;
}

int cmd_ranks(const std::string& table_path, double alpha,
              const std::string& out_path) {
  const ErrorTable table = load_error_table_csv(table_path);
  const RankSummary rs = rank_summary(table, alpha);
  char buf[64];
  std::cout << "methods:";
  for (const auto& m : rs.methods) std::cout << ' ' << m;
  std::cout << "\naverage ranks:";
  for (const double r : rs.avg_rank) {
    std::snprintf(buf, sizeof(buf), " %.4f", r);
    std::cout << buf;
  }
  std::snprintf(buf, sizeof(buf), "%.4f", rs.critical_distance);
  std::cout << "\ncritical distance (alpha=" << alpha << "): " << buf << '\n';
  std::snprintf(buf, sizeof(buf), "%.4f", rs.friedman_chi2);
  std::cout << "friedman chi2: " << buf;
  std::snprintf(buf, sizeof(buf), "%.4f", rs.iman_davenport_f);
  std::cout << "  iman-davenport F: " << buf << '\n';
  if (rs.significant_pairs.empty()) {
    std::cout << "no pairwise differences exceed the critical distance\n";
  } else {
    for (const auto& p : rs.significant_pairs) {
      std::cout << "significant: " << rs.methods[static_cast<std::size_t>(p.first)]
                << " vs " << rs.methods[static_cast<std::size_t>(p.second)]
                << '\n';
    }
  }
  if (!out_path.empty()) {
    Report report;
    report.table = table;
    report.ranks = rs;
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
    out << emit_report_json(report);
  }
  return 0;
}

int cmd_synth(const json& cfg, const std::string& out_path) {
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  const auto& s = cfg.at("synth");
  const Dataset data =
      synth_lupi(s.at("n").get<Eigen::Index>(), s.at("d").get<Eigen::Index>(),
                 noise_from(s.at("noise")), seed);
  save_csv(data, out_path, schema_from(cfg));
  log_line("synthetic dataset written to " + out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian process classification with privileged noise"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--set", overrides,
                 "override a config entry, e.g. --set ep.damping=0.5");
  app.add_option("--seed", seed_flag, "seed override");
  app.add_flag("--quiet", g_quiet, "suppress log output");

  auto* train = app.add_subcommand("train", "fit a model and serialize it");
  std::string model_out = "model.json";
  std::string fit_log;
  train->add_option("--out", model_out, "model output path");
  train->add_option("--log", fit_log, "optional fit log path (json)");

  auto* predict = app.add_subcommand("predict", "predict labels for a csv");
  std::string model_in, csv_in, csv_out = "predictions.csv";
  predict->add_option("--model", model_in, "model file")->required();
  predict->add_option("--in", csv_in, "input csv")->required();
  predict->add_option("--out", csv_out, "output csv");

  auto* benchmark =
      app.add_subcommand("benchmark", "repeat-experiment error tables");
  std::string report_out = "report.json";
  std::string report_format = "json";
  benchmark->add_option("--out", report_out, "report output path");
  benchmark->add_option("--format", report_format, "json or csv");

  auto* ranks = app.add_subcommand("ranks", "average ranks and significance");
  std::string table_path;
  double alpha = 0.10;
  std::string ranks_out;
  ranks->add_option("--table", table_path, "error table csv")->required();
  ranks->add_option("--alpha", alpha, "significance level (0.05 or 0.10)");
  ranks->add_option("--out", ranks_out, "optional json summary path");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out = "synth.csv";
  synth->add_option("--out", synth_out, "output csv path");

  CLI11_PARSE(app, argc, argv);

  try {
    const json cfg = load_config(config_path, overrides, seed_flag);
    if (train->parsed()) return cmd_train(cfg, model_out, fit_log);
    if (predict->parsed()) return cmd_predict(model_in, csv_in, csv_out, cfg);
    if (benchmark->parsed())
      return cmd_benchmark(cfg, report_out, report_format);
    if (ranks->parsed()) return cmd_ranks(table_path, alpha, ranks_out);
    if (synth->parsed()) return cmd_synth(cfg, synth_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
