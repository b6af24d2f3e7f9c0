#include "gppriv/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace gppriv {

using nlohmann::json;

double error_rate(const std::vector<int>& pred,
                  const std::vector<int>& truth) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw std::invalid_argument("error_rate: label vectors empty or unequal");
  }
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] != truth[i]) ++mismatches;
  }
  return 100.0 * static_cast<double>(mismatches) /
         static_cast<double>(pred.size());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

constexpr const char* kStderrSuffix = "_stderr";

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ErrorTable load_error_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_error_table_csv: cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_error_table_csv: empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line);
  if (header.empty() || header[0] != "task") {
    throw std::runtime_error(
        "load_error_table_csv: first column must be 'task'");
  }
  std::vector<std::string> methods;
  std::vector<int> mean_cols, stderr_cols;  // stderr_cols aligned to methods
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (has_suffix(header[c], kStderrSuffix)) continue;
    methods.push_back(header[c]);
    mean_cols.push_back(static_cast<int>(c));
    int sc = -1;
    for (std::size_t c2 = 1; c2 < header.size(); ++c2) {
      if (header[c2] == header[c] + kStderrSuffix) sc = static_cast<int>(c2);
    }
    stderr_cols.push_back(sc);
  }
  const bool any_stderr =
      std::any_of(stderr_cols.begin(), stderr_cols.end(),
                  [](int c) { return c >= 0; });

  std::vector<std::string> tasks;
  std::vector<std::vector<double>> means, stderrs;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto fields = split_line(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << "load_error_table_csv: row " << row << " has " << fields.size()
          << " fields, expected " << header.size();
      throw std::runtime_error(msg.str());
    }
    tasks.push_back(fields[0]);
    std::vector<double> m, s;
    for (std::size_t j = 0; j < methods.size(); ++j) {
      m.push_back(std::stod(fields[static_cast<std::size_t>(mean_cols[j])]));
      if (any_stderr) {
        s.push_back(stderr_cols[j] >= 0
                        ? std::stod(fields[static_cast<std::size_t>(stderr_cols[j])])
                        : std::numeric_limits<double>::quiet_NaN());
      }
    }
    means.push_back(std::move(m));
    if (any_stderr) stderrs.push_back(std::move(s));
  }

  ErrorTable table;
  table.tasks = std::move(tasks);
  table.methods = std::move(methods);
  const Eigen::Index nt = static_cast<Eigen::Index>(table.tasks.size());
  const Eigen::Index nm = static_cast<Eigen::Index>(table.methods.size());
  table.mean_error.resize(nt, nm);
  for (Eigen::Index i = 0; i < nt; ++i) {
    for (Eigen::Index j = 0; j < nm; ++j) {
      table.mean_error(i, j) =
          means[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  if (any_stderr) {
    Eigen::MatrixXd se(nt, nm);
    for (Eigen::Index i = 0; i < nt; ++i) {
      for (Eigen::Index j = 0; j < nm; ++j) {
        se(i, j) =
            stderrs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    }
    table.std_error = std::move(se);
  }
  return table;
}

void save_error_table_csv(const ErrorTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_error_table_csv: cannot write '" + path +
                             "'");
  }
  out << "task";
  for (const auto& m : table.methods) out << ',' << m;
  if (table.std_error) {
    for (const auto& m : table.methods) out << ',' << m << kStderrSuffix;
  }
  out << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < table.mean_error.rows(); ++i) {
    out << table.tasks[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < table.mean_error.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", table.mean_error(i, j));
      out << ',' << buf;
    }
    if (table.std_error) {
      for (Eigen::Index j = 0; j < table.mean_error.cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", (*table.std_error)(i, j));
        out << ',' << buf;
      }
    }
    out << '\n';
  }
}

std::vector<double> rank_row(const std::vector<double>& values) {
  const std::size_t k = values.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(k, 0.0);
  std::size_t i = 0;
  while (i < k) {
    std::size_t j = i;
    while (j + 1 < k && values[order[j + 1]] == values[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // mid-rank
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mid;
    i = j + 1;
  }
  return ranks;
}

std::vector<double> average_ranks(const ErrorTable& table) {
  const Eigen::Index nt = table.mean_error.rows();
  const Eigen::Index nm = table.mean_error.cols();
  if (nm < 2 || nt < 1) {
    throw std::invalid_argument("average_ranks: need >= 2 methods, >= 1 task");
  }
  std::vector<double> acc(static_cast<std::size_t>(nm), 0.0);
  for (Eigen::Index i = 0; i < nt; ++i) {
    std::vector<double> row(static_cast<std::size_t>(nm));
    for (Eigen::Index j = 0; j < nm; ++j) {
      row[static_cast<std::size_t>(j)] = table.mean_error(i, j);
    }
    const auto ranks = rank_row(row);
    for (std::size_t j = 0; j < ranks.size(); ++j) acc[j] += ranks[j];
  }
  for (double& v : acc) v /= static_cast<double>(nt);
  return acc;
}

double nemenyi_cd(int k, int n_tasks, double alpha) {
  // studentized range / sqrt(2) at alpha, for k = 2..10
  static const double q05[] = {1.960, 2.343, 2.569, 2.728, 2.850,
                               2.949, 3.031, 3.102, 3.164};
  static const double q10[] = {1.645, 2.052, 2.291, 2.459, 2.589,
                               2.693, 2.780, 2.855, 2.920};
  if (k < 2 || k > 10) {
    throw std::invalid_argument(
        "nemenyi_cd: tabulated constants cover k in [2, 10]");
  }
  if (n_tasks < 1) throw std::invalid_argument("nemenyi_cd: need N >= 1");
  const double* table = nullptr;
  if (std::abs(alpha - 0.05) < 1e-12) {
    table = q05;
  } else if (std::abs(alpha - 0.10) < 1e-12) {
    table = q10;
  } else {
    throw std::invalid_argument(
        "nemenyi_cd: alpha must be 0.05 or 0.10 (tabulated)");
  }
  const double q = table[k - 2];
  return q * std::sqrt(static_cast<double>(k) * (k + 1) /
                       (6.0 * static_cast<double>(n_tasks)));
}

RankSummary rank_summary(const ErrorTable& table, double alpha) {
  RankSummary out;
  out.methods = table.methods;
  out.avg_rank = average_ranks(table);
  out.alpha = alpha;
  const int k = static_cast<int>(table.methods.size());
  const int n = static_cast<int>(table.tasks.size());
  out.critical_distance = nemenyi_cd(k, n, alpha);

  double sum_sq = 0.0;
  for (const double r : out.avg_rank) sum_sq += r * r;
  const double kk = static_cast<double>(k);
  out.friedman_chi2 =
      12.0 * n / (kk * (kk + 1.0)) * (sum_sq - kk * (kk + 1.0) * (kk + 1.0) / 4.0);
  const double denom = n * (kk - 1.0) - out.friedman_chi2;
  out.iman_davenport_f =
      denom > 0.0 ? (n - 1.0) * out.friedman_chi2 / denom
                  : std::numeric_limits<double>::infinity();

  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      if (std::abs(out.avg_rank[static_cast<std::size_t>(i)] -
                   out.avg_rank[static_cast<std::size_t>(j)]) >
          out.critical_distance) {
        out.significant_pairs.emplace_back(i, j);
      }
    }
  }
  return out;
}

int worker_thread_count(int requested) {
  int n = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("GPPRIV_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

namespace {

struct RepeatOutcome {
  std::vector<double> errors;  // per method, NaN on failure
};

RepeatOutcome run_one_repeat(const TaskSpec& task,
                             const std::vector<MethodSpec>& methods,
                             const Dataset* base_data, std::uint64_t seed) {
  RepeatOutcome out;
  out.errors.assign(methods.size(), std::numeric_limits<double>::quiet_NaN());

  Dataset generated;
  const Dataset* source = base_data;
  if (task.synth) {
    generated = synth_lupi(task.synth->n, task.synth->d, task.synth->law, seed);
    source = &generated;
  }

  SplitSpec split_spec = task.split;
  split_spec.seed = seed;
  SplitResult parts = split(*source, split_spec);

  const PreprocRecipe recipe = fit_preproc(parts.train, task.preproc);
  const Dataset train = apply_preproc(recipe, parts.train);
  const Dataset test = apply_preproc(recipe, parts.test);

  for (std::size_t m = 0; m < methods.size(); ++m) {
    try {
      FitOptions opts = methods[m].fit;
      opts.seed = seed;
      const GPCModel model = fit(train, methods[m].variant, opts);
      const std::vector<int> pred = predict_label(model, test.X);
      out.errors[m] = error_rate(pred, test.y);
    } catch (const std::exception&) {
      // recorded as a failed cell
    }
  }
  return out;
}

}  // namespace

RepeatSummary repeat_experiment(const TaskSpec& task,
                                const std::vector<MethodSpec>& methods,
                                int n_repeats, std::uint64_t base_seed,
                                int threads) {
  if (n_repeats < 2) {
    throw std::invalid_argument("repeat_experiment: need n_repeats >= 2");
  }
  if (methods.empty()) {
    throw std::invalid_argument("repeat_experiment: no methods");
  }
  Dataset base_data;
  const Dataset* base_ptr = nullptr;
  if (task.csv_path) {
    base_data = load_csv(*task.csv_path, task.schema);
    base_ptr = &base_data;
  } else if (!task.synth) {
    throw std::invalid_argument(
        "repeat_experiment: task needs a csv path or a synth spec");
  }

  std::vector<RepeatOutcome> outcomes(static_cast<std::size_t>(n_repeats));
  const int n_threads = std::min(worker_thread_count(threads), n_repeats);
  if (n_threads <= 1) {
    for (int r = 0; r < n_repeats; ++r) {
      outcomes[static_cast<std::size_t>(r)] = run_one_repeat(
          task, methods, base_ptr, base_seed + static_cast<std::uint64_t>(r));
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t]() {
        for (int r = t; r < n_repeats; r += n_threads) {
          outcomes[static_cast<std::size_t>(r)] =
              run_one_repeat(task, methods, base_ptr,
                             base_seed + static_cast<std::uint64_t>(r));
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  RepeatSummary summary;
  for (const auto& m : methods) summary.methods.push_back(m.name);
  summary.cells.resize(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<double> per_repeat;
    per_repeat.reserve(static_cast<std::size_t>(n_repeats));
    for (int r = 0; r < n_repeats; ++r) {
      per_repeat.push_back(outcomes[static_cast<std::size_t>(r)].errors[m]);
    }
    summary.cells[m] = summarize_errors(per_repeat);
  }
  return summary;
}

CellResult summarize_errors(const std::vector<double>& per_repeat) {
  CellResult cell;
  cell.per_repeat = per_repeat;
  double sum = 0.0;
  for (const double e : per_repeat) {
    if (std::isnan(e)) {
      ++cell.n_failed;
    } else {
      ++cell.n_ok;
      sum += e;
    }
  }
  if (cell.n_ok > 0) {
    cell.mean_error = sum / cell.n_ok;
    double ss = 0.0;
    for (const double e : per_repeat) {
      if (!std::isnan(e)) ss += (e - cell.mean_error) * (e - cell.mean_error);
    }
    cell.std_error = cell.n_ok > 1
                         ? std::sqrt(ss / (cell.n_ok - 1)) /
                               std::sqrt(static_cast<double>(cell.n_ok))
                         : 0.0;
  }
  return cell;
}

namespace {

json table_to_json(const ErrorTable& table) {
  json j;
  j["tasks"] = table.tasks;
  j["methods"] = table.methods;
  json rows = json::array();
  for (Eigen::Index i = 0; i < table.mean_error.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < table.mean_error.cols(); ++c) {
      row.push_back(table.mean_error(i, c));
    }
    rows.push_back(std::move(row));
  }
  j["mean_error"] = std::move(rows);
  if (table.std_error) {
    json se = json::array();
    for (Eigen::Index i = 0; i < table.std_error->rows(); ++i) {
      json row = json::array();
      for (Eigen::Index c = 0; c < table.std_error->cols(); ++c) {
        row.push_back((*table.std_error)(i, c));
      }
      se.push_back(std::move(row));
    }
    j["std_error"] = std::move(se);
  } else {
    j["std_error"] = json();
  }
  return j;
}

ErrorTable table_from_json(const json& j) {
  ErrorTable table;
  table.tasks = j.at("tasks").get<std::vector<std::string>>();
  table.methods = j.at("methods").get<std::vector<std::string>>();
  const Eigen::Index nt = static_cast<Eigen::Index>(table.tasks.size());
  const Eigen::Index nm = static_cast<Eigen::Index>(table.methods.size());
  table.mean_error.resize(nt, nm);
  for (Eigen::Index i = 0; i < nt; ++i) {
    for (Eigen::Index c = 0; c < nm; ++c) {
      table.mean_error(i, c) = j.at("mean_error")
                                   .at(static_cast<std::size_t>(i))
                                   .at(static_cast<std::size_t>(c))
                                   .get<double>();
    }
  }
  if (!j.at("std_error").is_null()) {
    Eigen::MatrixXd se(nt, nm);
    for (Eigen::Index i = 0; i < nt; ++i) {
      for (Eigen::Index c = 0; c < nm; ++c) {
        se(i, c) = j.at("std_error")
                       .at(static_cast<std::size_t>(i))
                       .at(static_cast<std::size_t>(c))
                       .get<double>();
      }
    }
    table.std_error = std::move(se);
  }
  return table;
}

}  // namespace

std::string emit_report_json(const Report& report) {
  json j;
  j["report_version"] = report.report_version;
  j["table"] = table_to_json(report.table);
  if (report.ranks) {
    json r;
    r["methods"] = report.ranks->methods;
    r["avg_rank"] = report.ranks->avg_rank;
    r["critical_distance"] = report.ranks->critical_distance;
    r["alpha"] = report.ranks->alpha;
    r["friedman_chi2"] = report.ranks->friedman_chi2;
    r["iman_davenport_f"] = report.ranks->iman_davenport_f;
    json pairs = json::array();
    for (const auto& p : report.ranks->significant_pairs) {
      pairs.push_back({p.first, p.second});
    }
    r["significant_pairs"] = std::move(pairs);
    j["ranks"] = std::move(r);
  } else {
    j["ranks"] = json();
  }
  j["failures"] = report.failures;
  j["base_seed"] = report.base_seed;
  j["n_repeats"] = report.n_repeats;
  j["config_hash"] = report.config_hash;
  return j.dump(2) + "\n";
}

Report parse_report_json(const std::string& text) {
  const json j = json::parse(text);
  Report report;
  report.report_version = j.at("report_version").get<int>();
  report.table = table_from_json(j.at("table"));
  if (!j.at("ranks").is_null()) {
    RankSummary r;
    r.methods = j.at("ranks").at("methods").get<std::vector<std::string>>();
    r.avg_rank = j.at("ranks").at("avg_rank").get<std::vector<double>>();
    r.critical_distance = j.at("ranks").at("critical_distance").get<double>();
    r.alpha = j.at("ranks").at("alpha").get<double>();
    r.friedman_chi2 = j.at("ranks").at("friedman_chi2").get<double>();
    r.iman_davenport_f = j.at("ranks").at("iman_davenport_f").get<double>();
    for (const auto& p : j.at("ranks").at("significant_pairs")) {
      r.significant_pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    }
    report.ranks = std::move(r);
  }
  report.failures = j.at("failures").get<std::vector<std::vector<int>>>();
  report.base_seed = j.at("base_seed").get<std::uint64_t>();
  report.n_repeats = j.at("n_repeats").get<int>();
  report.config_hash = j.at("config_hash").get<std::string>();
  return report;
}

void write_report(const Report& report, const std::string& path,
                  const std::string& format) {
  if (format == "json") {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_report: cannot write '" + path + "'");
    out << emit_report_json(report);
  } else if (format == "csv") {
    save_error_table_csv(report.table, path);
  } else {
    throw std::invalid_argument("write_report: format must be json or csv");
  }
}

}  // namespace gppriv
