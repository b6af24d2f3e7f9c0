#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gppriv/data.hpp"
#include "gppriv/model.hpp"

namespace gppriv {

// Percentage of mismatched labels.
double error_rate(const std::vector<int>& pred, const std::vector<int>& truth);

// Rows are tasks, columns are methods, cells are mean error (%) with an
// optional standard error companion.
struct ErrorTable {
  std::vector<std::string> tasks;
  std::vector<std::string> methods;
  Eigen::MatrixXd mean_error;
  std::optional<Eigen::MatrixXd> std_error;
};

ErrorTable load_error_table_csv(const std::string& path);
void save_error_table_csv(const ErrorTable& table, const std::string& path);

// Mid-rank ties; rank 1 is the smallest error.
std::vector<double> rank_row(const std::vector<double>& values);
std::vector<double> average_ranks(const ErrorTable& table);

// Critical distance q_alpha(k) * sqrt(k (k+1) / (6 N)); alpha in {0.05, 0.10},
// k in [2, 10].
double nemenyi_cd(int k, int n_tasks, double alpha);

struct RankSummary {
  std::vector<std::string> methods;
  std::vector<double> avg_rank;
  double critical_distance = 0.0;
  double alpha = 0.10;
  double friedman_chi2 = 0.0;
  double iman_davenport_f = 0.0;
  std::vector<std::pair<int, int>> significant_pairs;  // method index pairs
};

RankSummary rank_summary(const ErrorTable& table, double alpha);

struct SynthSpec {
  Eigen::Index n = 500;
  Eigen::Index d = 2;
  NoiseLaw law = NoiseLaw::bimodal(0.1, 5.0);
};

struct TaskSpec {
  std::string name;
  std::optional<std::string> csv_path;  // one of csv_path / synth
  CsvSchema schema;
  std::optional<SynthSpec> synth;
  PreprocOptions preproc;
  SplitSpec split;
};

struct MethodSpec {
  std::string name;
  Variant variant = Variant::GPC;
  FitOptions fit;
};

struct CellResult {
  double mean_error = 0.0;
  double std_error = 0.0;
  int n_ok = 0;
  int n_failed = 0;
  std::vector<double> per_repeat;  // NaN where the repeat failed
};

// Mean and standard error (sample std over sqrt(n)) of the non-NaN entries.
CellResult summarize_errors(const std::vector<double>& per_repeat);

struct RepeatSummary {
  std::vector<std::string> methods;
  std::vector<CellResult> cells;
};

// Repeat r reuses the task data with split/generator seed base_seed + r; all
// methods see the same split so differences pair up. threads == 0 picks the
// hardware count, capped by GPPRIV_THREADS.
RepeatSummary repeat_experiment(const TaskSpec& task,
                                const std::vector<MethodSpec>& methods,
                                int n_repeats, std::uint64_t base_seed,
                                int threads = 0);

struct Report {
  int report_version = 1;
  ErrorTable table;
  std::optional<RankSummary> ranks;
  std::vector<std::vector<int>> failures;  // tasks x methods, optional
  std::uint64_t base_seed = 0;
  int n_repeats = 0;
  std::string config_hash;
};

std::string emit_report_json(const Report& report);
Report parse_report_json(const std::string& text);
void write_report(const Report& report, const std::string& path,
                  const std::string& format);  // "json" or "csv"

int worker_thread_count(int requested);  // honours GPPRIV_THREADS

}  // namespace gppriv
