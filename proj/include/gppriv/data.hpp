#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gppriv {

// Feature matrix X, optional privileged matrix Xstar (training-time only),
// labels in {0, 1}.
struct Dataset {
  Eigen::MatrixXd X;
  std::optional<Eigen::MatrixXd> Xstar;
  std::vector<int> y;
  std::vector<std::string> feature_names;
  std::vector<std::string> privileged_names;

  Eigen::Index size() const { return X.rows(); }
  bool has_privileged() const { return Xstar.has_value(); }
};

struct CsvSchema {
  std::string label_column = "label";
  std::string privileged_prefix = "priv_";
  bool label_required = true;  // prediction inputs may omit labels
};

Dataset load_csv(const std::string& path, const CsvSchema& schema = {});
void save_csv(const Dataset& data, const std::string& path,
              const CsvSchema& schema = {});

// Per-feature zero mean / unit standard deviation (population, 1/N).
// Zero-variance columns are dropped and recorded.
struct Standardizer {
  Eigen::VectorXd mean;       // over kept columns
  Eigen::VectorXd std_dev;    // over kept columns, all > 0
  std::vector<int> kept;      // source column indices
  std::vector<int> dropped;   // zero-variance source columns
};

Standardizer fit_standardizer(const Eigen::Ref<const Eigen::MatrixXd>& X);
Eigen::MatrixXd apply_standardizer(const Standardizer& s,
                                   const Eigen::Ref<const Eigen::MatrixXd>& X);

struct PCABasis {
  Eigen::MatrixXd components;   // d x k, columns ordered by descending eigenvalue
  Eigen::VectorXd eigenvalues;  // length k
  double total_variance = 0.0;  // trace of the training covariance

  double explained_variance_ratio() const {
    return eigenvalues.sum() / total_variance;
  }
};

// Top-k eigenvectors of the training covariance. Sign convention: the entry
// of largest magnitude in each component is positive.
PCABasis fit_pca(const Eigen::Ref<const Eigen::MatrixXd>& X, int k);
Eigen::MatrixXd apply_pca(const PCABasis& basis,
                          const Eigen::Ref<const Eigen::MatrixXd>& X);

// Pipeline order: standardize, project, re-standardize the projected
// features. Each domain (original / privileged) carries its own stages.
struct DomainRecipe {
  std::optional<Standardizer> pre_std;
  std::optional<PCABasis> pca;
  std::optional<Standardizer> post_std;
};

struct PreprocOptions {
  bool standardize = true;
  int pca_k = 0;  // 0 disables projection
  enum class PCADomains { Both, OriginalOnly } pca_domains = PCADomains::Both;
};

struct PreprocRecipe {
  DomainRecipe original;
  DomainRecipe privileged;
  std::vector<std::string> warnings;
  std::string id;  // content hash, referenced by fitted models
};

PreprocRecipe fit_preproc(const Dataset& train, const PreprocOptions& opts);
Dataset apply_preproc(const PreprocRecipe& recipe, const Dataset& data);

struct SplitSpec {
  Eigen::Index n_train = 200;
  Eigen::Index n_val = 200;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Seeded uniform shuffle, then partition.
SplitResult split(const Dataset& data, const SplitSpec& spec);

// Per-sample noise scale distribution for the synthetic generator.
struct NoiseLaw {
  enum class Kind { Constant, Bimodal } kind = Kind::Constant;
  double scale = 0.0;       // Constant
  double low = 0.1;         // Bimodal
  double high = 5.0;        // Bimodal
  double p_high = 0.5;      // Bimodal

  static NoiseLaw constant(double s) {
    return NoiseLaw{Kind::Constant, s, 0.0, 0.0, 0.0};
  }
  static NoiseLaw bimodal(double low, double high, double p_high = 0.5) {
    return NoiseLaw{Kind::Bimodal, 0.0, low, high, p_high};
  }
};

// Two class-conditional Gaussians along the first axis; labels come from
// thresholding the latent axis value perturbed by per-sample noise of scale
// s_n drawn from the law. The privileged feature is log(s_n) plus small
// observation noise, so it encodes exactly how reliable each label is.
Dataset synth_lupi(Eigen::Index n, Eigen::Index d, const NoiseLaw& law,
                   std::uint64_t seed);

}  // namespace gppriv
