#include "gppriv/data.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gppriv/rng.hpp"

namespace gppriv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.begin();
  auto e = s.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  return std::string(b, e);
}

double parse_number(const std::string& raw, std::size_t row,
                    const std::string& column) {
  const std::string s = trim(raw);
  char* end = nullptr;
  const double value = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    std::ostringstream msg;
    msg << "parse error at data row " << row << ", column '" << column
        << "': '" << s << "' is not numeric";
    throw std::runtime_error(msg.str());
  }
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "parse error at data row " << row << ", column '" << column
        << "': value is not finite";
    throw std::runtime_error(msg.str());
  }
  return value;
}

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// FNV-1a over a canonical text rendering; used as the recipe id.
std::string content_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_csv: '" + path + "' is empty (no header)");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);

  int label_idx = -1;
  std::vector<int> feature_idx, priv_idx;
  std::vector<std::string> feature_names, priv_names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trim(header[c]);
    if (name == schema.label_column) {
      label_idx = static_cast<int>(c);
    } else if (name.rfind(schema.privileged_prefix, 0) == 0) {
      priv_idx.push_back(static_cast<int>(c));
      priv_names.push_back(name);
    } else {
      feature_idx.push_back(static_cast<int>(c));
      feature_names.push_back(name);
    }
  }
  if (label_idx < 0 && schema.label_required) {
    throw std::runtime_error("load_csv: missing label column '" +
                             schema.label_column + "' in '" + path + "'");
  }

  std::vector<std::vector<double>> xrows, prows;
  std::vector<int> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << "parse error at data row " << row << ": expected "
          << header.size() << " fields, got " << fields.size();
      throw std::runtime_error(msg.str());
    }
    if (label_idx >= 0) {
      const double lab =
          parse_number(fields[static_cast<std::size_t>(label_idx)], row,
                       schema.label_column);
      if (lab != 0.0 && lab != 1.0) {
        std::ostringstream msg;
        msg << "parse error at data row " << row
            << ": label must be 0 or 1, got " << lab;
        throw std::runtime_error(msg.str());
      }
      labels.push_back(static_cast<int>(lab));
    } else {
      labels.push_back(0);
    }
    std::vector<double> xr, pr;
    xr.reserve(feature_idx.size());
    pr.reserve(priv_idx.size());
    for (std::size_t j = 0; j < feature_idx.size(); ++j) {
      xr.push_back(parse_number(
          fields[static_cast<std::size_t>(feature_idx[j])], row,
          feature_names[j]));
    }
    for (std::size_t j = 0; j < priv_idx.size(); ++j) {
      pr.push_back(parse_number(fields[static_cast<std::size_t>(priv_idx[j])],
                                row, priv_names[j]));
    }
    xrows.push_back(std::move(xr));
    prows.push_back(std::move(pr));
  }

  Dataset out;
  const Eigen::Index n = static_cast<Eigen::Index>(labels.size());
  const Eigen::Index d = static_cast<Eigen::Index>(feature_idx.size());
  out.X.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      out.X(i, j) = xrows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  if (!priv_idx.empty()) {
    const Eigen::Index ds = static_cast<Eigen::Index>(priv_idx.size());
    Eigen::MatrixXd xs(n, ds);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < ds; ++j) {
        xs(i, j) = prows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    }
    out.Xstar = std::move(xs);
  }
  out.y = std::move(labels);
  out.feature_names = std::move(feature_names);
  out.privileged_names = std::move(priv_names);
  return out;
}

void save_csv(const Dataset& data, const std::string& path,
              const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot write '" + path + "'");
  const Eigen::Index d = data.X.cols();
  const Eigen::Index ds = data.has_privileged() ? data.Xstar->cols() : 0;
  for (Eigen::Index j = 0; j < d; ++j) {
    if (static_cast<std::size_t>(j) < data.feature_names.size()) {
      out << data.feature_names[static_cast<std::size_t>(j)];
    } else {
      out << "x" << j;
    }
    out << ',';
  }
  for (Eigen::Index j = 0; j < ds; ++j) {
    if (static_cast<std::size_t>(j) < data.privileged_names.size()) {
      out << data.privileged_names[static_cast<std::size_t>(j)];
    } else {
      out << schema.privileged_prefix << j;
    }
    out << ',';
  }
  out << schema.label_column << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out << format_full(data.X(i, j)) << ',';
    for (Eigen::Index j = 0; j < ds; ++j) {
      out << format_full((*data.Xstar)(i, j)) << ',';
    }
    out << data.y[static_cast<std::size_t>(i)] << '\n';
  }
}

Standardizer fit_standardizer(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.rows() < 1) {
    throw std::invalid_argument("fit_standardizer: empty training split");
  }
  const Eigen::Index d = X.cols();
  std::vector<int> kept, dropped;
  std::vector<double> means, stds;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double mean = X.col(j).mean();
    const double var = (X.col(j).array() - mean).square().mean();  // 1/N
    const double sd = std::sqrt(var);
    if (sd > 0.0) {
      kept.push_back(static_cast<int>(j));
      means.push_back(mean);
      stds.push_back(sd);
    } else {
      dropped.push_back(static_cast<int>(j));
    }
  }
  Standardizer s;
  s.kept = std::move(kept);
  s.dropped = std::move(dropped);
  s.mean = Eigen::Map<Eigen::VectorXd>(means.data(),
                                       static_cast<Eigen::Index>(means.size()));
  s.std_dev = Eigen::Map<Eigen::VectorXd>(
      stds.data(), static_cast<Eigen::Index>(stds.size()));
  return s;
}

Eigen::MatrixXd apply_standardizer(const Standardizer& s,
                                   const Eigen::Ref<const Eigen::MatrixXd>& X) {
  const Eigen::Index k = static_cast<Eigen::Index>(s.kept.size());
  Eigen::MatrixXd out(X.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index src = s.kept[static_cast<std::size_t>(j)];
    if (src >= X.cols()) {
      throw std::invalid_argument(
          "apply_standardizer: input has fewer columns than the recipe");
    }
    out.col(j) = (X.col(src).array() - s.mean(j)) / s.std_dev(j);
  }
  return out;
}

PCABasis fit_pca(const Eigen::Ref<const Eigen::MatrixXd>& X, int k) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (k < 1 || k > std::min<Eigen::Index>(n - 1, d)) {
    std::ostringstream msg;
    msg << "fit_pca: k=" << k << " must be in [1, min(N-1, d)] = [1, "
        << std::min<Eigen::Index>(n - 1, d) << "]";
    throw std::invalid_argument(msg.str());
  }
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("fit_pca: eigendecomposition failed");
  }
  PCABasis basis;
  basis.total_variance = cov.trace();
  basis.components.resize(d, k);
  basis.eigenvalues.resize(k);
  // SelfAdjointEigenSolver returns ascending order
  for (int j = 0; j < k; ++j) {
    const Eigen::Index src = d - 1 - j;
    Eigen::VectorXd comp = eig.eigenvectors().col(src);
    Eigen::Index max_idx = 0;
    comp.cwiseAbs().maxCoeff(&max_idx);
    if (comp(max_idx) < 0.0) comp = -comp;
    basis.components.col(j) = comp;
    basis.eigenvalues(j) = eig.eigenvalues()(src);
  }
  return basis;
}

Eigen::MatrixXd apply_pca(const PCABasis& basis,
                          const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.cols() != basis.components.rows()) {
    throw std::invalid_argument("apply_pca: feature dimension mismatch");
  }
  return X * basis.components;
}

namespace {

Eigen::MatrixXd apply_domain(const DomainRecipe& recipe,
                             const Eigen::MatrixXd& X) {
  if (recipe.pre_std) {
    const Eigen::Index expected = static_cast<Eigen::Index>(
        recipe.pre_std->kept.size() + recipe.pre_std->dropped.size());
    if (X.cols() != expected) {
      std::ostringstream msg;
      msg << "apply_preproc: feature dimension mismatch (recipe expects "
          << expected << " columns, input has " << X.cols() << ")";
      throw std::invalid_argument(msg.str());
    }
  }
  Eigen::MatrixXd cur = X;
  if (recipe.pre_std) cur = apply_standardizer(*recipe.pre_std, cur);
  if (recipe.pca) cur = apply_pca(*recipe.pca, cur);
  if (recipe.post_std) cur = apply_standardizer(*recipe.post_std, cur);
  return cur;
}

DomainRecipe fit_domain(const Eigen::MatrixXd& X, bool standardize, int pca_k,
                        const std::string& domain,
                        std::vector<std::string>& warnings) {
  DomainRecipe recipe;
  Eigen::MatrixXd cur = X;
  if (standardize) {
    recipe.pre_std = fit_standardizer(cur);
    if (!recipe.pre_std->dropped.empty()) {
      std::ostringstream msg;
      msg << domain << ": dropped " << recipe.pre_std->dropped.size()
          << " zero-variance feature(s)";
      warnings.push_back(msg.str());
    }
    cur = apply_standardizer(*recipe.pre_std, cur);
  }
  if (pca_k > 0) {
    const int k = std::min<int>(
        pca_k, static_cast<int>(std::min<Eigen::Index>(cur.rows() - 1, cur.cols())));
    if (k < pca_k) {
      std::ostringstream msg;
      msg << domain << ": pca_k reduced from " << pca_k << " to " << k;
      warnings.push_back(msg.str());
    }
    recipe.pca = fit_pca(cur, k);
    cur = apply_pca(*recipe.pca, cur);
    recipe.post_std = fit_standardizer(cur);
  }
  return recipe;
}

std::string domain_digest(const DomainRecipe& r) {
  std::ostringstream ss;
  if (r.pre_std) {
    ss << "std:";
    for (Eigen::Index i = 0; i < r.pre_std->mean.size(); ++i) {
      ss << format_full(r.pre_std->mean(i)) << ','
         << format_full(r.pre_std->std_dev(i)) << ';';
    }
  }
  if (r.pca) {
    ss << "pca:" << r.pca->components.cols() << ':';
    for (Eigen::Index i = 0; i < r.pca->eigenvalues.size(); ++i) {
      ss << format_full(r.pca->eigenvalues(i)) << ',';
    }
  }
  return ss.str();
}

}  // namespace

PreprocRecipe fit_preproc(const Dataset& train, const PreprocOptions& opts) {
  PreprocRecipe recipe;
  recipe.original = fit_domain(train.X, opts.standardize, opts.pca_k,
                               "original", recipe.warnings);
  if (train.has_privileged()) {
    const bool priv_pca =
        opts.pca_domains == PreprocOptions::PCADomains::Both;
    recipe.privileged =
        fit_domain(*train.Xstar, opts.standardize, priv_pca ? opts.pca_k : 0,
                   "privileged", recipe.warnings);
  }
  recipe.id = content_hash(domain_digest(recipe.original) + "|" +
                           domain_digest(recipe.privileged));
  return recipe;
}

Dataset apply_preproc(const PreprocRecipe& recipe, const Dataset& data) {
  Dataset out;
  out.X = apply_domain(recipe.original, data.X);
  if (data.has_privileged()) {
    out.Xstar = apply_domain(recipe.privileged, *data.Xstar);
  }
  out.y = data.y;
  return out;
}

namespace {

Dataset take_rows(const Dataset& data, const std::vector<Eigen::Index>& idx) {
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(idx.size()), data.X.cols());
  if (data.has_privileged()) {
    out.Xstar = Eigen::MatrixXd(static_cast<Eigen::Index>(idx.size()),
                                data.Xstar->cols());
  }
  out.y.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = data.X.row(idx[i]);
    if (data.has_privileged()) {
      out.Xstar->row(static_cast<Eigen::Index>(i)) = data.Xstar->row(idx[i]);
    }
    out.y.push_back(data.y[static_cast<std::size_t>(idx[i])]);
  }
  out.feature_names = data.feature_names;
  out.privileged_names = data.privileged_names;
  return out;
}

}  // namespace

SplitResult split(const Dataset& data, const SplitSpec& spec) {
  const Eigen::Index n = data.size();
  if (spec.n_train < 1 || spec.n_val < 0 || spec.n_train + spec.n_val > n) {
    std::ostringstream msg;
    msg << "split: n_train=" << spec.n_train << " + n_val=" << spec.n_val
        << " exceeds N=" << n;
    throw std::invalid_argument(msg.str());
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(spec.seed);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(
        rng.integer(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  SplitResult out;
  out.train = take_rows(
      data, {idx.begin(), idx.begin() + spec.n_train});
  out.val = take_rows(
      data, {idx.begin() + spec.n_train, idx.begin() + spec.n_train + spec.n_val});
  out.test = take_rows(data, {idx.begin() + spec.n_train + spec.n_val, idx.end()});
  return out;
}

Dataset synth_lupi(Eigen::Index n, Eigen::Index d, const NoiseLaw& law,
                   std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("synth_lupi: need n >= 2");
  if (d < 1) throw std::invalid_argument("synth_lupi: need d >= 1");
  constexpr double kSeparation = 3.0;       // distance between class centers
  constexpr double kPrivObsNoise = 0.05;    // observation noise on log scale

  Rng rng(seed);
  Dataset out;
  out.X.resize(n, d);
  Eigen::MatrixXd xs(n, 1);
  out.y.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double center = (rng.uniform() < 0.5) ? -0.5 * kSeparation
                                                : 0.5 * kSeparation;
    out.X(i, 0) = center + rng.normal();
    for (Eigen::Index j = 1; j < d; ++j) out.X(i, j) = rng.normal();

    double s = 0.0;
    if (law.kind == NoiseLaw::Kind::Constant) {
      s = law.scale;
    } else {
      s = (rng.uniform() < law.p_high) ? law.high : law.low;
    }
    const double latent = out.X(i, 0) + s * rng.normal();
    out.y[static_cast<std::size_t>(i)] = latent >= 0.0 ? 1 : 0;
    // log of the noise scale, observed imperfectly; harmless when s == 0
    const double log_s = (s > 0.0) ? std::log(s) : -6.0;
    xs(i, 0) = log_s + kPrivObsNoise * rng.normal();
  }
  out.Xstar = std::move(xs);
  out.feature_names.reserve(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    out.feature_names.push_back("x" + std::to_string(j));
  }
  out.privileged_names = {"priv_lognoise"};
  return out;
}

}  // namespace gppriv
