#include "serm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "serm/errors.hpp"

namespace serm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<Eigen::Index> permutation(Eigen::Index m, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<size_t>(m));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

void Dataset::validate() const {
  if (X.rows() < 1) throw InvalidInput("dataset needs at least one row");
  if (y.size() != X.rows()) throw InvalidInput("label count does not match row count");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 1.0 && y(i) != -1.0) throw InvalidInput("labels must be -1 or +1");
  if (!X.allFinite()) throw InvalidInput("features must be finite");
  if (!feature_names.empty() && static_cast<Eigen::Index>(feature_names.size()) != X.cols())
    throw InvalidInput("feature name count does not match dimension");
  if (!tangents.empty()) {
    if (static_cast<Eigen::Index>(tangents.size()) != X.rows()) throw InvalidInput("one tangent per row required");
    for (const auto& t : tangents)
      if (t.rows() != X.cols() || t.cols() < 1) throw InvalidInput("tangent has wrong shape");
  }
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.feature_names = feature_names;
  for (size_t k = 0; k < rows.size(); ++k) {
    out.X.row(static_cast<Eigen::Index>(k)) = X.row(rows[k]);
    out.y(static_cast<Eigen::Index>(k)) = y(rows[k]);
    if (!tangents.empty()) out.tangents.push_back(tangents[static_cast<size_t>(rows[k])]);
  }
  return out;
}

CsvLoadResult load_csv(const std::string& path, const std::string& label_column,
                       const std::string& positive_label_value) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open CSV file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("CSV file '" + path + "' is empty");
  const auto header = split_commas(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) throw InvalidInput("label column '" + label_column + "' not found");
  const size_t label_idx = static_cast<size_t>(label_it - header.begin());

  double pos_numeric = 0;
  const bool numeric_label = parse_double(positive_label_value, pos_numeric);

  // Columns named tangent_* hold tangent directions (as written by write_csv).
  std::vector<char> is_tangent(header.size(), 0);
  size_t n_tangent = 0;
  for (size_t j = 0; j < header.size(); ++j)
    if (j != label_idx && header[j].rfind("tangent_", 0) == 0) {
      is_tangent[j] = 1;
      ++n_tangent;
    }
  const size_t n_feat = header.size() - 1 - n_tangent;
  if (n_feat == 0) throw InvalidInput("CSV file '" + path + "' has no feature columns");
  if (n_tangent % n_feat != 0) throw InvalidInput("tangent column count is not a multiple of the feature count");

  CsvLoadResult res;
  for (size_t j = 0; j < header.size(); ++j)
    if (j != label_idx && !is_tangent[j]) res.data.feature_names.push_back(header[j]);

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<double>> tangent_rows;
  std::vector<double> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      res.rejects.push_back({lineno, "expected " + std::to_string(header.size()) + " cells, found " +
                                         std::to_string(cells.size())});
      continue;
    }
    std::vector<double> row, tan;
    row.reserve(n_feat);
    std::string reason;
    for (size_t j = 0; j < cells.size() && reason.empty(); ++j) {
      if (j == label_idx) continue;
      double v = 0;
      if (cells[j].empty())
        reason = "blank cell in column '" + header[j] + "'";
      else if (!parse_double(cells[j], v))
        reason = "non-numeric cell in column '" + header[j] + "'";
      (is_tangent[j] ? tan : row).push_back(v);
    }
    const std::string& lab = cells[label_idx];
    if (reason.empty() && lab.empty()) reason = "blank label";
    if (!reason.empty()) {
      res.rejects.push_back({lineno, reason});
      continue;
    }
    double lv = 0;
    bool positive = numeric_label && parse_double(lab, lv) ? lv == pos_numeric : lab == positive_label_value;
    rows.push_back(std::move(row));
    tangent_rows.push_back(std::move(tan));
    labels.push_back(positive ? 1.0 : -1.0);
  }
  if (rows.empty()) throw InvalidInput("CSV file '" + path + "' has no usable rows");

  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = static_cast<Eigen::Index>(n_feat);
  const Eigen::Index k = static_cast<Eigen::Index>(n_tangent / n_feat);
  res.data.X.resize(m, d);
  res.data.y.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const size_t r = static_cast<size_t>(i);
    for (Eigen::Index j = 0; j < d; ++j) res.data.X(i, j) = rows[r][static_cast<size_t>(j)];
    res.data.y(i) = labels[r];
    if (k > 0) {
      Eigen::MatrixXd t(d, k);
      for (Eigen::Index c = 0; c < k; ++c)
        for (Eigen::Index j = 0; j < d; ++j) t(j, c) = tangent_rows[r][static_cast<size_t>(c * d + j)];
      res.data.tangents.push_back(std::move(t));
    }
  }
  return res;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write CSV file '" + path + "'");
  out << std::setprecision(17);
  const Eigen::Index d = data.dim();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (j) out << ',';
    out << (data.feature_names.empty() ? "x" + std::to_string(j + 1) : data.feature_names[static_cast<size_t>(j)]);
  }
  out << ",label";
  const Eigen::Index k = data.has_tangents() ? data.tangents.front().cols() : 0;
  for (Eigen::Index c = 0; c < k; ++c)
    for (Eigen::Index j = 0; j < d; ++j)
      out << ",tangent_" << (k > 1 ? std::to_string(c + 1) + "_" : std::string()) << (j + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out << (j ? "," : "") << data.X(i, j);
    out << ',' << static_cast<int>(data.y(i));
    for (Eigen::Index c = 0; c < k; ++c)
      for (Eigen::Index j = 0; j < d; ++j) out << ',' << data.tangents[static_cast<size_t>(i)](j, c);
    out << '\n';
  }
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& X) const {
  if (X.cols() != mean.size()) throw InvalidInput("standardizer dimension mismatch");
  return ((X.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array() * global_scale).matrix();
}

Eigen::MatrixXd Standardizer::inverse(const Eigen::MatrixXd& Z) const {
  if (Z.cols() != mean.size()) throw InvalidInput("standardizer dimension mismatch");
  return ((Z.array() / global_scale).rowwise() * sd.transpose().array()).matrix().rowwise() + mean.transpose();
}

Dataset Standardizer::transform(const Dataset& data) const {
  Dataset out = data;
  out.X = transform(data.X);
  // Tangent directions map through the linear part, renormalized per column.
  for (auto& t : out.tangents) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      t.col(c) = t.col(c).cwiseQuotient(sd) * global_scale;
      t.col(c).normalize();
    }
  }
  return out;
}

Standardizer fit_standardizer(const Dataset& train) {
  if (train.size() < 1) throw InvalidInput("cannot standardize an empty training set");
  Standardizer s;
  s.mean = train.X.colwise().mean().transpose();
  s.sd = ((train.X.rowwise() - s.mean.transpose()).array().square().colwise().sum() / double(train.size()))
             .sqrt()
             .transpose();
  for (Eigen::Index j = 0; j < s.sd.size(); ++j)
    if (!(s.sd(j) > 0)) {
      s.sd(j) = 1.0;
      ++s.constant_features;
    }
  s.global_scale = 1.0 / std::sqrt(double(train.dim()));
  return s;
}

StandardizedSets standardize_fit_transform(const Dataset& train, const std::vector<Dataset>& others) {
  StandardizedSets out;
  out.standardizer = fit_standardizer(train);
  out.train = out.standardizer.transform(train);
  for (const auto& o : others) out.others.push_back(out.standardizer.transform(o));
  return out;
}

DataSplit split(const Dataset& data, std::uint64_t seed) {
  const Eigen::Index m = data.size();
  if (m < 5) throw InvalidInput("need at least 5 rows to split");
  const auto idx = permutation(m, seed);
  const Eigen::Index n_train = static_cast<Eigen::Index>(std::floor(0.6 * double(m)));
  const Eigen::Index n_val = static_cast<Eigen::Index>(std::floor(0.2 * double(m)));
  auto take = [&](Eigen::Index from, Eigen::Index to) {
    return data.subset(std::vector<Eigen::Index>(idx.begin() + from, idx.begin() + to));
  };
  return {take(0, n_train), take(n_train, n_train + n_val), take(n_train + n_val, m)};
}

Dataset balance_classes(const Dataset& data, std::uint64_t seed) {
  std::vector<Eigen::Index> pos, neg;
  for (Eigen::Index i = 0; i < data.size(); ++i) (data.y(i) > 0 ? pos : neg).push_back(i);
  std::mt19937_64 rng(seed);
  auto& major = pos.size() > neg.size() ? pos : neg;
  const auto& minor = pos.size() > neg.size() ? neg : pos;
  std::shuffle(major.begin(), major.end(), rng);
  major.resize(minor.size());
  std::vector<Eigen::Index> keep = pos;
  keep.insert(keep.end(), neg.begin(), neg.end());
  std::sort(keep.begin(), keep.end());
  return data.subset(keep);
}

void SyntheticSpec::validate() const {
  if (n < 2) throw InvalidConfig("synthetic sample count must be >= 2");
  if (label_noise < 0 || label_noise >= 0.5) throw InvalidConfig("label noise must lie in [0, 0.5)");
  if (const auto* g = std::get_if<GaussianMixtureSpec>(&kind)) {
    const Eigen::Index d = g->mean_neg.size();
    if (d < 1 || g->mean_pos.size() != d || g->var_neg.size() != d || g->var_pos.size() != d)
      throw InvalidConfig("gaussian mixture vectors must share one positive dimension");
    if ((g->var_neg.array() <= 0).any() || (g->var_pos.array() <= 0).any())
      throw InvalidConfig("gaussian mixture covariance diagonals must be positive");
  } else {
    const auto& p = std::get<ParabolaManifoldSpec>(kind);
    if (!(p.lo < p.hi)) throw InvalidConfig("manifold range must be non-empty");
  }
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Dataset out;
  if (const auto* g = std::get_if<GaussianMixtureSpec>(&spec.kind)) {
    const Eigen::Index d = g->mean_neg.size();
    const Eigen::Index n_neg = spec.n / 2;
    out.X.resize(spec.n, d);
    out.y.resize(spec.n);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      const bool pos = i >= n_neg;
      const auto& mu = pos ? g->mean_pos : g->mean_neg;
      const auto& var = pos ? g->var_pos : g->var_neg;
      for (Eigen::Index j = 0; j < d; ++j) out.X(i, j) = mu(j) + std::sqrt(var(j)) * normal(rng);
      out.y(i) = pos ? 1.0 : -1.0;
    }
  } else {
    const auto& p = std::get<ParabolaManifoldSpec>(spec.kind);
    // Closed interval [lo, hi].
    std::uniform_real_distribution<double> unif(p.lo, std::nextafter(p.hi, p.hi + 1.0));
    out.X.resize(spec.n, 2);
    out.y.resize(spec.n);
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      const double x1 = unif(rng);
      out.X(i, 0) = x1;
      out.X(i, 1) = -x1 * x1;
      out.y(i) = x1 >= 0 ? 1.0 : -1.0;
      Eigen::MatrixXd t(2, 1);
      t << 1.0, -2.0 * x1;
      out.tangents.push_back(t / std::sqrt(1.0 + 4.0 * x1 * x1));
    }
  }
  if (spec.label_noise > 0) {
    std::bernoulli_distribution flip(spec.label_noise);
    for (Eigen::Index i = 0; i < out.size(); ++i)
      if (flip(rng)) out.y(i) = -out.y(i);
  }
  // Shuffle rows so classes are interleaved.
  const auto idx = permutation(out.size(), spec.seed ^ 0x9e3779b97f4a7c15ULL);
  return out.subset(idx);
}

}  // namespace serm
