#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace serm {

// Feature matrix (one example per row) with labels in {-1, +1}. When
// `tangents` is non-empty it holds one d x k direction matrix per row.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;
  std::vector<Eigen::MatrixXd> tangents;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
  bool has_tangents() const { return !tangents.empty(); }

  void validate() const;
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
  Eigen::VectorXd row(Eigen::Index i) const { return X.row(i).transpose(); }
};

struct CsvReject {
  std::size_t line = 0;  // 1-based line number in the file (header is line 1)
  std::string reason;
};

struct CsvLoadResult {
  Dataset data;
  std::vector<CsvReject> rejects;
};

// Comma-separated, header row required. Rows with blank or non-numeric
// feature cells are excluded and reported. A label equal to
// `positive_label_value` maps to +1, anything else to -1.
CsvLoadResult load_csv(const std::string& path, const std::string& label_column,
                       const std::string& positive_label_value);

// Features, label, then tangent columns (tangent_<j> for k = 1).
void write_csv(const Dataset& data, const std::string& path);

// Affine map x -> (x - mean) / sd * global_scale, fitted on training data.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  double global_scale = 1.0;
  int constant_features = 0;  // features whose sd was replaced by 1

  Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const;
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& Z) const;
  Dataset transform(const Dataset& data) const;
};

Standardizer fit_standardizer(const Dataset& train);

struct StandardizedSets {
  Standardizer standardizer;
  Dataset train;
  std::vector<Dataset> others;
};

StandardizedSets standardize_fit_transform(const Dataset& train, const std::vector<Dataset>& others = {});

struct DataSplit {
  Dataset train, val, test;
};

// Seeded 60-20-20 partition (floor, floor, remainder).
DataSplit split(const Dataset& data, std::uint64_t seed);

// Downsamples the majority class to the minority count.
Dataset balance_classes(const Dataset& data, std::uint64_t seed);

struct GaussianMixtureSpec {
  Eigen::VectorXd mean_neg, mean_pos;
  Eigen::VectorXd var_neg, var_pos;  // covariance diagonals
};

struct ParabolaManifoldSpec {
  double lo = -5.0, hi = 5.0;  // x1 ~ U[lo, hi], x2 = -x1^2, y = sign(x1)
};

struct SyntheticSpec {
  std::variant<GaussianMixtureSpec, ParabolaManifoldSpec> kind;
  Eigen::Index n = 1000;
  std::uint64_t seed = 0;
  double label_noise = 0.0;  // probability of flipping each label

  void validate() const;
};

Dataset gen_synthetic(const SyntheticSpec& spec);

}  // namespace serm
