#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "serm/dataset.hpp"
#include "serm/objectives.hpp"

namespace serm {

// Versioned plain-text model record. Numbers are written with 17 significant
// digits so a save/load round trip is exact.
struct ModelFile {
  Scorer model;
  std::optional<Standardizer> standardizer;
  std::optional<Cost> cost;  // the cost used in training (learned v for flexible runs)
};

inline constexpr int kModelFormatVersion = 1;

void write_model(const ModelFile& m, std::ostream& out);
ModelFile read_model(std::istream& in);
void save_model(const ModelFile& m, const std::string& path);
ModelFile load_model(const std::string& path);

// Flat key=value configuration. '#' starts a comment, blank lines are
// ignored, later assignments win.
struct Config {
  std::map<std::string, std::string> values;

  static Config parse(std::istream& in, const std::string& source = "<config>");
  static Config load(const std::string& path);
  // "key=value" override; throws InvalidConfig on a malformed assignment.
  void set(const std::string& assignment);
  bool has(const std::string& key) const { return values.count(key) > 0; }
  void write(std::ostream& out) const;
};

// Typed access that collects every violation and reports them together.
class ConfigReader {
 public:
  explicit ConfigReader(const Config& cfg) : cfg_(cfg) {}

  std::string str(const std::string& key, const std::string& def);
  std::optional<std::string> opt_str(const std::string& key);
  double real(const std::string& key, double def);
  long integer(const std::string& key, long def);
  bool flag(const std::string& key, bool def);
  std::vector<double> reals(const std::string& key, const std::vector<double>& def);
  std::vector<std::string> strings(const std::string& key, const std::vector<std::string>& def);

  // Accepts keys under `prefix` without reading them (settings that belong
  // to another command sharing the same file).
  void tolerate(const std::string& prefix);
  // Records a violation unless `ok`.
  void require(bool ok, const std::string& message);
  // Throws InvalidConfig listing every violation (and unknown keys).
  void finish() const;
  const std::vector<std::string>& violations() const { return errors_; }
  // Every key read so far with the value actually used (defaults included).
  const Config& resolved() const { return resolved_; }

 private:
  const Config& cfg_;
  std::vector<std::string> errors_;
  std::map<std::string, bool> used_;
  Config resolved_;
};

std::string format_real(double x);  // shortest exact form (%.17g)
std::string join_reals(const std::vector<double>& v);

std::vector<double> parse_reals(const std::string& s);  // comma separated
std::vector<std::string> split_list(const std::string& s, char sep = ',');
Eigen::VectorXd to_vector(const std::vector<double>& v);

}  // namespace serm
