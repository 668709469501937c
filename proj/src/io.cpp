#include "serm/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "serm/errors.hpp"

namespace serm {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && errno != ERANGE;
}

void write_vec(std::ostream& out, const char* key, const Eigen::VectorXd& v) {
  out << key;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << v(i);
  out << '\n';
}

Eigen::VectorXd read_vec(std::istringstream& in) {
  std::vector<double> vals;
  std::string tok;
  while (in >> tok) {
    double x;
    if (!parse_double(tok, x)) throw InvalidInput("model file: bad number '" + tok + "'");
    vals.push_back(x);
  }
  return to_vector(vals);
}

}  // namespace

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::vector<double> parse_reals(const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split_list(s)) {
    double x;
    if (!parse_double(tok, x)) throw InvalidConfig("'" + tok + "' is not a number");
    out.push_back(x);
  }
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

void write_model(const ModelFile& m, std::ostream& out) {
  m.model.validate();
  out << std::setprecision(17);
  out << "serm-model " << kModelFormatVersion << '\n';
  out << "k " << m.model.dim() << '\n';
  out << "input_dim " << m.model.input_dim() << '\n';
  out << "feature_map " << (m.model.feature_map ? m.model.feature_map->id() : std::string("none")) << '\n';
  write_vec(out, "w", m.model.w);
  out << "b " << m.model.b << '\n';
  if (m.standardizer) {
    write_vec(out, "std_mean", m.standardizer->mean);
    write_vec(out, "std_sd", m.standardizer->sd);
    out << "std_scale " << m.standardizer->global_scale << '\n';
  }
  if (m.cost) {
    out << "cost_kind " << to_string(m.cost->kind) << '\n';
    write_vec(out, "cost_v", m.cost->v);
    out << "cost_gamma " << m.cost->gamma << '\n';
    out << "cost_beta " << m.cost->beta << '\n';
    out << "cost_scale " << m.cost->scale << '\n';
  }
  out << "end\n";
}

ModelFile read_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("model file is empty");
  {
    std::istringstream h(line);
    std::string magic;
    int version = 0;
    if (!(h >> magic >> version) || magic != "serm-model") throw InvalidInput("not a model file");
    if (version != kModelFormatVersion)
      throw InvalidInput("unsupported model file version " + std::to_string(version));
  }
  std::map<std::string, std::string> fields;
  bool ended = false;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line == "end") {
      ended = true;
      break;
    }
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    fields[key] = sp == std::string::npos ? "" : line.substr(sp + 1);
  }
  if (!ended) throw InvalidInput("model file is truncated (no 'end' line)");
  auto need = [&](const std::string& k) -> std::string {
    auto it = fields.find(k);
    if (it == fields.end()) throw InvalidInput("model file: missing field '" + k + "'");
    return it->second;
  };
  auto vec = [&](const std::string& k) {
    std::istringstream s(need(k));
    return read_vec(s);
  };
  auto num = [&](const std::string& k) {
    double x;
    if (!parse_double(need(k), x)) throw InvalidInput("model file: bad value for '" + k + "'");
    return x;
  };

  ModelFile m;
  m.model.w = vec("w");
  m.model.b = num("b");
  const long k = std::lround(num("k"));
  const long input_dim = std::lround(num("input_dim"));
  if (k != m.model.w.size()) throw InvalidInput("model file: k does not match w");
  const std::string fmap = trim(need("feature_map"));
  if (fmap != "none") m.model.feature_map = feature_map_by_id<double>(fmap, input_dim);
  m.model.validate();
  if (m.model.input_dim() != input_dim) throw InvalidInput("model file: input_dim does not match the feature map");
  if (fields.count("std_mean")) {
    Standardizer s;
    s.mean = vec("std_mean");
    s.sd = vec("std_sd");
    s.global_scale = num("std_scale");
    if (s.mean.size() != input_dim || s.sd.size() != input_dim)
      throw InvalidInput("model file: standardizer dimension mismatch");
    m.standardizer = s;
  }
  if (fields.count("cost_kind")) {
    Cost c;
    c.kind = cost_kind_from_string(trim(need("cost_kind")));
    c.v = vec("cost_v");
    c.gamma = num("cost_gamma");
    c.beta = num("cost_beta");
    c.scale = num("cost_scale");
    c.validate();
    m.cost = c;
  }
  return m;
}

void save_model(const ModelFile& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write model file '" + path + "'");
  write_model(m, out);
  if (!out) throw InvalidInput("failed writing model file '" + path + "'");
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open model file '" + path + "'");
  return read_model(in);
}

Config Config::parse(std::istream& in, const std::string& source) {
  Config c;
  std::string line;
  std::vector<std::string> bad;
  for (size_t n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      bad.push_back(source + ":" + std::to_string(n) + ": expected key=value");
      continue;
    }
    c.values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  if (!bad.empty()) {
    std::string msg = "malformed configuration:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw InvalidConfig(msg, bad);
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config file '" + path + "'");
  return parse(in, path);
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty())
    throw InvalidConfig("override '" + assignment + "' is not key=value");
  values[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

void Config::write(std::ostream& out) const {
  for (const auto& [k, v] : values) out << k << '=' << v << '\n';
}

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string join_reals(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_real(v[i]);
  return out;
}

std::optional<std::string> ConfigReader::opt_str(const std::string& key) {
  used_[key] = true;
  auto it = cfg_.values.find(key);
  if (it == cfg_.values.end()) return std::nullopt;
  resolved_.values[key] = it->second;
  return it->second;
}

std::string ConfigReader::str(const std::string& key, const std::string& def) {
  const std::string v = opt_str(key).value_or(def);
  resolved_.values[key] = v;
  return v;
}

double ConfigReader::real(const std::string& key, double def) {
  const auto s = opt_str(key);
  double x = def;
  if (s && (!parse_double(*s, x) || !std::isfinite(x))) {
    errors_.push_back(key + ": '" + *s + "' is not a finite number");
    x = def;
  }
  resolved_.values[key] = format_real(x);
  return x;
}

long ConfigReader::integer(const std::string& key, long def) {
  const auto s = opt_str(key);
  if (!s) {
    resolved_.values[key] = std::to_string(def);
    return def;
  }
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(s->c_str(), &end, 10);
  if (s->empty() || end != s->c_str() + s->size() || errno == ERANGE) {
    errors_.push_back(key + ": '" + *s + "' is not an integer");
    resolved_.values[key] = std::to_string(def);
    return def;
  }
  resolved_.values[key] = std::to_string(v);
  return v;
}

bool ConfigReader::flag(const std::string& key, bool def) {
  const auto s = opt_str(key);
  bool v = def;
  if (s) {
    if (*s == "true" || *s == "1" || *s == "yes")
      v = true;
    else if (*s == "false" || *s == "0" || *s == "no")
      v = false;
    else
      errors_.push_back(key + ": '" + *s + "' is not a boolean");
  }
  resolved_.values[key] = v ? "true" : "false";
  return v;
}

std::vector<double> ConfigReader::reals(const std::string& key, const std::vector<double>& def) {
  const auto s = opt_str(key);
  std::vector<double> v = def;
  if (s) {
    try {
      v = parse_reals(*s);
    } catch (const InvalidConfig& e) {
      errors_.push_back(key + ": " + e.what());
    }
  }
  resolved_.values[key] = join_reals(v);
  return v;
}

std::vector<std::string> ConfigReader::strings(const std::string& key, const std::vector<std::string>& def) {
  const auto s = opt_str(key);
  const std::vector<std::string> v = s ? split_list(*s) : def;
  std::string joined;
  for (size_t i = 0; i < v.size(); ++i) joined += (i ? "," : "") + v[i];
  resolved_.values[key] = joined;
  return v;
}

void ConfigReader::tolerate(const std::string& prefix) {
  for (const auto& [k, v] : cfg_.values)
    if (k.rfind(prefix, 0) == 0) used_.emplace(k, true);
}

void ConfigReader::require(bool ok, const std::string& message) {
  if (!ok) errors_.push_back(message);
}

void ConfigReader::finish() const {
  std::vector<std::string> all = errors_;
  for (const auto& [k, v] : cfg_.values)
    if (!used_.count(k)) all.push_back(k + ": unknown key");
  if (all.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& e : all) msg += " " + e + ";";
  throw InvalidConfig(msg, all);
}

}  // namespace serm
