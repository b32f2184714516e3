#include "sdemem/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "sdemem/error.hpp"

namespace sdemem {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool is_integer(const std::string& s, long long& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && !s.empty();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& field, std::size_t row) {
  if (field.empty()) throw InputError("empty numeric field at row " + std::to_string(row), row);
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size())
    throw InputError("malformed number '" + field + "' at row " + std::to_string(row), row);
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t row = 0;
  if (!std::getline(is, line)) throw InputError("dataset is empty");
  ++row;
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "unit_id" || header[1] != "time")
    throw InputError("dataset header must start with unit_id,time,y1", 1);
  const std::size_t d_o = header.size() - 2;

  struct Row {
    double time;
    std::vector<double> y;
  };
  std::map<std::string, std::vector<Row>> by_unit;
  while (std::getline(is, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw InputError("expected " + std::to_string(header.size()) + " fields at row " + std::to_string(row), row);
    if (f[0].empty()) throw InputError("missing unit_id at row " + std::to_string(row), row);
    Row r{parse_double(f[1], row), {}};
    for (std::size_t k = 0; k < d_o; ++k) r.y.push_back(parse_double(f[2 + k], row));
    by_unit[f[0]].push_back(std::move(r));
  }

  std::vector<std::string> ids;
  for (const auto& [id, rows] : by_unit) ids.push_back(id);
  bool numeric = true;
  for (const auto& id : ids) {
    long long v;
    numeric = numeric && is_integer(id, v);
  }
  if (numeric) {
    std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
      long long x = 0, y = 0;
      is_integer(a, x);
      is_integer(b, y);
      return x < y;
    });
  }

  Dataset ds;
  for (const auto& id : ids) {
    auto rows = by_unit[id];
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.time < b.time; });
    UnitData u;
    u.id = id;
    u.obs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d_o));
    for (std::size_t t = 0; t < rows.size(); ++t) {
      u.times.push_back(rows[t].time);
      for (std::size_t k = 0; k < d_o; ++k) u.obs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = rows[t].y[k];
    }
    ds.units.push_back(std::move(u));
  }
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::string& path) { return parse_dataset(read_file(path)); }

std::string format_dataset(const Dataset& data) {
  std::ostringstream os;
  const Eigen::Index d_o = data.units.empty() ? 1 : data.units.front().obs.cols();
  os << "unit_id,time";
  for (Eigen::Index k = 0; k < d_o; ++k) os << ",y" << (k + 1);
  os << '\n';
  for (const auto& u : data.units) {
    for (std::size_t t = 0; t < u.size(); ++t) {
      os << u.id << ',' << format_double(u.times[t]);
      for (Eigen::Index k = 0; k < u.obs.cols(); ++k) os << ',' << format_double(u.obs(static_cast<Eigen::Index>(t), k));
      os << '\n';
    }
  }
  return os.str();
}

void save_dataset(const std::string& path, const Dataset& data) { write_file(path, format_dataset(data)); }

void save_truth(const std::string& path, const ParameterState& truth, const Model& model) {
  std::ostringstream os;
  os << "parameter,name,value\n";
  const auto labels = model.random_effect_labels();
  for (Eigen::Index i = 0; i < truth.phi.rows(); ++i)
    for (Eigen::Index j = 0; j < truth.phi.cols(); ++j)
      os << "phi_" << i + 1 << '_' << j + 1 << ',' << labels[static_cast<std::size_t>(j)] << "[" << i + 1 << "],"
         << format_double(truth.phi(i, j)) << '\n';
  for (Eigen::Index k = 0; k < truth.kappa.size(); ++k)
    os << "kappa_" << k + 1 << ",kappa" << k + 1 << ',' << format_double(truth.kappa[k]) << '\n';
  for (Eigen::Index k = 0; k < truth.xi.size(); ++k)
    os << "xi_" << k + 1 << ",sigma_obs," << format_double(truth.xi[k]) << '\n';
  for (Eigen::Index j = 0; j < truth.eta.mu.size(); ++j)
    os << "mu_" << j + 1 << ",mu[" << labels[static_cast<std::size_t>(j)] << "]," << format_double(truth.eta.mu[j]) << '\n';
  for (Eigen::Index j = 0; j < truth.eta.tau.size(); ++j)
    os << "tau_" << j + 1 << ",tau[" << labels[static_cast<std::size_t>(j)] << "]," << format_double(truth.eta.tau[j]) << '\n';
  write_file(path, os.str());
}

ParameterState load_truth(const std::string& path, std::size_t units, const Model& model) {
  std::istringstream is(read_file(path));
  std::string line;
  std::size_t row = 0;
  std::map<std::string, double> values;
  while (std::getline(is, line)) {
    ++row;
    if (row == 1 || trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3) throw InputError("truth file row " + std::to_string(row) + " needs 3 fields", row);
    values[f[0]] = parse_double(f[2], row);
  }
  auto get = [&](const std::string& key) {
    auto it = values.find(key);
    if (it == values.end()) throw InputError("truth file lacks '" + key + "'");
    return it->second;
  };
  const int q = model.num_random_effects();
  ParameterState s;
  s.phi.resize(static_cast<Eigen::Index>(units), q);
  for (std::size_t i = 0; i < units; ++i)
    for (int j = 0; j < q; ++j)
      s.phi(static_cast<Eigen::Index>(i), j) = get("phi_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
  s.kappa.resize(model.num_common());
  for (int k = 0; k < model.num_common(); ++k) s.kappa[k] = get("kappa_" + std::to_string(k + 1));
  s.xi.resize(model.num_obs_params());
  for (int k = 0; k < model.num_obs_params(); ++k) s.xi[k] = get("xi_" + std::to_string(k + 1));
  s.eta.mu.resize(q);
  s.eta.tau.resize(q);
  for (int j = 0; j < q; ++j) {
    s.eta.mu[j] = get("mu_" + std::to_string(j + 1));
    s.eta.tau[j] = get("tau_" + std::to_string(j + 1));
  }
  return s;
}

}  // namespace sdemem
