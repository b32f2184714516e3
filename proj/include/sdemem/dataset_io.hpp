#pragma once

#include <string>
#include <vector>

#include "sdemem/model.hpp"

namespace sdemem {

/// Reads `unit_id,time,y1[,y2...]`. Rows may come in any order; units are
/// ordered by id (numerically when every id is an integer) and rows by time.
Dataset load_dataset(const std::string& path);
Dataset parse_dataset(const std::string& text);

void save_dataset(const std::string& path, const Dataset& data);
std::string format_dataset(const Dataset& data);

/// Ground-truth sidecar with rows `parameter,name,value`, where `parameter`
/// uses the chain column names (phi_i_j, kappa_k, xi_k, mu_j, tau_j).
void save_truth(const std::string& path, const ParameterState& truth, const Model& model);
ParameterState load_truth(const std::string& path, std::size_t units, const Model& model);

/// Splits one CSV line on commas (no quoting), trimming surrounding whitespace.
std::vector<std::string> split_csv_line(const std::string& line);

/// Strict double parse; throws InputError naming `row` on failure.
double parse_double(const std::string& field, std::size_t row);

/// Locale-independent round-trip formatting (17 significant digits).
std::string format_double(double v);

}  // namespace sdemem
