#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sdemem {

/// Appends rows to a CSV file, flushing every `flush_every` rows so an
/// interrupted run leaves a readable prefix.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header, std::size_t flush_every = 100);
  void write_row(const std::vector<double>& values);
  void write_row(const Eigen::VectorXd& values);
  void flush();
  std::size_t rows() const { return rows_; }

 private:
  std::ofstream out_;
  std::size_t flush_every_;
  std::size_t rows_ = 0;
};

struct ChainTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // rows = iterations

  Eigen::Index column(const std::string& name) const;  // -1 when absent
};

/// Reads a numeric CSV with a header row. A final line without a trailing
/// newline that fails to parse is treated as a truncated write and dropped;
/// any other malformed row raises InputError carrying its 1-based row number.
ChainTable read_chain_csv(const std::string& path);
ChainTable parse_chain_csv(const std::string& text);

void write_chain_csv(const std::string& path, const std::vector<std::string>& columns, const Eigen::MatrixXd& draws);

}  // namespace sdemem
