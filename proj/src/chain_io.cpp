#include "sdemem/chain_io.hpp"

#include <sstream>

#include "sdemem/dataset_io.hpp"
#include "sdemem/error.hpp"

namespace sdemem {

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header, std::size_t flush_every)
    : out_(path, std::ios::binary | std::ios::trunc), flush_every_(flush_every == 0 ? 1 : flush_every) {
  if (!out_) throw InputError("cannot write '" + path + "'");
  for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
  out_ << '\n';
  out_.flush();
}

void CsvWriter::write_row(const std::vector<double>& values) {
  for (std::size_t k = 0; k < values.size(); ++k) out_ << (k ? "," : "") << format_double(values[k]);
  out_ << '\n';
  if (++rows_ % flush_every_ == 0) out_.flush();
}

void CsvWriter::write_row(const Eigen::VectorXd& values) {
  write_row(std::vector<double>(values.data(), values.data() + values.size()));
}

void CsvWriter::flush() { out_.flush(); }

Eigen::Index ChainTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < columns.size(); ++k)
    if (columns[k] == name) return static_cast<Eigen::Index>(k);
  return -1;
}

ChainTable parse_chain_csv(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  bool last_terminated = true;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      last_terminated = false;
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.empty()) throw InputError("chain file is empty", 1);

  ChainTable table;
  table.columns = split_csv_line(lines[0]);
  if (table.columns.empty() || table.columns[0].empty()) throw InputError("chain file has no header", 1);
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const std::size_t row_no = r + 1;
    const bool is_last = r + 1 == lines.size();
    if (lines[r].find_first_not_of(" \t\r") == std::string::npos) {
      if (is_last) continue;
      throw InputError("empty row " + std::to_string(row_no) + " in chain file", row_no);
    }
    try {
      const auto f = split_csv_line(lines[r]);
      if (f.size() != table.columns.size())
        throw InputError("row " + std::to_string(row_no) + " has " + std::to_string(f.size()) + " fields, expected " +
                             std::to_string(table.columns.size()),
                         row_no);
      std::vector<double> v;
      v.reserve(f.size());
      for (const auto& s : f) v.push_back(parse_double(s, row_no));
      rows.push_back(std::move(v));
    } catch (const InputError&) {
      if (is_last && !last_terminated) break;  // truncated final write
      throw;
    }
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return table;
}

ChainTable read_chain_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_chain_csv(os.str());
}

void write_chain_csv(const std::string& path, const std::vector<std::string>& columns, const Eigen::MatrixXd& draws) {
  CsvWriter w(path, columns, 1000);
  for (Eigen::Index r = 0; r < draws.rows(); ++r) w.write_row(Eigen::VectorXd(draws.row(r).transpose()));
  w.flush();
}

}  // namespace sdemem
