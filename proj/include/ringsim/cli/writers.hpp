#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ringsim/errors.hpp"

namespace ringsim::cli {

/// 17 significant digits; non-finite values become empty CSV cells.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  /// Cells may be empty strings.
  void add_row(std::vector<std::string> cells) {
    if (cells.size() != header_.size()) throw std::logic_error("CSV row width differs from the header");
    rows_.push_back(std::move(cells));
  }
  void add_numbers(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_double(v));
    add_row(std::move(cells));
  }

  std::string str() const {
    std::ostringstream os;
    write_line(os, header_);
    for (const auto& r : rows_) write_line(os, r);
    return os.str();
  }

 private:
  static void write_line(std::ostringstream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Rows of a real matrix, no header.
inline std::string matrix_csv(const Eigen::MatrixXd& m) {
  std::ostringstream os;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << format_double(m(i, j));
    os << '\n';
  }
  return os.str();
}

namespace detail {

inline void dump_json(std::ostringstream& os, const nlohmann::json& j, int depth) {
  const std::string pad(std::size_t(2 * (depth + 1)), ' ');
  const std::string close_pad(std::size_t(2 * depth), ' ');
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        os << (first ? "" : ",\n") << pad << nlohmann::json(key).dump() << ": ";
        dump_json(os, value, depth + 1);
        first = false;
      }
      os << '\n' << close_pad << '}';
      return;
    }
    case nlohmann::json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        os << (i ? ",\n" : "") << pad;
        dump_json(os, j[i], depth + 1);
      }
      os << '\n' << close_pad << ']';
      return;
    }
    case nlohmann::json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        os << "null";
        return;
      }
      const std::string s = format_double(v);
      os << s;
      if (s.find_first_of(".eEn") == std::string::npos) os << ".0";
      return;
    }
    default:
      os << j.dump();
  }
}

}  // namespace detail

/// Pretty JSON with keys sorted and floats at 17 significant digits.
inline std::string dump_json(const nlohmann::json& j) {
  std::ostringstream os;
  detail::dump_json(os, j, 0);
  os << '\n';
  return os.str();
}

}  // namespace ringsim::cli
