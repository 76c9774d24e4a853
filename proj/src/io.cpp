#include "mscp/io.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace mscp {

std::string format_g(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, value);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const auto parent = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::error_code ec;
  if (!std::filesystem::is_directory(parent, ec)) {
    throw Error(ErrorCode::IOError, "output directory does not exist: " + parent.string());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IOError, "cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::IOError, "failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IOError, "cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IOError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dataset_to_csv(const Dataset& ds) {
  std::string out;
  for (Eigen::Index k = 0; k < ds.features.cols(); ++k) out += "x" + std::to_string(k + 1) + ",";
  out += "label\n";
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index k = 0; k < ds.features.cols(); ++k) out += format_g(ds.features(i, k), 17) + ",";
    out += std::to_string(ds.labels[static_cast<std::size_t>(i)]) + "\n";
  }
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& why) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + why);
}

}  // namespace

Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) parse_fail(1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 2 || header.back() != "label") parse_fail(1, "header must be x1,...,xK,label");
  const std::size_t K = header.size() - 1;
  for (std::size_t k = 0; k < K; ++k) {
    if (header[k] != "x" + std::to_string(k + 1)) parse_fail(1, "expected column x" + std::to_string(k + 1));
  }
  std::vector<double> values;
  std::vector<Label> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != K + 1) {
      parse_fail(line_no, "expected " + std::to_string(K + 1) + " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t k = 0; k < K; ++k) {
      const std::string& f = fields[k];
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size() || errno == ERANGE || !std::isfinite(v)) {
        parse_fail(line_no, "bad number '" + f + "' in column x" + std::to_string(k + 1));
      }
      values.push_back(v);
    }
    const std::string& lf = fields[K];
    Label label = -1;
    const auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (ec != std::errc() || ptr != lf.data() + lf.size() || label < 0) {
      parse_fail(line_no, "bad label '" + lf + "'");
    }
    labels.push_back(label);
  }
  if (labels.empty()) parse_fail(line_no, "no data rows");
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(K));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = values[i * K + k];
    }
  }
  ds.labels = std::move(labels);
  return ds;
}

Dataset read_dataset(const std::filesystem::path& path) { return dataset_from_csv(read_file(path)); }

}  // namespace mscp
