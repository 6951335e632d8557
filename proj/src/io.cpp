#include "esl/io.hpp"

#include "esl/errors.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace esl {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) { return fmt::format("fnv1a64:{:016x}", h); }

std::string format_number(double x) { return fmt::format("{:.17g}", x); }

namespace {

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::configuration, "cannot write " + path.string());
  out << bytes;
  if (!out) throw Error(ErrorKind::configuration, "failed writing " + path.string());
}

}  // namespace

std::string write_csv(const std::filesystem::path& path, const Metadata& metadata,
                      const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows) {
  std::vector<std::vector<std::string>> text;
  text.reserve(rows.size());
  for (const auto& row : rows) {
    auto& out = text.emplace_back();
    for (double x : row) out.push_back(format_number(x));
  }
  return write_csv(path, metadata, columns, text);
}

std::string write_csv(const std::filesystem::path& path, const Metadata& metadata,
                      const std::vector<std::string>& columns,
                      const std::vector<std::vector<std::string>>& rows) {
  std::string s;
  for (const auto& [k, v] : metadata) s += fmt::format("# {}: {}\n", k, v);
  for (std::size_t i = 0; i < columns.size(); ++i) s += (i ? "," : "") + columns[i];
  s += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s += ',';
      s += row[i];
    }
    s += '\n';
  }
  write_bytes(path, s);
  return s;
}

std::string write_json(const std::filesystem::path& path, const nlohmann::json& value) {
  std::string s = value.dump(2) + "\n";
  write_bytes(path, s);
  return s;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::configuration, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

std::vector<std::vector<double>> read_csv_numbers(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::vector<double>> rows;
  bool header = true;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty() || line.starts_with("#")) continue;
    if (header) {
      header = false;
      continue;
    }
    auto& row = rows.emplace_back();
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error(ErrorKind::parse,
                    fmt::format("{}:{}: non-numeric cell '{}'", path.string(), line_no, cell));
      }
    }
  }
  return rows;
}

std::string csv_metadata(const std::filesystem::path& path, std::string_view key) {
  std::istringstream in(read_text(path));
  const std::string prefix = fmt::format("# {}: ", key);
  for (std::string line; std::getline(in, line) && line.starts_with("#");)
    if (line.starts_with(prefix)) return line.substr(prefix.size());
  return {};
}

}  // namespace esl
