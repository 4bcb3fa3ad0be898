#ifndef MULTIANS_CSV_HPP_
#define MULTIANS_CSV_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace multians::csv {

// Quotes a field when it holds a comma, quote, or line break.
std::string escape(std::string_view field);

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  // Throws std::invalid_argument if the row width differs from the header.
  void add_row(std::vector<std::string> row);
  std::string str() const;
  // Throws std::runtime_error if the file cannot be written.
  void write(const std::filesystem::path& path) const;

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string num(double value);
std::string num(std::optional<double> value);  // empty when absent

// Minimal reader for files written by Table (quoted fields supported).
std::vector<std::vector<std::string>> read(const std::filesystem::path& path);

}  // namespace multians::csv

#endif  // MULTIANS_CSV_HPP_
