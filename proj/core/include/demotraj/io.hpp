#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace demotraj::io {

using json = nlohmann::json;

/// Throws InvalidArgument when the file cannot be read or parsed.
json load_json(const std::string& path);
void save_json(const std::string& path, const json& doc);
std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

json to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);
std::vector<double> doubles_from_json(const json& j);

/// Fetch a required key or throw InvalidArgument naming it.
const json& require(const json& j, const std::string& key);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

/// Numeric CSV with one header line. Blank lines are skipped.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);
std::string format_csv(const CsvTable& table);
void write_csv(const std::string& path, const CsvTable& table);

}  // namespace demotraj::io
