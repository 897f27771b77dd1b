#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "rmldp/error.hpp"

namespace rmldp::detail {

/// Calls f on every non-blank line parsed as JSON; errors carry file:line.
template <class F>
void for_each_json_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(number) + ": ";
    try {
      f(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(where + e.what());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace rmldp::detail
