#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "moca/errors.hpp"

namespace moca::train {

// Append-only CSV. Each row is formatted in full and written with a single
// write followed by a flush. Values use %.17g so logs compare bitwise.
class MetricsLog {
 public:
  MetricsLog() = default;

  MetricsLog(const std::filesystem::path& path, std::vector<std::string> columns) : columns_(std::move(columns)) {
    out_.open(path, std::ios::trunc);
    if (!out_) throw Error("cannot write metrics log " + path.string());
    std::string header;
    for (std::size_t i = 0; i < columns_.size(); ++i) header += (i ? "," : "") + columns_[i];
    write_line(header);
  }

  bool is_open() const { return out_.is_open(); }

  void row(const std::vector<double>& values) {
    if (!out_.is_open()) return;
    if (values.size() != columns_.size()) throw ContractError("metrics row has the wrong number of columns");
    std::string line;
    char buf[40];
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", values[i]);
      line += (i ? "," : "") + std::string(buf);
    }
    write_line(line);
  }

 private:
  void write_line(const std::string& s) {
    const std::string line = s + "\n";
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
  }

  std::vector<std::string> columns_;
  std::ofstream out_;
};

}  // namespace moca::train
