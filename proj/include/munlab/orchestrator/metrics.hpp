#pragma once

#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "munlab/errors.hpp"

namespace munlab {

struct MetricsRecord {
  std::size_t env_step = 0;
  double eval_success_rate = 0.0;
  double one_step_err = 0.0;
  double compound_err = 0.0;
  double bidirectional_fraction = 0.0;
  double subgoal_reach_rate = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

inline constexpr const char* kMetricsHeader = "step,success_rate,one_step_err,compound_err,bidir_frac,subgoal_reach_rate";

inline std::string metrics_csv(const std::vector<MetricsRecord>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    os << r.env_step << ',' << r.eval_success_rate << ',' << r.one_step_err << ',' << r.compound_err << ','
       << r.bidirectional_fraction << ',' << r.subgoal_reach_rate << '\n';
  }
  return os.str();
}

inline std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("metrics CSV: unexpected header");
  std::vector<MetricsRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw FormatError("metrics CSV: expected 6 columns in '" + line + "'");
    try {
      MetricsRecord r;
      r.env_step = static_cast<std::size_t>(std::stoull(cells[0]));
      r.eval_success_rate = std::stod(cells[1]);
      r.one_step_err = std::stod(cells[2]);
      r.compound_err = std::stod(cells[3]);
      r.bidirectional_fraction = std::stod(cells[4]);
      r.subgoal_reach_rate = std::stod(cells[5]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw FormatError("metrics CSV: malformed row '" + line + "'");
    }
  }
  return rows;
}

inline nlohmann::json metrics_json(const std::vector<MetricsRecord>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"step", r.env_step},
                   {"success_rate", r.eval_success_rate},
                   {"one_step_err", r.one_step_err},
                   {"compound_err", r.compound_err},
                   {"bidir_frac", r.bidirectional_fraction},
                   {"subgoal_reach_rate", r.subgoal_reach_rate}});
  }
  return arr;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot write '" + path + "'");
  f << data;
  if (!f) throw UsageError("failed writing '" + path + "'");
}

}  // namespace munlab
