#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dral/errors.hpp"
#include "dral/experiment.hpp"
#include "dral/fs_util.hpp"

namespace dral {
namespace {

// Shortest text that parses back to the same double.
std::string exact(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::vector<std::string> data_lines(const std::string& csv, const char* header) {
  std::stringstream ss(csv);
  std::string line;
  if (!std::getline(ss, line) || line != header) {
    throw ParameterError(std::string("CSV header mismatch; expected '") + header + "'");
  }
  std::vector<std::string> lines;
  while (std::getline(ss, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::pair<double, double> coords_of(const Dataset& data, SampleId id) {
  if (data.coords2d) return {(*data.coords2d)(id, 0), (*data.coords2d)(id, 1)};
  return {data.features(id, 0), data.dims() > 1 ? data.features(id, 1) : 0.0};
}

nlohmann::json point(const Dataset& data, SampleId id) {
  const auto [x, y] = coords_of(data, id);
  return {{"id", id}, {"x", x}, {"y", y}, {"label", data.labels ? (*data.labels)[id] : -1}};
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsLog>& logs) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& log : logs) {
    for (const auto& row : log.rows) {
      out += log.strategy + "," + std::to_string(log.seed) + "," + std::to_string(row.round) + "," +
             std::to_string(row.cumulative_labels) + "," + exact(row.val_acc) + "," +
             exact(row.test_acc) + "," + exact(row.wall_ms) + "\n";
    }
  }
  return out;
}

std::vector<MetricsLog> parse_metrics_csv(const std::string& csv) {
  std::vector<MetricsLog> logs;
  for (const auto& line : data_lines(csv, kMetricsHeader)) {
    const auto f = split_fields(line);
    if (f.size() != 7) throw ParameterError("metrics CSV row has " + std::to_string(f.size()) + " fields");
    const std::uint64_t seed = std::stoull(f[1]);
    if (logs.empty() || logs.back().strategy != f[0] || logs.back().seed != seed) {
      logs.push_back({f[0], seed, {}});
    }
    logs.back().rows.push_back({std::stoi(f[2]), std::stoul(f[3]), std::stod(f[4]),
                                std::stod(f[5]), std::stod(f[6]), {}});
  }
  return logs;
}

std::string comparison_csv(const ComparisonTable& table) {
  std::string out = std::string(kComparisonHeader) + "\n";
  for (const auto& r : table.rows) {
    out += r.strategy + "," + std::to_string(r.labels) + "," + exact(r.mean_acc) + "," +
           exact(r.std_acc) + "," + std::to_string(r.n_seeds) + "\n";
  }
  return out;
}

ComparisonTable parse_comparison_csv(const std::string& csv) {
  ComparisonTable table;
  for (const auto& line : data_lines(csv, kComparisonHeader)) {
    const auto f = split_fields(line);
    if (f.size() != 5) throw ParameterError("comparison CSV row has " + std::to_string(f.size()) + " fields");
    table.rows.push_back({f[0], std::stoul(f[1]), std::stod(f[2]), std::stod(f[3]), std::stoul(f[4])});
  }
  return table;
}

std::string comparison_text(const ComparisonTable& table) {
  std::vector<std::string> strategies;
  std::vector<std::size_t> labels;
  std::map<std::pair<std::string, std::size_t>, const ComparisonRow*> cells;
  for (const auto& r : table.rows) {
    if (std::find(strategies.begin(), strategies.end(), r.strategy) == strategies.end()) {
      strategies.push_back(r.strategy);
    }
    if (std::find(labels.begin(), labels.end(), r.labels) == labels.end()) labels.push_back(r.labels);
    cells[{r.strategy, r.labels}] = &r;
  }
  std::sort(labels.begin(), labels.end());
  char buf[64];
  std::string out = "Sizes           ";
  for (std::size_t l : labels) {
    std::snprintf(buf, sizeof buf, " %13zu", l);
    out += buf;
  }
  out += "\n";
  for (const auto& s : strategies) {
    std::snprintf(buf, sizeof buf, "%-16s", s.c_str());
    out += buf;
    for (std::size_t l : labels) {
      auto it = cells.find({s, l});
      if (it == cells.end()) {
        out += "             -";
      } else {
        std::snprintf(buf, sizeof buf, "  %5.2f+-%5.2f", 100.0 * it->second->mean_acc,
                      100.0 * it->second->std_acc);
        out += buf;
      }
    }
    out += "\n";
  }
  return out;
}

void export_csv(const std::vector<MetricsLog>& logs, const std::filesystem::path& path) {
  write_file_atomic(path, metrics_csv(logs));
}

void export_csv(const ComparisonTable& table, const std::filesystem::path& path) {
  write_file_atomic(path, comparison_csv(table));
}

nlohmann::json scatter_json(const MetricsLog& log, const Dataset& data) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& row : log.rows) {
    if (row.round == 0) continue;
    nlohmann::json points = nlohmann::json::array();
    for (SampleId id : row.selected) points.push_back(point(data, id));
    rounds.push_back({{"round", row.round},
                      {"cumulative_labels", row.cumulative_labels},
                      {"selected", points}});
  }
  nlohmann::json background = nlohmann::json::array();
  for (SampleId id = 0; id < data.size(); ++id) background.push_back(point(data, id));
  return {{"strategy", log.strategy},
          {"seed", log.seed},
          {"num_classes", data.num_classes},
          {"points", background},
          {"rounds", rounds}};
}

void export_scatter(const MetricsLog& log, const Dataset& data, const std::filesystem::path& path) {
  write_file_atomic(path, scatter_json(log, data).dump());
}

nlohmann::json metrics_json(const MetricsLog& log) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : log.rows) {
    rows.push_back({{"round", r.round},
                    {"cumulative_labels", r.cumulative_labels},
                    {"val_acc", r.val_acc},
                    {"test_acc", r.test_acc},
                    {"wall_ms", r.wall_ms},
                    {"selected", r.selected}});
  }
  return {{"strategy", log.strategy}, {"seed", log.seed}, {"rows", rows}};
}

}  // namespace dral
