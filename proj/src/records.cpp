#include "bspde/records.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bspde/errors.hpp"

namespace bspde {

namespace {

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string wall(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", seconds);
  return buf;
}

// ids and check names are restricted to [A-Za-z0-9_.-], so no quoting is needed
std::string csv_row(const ExperimentResult& r, const Check& c) {
  std::ostringstream row;
  const bool info = c.relation == Relation::Info;
  row << r.id << ',' << r.config_hash << ',' << r.kind << ',' << c.name << ',' << number(c.value) << ','
      << relation_symbol(c.relation) << ',' << (info ? "" : number(c.threshold)) << ','
      << (info ? "" : (c.pass ? "true" : "false")) << ',' << wall(r.wall_time_s) << '\n';
  return row.str();
}

}  // namespace

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> columns = {"experiment_id", "config_hash", "kind",  "check",      "value",
                                                   "relation",      "threshold",   "pass",  "wall_time_s"};
  return columns;
}

std::string to_csv(const std::vector<ExperimentResult>& results) {
  std::string out;
  for (std::size_t k = 0; k < csv_columns().size(); ++k) out += (k ? "," : "") + csv_columns()[k];
  out += '\n';
  for (const auto& r : results)
    for (const auto& c : r.checks) out += csv_row(r, c);
  return out;
}

std::string to_json(const std::vector<ExperimentResult>& results) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    nlohmann::ordered_json e;
    e["experiment_id"] = r.id;
    e["config_hash"] = r.config_hash;
    e["kind"] = r.kind;
    e["passed"] = r.passed();
    if (!r.error.empty()) e["error"] = r.error;
    e["wall_time_s"] = r.wall_time_s;
    nlohmann::ordered_json checks = nlohmann::ordered_json::array();
    for (const auto& c : r.checks) {
      nlohmann::ordered_json j;
      j["check"] = c.name;
      // non-finite values are written as strings, JSON has no literal for them
      if (std::isfinite(c.value)) {
        j["value"] = c.value;
      } else {
        j["value"] = number(c.value);
      }
      j["relation"] = relation_symbol(c.relation);
      if (c.relation != Relation::Info) {
        j["threshold"] = c.threshold;
        j["pass"] = c.pass;
      }
      checks.push_back(j);
    }
    e["checks"] = checks;
    doc.push_back(e);
  }
  return doc.dump(2) + "\n";
}

void write_atomic(const std::string& path, const std::string& contents) {
  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw Error("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace bspde
