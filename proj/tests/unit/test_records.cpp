#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bspde/records.hpp"

using namespace bspde;

namespace {

std::vector<ExperimentResult> sample() {
  ExperimentResult a;
  a.id = "first";
  a.kind = "solve";
  a.config_hash = "00000000000000ff";
  a.wall_time_s = 1.23456;
  a.checks = {Check::at_most("gap", 1e-15, 1e-12), Check::info("count", 3.0)};
  ExperimentResult b;
  b.id = "second";
  b.kind = "spectrum";
  b.config_hash = "0000000000000001";
  b.checks = {Check::at_least("radius", 0.5, 0.9)};
  return {a, b};
}

}  // namespace

TEST_CASE("CSV layout") {
  const std::string csv = to_csv(sample());
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "experiment_id,config_hash,kind,check,value,relation,threshold,pass,wall_time_s");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].rfind("first,00000000000000ff,solve,gap,", 0) == 0);
  CHECK(rows[0].find(",<=,") != std::string::npos);
  CHECK(rows[0].substr(rows[0].size() - 6) == ",1.235");
  CHECK(rows[1].find(",info,,,") != std::string::npos);
  CHECK(rows[2].find(",false,") != std::string::npos);
  CHECK(csv_columns().size() == 9);
}

TEST_CASE("JSON round trip") {
  const auto j = nlohmann::json::parse(to_json(sample()));
  REQUIRE(j.is_array());
  REQUIRE(j.size() == 2);
  CHECK(j[0]["experiment_id"] == "first");
  CHECK(j[0]["checks"].size() == 2);
  CHECK(j[0]["checks"][0]["value"].get<double>() == 1e-15);
  CHECK(j[0]["checks"][0]["pass"] == true);
  CHECK(j[1]["checks"][0]["pass"] == false);
}

TEST_CASE("atomic write replaces the file and leaves no temporary") {
  const auto dir = std::filesystem::temp_directory_path() / "bspde_records_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto file = dir / "out.csv";
  write_atomic(file.string(), "one\n");
  write_atomic(file.string(), "two\n");
  std::ifstream in(file);
  std::string s;
  std::getline(in, s);
  CHECK(s == "two");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++entries;
  CHECK(entries == 1);
  std::filesystem::remove_all(dir);
}
