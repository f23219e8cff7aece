#pragma once

#include <string>
#include <vector>

#include "bspde/experiments.hpp"

namespace bspde {

/// Column order of the results table.
const std::vector<std::string>& csv_columns();

std::string to_csv(const std::vector<ExperimentResult>& results);
std::string to_json(const std::vector<ExperimentResult>& results);

/// Writes `contents` to a sibling temporary file and renames it over `path`,
/// so readers see either the old file or the complete new one.
void write_atomic(const std::string& path, const std::string& contents);

}  // namespace bspde
