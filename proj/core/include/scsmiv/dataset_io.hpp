#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scsmiv/data_model.hpp"

namespace scsmiv {

/// Reads the subjects CSV (id, time, status, z, then any covariate columns)
/// and the optional long-format treatment CSV (id, change_time, value).
/// Subjects without treatment rows follow their assigned arm, D = z.
/// Records are returned in file order and are not validated.
std::vector<SubjectRecord> parse_dataset(const std::filesystem::path& subjects,
                                         const std::optional<std::filesystem::path>& treatment = std::nullopt);

/// Same, from CSV text; `*_name` is used in error messages.
std::vector<SubjectRecord> parse_dataset_text(std::string_view subjects_csv, std::string_view subjects_name,
                                              std::optional<std::string_view> treatment_csv = std::nullopt,
                                              std::string_view treatment_name = "treatment");

/// Writes the CSV pair read by parse_dataset. Numbers use the shortest
/// representation that parses back to the same double.
void write_dataset(const std::vector<SubjectRecord>& records, const std::filesystem::path& subjects,
                   const std::filesystem::path& treatment);

std::string format_double(double v);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Splits one CSV line; supports double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace scsmiv
