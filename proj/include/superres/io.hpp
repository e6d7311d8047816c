#pragma once

// JSON serialization of configs, datasets and run records, plus small file
// helpers. Doubles are written in shortest round-trip form, so re-running a
// command reproduces its files byte for byte.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "superres/experiment.hpp"

namespace superres {

/// A file could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kDatasetSchema = "superres-dataset/1";
inline constexpr std::string_view kRunSchema = "superres-run/1";

/// Strict parse: the schema field must match, unknown keys are rejected and
/// the seed is mandatory unless `seed_override` is given (which then wins).
/// Keys not present keep default_config(kind) values.
ExperimentConfig config_from_json(const nlohmann::json& j,
                                  std::optional<std::uint64_t> seed_override = std::nullopt);
nlohmann::json config_to_json(const ExperimentConfig& config);

nlohmann::json dataset_to_json(const Dataset& dataset);
Dataset dataset_from_json(const nlohmann::json& j);

nlohmann::json solve_record_to_json(const SolveRecord& record);
nlohmann::json sweep_record_to_json(const SweepRecord& record);
nlohmann::json certify_record_to_json(const CertifyRecord& record);
nlohmann::json lemma_record_to_json(const LemmaRecord& record);
nlohmann::json demo2d_record_to_json(const Demo2dRecord& record);

std::string read_text_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: truncate, write, check the stream.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Parses a JSON file; syntax errors become InvalidArgument.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with two-space indent and a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace superres
