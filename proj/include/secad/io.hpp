#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "secad/sem.hpp"

namespace secad {

// One line of a {"text", "sequence"} JSONL dataset.
struct DatasetRecord {
  std::string text;
  std::string sequence;
  bool operator==(const DatasetRecord&) const = default;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<DatasetRecord> read_jsonl_dataset(const std::filesystem::path& p);
void write_jsonl_dataset(const std::filesystem::path& p,
                         std::span<const DatasetRecord> records);

std::string slurp_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view content);

// Structural JSON mirror of a model (used by golden fixtures and `parse
// --json`).
nlohmann::ordered_json model_to_json(const CadModel& model);
nlohmann::ordered_json report_to_json(const ValidationReport& report);

// FNV-1a 64-bit, hex-encoded; used for config hashes and checkpoint digests.
uint64_t fnv1a(std::span<const uint8_t> bytes);
std::string fnv1a_hex(std::span<const uint8_t> bytes);
std::string fnv1a_hex(std::string_view text);

// Provenance record written next to every CLI run's outputs.
struct RunInfo {
  std::string command;
  std::vector<std::string> args;
  uint64_t seed = 0;
  std::string config_hash;
  std::string started_at;   // ISO 8601 UTC
  std::string finished_at;
  std::vector<std::string> outputs;
};
void write_run_json(const std::filesystem::path& dir, const RunInfo& info);
std::string iso8601_utc_now();

}  // namespace secad
