#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "durm/instrumentation.hpp"
#include "durm/trainer.hpp"
#include "json.hpp"

namespace durm::cli {

// Plain nlohmann::json keeps object keys sorted, which makes dump() a
// canonical form suitable for digesting.
using json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "1";

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDivergence = 3;

// Digest of the canonical (sorted-key, no-whitespace) dump of the config
// plus the dataset provenance; re-serializing a stored manifest's "config"
// object reproduces it.
std::string manifest_digest(const json& config, const std::string& provenance);

json make_manifest(const std::string& kind, const json& config,
                   const std::string& provenance);

// Creates <out_root>/<12-char digest prefix>/ and writes manifest.json.
std::filesystem::path prepare_run_dir(const std::filesystem::path& out_root,
                                      const json& manifest);

void write_json_file(const std::filesystem::path& path, const json& value);

// 17-significant-digit formatting so CSV values round-trip exactly.
std::string format_double(double v);

json trace_to_json(const GradientTrace& trace, const std::string& digest);
json flatness_to_json(const FlatnessReport& report, const std::string& digest);

void write_epochs_csv(const std::filesystem::path& path,
                      const std::string& digest, const TrainResult& result);
void write_steps_csv(const std::filesystem::path& path,
                     const std::string& digest, const TrainResult& result,
                     std::size_t batches_per_epoch);

}  // namespace durm::cli
