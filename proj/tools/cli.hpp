#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace cdinn::cli {

enum ExitCode : int { ok = 0, usage = 2, io = 3, numeric_abort = 4, model_mismatch = 5, failure = 1 };

/// Parses argv and runs one subcommand. Never throws; errors map to exit codes.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

/// Provenance record written next to every output artifact.
struct Manifest {
  std::string subcommand;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
  std::string started_utc;
  std::string finished_utc;

  nlohmann::json to_json() const;
};

std::string utc_now();

/// `<artifact>.manifest.json`, or `<dir>/manifest.json` for directory outputs.
std::filesystem::path manifest_path(const std::filesystem::path& artifact);

/// Atomic write through a temporary file.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace cdinn::cli
