#pragma once

#include <filesystem>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace aberr {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kRunManifestName = "run_manifest.json";

/// Provenance record written once per output directory.
struct RunManifest {
  std::string command;                        // subcommand name
  std::vector<std::string> args;              // subcommand arguments, without argv[0]
  std::string config_json = "{}";            // resolved configuration snapshot (JSON text)
  std::map<std::string, std::uint64_t> seeds;
  std::string version = kVersion;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;           // paths relative to the output directory
  bool leak_allowed = false;                  // watermark set by --allow-leak
};

std::string utc_timestamp();

void write_run_manifest(const std::filesystem::path& out_dir, const RunManifest& manifest);
RunManifest read_run_manifest(const std::filesystem::path& path);

/// Arguments with the value of "--out" replaced, for re-running into a new directory.
std::vector<std::string> with_output_dir(const std::vector<std::string>& args, const std::string& out);

}  // namespace aberr
