#include "aberr/run_manifest.hpp"

#include <chrono>
#include <ctime>

#include "aberr/error.hpp"
#include "aberr/io.hpp"
#include "json.hpp"

namespace aberr {

using nlohmann::json;

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_run_manifest(const std::filesystem::path& out_dir, const RunManifest& m) {
  json j = {{"tool", "aberr"},
            {"version", m.version},
            {"command", m.command},
            {"args", m.args},
            {"config", json::parse(m.config_json)},
            {"seeds", m.seeds},
            {"started_at", m.started_at},
            {"finished_at", m.finished_at},
            {"outputs", m.outputs},
            {"leak_allowed", m.leak_allowed}};
  if (m.leak_allowed) j["watermark"] = "PROTOCOL-LEAK: evaluation lenses overlap training lenses";
  io::write_text(out_dir / kRunManifestName, j.dump(2) + "\n");
}

RunManifest read_run_manifest(const std::filesystem::path& path) {
  const json j = json::parse(io::read_text(path));
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.args = j.at("args").get<std::vector<std::string>>();
  m.config_json = j.at("config").dump();
  m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
  m.version = j.at("version").get<std::string>();
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.outputs = j.value("outputs", std::vector<std::string>{});
  m.leak_allowed = j.value("leak_allowed", false);
  return m;
}

std::vector<std::string> with_output_dir(const std::vector<std::string>& args, const std::string& out) {
  std::vector<std::string> result;
  bool replaced = false;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out" && i + 1 < args.size()) {
      result.push_back("--out");
      result.push_back(out);
      ++i;
      replaced = true;
    } else if (args[i].rfind("--out=", 0) == 0) {
      result.push_back("--out=" + out);
      replaced = true;
    } else {
      result.push_back(args[i]);
    }
  }
  if (!replaced) throw ArgumentError("manifest arguments carry no --out option");
  return result;
}

}  // namespace aberr
