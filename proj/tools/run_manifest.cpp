#include "run_manifest.hpp"

#include <fstream>

#include "CLI11.hpp"
#include "autopool/binary_io.hpp"
#include "autopool/error.hpp"
#include "autopool/parallel.hpp"

namespace autopool::cli {

namespace {

nlohmann::ordered_json option_value(const CLI::Option* opt) {
  if (opt->get_expected_max() == 0) return opt->count() > 0;
  std::vector<std::string> values = opt->results();
  if (values.empty() && !opt->get_default_str().empty()) values = {opt->get_default_str()};
  if (values.empty()) return nullptr;
  if (values.size() == 1 && opt->get_expected_max() <= 1) return values.front();
  return values;
}

nlohmann::ordered_json file_entry(const std::filesystem::path& path) {
  nlohmann::ordered_json e;
  e["path"] = path.string();
  if (std::filesystem::is_regular_file(path)) {
    e["bytes"] = std::filesystem::file_size(path);
    e["fnv1a64"] = io::file_checksum(path);
  }
  return e;
}

}  // namespace

RunManifest::RunManifest(std::string command, const CLI::App& sub)
    : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt == sub.get_help_ptr() || opt == sub.get_help_all_ptr()) continue;
    std::string name = opt->get_name(false, false);
    if (name.empty()) continue;
    while (!name.empty() && name.front() == '-') name.erase(name.begin());
    const auto value = option_value(opt);
    config_[name] = value;
    if (name.find("seed") != std::string::npos) seeds_[name] = value;
  }
}

void RunManifest::input(const std::filesystem::path& path) { inputs_.push_back(path); }
void RunManifest::output(const std::filesystem::path& path) { outputs_.push_back(path); }

void RunManifest::write(const std::filesystem::path& path) const {
  nlohmann::ordered_json m;
  m["command"] = command_;
  m["config"] = config_;
  m["seeds"] = seeds_;
  m["inputs"] = nlohmann::ordered_json::array();
  for (const auto& p : inputs_) m["inputs"].push_back(file_entry(p));
  m["outputs"] = nlohmann::ordered_json::array();
  for (const auto& p : outputs_) m["outputs"].push_back(file_entry(p));
  if (!results_.empty()) m["results"] = results_;
  if (!notes_.empty()) m["notes"] = notes_;
  m["threads"] = thread_count();
  m["duration_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();

  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIoFailure, "cannot open " + path.string());
  out << m.dump(2) << '\n';
  require(static_cast<bool>(out), ErrorCode::kIoFailure, "write failed for " + path.string());
}

}  // namespace autopool::cli
