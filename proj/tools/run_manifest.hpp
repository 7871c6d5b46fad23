#ifndef AUTOPOOL_TOOLS_RUN_MANIFEST_HPP
#define AUTOPOOL_TOOLS_RUN_MANIFEST_HPP

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace CLI {
class App;
}

namespace autopool::cli {

/// Collects what one command read and wrote, then emits a JSON manifest.
class RunManifest {
 public:
  RunManifest(std::string command, const CLI::App& sub);

  void input(const std::filesystem::path& path);
  void output(const std::filesystem::path& path);
  nlohmann::ordered_json& results() { return results_; }
  void note(const std::string& key, nlohmann::ordered_json value) { notes_[key] = std::move(value); }

  /// Checksums every recorded path and writes the manifest to `path`.
  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  nlohmann::ordered_json config_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json seeds_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json results_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json notes_ = nlohmann::ordered_json::object();
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::filesystem::path> outputs_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace autopool::cli

#endif  // AUTOPOOL_TOOLS_RUN_MANIFEST_HPP
