#pragma once

#include <filesystem>
#include <string>

#include "config.hpp"

namespace sda::cli {

/// Output directory of one command. Creation writes config.txt (the full
/// resolved config), seed.txt, version.txt and command.txt; finish() hashes
/// every file below the root into manifest.sha256.
class RunDir {
 public:
  RunDir(const RunConfig& config, const std::string& command);

  const std::filesystem::path& root() const { return root_; }
  /// Path relative to the run directory; parent directories are created.
  std::filesystem::path file(const std::filesystem::path& relative) const;
  /// Input path from the config, resolved against the run directory.
  std::filesystem::path input(const std::string& relative) const;

  void finish() const;

 private:
  std::filesystem::path root_;
};

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

/// "<hash>  <relative path>" lines for every regular file below `root`
/// except manifest.sha256, sorted by path.
std::string manifest(const std::filesystem::path& root);

}  // namespace sda::cli
