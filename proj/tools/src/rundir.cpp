#include "rundir.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <vector>

#include "sda/error.hpp"
#include "sda/io.hpp"
#include "sda/version.hpp"

namespace sda::cli {

namespace fs = std::filesystem;

RunDir::RunDir(const RunConfig& config, const std::string& command) : root_(config.text("out")) {
  if (root_.empty()) throw ConfigError("config field 'out': must not be empty");
  fs::create_directories(root_);
  write_text(file("config.txt"), config.serialize());
  write_text(file("seed.txt"), std::to_string(config.seed()) + "\n");
  write_text(file("version.txt"), std::string("sda ") + kVersion + "\n");
  write_text(file("command.txt"), command + "\n");
}

fs::path RunDir::file(const fs::path& relative) const {
  const fs::path p = root_ / relative;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

fs::path RunDir::input(const std::string& relative) const {
  const fs::path p(relative);
  return p.is_absolute() ? p : root_ / p;
}

void RunDir::finish() const { write_text(root_ / "manifest.sha256", manifest(root_)); }

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string manifest(const fs::path& root) {
  std::vector<std::string> rel;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string r = fs::relative(e.path(), root).generic_string();
    if (r != "manifest.sha256") rel.push_back(r);
  }
  std::sort(rel.begin(), rel.end());
  std::string out;
  for (const auto& r : rel) out += sha256_hex(read_text(root / r)) + "  " + r + "\n";
  return out;
}

}  // namespace sda::cli
