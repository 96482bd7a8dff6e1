// sda: command line front end.
//
//   sda <subcommand> [--config FILE] [--<field> VALUE ...]
//
// Exit codes: 0 success, 1 failed check, 2 config error, 3 numerical
// failure, 64 usage.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "log.hpp"
#include "sda/error.hpp"
#include "sda/version.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitUsage = 64;

const char* type_name(sda::cli::Kind kind) {
  using sda::cli::Kind;
  switch (kind) {
    case Kind::integer: return "INT";
    case Kind::real: return "REAL";
    case Kind::choice: return "CHOICE";
    case Kind::boolean: return "BOOL";
    case Kind::int_list: return "INT,...";
    case Kind::real_list: return "REAL,...";
    case Kind::text: break;
  }
  return "TEXT";
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sda::cli;

  CLI::App app{"Score-based data assimilation with tiled spatiotemporal denoisers", "sda"};
  app.set_version_flag("--version", std::string(sda::kVersion));
  app.require_subcommand(1, 1);

  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  for (const auto& f : field_specs()) {
    const std::string key = f.key;
    app.add_option_function<std::string>(
           f.flag(), [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); },
           f.help + " [" + f.fallback + "]")
        ->type_name(type_name(f.kind))
        ->group("Run config");
  }

  const Command* chosen = nullptr;
  for (const auto& cmd : commands()) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->fallthrough();
    sub->callback([&chosen, &cmd] { chosen = &cmd; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::fputs(app.help().c_str(), stderr);
    return kExitUsage;
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
    for (const auto& [key, value] : overrides) config.set(key, value);
    log(LogLevel::debug, "running %s", chosen->name.c_str());
    return chosen->run(config);
  } catch (const UsageError& e) {
    log(LogLevel::error, "%s", e.what());
    return kExitUsage;
  } catch (const sda::ConfigError& e) {
    log(LogLevel::error, "%s", e.what());
    return kExitConfig;
  } catch (const sda::ShapeError& e) {
    log(LogLevel::error, "%s", e.what());
    return kExitConfig;
  } catch (const sda::NumericalError& e) {
    log(LogLevel::error, "%s", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    log(LogLevel::error, "%s", e.what());
    return kExitFailure;
  }
}
