#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "hi3/commands.hpp"
#include "hi3/http.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 2;
constexpr int kExitIo = 3;

struct Flags {
  std::string config;
  hi3::Overrides overrides;
  std::string host = "127.0.0.1";
  int port = 8080;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--seed", f.overrides.seed, "master seed (falls back to HI3_SEED)");
  cmd->add_option("--reps", f.overrides.reps, "simulated trials per row");
  cmd->add_option("--out", f.overrides.out, "output directory");
  cmd->add_option("--designs", f.overrides.designs, "comma list of hi3+3, i3+3");
  cmd->add_option("--random-scenarios", f.overrides.random_scenarios, "simulate N generated scenarios");
  cmd->add_option("--sizes", f.overrides.sizes, "comma list of maximum sample sizes");
}

hi3::RunConfig load(const Flags& f) {
  hi3::RunConfig cfg;
  if (!f.config.empty()) cfg = hi3::load_config(f.config);
  hi3::apply(cfg, f.overrides);
  return cfg;
}

int run_command(const Flags& f, const std::function<hi3::CommandOutput(const hi3::RunConfig&, std::uint64_t)>& cmd) {
  const hi3::RunConfig cfg = load(f);
  const std::uint64_t seed = hi3::resolve_seed(f.overrides.seed, cfg.seed, std::getenv("HI3_SEED"));
  const hi3::CommandOutput out = cmd(cfg, seed);
  std::cout << out.text;
  if (cfg.out) hi3::write_outputs(out, *cfg.out);
  return kExitOk;
}

int serve(const Flags& f) {
  const hi3::RunConfig cfg = f.config.empty() ? hi3::RunConfig{} : hi3::load_config(f.config);
  const std::string dir = f.overrides.out.value_or(cfg.out.value_or("sessions"));
  hi3::service::SessionStore store(dir);
  hi3::service::Api api(store);
  httplib::Server server;
  hi3::service::bind(server, api);
  std::cerr << "serving sessions from " << dir << " on http://" << f.host << ":" << f.port << "\n";
  if (!server.listen(f.host, f.port)) throw hi3::io_error("cannot listen on " + f.host + ":" + std::to_string(f.port));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hi3+3 phase I dose-finding design"};
  app.require_subcommand(1);
  Flags flags;

  const std::map<std::string, std::function<hi3::CommandOutput(const hi3::RunConfig&, std::uint64_t)>> commands{
      {"calibrate", hi3::cmd_calibrate},
      {"tables", hi3::cmd_tables},
      {"simulate", hi3::cmd_simulate},
      {"decide", hi3::cmd_decide},
      {"select-mtd", hi3::cmd_select_mtd},
  };
  const std::map<std::string, std::string> help{
      {"calibrate", "calibrate power parameters from the history"},
      {"tables", "write one decision table per dose"},
      {"simulate", "Monte Carlo operating characteristics"},
      {"decide", "next-dose decision for the config state"},
      {"select-mtd", "end-of-trial MTD selection for the config state"},
  };
  for (const auto& [name, fn] : commands) add_common(app.add_subcommand(name, help.at(name)), flags);
  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP session service");
  add_common(serve_cmd, flags);
  serve_cmd->add_option("--host", flags.host, "bind address");
  serve_cmd->add_option("--port", flags.port, "TCP port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadInput;
  }

  try {
    if (serve_cmd->parsed()) return serve(flags);
    for (const auto& [name, fn] : commands) {
      if (app.got_subcommand(name)) return run_command(flags, fn);
    }
  } catch (const hi3::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const hi3::validation_error& e) {
    std::cerr << "error: " << e.what() << " [" << e.field() << "]\n";
    return kExitBadInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
  return kExitBadInput;
}
