// Command-line front end; talks to the solver library exclusively through
// the C API in vmb.h.
#include <CLI11.hpp>
#include <cstdio>
#include <string>

#include "vmb.h"

namespace {

int exit_code(vmb_status s) {
  switch (s) {
    case VMB_OK:
      return 0;
    case VMB_PROPERTY_FAILURE:
      return 1;
    case VMB_CONFIG_ERROR:
    case VMB_INVALID_ARGUMENT:
    case VMB_IO_ERROR:
      return 2;
    case VMB_NUMERICAL_ABORT:
      return 3;
  }
  return 2;
}

struct ConfigHandle {
  vmb_config* cfg = nullptr;
  ~ConfigHandle() { vmb_config_free(cfg); }
};

vmb_status load_config(const std::string& path, ConfigHandle& h) {
  return path.empty() ? vmb_config_default(&h.cfg) : vmb_config_load_file(path.c_str(), &h.cfg);
}

int report(vmb_status s, const char* verb) {
  if (s == VMB_OK) return 0;
  if (s == VMB_PROPERTY_FAILURE)
    std::fprintf(stderr, "%s: property failures, see report.json\n", verb);
  else
    std::fprintf(stderr, "%s failed: %s\n", verb, vmb_last_error());
  return exit_code(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-species kinetic plasma solver (Vlasov-Maxwell-Boltzmann and its "
               "light-speed limit)"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", resume, checks;
  bool checks_given = false;
  unsigned long long seed = 0;
  bool seed_given = false;
  int threads = 0;

  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "override the RNG seed of random recipes")
      ->each([&](const std::string&) { seed_given = true; });
  app.add_option("--threads", threads, "worker thread count (0: library default)");

  auto* simulate = app.add_subcommand("simulate", "integrate the scaled system in time");
  simulate->add_option("--resume", resume, "checkpoint to resume from");
  auto* sweep = app.add_subcommand("sweep", "epsilon sweep against the limit system");
  auto* expand = app.add_subcommand("expand", "expansion-remainder scaling check");
  auto* verify = app.add_subcommand("verify", "run the property suite");
  verify->add_option("--checks", checks, "comma-separated check selection")
      ->each([&](const std::string&) { checks_given = true; });

  CLI11_PARSE(app, argc, argv);

  ConfigHandle h;
  if (vmb_status s = load_config(config_path, h); s != VMB_OK) {
    std::fprintf(stderr, "config: %s\n", vmb_last_error());
    return exit_code(s);
  }
  if (threads > 0) vmb_config_set_threads(h.cfg, threads);
  if (seed_given) vmb_config_set_seed(h.cfg, seed);

  if (simulate->parsed())
    return report(vmb_simulate(h.cfg, out_dir.c_str(), resume.empty() ? nullptr : resume.c_str()),
                  "simulate");
  if (sweep->parsed()) return report(vmb_sweep(h.cfg, out_dir.c_str()), "sweep");
  if (expand->parsed()) return report(vmb_expand(h.cfg, out_dir.c_str()), "expand");
  if (verify->parsed())
    return report(vmb_verify(h.cfg, out_dir.c_str(), checks_given ? checks.c_str() : nullptr),
                  "verify");
  return 2;
}
