#include "vmb.h"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "vmb/harness.hpp"

struct vmb_config {
  vmb::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

vmb_status map_error(const vmb::Error& e) {
  g_last_error = e.what();
  switch (e.code()) {
    case vmb::Errc::invalid_config:
      return VMB_CONFIG_ERROR;
    case vmb::Errc::numerical_abort:
      return VMB_NUMERICAL_ABORT;
    case vmb::Errc::io_failure:
      return VMB_IO_ERROR;
    default:
      return VMB_INVALID_ARGUMENT;
  }
}

template <class F>
vmb_status guarded(F&& f) {
  try {
    return f();
  } catch (const vmb::Error& e) {
    return map_error(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return VMB_INVALID_ARGUMENT;
  } catch (...) {
    g_last_error = "unknown failure";
    return VMB_INVALID_ARGUMENT;
  }
}

vmb_status require(bool cond, const char* what) {
  if (!cond) {
    g_last_error = what;
    return VMB_INVALID_ARGUMENT;
  }
  return VMB_OK;
}

}  // namespace

extern "C" {

vmb_status vmb_config_load_file(const char* path, vmb_config** out) {
  if (auto s = require(path && out, "null argument")) return s;
  return guarded([&] {
    *out = new vmb_config{vmb::RunConfig::from_file(path)};
    return VMB_OK;
  });
}

vmb_status vmb_config_load_text(const char* json_text, vmb_config** out) {
  if (auto s = require(json_text && out, "null argument")) return s;
  return guarded([&] {
    *out = new vmb_config{vmb::RunConfig::from_json_text(json_text)};
    return VMB_OK;
  });
}

vmb_status vmb_config_default(vmb_config** out) {
  if (auto s = require(out != nullptr, "null argument")) return s;
  return guarded([&] {
    *out = new vmb_config{vmb::RunConfig{}};
    return VMB_OK;
  });
}

void vmb_config_free(vmb_config* cfg) { delete cfg; }

vmb_status vmb_config_set_threads(vmb_config* cfg, int threads) {
  if (auto s = require(cfg != nullptr, "null config")) return s;
  cfg->cfg.threads = threads;
  return VMB_OK;
}

vmb_status vmb_config_set_seed(vmb_config* cfg, uint64_t seed) {
  if (auto s = require(cfg != nullptr, "null config")) return s;
  cfg->cfg.initial.seed = seed;
  return VMB_OK;
}

vmb_status vmb_config_dump(const vmb_config* cfg, char** out) {
  if (auto s = require(cfg && out, "null argument")) return s;
  return guarded([&] {
    const std::string text = cfg->cfg.to_json_text();
    *out = new char[text.size() + 1];
    std::memcpy(*out, text.c_str(), text.size() + 1);
    return VMB_OK;
  });
}

void vmb_string_free(char* s) { delete[] s; }

vmb_status vmb_simulate(const vmb_config* cfg, const char* out_dir, const char* resume_or_null) {
  if (auto s = require(cfg && out_dir, "null argument")) return s;
  return guarded([&] {
    vmb::run_simulate(cfg->cfg, out_dir, resume_or_null ? resume_or_null : "");
    return VMB_OK;
  });
}

vmb_status vmb_sweep(const vmb_config* cfg, const char* out_dir) {
  if (auto s = require(cfg && out_dir, "null argument")) return s;
  return guarded([&] {
    const vmb::RateReport r = vmb::run_epsilon_sweep(cfg->cfg);
    std::ofstream out(std::string(out_dir) + "/rates.json", std::ios::trunc);
    if (!out) vmb::fail(vmb::Errc::io_failure, "cannot write rates.json");
    out << r.to_json() << "\n";
    return VMB_OK;
  });
}

vmb_status vmb_expand(const vmb_config* cfg, const char* out_dir) {
  if (auto s = require(cfg && out_dir, "null argument")) return s;
  return guarded([&] {
    const vmb::RateReport r = vmb::run_expansion_check(cfg->cfg);
    std::ofstream out(std::string(out_dir) + "/rates.json", std::ios::trunc);
    if (!out) vmb::fail(vmb::Errc::io_failure, "cannot write rates.json");
    out << r.to_json() << "\n";
    return VMB_OK;
  });
}

vmb_status vmb_verify(const vmb_config* cfg, const char* out_dir, const char* checks_or_null) {
  if (auto s = require(cfg && out_dir, "null argument")) return s;
  vmb_status status = VMB_OK;
  const vmb_status run = guarded([&] {
    std::optional<std::vector<std::string>> selection;
    if (checks_or_null) {
      selection.emplace();
      std::stringstream ss(checks_or_null);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) selection->push_back(item);
    }
    const vmb::PropertyReport r = vmb::run_property_suite(cfg->cfg, selection);
    std::ofstream out(std::string(out_dir) + "/report.json", std::ios::trunc);
    if (!out) vmb::fail(vmb::Errc::io_failure, "cannot write report.json");
    out << r.to_json() << "\n";
    if (!r.all_pass()) {
      g_last_error = "one or more property checks failed";
      status = VMB_PROPERTY_FAILURE;
    }
    return VMB_OK;
  });
  return run == VMB_OK ? status : run;
}

const char* vmb_last_error(void) { return g_last_error.c_str(); }

}  // extern "C"
