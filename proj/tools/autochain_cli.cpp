#include <CLI11.hpp>

#include <atomic>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "autochain/config.hpp"
#include "autochain/report.hpp"
#include "autochain/world.hpp"

namespace {

using namespace autochain;

constexpr int kPass = 0;
constexpr int kExpectationFailed = 1;
constexpr int kConfigError = 2;

void print_config_error(const std::string& path, const config::ConfigError& e) {
  std::cerr << path << ": " << e.what() << "\n";
}

void print_report(const report::ScenarioReport& rep, const std::string& format) {
  if (format == "json") std::cout << report::to_json(rep).dump(2) << "\n";
  else std::cout << report::format_plain(rep);
}

struct Outcome {
  int code = kPass;
  std::string trace;
  std::optional<report::ScenarioReport> report;
  std::string error;
};

Outcome run_one(const std::string& path, std::optional<std::uint64_t> seed, const std::string& trace_path = "") {
  Outcome out;
  config::ScenarioConfig cfg;
  try {
    cfg = config::load_file(path);
  } catch (const config::ConfigError& e) {
    out.code = kConfigError;
    out.error = path + ": " + e.what();
    return out;
  }
  out.trace = world::run_to_trace(std::move(cfg), seed);
  if (!trace_path.empty()) {
    std::ofstream f(trace_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + trace_path);
    f << out.trace;
  }
  out.report = report::build_report(out.trace);
  out.code = out.report->passed() ? kPass : kExpectationFailed;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blockchain overlay simulator for connected-vehicle security scenarios"};
  app.require_subcommand(1);

  std::string config_path, trace_in, trace_out, format = "plain";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> batch_paths;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());

  auto* run = app.add_subcommand("run", "Run a scenario and print its report");
  run->add_option("config", config_path, "Scenario YAML file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--trace", trace_out, "Write the event trace to this file");
  run->add_option("--format", format, "Metric table format")->check(CLI::IsMember({"plain", "json"}));

  auto* validate = app.add_subcommand("validate", "Check a scenario file without running it");
  validate->add_option("config", config_path, "Scenario YAML file")->required()->check(CLI::ExistingFile);

  auto* rep = app.add_subcommand("report", "Recompute the report from a trace file");
  rep->add_option("trace", trace_in, "Trace file written by run --trace")->required()->check(CLI::ExistingFile);
  rep->add_option("--format", format, "Metric table format")->check(CLI::IsMember({"plain", "json"}));

  auto* batch = app.add_subcommand("batch", "Run several scenarios in parallel");
  batch->add_option("configs", batch_paths, "Scenario YAML files")->required()->check(CLI::ExistingFile);
  batch->add_option("--seed", seed, "Override every scenario seed");
  batch->add_option("--jobs,-j", jobs, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kConfigError;
  }

  try {
    if (*validate) {
      try {
        const auto cfg = config::load_file(config_path);
        std::cout << "ok " << cfg.name << "\n";
        return kPass;
      } catch (const config::ConfigError& e) {
        print_config_error(config_path, e);
        return kConfigError;
      }
    }

    if (*run) {
      auto out = run_one(config_path, seed, trace_out);
      if (out.code == kConfigError) {
        std::cerr << out.error << "\n";
        return kConfigError;
      }
      print_report(*out.report, format);
      return out.code;
    }

    if (*rep) {
      std::ifstream f(trace_in, std::ios::binary);
      std::stringstream text;
      text << f.rdbuf();
      try {
        const auto r = report::build_report(text.str());
        print_report(r, format);
        return r.passed() ? kPass : kExpectationFailed;
      } catch (const report::TraceError& e) {
        std::cerr << trace_in << ": " << e.what() << "\n";
        return kConfigError;
      }
    }

    if (*batch) {
      std::vector<Outcome> outcomes(batch_paths.size());
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> workers;
      for (unsigned w = 0; w < std::min<std::size_t>(jobs, batch_paths.size()); ++w) {
        workers.emplace_back([&] {
          for (std::size_t i = next++; i < batch_paths.size(); i = next++) {
            try {
              outcomes[i] = run_one(batch_paths[i], seed);
            } catch (const std::exception& e) {
              outcomes[i].code = kConfigError;
              outcomes[i].error = e.what();
            }
          }
        });
      }
      for (auto& w : workers) w.join();
      int worst = kPass;
      for (std::size_t i = 0; i < batch_paths.size(); ++i) {
        const auto& o = outcomes[i];
        const char* status = o.code == kPass ? "PASS" : o.code == kExpectationFailed ? "FAIL" : "ERROR";
        std::cout << status << "  " << batch_paths[i];
        if (!o.error.empty()) std::cout << "  " << o.error;
        if (o.report) {
          for (const auto& e : o.report->expectations)
            if (!e.passed) std::cout << "  " << e.metric << "=" << e.actual.dump() << " (want " << e.expected << ")";
        }
        std::cout << "\n";
        worst = std::max(worst, o.code);
      }
      return worst;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kPass;
}
