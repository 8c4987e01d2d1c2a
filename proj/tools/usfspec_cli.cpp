#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "usfspec/batch.hpp"
#include "usfspec/errors.hpp"
#include "usfspec/harness.hpp"

namespace fs = std::filesystem;
using namespace usfspec;

namespace {

struct Common {
  std::string spec_path;
  std::string method;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool noiseless = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--spec", c.spec_path, "experiment JSON (one object or {\"experiments\": [...]})")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--method", c.method, "override recovery method")->check(CLI::IsMember({"exact", "robust"}));
  cmd->add_option("--seed", c.seed, "override the seed of every spec");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_flag("--noiseless", c.noiseless, "zero noise and jitter, disable bit quantization");
}

std::vector<ExperimentSpec> prepared(const Common& c) {
  std::vector<ExperimentSpec> specs = load_specs(c.spec_path);
  for (auto& s : specs) {
    if (!c.method.empty()) s.method = parse_method(c.method);
    if (c.seed) {
      s.seed = *c.seed;
      s.capture.seed = *c.seed;
      s.robust.seed = *c.seed;
    }
    if (c.noiseless) s = s.noiseless();
  }
  return specs;
}

const ExperimentSpec& select(const std::vector<ExperimentSpec>& specs, const std::string& id) {
  if (specs.empty()) throw ConfigError("spec file has no experiments");
  if (id.empty()) return specs.front();
  for (const auto& s : specs)
    if (s.id == id) return s;
  throw ConfigError("no experiment with id '" + id + "'");
}

std::string path_in(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

int finish(const std::vector<RunReport>& reports, const Common& c) {
  write_report_csv(path_in(c.out, "report.csv"), reports);
  write_diagnostics_json(path_in(c.out, "diagnostics.json"), reports);
  std::size_t ok = 0;
  for (const auto& r : reports) ok += r.converged ? 1 : 0;
  std::cerr << ok << "/" << reports.size() << " runs converged; report in " << c.out << "\n";
  return all_converged(reports) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-Nyquist spectral estimation from modulo samples"};
  app.require_subcommand(1);

  Common cap_opts, rec_opts, suite_opts, plot_opts;
  std::string rec_capture, rec_id, cap_id, plot_id;
  bool serial = false;

  auto* cap = app.add_subcommand("capture", "simulate a capture and write it as CSV");
  add_common(cap, cap_opts);
  cap->add_option("--id", cap_id, "experiment id (default: first)");

  auto* rec = app.add_subcommand("recover", "recover from a capture CSV and write a report");
  add_common(rec, rec_opts);
  rec->add_option("--capture", rec_capture, "capture CSV")->required()->check(CLI::ExistingFile);
  rec->add_option("--id", rec_id, "experiment id (default: first)");

  auto* suite = app.add_subcommand("suite", "run every experiment and repetition");
  add_common(suite, suite_opts);
  suite->add_flag("--serial", serial, "run on one thread");

  auto* plot = app.add_subcommand("plotdata", "write waveform and phasor CSVs");
  add_common(plot, plot_opts);
  plot->add_option("--id", plot_id, "only this experiment");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cap) {
      const ExperimentSpec& s = select(prepared(cap_opts), cap_id);
      const SimulatedCapture sim = capture(s.build_model(), s.capture);
      const std::string path = path_in(cap_opts.out, s.id + "_capture.csv");
      write_capture_csv(path, sim.data);
      std::cerr << "wrote " << path << "\n";
      return 0;
    }
    if (*rec) {
      const ExperimentSpec& s = select(prepared(rec_opts), rec_id);
      const MultiChannelCapture data = read_capture_csv(rec_capture, s.capture);
      const GroundTruth truth = ground_truth(s.build_model(), s.capture);
      return finish({recover_and_score(s, data, truth, s.seed).report}, rec_opts);
    }
    if (*suite) {
      const auto specs = prepared(suite_opts);
      return finish(run_suite(specs, serial ? Execution::serial : Execution::parallel), suite_opts);
    }
    if (*plot) {
      std::vector<RunReport> reports;
      for (const auto& s : prepared(plot_opts)) {
        if (!plot_id.empty() && s.id != plot_id) continue;
        const RunOutcome o = run_experiment_detailed(s, s.seed);
        emit_plot_data(o, plot_opts.out, s.id + "_");
        reports.push_back(o.report);
      }
      if (reports.empty()) throw ConfigError("no experiment matched");
      return finish(reports, plot_opts);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
