#pragma once

// Config-driven experiments: simulate a capture, recover, score against the
// ground truth, and write report / plot CSVs.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "usfspec/robust_recovery.hpp"

namespace usfspec {

enum class Method { exact, robust };

Method parse_method(const std::string& name);
std::string to_string(Method m);

struct ModelSpec {
  bool complex_valued = false;
  std::vector<double> f_hz;
  double g_inf_v = 0.0;                    // real tones: equal zero-phase tones summing to this peak
  std::vector<double> tone_amplitudes_v;   // overrides g_inf_v when set
  std::vector<double> phases_rad;
  CVec complex_amplitudes_v;               // complex models
};

struct ExperimentSpec {
  std::string id = "run";
  ModelSpec model;
  CaptureConfig capture;
  Method method = Method::robust;
  std::size_t order = 0;  // 0: number of complex components in the model
  RobustConfig robust;
  bool alpha_explicit = false;
  ExactOptions exact;
  std::uint64_t seed = 0;
  int repetitions = 1;

  SinusoidalModel build_model() const;
  std::size_t resolved_order() const;
  /// Robust settings with alpha defaulted from the highest tone and the bit
  /// depth taken from the capture when present.
  RobustConfig resolved_robust() const;
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  /// Zero noise, no jitter, no bit quantization.
  ExperimentSpec noiseless() const;
};

/// Parses one experiment object or {"experiments": [...]} from JSON text.
std::vector<ExperimentSpec> parse_specs(const std::string& json_text);
std::vector<ExperimentSpec> load_specs(const std::string& path);

struct RunReport {
  std::string spec_id;
  std::size_t n = 0;
  double f_s_hz = 0.0;
  double t_d_us = 0.0;
  double lambda0_v = 0.0;
  double lambda1_v = 0.0;
  double g_inf_v = 0.0;
  std::vector<double> f_true_khz;  // ascending
  std::vector<double> f_est_khz;   // matched to f_true_khz
  double e2_khz2 = 0.0;
  double einf_over_fs = 0.0;
  double mse_signal = 0.0;
  bool converged = false;
  int iterations = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::string error;
  std::vector<double> criterion_trace;
  double sigma = 0.0;
};

struct RunOutcome {
  RunReport report;
  SimulatedCapture capture;
  std::optional<SpectralEstimate> estimate;
};

/// Seed `seed` overrides spec.seed for the capture and the robust restarts.
RunOutcome run_experiment_detailed(const ExperimentSpec& spec, std::uint64_t seed);
RunReport run_experiment(const ExperimentSpec& spec);

/// Recovery on an existing capture; `model` supplies the ground truth for scoring.
RunOutcome recover_and_score(const ExperimentSpec& spec, const MultiChannelCapture& data,
                             const GroundTruth& truth, std::uint64_t seed);

/// Ground truth for a capture configuration without folding it.
GroundTruth ground_truth(const SinusoidalModel& model, const CaptureConfig& cfg);

/// Pairs sorted true and sorted estimated frequencies (Hz). Real models keep
/// the upper (positive) half of the estimates.
std::vector<double> match_frequencies(std::vector<double> true_hz, std::vector<double> est_hz, bool real_model);

inline constexpr const char* kReportHeader =
    "spec_id,N,f_s_hz,T_d_us,lambda0_v,lambda1_v,g_inf_v,f_true_khz,f_est_khz,e2_khz2,einf_over_fs,mse_signal,"
    "converged,iterations,seed";

void write_report_csv(std::ostream& os, const std::vector<RunReport>& reports);
void write_report_csv(const std::string& path, const std::vector<RunReport>& reports);
/// Wall time, traces and error messages; the only file carrying wall time.
void write_diagnostics_json(const std::string& path, const std::vector<RunReport>& reports);

/// Writes <prefix>waveform.csv (channel,n,t_seconds,g_true,y_folded,g_recovered
/// plus *_imag columns for complex captures) and <prefix>phasors.csv
/// (k,re_c,im_c,omega_rad_s).
void emit_plot_data(const RunOutcome& outcome, const std::string& dir, const std::string& prefix = "");
void write_waveform_csv(std::ostream& os, const SimulatedCapture& capture, const SpectralEstimate* estimate,
                        bool real_model);
void write_phasor_csv(std::ostream& os, const SpectralEstimate& estimate);

}  // namespace usfspec
