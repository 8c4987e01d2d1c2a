#include "usfspec/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "usfspec/errors.hpp"

namespace usfspec {

using nlohmann::json;

Method parse_method(const std::string& name) {
  if (name == "exact") return Method::exact;
  if (name == "robust") return Method::robust;
  throw ConfigError("unknown recovery method '" + name + "' (expected exact or robust)");
}

std::string to_string(Method m) { return m == Method::exact ? "exact" : "robust"; }

SinusoidalModel ExperimentSpec::build_model() const {
  if (model.f_hz.empty()) throw ConfigError(id + ": model needs at least one frequency");
  if (!model.complex_valued) {
    std::vector<double> amps = model.tone_amplitudes_v;
    if (amps.empty()) {
      if (!(model.g_inf_v > 0.0)) throw ConfigError(id + ": real model needs g_inf_v > 0 or amplitudes_v");
      amps.assign(model.f_hz.size(), model.g_inf_v / static_cast<double>(model.f_hz.size()));
    }
    for (double f : model.f_hz)
      if (!(f > 0.0)) throw ConfigError(id + ": real tones need positive frequencies");
    return SinusoidalModel::from_real_tones(model.f_hz, amps, model.phases_rad);
  }
  if (model.complex_amplitudes_v.size() != model.f_hz.size())
    throw ConfigError(id + ": complex model needs one amplitude per frequency");
  SinusoidalModel m;
  m.real_valued = false;
  m.amplitudes = model.complex_amplitudes_v;
  for (double f : model.f_hz) m.frequencies.push_back(kTwoPi * f);
  m.validate();
  return m;
}

std::size_t ExperimentSpec::resolved_order() const { return order > 0 ? order : build_model().size(); }

RobustConfig ExperimentSpec::resolved_robust() const {
  RobustConfig r = robust;
  if (!alpha_explicit) {
    double fmax = 0.0;
    for (double f : model.f_hz) fmax = std::max(fmax, std::abs(f));
    r.alpha = default_alpha(fmax);
  }
  if (capture.bit_depth) r.bit_depth = *capture.bit_depth;
  return r;
}

void ExperimentSpec::validate() const {
  if (repetitions < 1) throw ConfigError(id + ": repetitions must be at least 1");
  const SinusoidalModel m = build_model();
  try {
    capture.validate_for(m, method == Method::exact);
  } catch (const ConfigError& e) {
    throw ConfigError(id + ": " + e.what());
  }
  if (order > 0 && method == Method::exact && order < m.size())
    throw ConfigError(id + ": K is below the number of model components");
  if (method == Method::robust) resolved_robust().validate();
}

ExperimentSpec ExperimentSpec::noiseless() const {
  ExperimentSpec s = *this;
  s.capture = capture.noiseless();
  return s;
}

// ---- config parsing ----

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  return obj.at(key).get<T>();
}

cplx parse_complex(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  throw ConfigError("complex amplitude must be a number or [re, im]");
}

ExperimentSpec parse_one(const json& j, std::size_t index) {
  check_keys(j, {"id", "model", "capture", "recovery", "seed", "repetitions"}, "experiment");
  ExperimentSpec s;
  s.id = get_or<std::string>(j, "id", "exp" + std::to_string(index));
  s.seed = get_or<std::uint64_t>(j, "seed", 0);
  s.repetitions = get_or<int>(j, "repetitions", 1);

  if (!j.contains("model")) throw ConfigError(s.id + ": missing model section");
  const json& m = j.at("model");
  check_keys(m, {"kind", "f_hz", "g_inf_v", "amplitudes_v", "phases_rad", "complex_amplitudes_v"}, s.id + ".model");
  const std::string kind = get_or<std::string>(m, "kind", "real");
  if (kind != "real" && kind != "complex") throw ConfigError(s.id + ": model kind must be real or complex");
  s.model.complex_valued = kind == "complex";
  s.model.f_hz = get_or<std::vector<double>>(m, "f_hz", {});
  s.model.g_inf_v = get_or<double>(m, "g_inf_v", 0.0);
  s.model.tone_amplitudes_v = get_or<std::vector<double>>(m, "amplitudes_v", {});
  s.model.phases_rad = get_or<std::vector<double>>(m, "phases_rad", {});
  if (m.contains("complex_amplitudes_v"))
    for (const auto& c : m.at("complex_amplitudes_v")) s.model.complex_amplitudes_v.push_back(parse_complex(c));

  if (!j.contains("capture")) throw ConfigError(s.id + ": missing capture section");
  const json& c = j.at("capture");
  check_keys(c,
             {"f_s_hz", "N", "N_per_channel", "T_d_us", "lambda0_v", "lambda1_v", "bit_depth", "quantizer",
              "noise_sd_v", "fold_jitter_v", "fold_jitter_rel", "noise_pre_fold"},
             s.id + ".capture");
  CaptureConfig& cc = s.capture;
  if (!c.contains("f_s_hz")) throw ConfigError(s.id + ": capture.f_s_hz is required");
  cc.sample_rate = c.at("f_s_hz").get<double>();
  if (c.contains("N_per_channel")) {
    const auto n = c.at("N_per_channel").get<std::vector<std::size_t>>();
    if (n.size() != kChannels) throw ConfigError(s.id + ": N_per_channel needs four entries");
    std::copy(n.begin(), n.end(), cc.counts.begin());
  } else {
    cc.counts.fill(get_or<std::size_t>(c, "N", 100));
  }
  cc.delay = get_or<double>(c, "T_d_us", 200.0) * 1e-6;
  cc.lambda0 = get_or<double>(c, "lambda0_v", cc.lambda0);
  cc.lambda1 = get_or<double>(c, "lambda1_v", cc.lambda1);
  if (c.contains("bit_depth") && !c.at("bit_depth").is_null()) cc.bit_depth = c.at("bit_depth").get<int>();
  const std::string q = get_or<std::string>(c, "quantizer", "mid_rise");
  if (q == "mid_rise") cc.quantizer = QuantizerMode::mid_rise;
  else if (q == "mid_tread") cc.quantizer = QuantizerMode::mid_tread;
  else throw ConfigError(s.id + ": quantizer must be mid_rise or mid_tread");
  cc.noise_sd = get_or<double>(c, "noise_sd_v", 0.0);
  cc.fold_jitter = get_or<double>(c, "fold_jitter_v", 0.0);
  cc.fold_jitter_rel = get_or<double>(c, "fold_jitter_rel", 0.0);
  cc.noise_pre_fold = get_or<bool>(c, "noise_pre_fold", false);

  if (j.contains("recovery")) {
    const json& r = j.at("recovery");
    check_keys(r,
               {"method", "K", "alpha", "sigma_v", "inner_max", "restarts", "outer_max", "e_max",
                "parallel_restarts"},
               s.id + ".recovery");
    s.method = parse_method(get_or<std::string>(r, "method", "robust"));
    s.order = get_or<std::size_t>(r, "K", 0);
    if (r.contains("alpha")) {
      s.robust.alpha = r.at("alpha").get<double>();
      s.alpha_explicit = true;
    }
    s.robust.sigma = get_or<double>(r, "sigma_v", 0.0);
    s.robust.inner_max = get_or<int>(r, "inner_max", s.robust.inner_max);
    s.robust.restarts = get_or<int>(r, "restarts", s.robust.restarts);
    s.robust.outer_max = get_or<int>(r, "outer_max", s.robust.outer_max);
    s.robust.e_max = get_or<int>(r, "e_max", s.robust.e_max);
    s.robust.parallel_restarts = get_or<bool>(r, "parallel_restarts", false);
    s.exact.e_max = s.robust.e_max;
  }
  cc.seed = s.seed;
  s.robust.seed = s.seed;
  s.validate();
  return s;
}

}  // namespace

std::vector<ExperimentSpec> parse_specs(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  std::vector<ExperimentSpec> out;
  try {
    if (j.is_object() && j.contains("experiments")) {
      check_keys(j, {"experiments"}, "config");
      std::size_t i = 0;
      for (const auto& e : j.at("experiments")) out.push_back(parse_one(e, i++));
    } else {
      out.push_back(parse_one(j, 0));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a wrongly typed value: ") + e.what());
  }
  return out;
}

std::vector<ExperimentSpec> load_specs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_specs(ss.str());
}

// ---- running and scoring ----

GroundTruth ground_truth(const SinusoidalModel& model, const CaptureConfig& cfg) {
  GroundTruth t;
  for (std::size_t i = 0; i < kChannels; ++i)
    t.unfolded[i] = sample(model, SamplingGrid{cfg.period(), cfg.counts[i], i >= 2 ? cfg.delay : 0.0});
  return t;
}

std::vector<double> match_frequencies(std::vector<double> true_hz, std::vector<double> est_hz, bool real_model) {
  std::sort(true_hz.begin(), true_hz.end());
  std::sort(est_hz.begin(), est_hz.end());
  if (est_hz.size() < true_hz.size())
    throw IllConditionedError("fewer estimated components than true ones");
  if (real_model) est_hz.erase(est_hz.begin(), est_hz.end() - static_cast<std::ptrdiff_t>(true_hz.size()));
  if (est_hz.size() != true_hz.size()) throw IllConditionedError("estimated component count mismatch");
  return est_hz;
}

namespace {

std::vector<double> true_frequencies_hz(const ExperimentSpec& spec) {
  std::vector<double> f = spec.model.f_hz;
  std::sort(f.begin(), f.end());
  return f;
}

CVec reconstruct(const SpectralEstimate& est, const CaptureConfig& cfg, std::size_t channel, bool real_model) {
  const double offset = channel >= 2 ? cfg.delay : 0.0;
  CVec out(cfg.counts[channel]);
  for (std::size_t n = 0; n < out.size(); ++n) {
    const cplx v = est.evaluate(static_cast<double>(n) * cfg.period() + offset);
    out[n] = real_model ? cplx(v.real(), 0.0) : v;
  }
  return out;
}

}  // namespace

RunOutcome recover_and_score(const ExperimentSpec& spec, const MultiChannelCapture& data, const GroundTruth& truth,
                             std::uint64_t seed) {
  RunOutcome out;
  RunReport& r = out.report;
  const CaptureConfig& cc = data.config;
  r.spec_id = spec.id;
  r.n = cc.counts[0];
  r.f_s_hz = cc.sample_rate;
  r.t_d_us = cc.delay * 1e6;
  r.lambda0_v = cc.lambda0;
  r.lambda1_v = cc.lambda1;
  r.seed = seed;
  const bool real_model = !spec.model.complex_valued;
  const std::vector<double> f_true = true_frequencies_hz(spec);
  for (double f : f_true) r.f_true_khz.push_back(f * 1e-3);
  {
    double peak = 0.0;
    for (const auto& g : truth.unfolded[0]) peak = std::max(peak, std::abs(g));
    r.g_inf_v = spec.model.g_inf_v > 0.0 ? spec.model.g_inf_v : peak;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    const std::size_t k = spec.resolved_order();
    SpectralEstimate est;
    if (spec.method == Method::exact) {
      est = recover_exact(data, k, spec.exact);
      r.converged = true;
      r.iterations = 1;
    } else {
      RobustConfig rc = spec.resolved_robust();
      rc.seed = seed;
      RobustResult res = recover_robust(data, k, rc);
      est = std::move(res.estimate);
      r.converged = res.diagnostics.converged;
      r.iterations = res.diagnostics.outer_iterations;
      r.criterion_trace = res.diagnostics.criterion_trace;
      r.sigma = res.diagnostics.sigma;
    }
    std::vector<double> est_hz;
    for (double w : est.frequencies) est_hz.push_back(w / kTwoPi);
    const std::vector<double> matched = match_frequencies(f_true, est_hz, real_model);
    double e2 = 0.0, einf = 0.0;
    for (std::size_t i = 0; i < matched.size(); ++i) {
      const double d = f_true[i] - matched[i];
      e2 += (d * 1e-3) * (d * 1e-3);
      einf = std::max(einf, std::abs(d));
      r.f_est_khz.push_back(matched[i] * 1e-3);
    }
    r.e2_khz2 = e2;
    r.einf_over_fs = einf / cc.sample_rate;
    const CVec rec = reconstruct(est, cc, 0, real_model);
    r.mse_signal = mse(truth.unfolded[0], rec);
    out.estimate = std::move(est);
  } catch (const std::exception& e) {
    r.converged = false;
    r.error = e.what();
    r.f_est_khz.clear();
    r.e2_khz2 = r.einf_over_fs = r.mse_signal = std::numeric_limits<double>::infinity();
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

RunOutcome run_experiment_detailed(const ExperimentSpec& spec, std::uint64_t seed) {
  const SinusoidalModel model = spec.build_model();
  CaptureConfig cc = spec.capture;
  cc.seed = seed;
  SimulatedCapture sim = capture(model, cc);
  RunOutcome out = recover_and_score(spec, sim.data, sim.truth, seed);
  out.capture = std::move(sim);
  return out;
}

RunReport run_experiment(const ExperimentSpec& spec) { return run_experiment_detailed(spec, spec.seed).report; }

// ---- output files ----

namespace {

std::string fmt(double x, const char* f = "%.12g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += fmt(v[i]);
  }
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path + "'");
  return os;
}

}  // namespace

void write_report_csv(std::ostream& os, const std::vector<RunReport>& reports) {
  os << kReportHeader << '\n';
  for (const auto& r : reports) {
    os << csv_field(r.spec_id) << ',' << r.n << ',' << fmt(r.f_s_hz) << ',' << fmt(r.t_d_us) << ','
       << fmt(r.lambda0_v) << ',' << fmt(r.lambda1_v) << ',' << fmt(r.g_inf_v) << ',' << join(r.f_true_khz) << ','
       << join(r.f_est_khz) << ',' << fmt(r.e2_khz2, "%.6e") << ',' << fmt(r.einf_over_fs, "%.6e") << ','
       << fmt(r.mse_signal, "%.6e") << ',' << (r.converged ? "true" : "false") << ',' << r.iterations << ','
       << r.seed << '\n';
  }
}

void write_report_csv(const std::string& path, const std::vector<RunReport>& reports) {
  auto os = open_out(path);
  write_report_csv(os, reports);
  if (!os) throw IoError("failed writing '" + path + "'");
}

void write_diagnostics_json(const std::string& path, const std::vector<RunReport>& reports) {
  json runs = json::array();
  for (const auto& r : reports) {
    auto finite_or_null = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
    json trace = json::array();
    for (double c : r.criterion_trace) trace.push_back(finite_or_null(c));
    runs.push_back({{"spec_id", r.spec_id},
                    {"seed", r.seed},
                    {"converged", r.converged},
                    {"iterations", r.iterations},
                    {"sigma", r.sigma},
                    {"criterion_trace", trace},
                    {"wall_seconds", r.wall_seconds},
                    {"error", r.error}});
  }
  auto os = open_out(path);
  os << json{{"runs", runs}}.dump(2) << '\n';
  if (!os) throw IoError("failed writing '" + path + "'");
}

void write_waveform_csv(std::ostream& os, const SimulatedCapture& sim, const SpectralEstimate* estimate,
                        bool real_model) {
  const bool cx = sim.data.complex_valued;
  os << "channel,n,t_seconds,g_true,y_folded,g_recovered";
  if (cx) os << ",g_true_imag,y_folded_imag,g_recovered_imag";
  os << '\n';
  const CaptureConfig& cc = sim.data.config;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < kChannels; ++i) {
    const CVec rec = estimate ? reconstruct(*estimate, cc, i, real_model) : CVec(cc.counts[i], cplx(nan, nan));
    for (std::size_t n = 0; n < cc.counts[i]; ++n) {
      const double t = static_cast<double>(n) * cc.period() + (i >= 2 ? cc.delay : 0.0);
      const cplx g = sim.truth.unfolded[i][n];
      const cplx y = sim.data.channels[i][n];
      os << i << ',' << n << ',' << fmt(t, "%.17g") << ',' << fmt(g.real(), "%.17g") << ','
         << fmt(y.real(), "%.17g") << ',' << fmt(rec[n].real(), "%.17g");
      if (cx)
        os << ',' << fmt(g.imag(), "%.17g") << ',' << fmt(y.imag(), "%.17g") << ',' << fmt(rec[n].imag(), "%.17g");
      os << '\n';
    }
  }
}

void write_phasor_csv(std::ostream& os, const SpectralEstimate& estimate) {
  os << "k,re_c,im_c,omega_rad_s\n";
  for (std::size_t k = 0; k < estimate.frequencies.size(); ++k)
    os << k << ',' << fmt(estimate.amplitudes[k].real(), "%.17g") << ','
       << fmt(estimate.amplitudes[k].imag(), "%.17g") << ',' << fmt(estimate.frequencies[k], "%.17g") << '\n';
}

void emit_plot_data(const RunOutcome& outcome, const std::string& dir, const std::string& prefix) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const std::filesystem::path base(dir);
  const bool real_model = !outcome.capture.data.complex_valued;
  {
    auto os = open_out((base / (prefix + "waveform.csv")).string());
    write_waveform_csv(os, outcome.capture, outcome.estimate ? &*outcome.estimate : nullptr, real_model);
  }
  if (outcome.estimate) {
    auto os = open_out((base / (prefix + "phasors.csv")).string());
    write_phasor_csv(os, *outcome.estimate);
  }
}

}  // namespace usfspec
