#include "usfspec/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "usfspec/errors.hpp"

namespace usfspec {

void CaptureConfig::validate() const {
  if (!(lambda0 > 0.0) || !(lambda1 > 0.0)) throw ConfigError("fold thresholds must be positive");
  if (lambda0 == lambda1) throw ConfigError("fold thresholds must differ");
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
    throw ConfigError("sample rate must be positive");
  if (!(delay >= 0.0)) throw ConfigError("channel delay must be nonnegative");
  for (auto n : counts)
    if (n < 2) throw ConfigError("each channel needs at least two samples");
  if (bit_depth && (*bit_depth < 1 || *bit_depth > 52))
    throw ConfigError("bit depth must be in [1, 52]");
  if (noise_sd < 0.0) throw ConfigError("noise standard deviation must be nonnegative");
  if (fold_jitter < 0.0 || fold_jitter_rel < 0.0) throw ConfigError("fold jitter must be nonnegative");
}

void CaptureConfig::validate_for(const SinusoidalModel& model, bool exact_method) const {
  validate();
  model.validate();
  double wmax = 0.0;
  for (double w : model.frequencies) wmax = std::max(wmax, std::abs(w));
  if (wmax > 0.0 && delay > kPi / wmax * (1.0 + 1e-12))
    throw ConfigError("channel delay exceeds pi / max|w_k|; de-aliasing is ambiguous");
  if (exact_method) {
    const std::size_t k = model.size();
    for (std::size_t i = 0; i < kChannels; ++i) {
      const std::size_t need = (2 - i / 2) * k + 1;
      if (counts[i] < need)
        throw ConfigError("channel " + std::to_string(i) + " needs at least " +
                          std::to_string(need) + " samples for exact recovery");
    }
  }
}

CaptureConfig CaptureConfig::noiseless() const {
  CaptureConfig c = *this;
  c.noise_sd = 0.0;
  c.fold_jitter = 0.0;
  c.fold_jitter_rel = 0.0;
  c.bit_depth.reset();
  return c;
}

void MultiChannelCapture::validate() const {
  config.validate();
  for (std::size_t i = 0; i < kChannels; ++i) {
    if (channels[i].size() != config.counts[i])
      throw ConfigError("channel " + std::to_string(i) + " length does not match config");
    if (!complex_valued)
      for (const auto& y : channels[i])
        if (y.imag() != 0.0) throw ConfigError("real capture holds a complex sample");
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

NonidealFolder::NonidealFolder(FoldThreshold lambda, double jitter, std::uint64_t seed)
    : lambda_(lambda), jitter_(jitter), rng_(seed) {
  if (jitter < 0.0) throw ConfigError("fold jitter must be nonnegative");
}

double NonidealFolder::operator()(double x) {
  const std::int64_t count = fold_count(x, lambda_);
  if (jitter_ > 0.0) {
    std::uniform_real_distribution<double> dist(-jitter_, jitter_);
    const std::int64_t steps = count > prev_count_ ? count - prev_count_ : prev_count_ - count;
    for (std::int64_t e = 0; e < steps; ++e) offset_ += dist(rng_);
    events_ += steps;
  }
  prev_count_ = count;
  return centered_modulo(x - offset_, lambda_);
}

double simulate_nonideal_fold(double x, FoldThreshold lambda, double jitter, std::uint64_t seed) {
  NonidealFolder folder(lambda, jitter, seed);
  return folder(x);
}

namespace {

enum Stream : std::uint64_t { kPreNoise = 0, kFoldRe = 1, kFoldIm = 2, kPostNoise = 3 };

std::uint64_t channel_seed(std::uint64_t base, std::size_t channel, Stream s) {
  return derive_seed(base, 16 * channel + s);
}

CVec fold_channel(std::span<const cplx> x, FoldThreshold lambda, double jitter,
                  std::uint64_t seed_re, std::uint64_t seed_im, bool complex_valued) {
  NonidealFolder fold_re(lambda, jitter, seed_re);
  NonidealFolder fold_im(lambda, jitter, seed_im);
  CVec y(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double re = fold_re(x[n].real());
    const double im = complex_valued ? fold_im(x[n].imag()) : 0.0;
    y[n] = {re, im};
  }
  return y;
}

CVec noisy(std::span<const cplx> x, double sd, std::uint64_t seed, bool complex_valued) {
  if (sd == 0.0) return CVec(x.begin(), x.end());
  if (complex_valued) return add_noise(x, sd, seed);
  std::vector<double> re(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) re[n] = x[n].real();
  re = add_noise(std::span<const double>(re), sd, seed);
  CVec out(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) out[n] = {re[n], 0.0};
  return out;
}

}  // namespace

SimulatedCapture capture(const SinusoidalModel& model, const CaptureConfig& cfg) {
  cfg.validate();
  model.validate();
  SimulatedCapture out;
  out.data.config = cfg;
  out.data.complex_valued = !model.real_valued;
  const bool cx = out.data.complex_valued;

  for (std::size_t i = 0; i < kChannels; ++i) {
    const SamplingGrid grid{cfg.period(), cfg.counts[i], i >= 2 ? cfg.delay : 0.0};
    CVec g = sample(model, grid);
    out.truth.unfolded[i] = g;

    const FoldThreshold lambda = cfg.fold_threshold(i);
    CVec x = cfg.noise_pre_fold ? noisy(g, cfg.noise_sd, channel_seed(cfg.seed, i, kPreNoise), cx) : g;
    CVec y = fold_channel(x, lambda, cfg.jitter(i), channel_seed(cfg.seed, i, kFoldRe),
                          channel_seed(cfg.seed, i, kFoldIm), cx);
    if (!cfg.noise_pre_fold) y = noisy(y, cfg.noise_sd, channel_seed(cfg.seed, i, kPostNoise), cx);
    if (cfg.bit_depth) {
      for (auto& s : y)
        s = {quantize_bits(s.real(), lambda, *cfg.bit_depth, cfg.quantizer),
             cx ? quantize_bits(s.imag(), lambda, *cfg.bit_depth, cfg.quantizer) : 0.0};
    }
    out.data.channels[i] = std::move(y);
  }
  return out;
}

CVec finite_difference(std::span<const cplx> y) {
  if (y.size() < 2) throw ConfigError("finite difference needs at least two samples");
  CVec d(y.size() - 1);
  for (std::size_t n = 0; n + 1 < y.size(); ++n) d[n] = y[n + 1] - y[n];
  return d;
}

DifferenceStreams finite_difference(const MultiChannelCapture& capture) {
  DifferenceStreams d;
  for (std::size_t i = 0; i < kChannels; ++i) d.v[i] = finite_difference(capture.channels[i]);
  return d;
}

std::array<CVec, kChannels> finite_difference(const GroundTruth& truth) {
  std::array<CVec, kChannels> d;
  for (std::size_t i = 0; i < kChannels; ++i) d[i] = finite_difference(truth.unfolded[i]);
  return d;
}

void write_capture_csv(std::ostream& os, const MultiChannelCapture& capture) {
  const bool cx = capture.complex_valued;
  os << "channel,n,t_seconds,y_volts" << (cx ? ",y_imag_volts" : "") << '\n';
  char buf[160];
  const double period = capture.config.period();
  for (std::size_t i = 0; i < kChannels; ++i) {
    const double offset = i >= 2 ? capture.config.delay : 0.0;
    for (std::size_t n = 0; n < capture.channels[i].size(); ++n) {
      const double t = static_cast<double>(n) * period + offset;
      const cplx y = capture.channels[i][n];
      if (cx)
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.16e,%.16e,%.16e\n", i, n, t, y.real(), y.imag());
      else
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.16e,%.16e\n", i, n, t, y.real());
      os << buf;
    }
  }
}

void write_capture_csv(const std::string& path, const MultiChannelCapture& capture) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_capture_csv(os, capture);
  if (!os) throw IoError("write failed: " + path);
}

MultiChannelCapture read_capture_csv(std::istream& is, const CaptureConfig& cfg) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("capture CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool cx = false;
  if (line == "channel,n,t_seconds,y_volts,y_imag_volts") cx = true;
  else if (line != "channel,n,t_seconds,y_volts") throw IoError("unexpected capture CSV header: " + line);

  MultiChannelCapture cap;
  cap.complex_valued = cx;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> cols;
    while (std::getline(row, field, ',')) cols.push_back(field);
    if (cols.size() != (cx ? 5u : 4u))
      throw IoError("capture CSV line " + std::to_string(lineno) + ": wrong column count");
    std::size_t ch = 0, n = 0;
    double re = 0.0, im = 0.0;
    try {
      ch = std::stoul(cols[0]);
      n = std::stoul(cols[1]);
      re = std::stod(cols[3]);
      if (cx) im = std::stod(cols[4]);
    } catch (const std::exception&) {
      throw IoError("capture CSV line " + std::to_string(lineno) + ": malformed number");
    }
    if (ch >= kChannels) throw IoError("capture CSV: channel index out of range");
    if (n != cap.channels[ch].size())
      throw IoError("capture CSV: samples of channel " + std::to_string(ch) + " out of order");
    cap.channels[ch].push_back({re, im});
  }
  cap.config = cfg;
  for (std::size_t i = 0; i < kChannels; ++i) cap.config.counts[i] = cap.channels[i].size();
  cap.validate();
  return cap;
}

MultiChannelCapture read_capture_csv(const std::string& path, const CaptureConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  return read_capture_csv(is, cfg);
}

}  // namespace usfspec
