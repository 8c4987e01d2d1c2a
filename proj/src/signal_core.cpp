#include "usfspec/signal_core.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "usfspec/errors.hpp"

namespace usfspec {

void SinusoidalModel::validate() const {
  if (amplitudes.empty()) throw ConfigError("model needs at least one component");
  if (amplitudes.size() != frequencies.size())
    throw ConfigError("model amplitude/frequency count mismatch");
  for (std::size_t a = 0; a < frequencies.size(); ++a) {
    if (!std::isfinite(frequencies[a])) throw ConfigError("non-finite model frequency");
    for (std::size_t b = a + 1; b < frequencies.size(); ++b)
      if (frequencies[a] == frequencies[b]) throw ConfigError("model frequencies must be distinct");
  }
  if (!real_valued) return;
  for (std::size_t a = 0; a < size(); ++a) {
    bool paired = false;
    for (std::size_t b = 0; b < size() && !paired; ++b) {
      const double tol = 1e-12 * std::max(1.0, std::abs(frequencies[a]));
      paired = std::abs(frequencies[b] + frequencies[a]) <= tol &&
               std::abs(amplitudes[b] - std::conj(amplitudes[a])) <=
                   1e-12 * std::max(1.0, std::abs(amplitudes[a]));
    }
    if (!paired)
      throw ConfigError("real-valued model component " + std::to_string(a) +
                        " has no conjugate partner");
  }
}

SinusoidalModel SinusoidalModel::from_real_tones(std::span<const double> freqs_hz,
                                                 std::span<const double> tone_amplitudes,
                                                 std::span<const double> phases_rad) {
  if (freqs_hz.size() != tone_amplitudes.size())
    throw ConfigError("tone frequency/amplitude count mismatch");
  if (!phases_rad.empty() && phases_rad.size() != freqs_hz.size())
    throw ConfigError("tone phase count mismatch");
  SinusoidalModel m;
  m.real_valued = true;
  for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
    const double phase = phases_rad.empty() ? 0.0 : phases_rad[i];
    const cplx c = std::polar(0.5 * tone_amplitudes[i], phase);
    const double w = kTwoPi * freqs_hz[i];
    m.amplitudes.push_back(c);
    m.frequencies.push_back(w);
    m.amplitudes.push_back(std::conj(c));
    m.frequencies.push_back(-w);
  }
  m.validate();
  return m;
}

double SinusoidalModel::peak_bound() const {
  double s = 0.0;
  for (const auto& c : amplitudes) s += std::abs(c);
  return s;
}

void SamplingGrid::validate() const {
  if (!(period > 0.0)) throw ConfigError("sampling period must be positive");
  if (count < 1) throw ConfigError("sampling grid needs at least one sample");
}

FoldThreshold::FoldThreshold(double lambda) : lambda_(lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw ConfigError("fold threshold must be positive and finite");
}

namespace {

// Phases reach 1e5 rad in sub-Nyquist captures; forming and reducing them in
// extended precision keeps samples accurate to a few ulp.
cplx evaluate_at(const SinusoidalModel& model, long double t) {
  constexpr long double two_pi = 6.283185307179586476925286766559L;
  cplx acc{0.0, 0.0};
  for (std::size_t k = 0; k < model.size(); ++k) {
    const long double phase = std::fmod(static_cast<long double>(model.frequencies[k]) * t, two_pi);
    acc += model.amplitudes[k] * std::polar(1.0, static_cast<double>(phase));
  }
  if (model.real_valued) return {acc.real(), 0.0};
  return acc;
}

}  // namespace

cplx evaluate_signal(const SinusoidalModel& model, double t) { return evaluate_at(model, t); }

CVec sample(const SinusoidalModel& model, const SamplingGrid& grid) {
  grid.validate();
  CVec out(grid.count);
  for (std::size_t n = 0; n < grid.count; ++n)
    out[n] = evaluate_at(model, static_cast<long double>(n) * grid.period + grid.offset);
  return out;
}

std::int64_t fold_count(double x, FoldThreshold lambda) {
  const double p = lambda.period();
  auto k = static_cast<std::int64_t>(std::floor(x / p + 0.5));
  // The division can round across a boundary; settle on the exact side.
  const double r = x - p * static_cast<double>(k);
  if (r >= lambda.value()) ++k;
  else if (r < -lambda.value()) --k;
  return k;
}

double centered_modulo(double x, FoldThreshold lambda) {
  if (x >= -lambda.value() && x < lambda.value()) return x;
  const double r = x - lambda.period() * static_cast<double>(fold_count(x, lambda));
  // Rounding in the subtraction can land exactly on +lambda.
  return r >= lambda.value() ? -lambda.value() : r;
}

double quantize_grid(double x, FoldThreshold lambda) {
  const double p = lambda.period();
  return p * std::floor((x + lambda.value()) / p);
}

double quantize_bits(double x, FoldThreshold lambda, int bits, QuantizerMode mode) {
  if (bits < 1 || bits > 52) throw ConfigError("bit depth must be in [1, 52]");
  const double levels = std::ldexp(1.0, bits);
  const double step = lambda.period() / levels;
  if (mode == QuantizerMode::mid_rise) {
    double idx = std::floor((x + lambda.value()) / step);
    idx = std::clamp(idx, 0.0, levels - 1.0);
    return -lambda.value() + (idx + 0.5) * step;
  }
  double idx = std::round(x / step);
  idx = std::clamp(idx, -levels / 2.0, levels / 2.0 - 1.0);
  return idx * step;
}

double quantize(double x, FoldThreshold lambda, std::optional<int> bits, QuantizerMode mode) {
  return bits ? quantize_bits(x, lambda, *bits, mode) : quantize_grid(x, lambda);
}

std::vector<double> add_noise(std::span<const double> samples, double sd, std::uint64_t seed) {
  if (sd < 0.0) throw ConfigError("noise standard deviation must be nonnegative");
  std::vector<double> out(samples.begin(), samples.end());
  if (sd == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sd);
  for (auto& s : out) s += dist(rng);
  return out;
}

CVec add_noise(std::span<const cplx> samples, double sd, std::uint64_t seed) {
  if (sd < 0.0) throw ConfigError("noise standard deviation must be nonnegative");
  CVec out(samples.begin(), samples.end());
  if (sd == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sd);
  for (auto& s : out) {
    const double re = dist(rng);
    const double im = dist(rng);
    s += cplx(re, im);
  }
  return out;
}

namespace {
template <typename T>
double mse_impl(std::span<const T> x, std::span<const T> y) {
  if (x.size() != y.size()) throw ConfigError("mse: length mismatch");
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) acc += std::norm(x[n] - y[n]);
  return acc / static_cast<double>(x.size());
}
}  // namespace

double mse(std::span<const double> x, std::span<const double> y) { return mse_impl(x, y); }
double mse(std::span<const cplx> x, std::span<const cplx> y) { return mse_impl(x, y); }

double wrap_to_band(double omega, double omega_s) {
  const double r = omega / omega_s;
  double f = r - std::floor(r + 0.5);  // [-1/2, 1/2)
  if (f <= -0.5) f += 1.0;
  return f * omega_s;
}

}  // namespace usfspec
