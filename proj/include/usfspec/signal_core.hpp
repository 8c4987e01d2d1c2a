#pragma once

// Ground-truth signal model, sampling, folding, quantization and noise.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace usfspec {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Sum of K complex exponentials g(t) = sum_k c_k exp(j w_k t).
///
/// Real sinusoids are carried as conjugate pairs; `real_valued` asserts the
/// pairing and makes evaluation return a purely real value.
struct SinusoidalModel {
  CVec amplitudes;                  // volts
  std::vector<double> frequencies;  // rad/s
  bool real_valued = false;

  std::size_t size() const { return amplitudes.size(); }

  /// Throws ConfigError when K = 0, sizes differ, frequencies repeat, or a
  /// real-valued model lacks a matching conjugate partner for a component.
  void validate() const;

  /// Real tones a_i cos(2 pi f_i t + phi_i) expanded into 2 * size conjugate pairs.
  static SinusoidalModel from_real_tones(std::span<const double> freqs_hz,
                                         std::span<const double> tone_amplitudes,
                                         std::span<const double> phases_rad = {});

  /// Sum of |c_k|, an upper bound on sup |g(t)| reached by zero-phase tones.
  double peak_bound() const;
};

struct SamplingGrid {
  double period = 1.0;  // T (s)
  std::size_t count = 1;
  double offset = 0.0;  // start delay (s)

  void validate() const;
  double rate_hz() const { return 1.0 / period; }
  double rate_rad() const { return kTwoPi / period; }
};

/// Positive folding threshold lambda (volts).
class FoldThreshold {
 public:
  explicit FoldThreshold(double lambda);
  double value() const { return lambda_; }
  double period() const { return 2.0 * lambda_; }

 private:
  double lambda_;
};

cplx evaluate_signal(const SinusoidalModel& model, double t);
CVec sample(const SinusoidalModel& model, const SamplingGrid& grid);

/// Integer k with x - 2 lambda k in [-lambda, lambda).
std::int64_t fold_count(double x, FoldThreshold lambda);

/// Centered modulo: result in [-lambda, lambda), x - result in 2 lambda Z.
/// Odd multiples of lambda map to -lambda.
double centered_modulo(double x, FoldThreshold lambda);

/// Grid quantizer 2 lambda floor((x + lambda) / (2 lambda)).
double quantize_grid(double x, FoldThreshold lambda);

enum class QuantizerMode { mid_rise, mid_tread };

/// B-bit ADC over [-lambda, lambda). Inputs outside the range saturate.
double quantize_bits(double x, FoldThreshold lambda, int bits,
                     QuantizerMode mode = QuantizerMode::mid_rise);

/// Dispatches to quantize_bits when `bits` is set, quantize_grid otherwise.
double quantize(double x, FoldThreshold lambda, std::optional<int> bits,
                QuantizerMode mode = QuantizerMode::mid_rise);

/// Adds i.i.d. N(0, sd^2) noise; the same seed gives bitwise-identical output.
std::vector<double> add_noise(std::span<const double> samples, double sd, std::uint64_t seed);
/// Complex variant: independent N(0, sd^2) on real and imaginary parts.
CVec add_noise(std::span<const cplx> samples, double sd, std::uint64_t seed);

double mse(std::span<const double> x, std::span<const double> y);
double mse(std::span<const cplx> x, std::span<const cplx> y);

/// Maps an angular frequency into the canonical alias band (-ws/2, ws/2].
double wrap_to_band(double omega, double omega_s);

}  // namespace usfspec
