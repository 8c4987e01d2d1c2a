#pragma once

// Quad-channel modulo acquisition: channels 0/1 sample g(nT) folded at
// lambda0/lambda1, channels 2/3 sample g(nT + Td) with the same thresholds.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "usfspec/signal_core.hpp"

namespace usfspec {

inline constexpr std::size_t kChannels = 4;

struct CaptureConfig {
  double lambda0 = 0.98;  // volts
  double lambda1 = 1.88;
  double delay = 200e-6;  // Td (s)
  double sample_rate = 29.0;  // Hz
  std::array<std::size_t, kChannels> counts{100, 100, 100, 100};
  std::optional<int> bit_depth;  // unset: no ADC quantization
  QuantizerMode quantizer = QuantizerMode::mid_rise;
  double noise_sd = 0.0;     // volts, additive Gaussian
  double fold_jitter = 0.0;  // volts, per fold event
  double fold_jitter_rel = 0.0;  // extra per-event jitter as a fraction of the channel threshold
  bool noise_pre_fold = false;
  std::uint64_t seed = 0;

  double period() const { return 1.0 / sample_rate; }
  double omega_s() const { return kTwoPi * sample_rate; }
  double threshold(std::size_t channel) const { return channel % 2 == 0 ? lambda0 : lambda1; }
  FoldThreshold fold_threshold(std::size_t channel) const { return FoldThreshold(threshold(channel)); }
  double jitter(std::size_t channel) const { return fold_jitter + fold_jitter_rel * threshold(channel); }

  void validate() const;
  /// Also checks Td <= pi / max|w_k| and, for the exact method, the
  /// per-channel sample bound N_i >= (2 - floor(i/2)) K + 1.
  void validate_for(const SinusoidalModel& model, bool exact_method) const;

  /// Same configuration with noise, jitter and bit quantization removed.
  CaptureConfig noiseless() const;
};

/// Folded samples as seen by a recovery algorithm. Carries no ground truth.
struct MultiChannelCapture {
  std::array<CVec, kChannels> channels;
  CaptureConfig config;
  bool complex_valued = false;

  void validate() const;
  std::size_t length(std::size_t channel) const { return channels[channel].size(); }
};

/// Unfolded samples g[n] and g_Td[n] per channel, for evaluation only.
struct GroundTruth {
  std::array<CVec, kChannels> unfolded;
};

struct SimulatedCapture {
  MultiChannelCapture data;
  GroundTruth truth;
};

struct DifferenceStreams {
  std::array<CVec, kChannels> v;
};

SimulatedCapture capture(const SinusoidalModel& model, const CaptureConfig& cfg);

DifferenceStreams finite_difference(const MultiChannelCapture& capture);
/// First differences of the unfolded ground truth (the g-bar sequences).
std::array<CVec, kChannels> finite_difference(const GroundTruth& truth);
CVec finite_difference(std::span<const cplx> y);

/// Derives an independent stream seed from a base seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Folder with per-event jitter. Fold events are the unit steps of the fold
/// count between the previous input and the current one; each event adds a
/// uniform draw in [-jitter, jitter] to an accumulated offset J, and the
/// output is centered_modulo(x - J). With jitter = 0 this is centered_modulo.
class NonidealFolder {
 public:
  NonidealFolder(FoldThreshold lambda, double jitter, std::uint64_t seed);

  double operator()(double x);
  double accumulated_offset() const { return offset_; }
  std::int64_t events() const { return events_; }

 private:
  FoldThreshold lambda_;
  double jitter_;
  std::mt19937_64 rng_;
  std::int64_t prev_count_ = 0;
  double offset_ = 0.0;
  std::int64_t events_ = 0;
};

/// Single-sample folder starting from rest (fold count 0).
double simulate_nonideal_fold(double x, FoldThreshold lambda, double jitter, std::uint64_t seed);

/// Columnar CSV: channel,n,t_seconds,y_volts[,y_imag_volts] with %.17g-style
/// scientific values (round-trip exact).
void write_capture_csv(std::ostream& os, const MultiChannelCapture& capture);
void write_capture_csv(const std::string& path, const MultiChannelCapture& capture);
MultiChannelCapture read_capture_csv(std::istream& is, const CaptureConfig& cfg);
MultiChannelCapture read_capture_csv(const std::string& path, const CaptureConfig& cfg);

}  // namespace usfspec
