#pragma once

// Noiseless recovery: range unfolding through two co-prime-like thresholds,
// then Prony plus delay-based de-aliasing.

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "usfspec/acquisition.hpp"

namespace usfspec {

struct ResidueSpike {
  std::size_t position = 0;
  std::int64_t folds = 0;       // residue amplitude is 2 lambda folds
  std::int64_t folds_imag = 0;  // imaginary part, complex captures only

  cplx amplitude(double lambda) const {
    return {2.0 * lambda * static_cast<double>(folds), 2.0 * lambda * static_cast<double>(folds_imag)};
  }
};

struct ResidueSpikes {
  std::vector<ResidueSpike> spikes;  // strictly increasing positions
  double threshold = 1.0;
  std::size_t channel = 0;
};

/// Sorted dictionary of every value 2 lb eb - 2 la ea, |ea|, |eb| <= e_max.
class FoldPairTable {
 public:
  struct Pair {
    std::int64_t e_a = 0;
    std::int64_t e_b = 0;
  };

  /// Throws IllConditionedError when the smallest gap between distinct table
  /// values is not above 4 * distortion_bound (or two pairs coincide).
  FoldPairTable(double lambda_a, double lambda_b, int e_max, double distortion_bound = 0.0);

  /// Pair whose value is nearest to d.
  Pair decode(double d) const;
  double value(const Pair& p) const;
  double min_gap() const { return min_gap_; }
  int e_max() const { return e_max_; }

 private:
  struct Entry {
    double value;
    Pair pair;
  };
  double lambda_a_, lambda_b_;
  int e_max_;
  std::vector<Entry> table_;
  double min_gap_ = 0.0;
};

inline constexpr int kDefaultFoldRange = 10;

/// Largest |residue count| for inputs bounded by `peak` volts: floor(peak / lambda_min) + 1.
int fold_range_for_peak(double peak, double lambda_min);

/// Default distortion bound for exact separation: round-off of differences
/// of folded samples at the given thresholds.
double default_distortion_bound(double lambda_a, double lambda_b, int e_max);

/// Splits d[n] = v_b[n] - v_a[n] into residue spikes for both channels.
/// Spike fold counts are residue counts: unfold_channel(v, spikes) = v + 2 lambda folds.
std::pair<ResidueSpikes, ResidueSpikes> separate_residues(std::span<const cplx> v_a,
                                                          std::span<const cplx> v_b,
                                                          double lambda_a, double lambda_b,
                                                          int e_max = kDefaultFoldRange,
                                                          double distortion_bound = -1.0);

CVec unfold_channel(std::span<const cplx> v, const ResidueSpikes& spikes);

struct PronyResult {
  CVec filter;  // h[0] = 1, length K + 1
  CVec roots;   // u_k
};

/// Annihilating filter of order K from one or more sequences sharing modes.
/// Throws RankDeficientError when the Toeplitz system cannot determine K taps.
PronyResult prony(std::span<const CVec> sequences, std::size_t order);
PronyResult prony(std::span<const cplx> sequence, std::size_t order);

/// Least-squares c with g[n] = sum_k c_k u_k^n.
CVec estimate_amplitudes(std::span<const cplx> sequence, std::span<const cplx> roots);

/// Alias band index from the phase advance across the channel delay.
std::vector<double> dealias(std::span<const double> aliased, std::span<const cplx> c_direct,
                            std::span<const cplx> c_delayed, double delay, double omega_s);
double dealias(double aliased, cplx c_direct, cplx c_delayed, double delay, double omega_s);

struct SpectralEstimate {
  std::vector<double> aliased;                   // rad/s, in (-ws/2, ws/2]
  std::array<CVec, kChannels> channel_amplitudes;  // difference-domain c_{k,i}
  CVec roots;                                    // u_k
  std::vector<double> frequencies;               // rad/s
  CVec amplitudes;                               // c_k

  std::size_t size() const { return aliased.size(); }
  /// Evaluates the recovered exponential sum at time t.
  cplx evaluate(double t) const;
};

/// Aliased frequency arg(u)/T mapped to the canonical band.
double aliased_frequency(cplx root, double period);

/// c_k = c_breve_k / (exp(j w_k T) - 1).
CVec time_domain_amplitudes(std::span<const cplx> c_breve, std::span<const double> omega, double period);

// Gauss-Newton polish of shared modes and per-channel amplitudes against
// sum_i ||g_i[n] - sum_k c_{k,i} u_k^n||^2. Steps that do not lower the residual
// are rejected, so the result is never worse than the starting point.
void polish_modes(const std::array<CVec, kChannels>& g, CVec& roots, std::array<CVec, kChannels>& amps,
                  int max_iter = 8);

struct ExactOptions {
  int e_max = kDefaultFoldRange;
  double distortion_bound = -1.0;  // < 0: default_distortion_bound
};

SpectralEstimate recover_exact(const MultiChannelCapture& capture, std::size_t order,
                               const ExactOptions& options = {});

}  // namespace usfspec
