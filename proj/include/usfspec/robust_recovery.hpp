#pragma once

// Robust recovery: alternating minimization between a joint rational fit of
// the four channel spectra (shared denominator) and closed-form residue
// refinement under an infinity-norm channel-agreement constraint.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "usfspec/exact_recovery.hpp"

namespace usfspec {

/// sigma = 2 alpha max(lambda0, lambda1) / (2^B - 1).
double estimate_sigma(double lambda0, double lambda1, int bits, double alpha);

/// alpha = 4 when the highest tone is above 1 kHz, 2 otherwise.
double default_alpha(double max_frequency_hz);

struct RobustConfig {
  double sigma = 0.0;  // <= 0: derived from estimate_sigma(lambda0, lambda1, bit_depth, alpha)
  double alpha = 2.0;
  int bit_depth = 6;
  int inner_max = 30;  // j_max
  int restarts = 15;
  int outer_max = 20;
  double tol_root = 1e-8;
  double objective_rtol = 1e-10;
  int e_max = kDefaultFoldRange;
  std::uint64_t seed = 0;
  bool parallel_restarts = false;
  bool unit_modulus = true;  // snap fitted modes to |u| = 1 and refit amplitudes by least squares
  // Tukey cutoff (volts) for the amplitude refit after the snap; 0 keeps plain
  // least squares, < 0 means 2 min(lambda0, lambda1) inside recover_robust.
  double outlier_cutoff = -1.0;

  void validate() const;
  double resolved_sigma(double lambda0, double lambda1) const;
};

struct RationalFitState {
  CVec h;  // denominator, K + 1 coefficients, ascending powers of z
  CVec q;  // four stacked numerators, K coefficients each
  int iteration = 0;
  int restart = 0;
  double objective = 0.0;  // frequency-domain fit objective
  bool converged = false;  // channel-agreement criterion met
};

struct JointFit {
  SpectralEstimate estimate;  // aliased, roots and channel amplitudes filled in
  RationalFitState state;
  std::array<CVec, kChannels> fitted;  // re-synthesized g-bar sequences
  double criterion = 0.0;               // max(||g0 - g1||inf, ||g2 - g3||inf) on `fitted`
  std::vector<double> objective_trace;  // per iteration of the selected restart
  int total_iterations = 0;
};

/// max(||a0 - a1||inf, ||a2 - a3||inf).
double channel_agreement(const std::array<CVec, kChannels>& g);

/// sum_i sum_m |g_hat_i[m] - P_i(z_m) / H(z_m)|^2 with z_m = exp(-j 2 pi m / L).
double frequency_objective(const std::array<CVec, kChannels>& gbar_hat, std::span<const cplx> h,
                           std::span<const cplx> q, std::size_t order);

/// sum_i ||g_i - Theta c_i||^2.
double time_objective(const std::array<CVec, kChannels>& gbar, std::span<const cplx> roots,
                      const std::array<CVec, kChannels>& amplitudes);

/// c_{k,i} = -u_k P_i(1/u_k) / ((1 - u_k^L) H'(1/u_k)); channels whose poles sit
/// on the DFT grid (|1 - u^L| < 1e-10) fall back to least squares on `sequence`.
CVec amplitudes_from_residues(std::span<const cplx> h, std::span<const cplx> q_i, std::span<const cplx> roots,
                              std::size_t length, std::span<const cplx> sequence);
cplx amplitude_from_residue(std::span<const cplx> h, std::span<const cplx> q_i, cplx root, std::size_t length);

/// Least-squares amplitudes reweighted with Tukey's biweight at `cutoff`, so
/// samples off by a residue step stop pulling the fit. Falls back to the plain
/// fit when fewer than 2K samples keep nonzero weight.
CVec estimate_amplitudes_tukey(std::span<const cplx> sequence, std::span<const cplx> roots, double cutoff,
                               int max_iter = 30);

/// Multi-start iteratively reweighted rational fit of the four channels.
/// `initial_h`, when given, seeds restart 0; other restarts draw random
/// unit-circle roots. Each restart iterates until the objective settles; the
/// restarts stop at the first one whose fit meets the channel-agreement
/// criterion, otherwise the lowest objective is returned with
/// state.converged = false.
JointFit joint_spectral_fit(const std::array<CVec, kChannels>& gbar, std::size_t order, double period,
                            const RobustConfig& cfg, double sigma,
                            const std::optional<CVec>& initial_h = std::nullopt);

/// T_sigma(x, y) = (x + sgn(y) min(|y|, sigma)) / 2.
double threshold_pair(double x, double y, double sigma);

struct ResidueVectors {
  std::array<CVec, kChannels> u;
};

/// Closed-form minimizer of the relaxed residue problem, before grid snapping.
ResidueVectors refine_residues_relaxed(const std::array<CVec, kChannels>& fitted,
                                       const std::array<CVec, kChannels>& v, double sigma);
/// Relaxed minimizer snapped to 2 lambda_i Z.
ResidueVectors refine_residues(const std::array<CVec, kChannels>& fitted, const std::array<CVec, kChannels>& v,
                               double lambda0, double lambda1, double sigma);

struct RobustDiagnostics {
  bool converged = false;
  int outer_iterations = 0;
  int inner_iterations = 0;  // summed over outer iterations
  double final_criterion = 0.0;
  double sigma = 0.0;
  std::vector<double> criterion_trace;  // per outer iteration
  std::vector<double> objective_trace;  // fit objective per outer iteration
};

struct RobustResult {
  SpectralEstimate estimate;
  RationalFitState fit_state;
  ResidueVectors residues;
  std::array<CVec, kChannels> recovered;  // u + v
  RobustDiagnostics diagnostics;
};

RobustResult recover_robust(const MultiChannelCapture& capture, std::size_t order, const RobustConfig& cfg);

}  // namespace usfspec
