#include <random>

#include "doctest.h"
#include "support.hpp"
#include "usfspec/errors.hpp"
#include "usfspec/numerics.hpp"
#include "usfspec/robust_recovery.hpp"

using namespace usfspec;

namespace {

CVec poly_mul(const CVec& a, const CVec& b) {
  CVec out(a.size() + b.size() - 1, cplx{0.0, 0.0});
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

// H(z) = prod (1 - u_k z), P(z) = sum_k c_k (1 - u_k^L) prod_{j != k} (1 - u_j z).
std::pair<CVec, CVec> rational_form(const CVec& amps, const CVec& roots, std::size_t len) {
  CVec h{1.0};
  for (const auto& u : roots) h = poly_mul(h, {1.0, -u});
  CVec q(roots.size(), cplx{0.0, 0.0});
  for (std::size_t k = 0; k < roots.size(); ++k) {
    CVec term{amps[k] * (1.0 - std::pow(roots[k], static_cast<double>(len)))};
    for (std::size_t j = 0; j < roots.size(); ++j)
      if (j != k) term = poly_mul(term, {1.0, -roots[j]});
    for (std::size_t i = 0; i < term.size(); ++i) q[i] += term[i];
  }
  return {h, q};
}

std::array<CVec, kChannels> four_channels(const CVec& amps, const CVec& roots, std::size_t len) {
  std::array<CVec, kChannels> g;
  for (auto& x : g) x = testing::geometric_sum(amps, roots, len);
  return g;
}

double nearest(const CVec& set, cplx z) {
  double best = 1e300;
  for (const auto& s : set) best = std::min(best, std::abs(s - z));
  return best;
}

}  // namespace

TEST_SUITE("robust_recovery") {

TEST_CASE("estimate_sigma examples") {
  CHECK(estimate_sigma(1.0, 1.0, 1, 0.5) == doctest::Approx(1.0));
  CHECK(estimate_sigma(0.98, 1.88, 6, 2.0) == doctest::Approx(4 * 1.88 / 63.0));
  CHECK(estimate_sigma(0.98, 1.88, 6, 2.0) == doctest::Approx(0.11937).epsilon(1e-4));
  CHECK(estimate_sigma(1.30, 1.46, 6, 4.0) == doctest::Approx(0.18540).epsilon(1e-4));
  CHECK_THROWS_AS(estimate_sigma(1.0, 1.0, 0, 1.0), ConfigError);
  CHECK_THROWS_AS(estimate_sigma(1.0, 1.0, 6, 0.0), ConfigError);
}

TEST_CASE("alpha default and config validation") {
  CHECK(default_alpha(1000.0) == 2.0);
  CHECK(default_alpha(7000.0) == 4.0);
  RobustConfig c;
  CHECK(c.inner_max == 30);
  CHECK(c.restarts == 15);
  CHECK(c.outer_max == 20);
  CHECK_NOTHROW(c.validate());
  c.restarts = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RobustConfig{};
  c.inner_max = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RobustConfig{};
  c.sigma = 0.25;
  CHECK(c.resolved_sigma(0.98, 1.88) == 0.25);
}

TEST_CASE("joint_spectral_fit: noiseless two-mode data") {
  const CVec roots{std::polar(1.0, 0.7), std::polar(1.0, -1.9)};
  const CVec amps{cplx(1.0, 0.5), cplx(-0.8, 0.2)};
  const auto g = four_channels(amps, roots, 40);
  RobustConfig cfg;
  const JointFit fit = joint_spectral_fit(g, 2, 0.01, cfg, 0.1);
  CHECK(fit.state.iteration <= 5);
  for (const auto& u : roots) CHECK(nearest(fit.estimate.roots, u) < 1e-8);
  CHECK(fit.criterion < 1e-8);
  CHECK(fit.state.converged);
  for (std::size_t i = 0; i < kChannels; ++i) CHECK(testing::max_abs_diff(fit.fitted[i], g[0]) < 1e-8);
}

TEST_CASE("joint_spectral_fit: paired amplitudes agree on a capture") {
  CaptureConfig c;
  c.sample_rate = 59.0;
  const SimulatedCapture s = capture(testing::table1_model(8.97), c);
  const auto g = finite_difference(s.truth);
  RobustConfig cfg;
  cfg.unit_modulus = false;
  const JointFit fit = joint_spectral_fit(g, 6, c.period(), cfg, 0.1);
  CHECK(testing::max_abs_diff(fit.estimate.channel_amplitudes[0], fit.estimate.channel_amplitudes[1]) < 1e-8);
  CHECK(testing::max_abs_diff(fit.estimate.channel_amplitudes[2], fit.estimate.channel_amplitudes[3]) < 1e-8);
  REQUIRE_FALSE(fit.objective_trace.empty());
  CHECK(fit.objective_trace.back() <= fit.objective_trace.front());
}

TEST_CASE("joint_spectral_fit: normalization and selection") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd(0.0, 0.05);
  const CVec roots{std::polar(1.0, 0.2), std::polar(1.0, 2.2), std::polar(1.0, -1.0)};
  const CVec amps{1.0, cplx(0.0, 1.0), 0.7};
  auto g = four_channels(amps, roots, 30);
  for (auto& ch : g)
    for (auto& x : ch) x += cplx(nd(rng), nd(rng));
  RobustConfig cfg;
  cfg.restarts = 4;
  cfg.seed = 5;
  const JointFit a = joint_spectral_fit(g, 3, 1.0, cfg, 1e-6);
  cfg.parallel_restarts = true;
  const JointFit b = joint_spectral_fit(g, 3, 1.0, cfg, 1e-6);
  CHECK(a.state.restart == b.state.restart);
  CHECK(a.state.objective == b.state.objective);
  CHECK(testing::max_abs_diff(a.estimate.roots, b.estimate.roots) == 0.0);
  CHECK(a.total_iterations == b.total_iterations);
  CHECK_FALSE(a.state.converged);  // sigma below the noise floor

  cfg.parallel_restarts = false;
  const JointFit c = joint_spectral_fit(g, 3, 1.0, cfg, 0.5);
  cfg.parallel_restarts = true;
  const JointFit d = joint_spectral_fit(g, 3, 1.0, cfg, 0.5);
  CHECK(c.state.converged);
  CHECK(c.state.restart == d.state.restart);
  CHECK(c.total_iterations == d.total_iterations);
  CHECK_THROWS_AS(joint_spectral_fit(g, 20, 1.0, cfg, 0.1), ConfigError);
}

TEST_CASE("amplitude_from_residue") {
  const std::size_t len = 24;
  {
    const CVec roots{std::polar(1.0, 0.9)};
    const auto [h, q] = rational_form({1.0}, roots, len);
    CHECK(std::abs(amplitude_from_residue(h, q, roots[0], len) - 1.0) < 1e-10);
  }
  std::mt19937_64 rng(33);
  const CVec roots{testing::random_unit(rng), testing::random_unit(rng), testing::random_unit(rng)};
  const CVec amps{cplx(1.0, -0.3), cplx(0.2, 0.9), cplx(-1.4, 0.0)};
  const auto [h, q] = rational_form(amps, roots, len);
  const CVec seq = testing::geometric_sum(amps, roots, len);
  const CVec ls = estimate_amplitudes(seq, roots);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(std::abs(amplitude_from_residue(h, q, roots[k], len) - ls[k]) < 1e-8 * std::abs(ls[k]));

  // a pole on the DFT grid falls back to least squares
  const CVec grid_roots{std::polar(1.0, kTwoPi * 5.0 / len), roots[1]};
  const CVec grid_amps{0.6, cplx(0.0, -1.0)};
  const auto [hg, qg] = rational_form(grid_amps, grid_roots, len);
  const CVec gseq = testing::geometric_sum(grid_amps, grid_roots, len);
  const CVec fallback = amplitudes_from_residues(hg, qg, grid_roots, len, gseq);
  CHECK(testing::max_abs_diff(fallback, estimate_amplitudes(gseq, grid_roots)) < 1e-8);
}

TEST_CASE("Tukey amplitude refit ignores residue-sized outliers") {
  const CVec roots{std::polar(1.0, 0.5), std::polar(1.0, -0.5)};
  const CVec amps{1.5, 1.5};
  CVec seq = testing::geometric_sum(amps, roots, 80);
  std::mt19937_64 rng(35);
  std::uniform_int_distribution<int> pos(0, 79);
  for (int i = 0; i < 12; ++i) seq[pos(rng)] += 3.92;
  const CVec plain = estimate_amplitudes(seq, roots);
  const CVec robust = estimate_amplitudes_tukey(seq, roots, 1.96);
  CHECK(testing::max_abs_diff(plain, amps) > 0.05);
  CHECK(testing::max_abs_diff(robust, amps) < 1e-9);
  CHECK_THROWS_AS(estimate_amplitudes_tukey(seq, roots, 0.0), ConfigError);
}

TEST_CASE("objectives agree through Parseval") {
  std::mt19937_64 rng(37);
  std::normal_distribution<double> nd;
  const std::size_t len = 33, k = 3;
  std::array<CVec, kChannels> g;
  for (auto& ch : g) {
    ch.resize(len);
    for (auto& x : ch) x = {nd(rng), nd(rng)};
  }
  const CVec roots{std::polar(0.97, 0.4), std::polar(1.0, 1.9), std::polar(1.02, -2.6)};
  CVec h{1.0};
  for (const auto& u : roots) h = poly_mul(h, {1.0, -u});
  CVec q(kChannels * k);
  for (auto& x : q) x = {nd(rng), nd(rng)};
  std::array<CVec, kChannels> ghat, amps;
  for (std::size_t i = 0; i < kChannels; ++i) {
    ghat[i] = dft(g[i]);
    for (const auto& u : roots)
      amps[i].push_back(amplitude_from_residue(h, std::span<const cplx>(q).subspan(i * k, k), u, len));
  }
  const double fo = frequency_objective(ghat, h, q, k);
  const double to = time_objective(g, roots, amps);
  CHECK(to == doctest::Approx(fo / len).epsilon(1e-9));
}

TEST_CASE("threshold_pair and refine_residues cases") {
  CHECK(threshold_pair(2.0, 0.0, 0.5) == 1.0);
  CHECK(threshold_pair(2.0, 0.3, 0.5) == doctest::Approx(1.15));
  CHECK(threshold_pair(2.0, 1.0, 0.5) == doctest::Approx(1.25));
  CHECK(threshold_pair(2.0, -1.0, 0.5) == doctest::Approx(0.75));

  const double l0 = 0.98, l1 = 1.88, sigma = 0.12;
  std::array<CVec, kChannels> fitted, v;
  // equal fitted channels: u_i = Q((g0 + g1 - 2 v_i) / 2)
  fitted = {CVec{3.0}, CVec{3.0}, CVec{-1.0}, CVec{-1.0}};
  v = {CVec{0.9}, CVec{-0.7}, CVec{0.2}, CVec{0.8}};
  ResidueVectors r = refine_residues(fitted, v, l0, l1, sigma);
  CHECK(r.u[0][0].real() == quantize_grid(0.5 * (6.0 - 1.8), FoldThreshold(l0)));
  CHECK(r.u[1][0].real() == quantize_grid(0.5 * (6.0 + 1.4), FoldThreshold(l1)));
  CHECK(r.u[2][0].real() == quantize_grid(0.5 * (-2.0 - 0.4), FoldThreshold(l0)));

  // zeta = 2 sigma: clamp at sigma
  fitted = {CVec{3.0 + sigma}, CVec{3.0 - sigma}, CVec{0.0}, CVec{0.0}};
  const ResidueVectors relaxed = refine_residues_relaxed(fitted, v, sigma);
  const double eta0 = 6.0 - 2 * 0.9, eta1 = 6.0 + 2 * 0.7;
  CHECK(relaxed.u[0][0].real() == doctest::Approx(0.5 * (eta0 + sigma)));
  CHECK(relaxed.u[1][0].real() == doctest::Approx(0.5 * (eta1 - sigma)));
  r = refine_residues(fitted, v, l0, l1, sigma);
  CHECK(r.u[0][0].real() == quantize_grid(0.5 * (eta0 + sigma), FoldThreshold(l0)));
  CHECK(r.u[1][0].real() == quantize_grid(0.5 * (eta1 - sigma), FoldThreshold(l1)));

  fitted[0] = CVec{1.0, 2.0};
  CHECK_THROWS_AS(refine_residues_relaxed(fitted, v, sigma), ConfigError);
}

TEST_CASE("relaxed residues meet the agreement constraint") {
  std::mt19937_64 rng(39);
  std::normal_distribution<double> nd(0.0, 2.0);
  std::array<CVec, kChannels> fitted, v;
  for (std::size_t i = 0; i < kChannels; ++i) {
    fitted[i].resize(200);
    v[i].resize(200);
    for (auto& x : fitted[i]) x = nd(rng);
    for (auto& x : v[i]) x = nd(rng);
  }
  const double sigma = 0.3;
  const ResidueVectors r = refine_residues_relaxed(fitted, v, sigma);
  std::array<CVec, kChannels> g;
  for (std::size_t i = 0; i < kChannels; ++i) {
    g[i] = v[i];
    for (std::size_t n = 0; n < 200; ++n) g[i][n] += r.u[i][n];
  }
  CHECK(channel_agreement(g) <= sigma + 1e-12);
}

TEST_CASE("recover_robust: noiseless capture matches the exact path") {
  CaptureConfig c;
  c.sample_rate = 29.0;
  const MultiChannelCapture data = capture(testing::table1_model(8.82), c).data;
  const SpectralEstimate exact = recover_exact(data, 6);
  RobustConfig cfg;
  const RobustResult robust = recover_robust(data, 6, cfg);
  CHECK(robust.diagnostics.converged);
  CHECK(robust.diagnostics.outer_iterations == 1);
  CHECK(robust.diagnostics.final_criterion < 1e-10);
  CHECK(robust.diagnostics.sigma == doctest::Approx(estimate_sigma(0.98, 1.88, 6, 2.0)));
  std::vector<double> a = exact.frequencies, b = robust.estimate.frequencies;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-8 * std::abs(a[k]));
  for (std::size_t i = 0; i < kChannels; ++i) {
    const double step = 2 * c.threshold(i);
    for (const auto& u : robust.residues.u[i]) CHECK(std::abs(u.real() / step - std::round(u.real() / step)) < 1e-9);
  }
}

TEST_CASE("recover_robust: mild noise is removed") {
  CaptureConfig c;
  c.sample_rate = 29.0;
  c.bit_depth = 6;
  c.noise_sd = 0.02;
  c.seed = 4;
  const SinusoidalModel m = testing::table1_model(8.82);
  RobustConfig cfg;
  const RobustResult r = recover_robust(capture(m, c).data, 6, cfg);
  std::vector<double> truth = m.frequencies, est = r.estimate.frequencies;
  std::sort(truth.begin(), truth.end());
  std::sort(est.begin(), est.end());
  double e2 = 0.0;
  for (std::size_t k = 0; k < 6; ++k) e2 += std::pow((truth[k] - est[k]) / kTwoPi * 1e-3, 2);
  CHECK(e2 < 1e-8);
}

}  // TEST_SUITE
