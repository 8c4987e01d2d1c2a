// Randomized invariants, 1000 cases each under fixed seeds.

#include <random>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "usfspec/batch.hpp"
#include "usfspec/errors.hpp"
#include "usfspec/harness.hpp"
#include "usfspec/numerics.hpp"
#include "usfspec/robust_recovery.hpp"

using namespace usfspec;

namespace {

constexpr int kCases = 1000;

std::mt19937_64 rng_for(std::uint64_t tag) { return std::mt19937_64(0x5eed0000ULL + tag); }

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

CVec random_cvec(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  CVec v(n);
  for (auto& x : v) x = {nd(rng), nd(rng)};
  return v;
}

// Real model of `tones` random sinusoids below f_max.
SinusoidalModel random_real_model(std::mt19937_64& rng, int tones, double f_max, double peak) {
  std::vector<double> f, a, ph;
  for (int t = 0; t < tones; ++t) {
    double cand;
    bool ok;
    do {
      cand = uniform(rng, 0.05 * f_max, f_max);
      ok = true;
      for (double x : f) ok = ok && std::abs(x - cand) > 0.02 * f_max;
    } while (!ok);
    f.push_back(cand);
    a.push_back(peak / tones);
    ph.push_back(uniform(rng, -kPi, kPi));
  }
  return SinusoidalModel::from_real_tones(f, a, ph);
}

}  // namespace

TEST_SUITE("properties") {

TEST_CASE("modulo: range, congruence and periodicity") {
  auto rng = rng_for(1);
  for (int i = 0; i < kCases; ++i) {
    const double l = uniform(rng, 0.01, 5.0);
    const FoldThreshold lam(l);
    const double x = uniform(rng, -100.0, 100.0);
    const double y = centered_modulo(x, lam);
    CHECK(y >= -l);
    CHECK(y < l);
    const double k = (x - y) / (2 * l);
    CHECK(std::abs(k - std::round(k)) < 1e-9);
    // dyadic lambda and x keep x + 2 lambda m exact, so periodicity must hold exactly
    const double ld = std::uniform_int_distribution<int>(1, 320)(rng) / 64.0;
    const double xd = std::uniform_int_distribution<int>(-102400, 102400)(rng) / 1024.0;
    const auto m = std::uniform_int_distribution<int>(-1000000, 1000000)(rng);
    const FoldThreshold dl(ld);
    CHECK(centered_modulo(xd + 2.0 * ld * m, dl) == centered_modulo(xd, dl));
  }
}

TEST_CASE("grid quantizer is idempotent") {
  auto rng = rng_for(2);
  for (int i = 0; i < kCases; ++i) {
    const FoldThreshold lam(uniform(rng, 0.01, 5.0));
    const double q = quantize_grid(uniform(rng, -50.0, 50.0), lam);
    CHECK(quantize_grid(q, lam) == q);
  }
}

TEST_CASE("conjugate-pair models evaluate real") {
  auto rng = rng_for(3);
  for (int i = 0; i < kCases; ++i) {
    const SinusoidalModel m = random_real_model(rng, 1 + i % 4, 5000.0, 10.0);
    double l1 = 0.0;
    for (const auto& c : m.amplitudes) l1 += std::abs(c);
    // 10 points per case, 10^4 points overall
    for (int t = 0; t < 10; ++t) CHECK(std::abs(evaluate_signal(m, uniform(rng, -1.0, 1.0)).imag()) <= 1e-12 * l1);
  }
}

TEST_CASE("captures: channel consistency, delay consistency, determinism") {
  auto rng = rng_for(4);
  for (int i = 0; i < kCases; ++i) {
    const SinusoidalModel m = random_real_model(rng, 3, 2000.0, uniform(rng, 0.5, 9.0));
    CaptureConfig c;
    c.sample_rate = uniform(rng, 10.0, 1000.0);
    c.counts.fill(16);
    c.delay = uniform(rng, 10e-6, 240e-6);
    c.lambda0 = uniform(rng, 0.5, 1.5);
    c.lambda1 = c.lambda0 * uniform(rng, 1.2, 2.0);
    c.seed = i;
    const SimulatedCapture s = capture(m, c);
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
      const double step = 2 * c.threshold(ch);
      for (std::size_t n = 0; n < 16; ++n) {
        const double k = (s.truth.unfolded[ch][n] - s.data.channels[ch][n]).real() / step;
        CHECK(std::abs(k - std::round(k)) < 1e-9);
      }
    }
    const CVec shifted = sample(m, SamplingGrid{c.period(), 16, c.delay});
    CHECK(testing::max_abs_diff(shifted, s.truth.unfolded[2]) == 0.0);
    if (i % 10 == 0) {
      c.noise_sd = 0.1;
      c.fold_jitter = 0.05;
      c.bit_depth = 6;
      const auto a = capture(m, c), b = capture(m, c);
      for (std::size_t ch = 0; ch < kChannels; ++ch) CHECK(a.data.channels[ch] == b.data.channels[ch]);
    }
  }
}

TEST_CASE("Parseval") {
  auto rng = rng_for(5);
  for (int i = 0; i < kCases; ++i) {
    const std::size_t n = 1 + i % 64;
    const CVec x = random_cvec(rng, n);
    double ex = 0.0, ef = 0.0;
    for (const auto& v : x) ex += std::norm(v);
    for (const auto& v : dft(x)) ef += std::norm(v);
    CHECK(std::abs(ef - n * ex) <= 1e-10 * n * ex);
  }
}

TEST_CASE("roots invert expansion for separated unit-circle roots") {
  auto rng = rng_for(6);
  for (int i = 0; i < kCases; ++i) {
    const std::size_t k = 1 + i % 12;
    CVec r;
    while (r.size() < k) {
      const cplx cand = testing::random_unit(rng);
      bool ok = true;
      for (const auto& x : r) ok = ok && std::abs(x - cand) > 0.05;
      if (ok) r.push_back(cand);
    }
    const CVec found = roots(Polynomial::from_roots(r));
    REQUIRE(found.size() == k);
    double worst = 0.0;
    for (const auto& u : r) {
      double best = 1e300;
      for (const auto& z : found) best = std::min(best, std::abs(z - u));
      worst = std::max(worst, best);
    }
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("constrained update: stationarity and normalization") {
  auto rng = rng_for(7);
  for (int i = 0; i < kCases; ++i) {
    const Eigen::Index rows = 8 + i % 8, kh = 2 + i % 3, kq = 1 + i % 2;
    std::vector<CMatrix> blocks;
    CMatrix a(4 * rows, kh), b = CMatrix::Zero(4 * rows, 4 * kq);
    CMatrix bb(rows, kq);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < kq; ++c) bb(r, c) = random_cvec(rng, 1)[0];
    for (int blk = 0; blk < 4; ++blk) {
      CMatrix m(rows, kh);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < kh; ++c) m(r, c) = random_cvec(rng, 1)[0];
      blocks.push_back(m);
      a.middleRows(blk * rows, rows) = m;
      b.block(blk * rows, blk * kq, rows, kq) = bb;
    }
    const CVector h0 = to_eigen(random_cvec(rng, kh));
    const ConstrainedUpdate up = constrained_lstsq_update_blocked(blocks, bb, h0);
    REQUIRE_FALSE(up.restart_needed);
    CHECK(std::abs(h0.dot(up.h) - 1.0) < 1e-10);
    // grad of ||A h - B q||^2 - kappa (h0^H h - 1): [A^H r - kappa h0; -B^H r] = 0
    const CVector r = a * up.h - b * up.q;
    const CVector gh = a.adjoint() * r - up.kappa * h0;
    const CVector gq = b.adjoint() * r;
    const double scale = (a.adjoint() * a).norm() * up.h.norm() + 1.0;
    CHECK(gh.norm() < 1e-9 * scale);
    CHECK(gq.norm() < 1e-9 * scale);
  }
}

TEST_CASE("residue uniqueness against exhaustive enumeration") {
  auto rng = rng_for(8);
  std::vector<std::pair<double, double>> pairs{{0.98, 1.88}};
  while (pairs.size() < 21) {
    const double la = uniform(rng, 0.5, 2.0), lb = uniform(rng, 0.5, 2.0);
    try {
      if (FoldPairTable(la, lb, 5).min_gap() > 1e-3) pairs.emplace_back(la, lb);
    } catch (const IllConditionedError&) {
    }
  }
  std::uniform_int_distribution<int> e(-5, 5);
  for (int i = 0; i < kCases; ++i) {
    const auto [la, lb] = pairs[i % pairs.size()];
    const int ea = e(rng), eb = e(rng);
    const double d = 2 * lb * eb - 2 * la * ea;
    int hits = 0;
    for (int a = -5; a <= 5; ++a)
      for (int b = -5; b <= 5; ++b)
        if (std::abs(d - (2 * lb * b - 2 * la * a)) < 1e-12) ++hits;
    CHECK(hits == 1);
    const auto p = FoldPairTable(la, lb, 5).decode(d);
    CHECK(p.e_a == ea);
    CHECK(p.e_b == eb);
  }
}

TEST_CASE("annihilation up to K = 8") {
  auto rng = rng_for(9);
  for (int i = 0; i < kCases; ++i) {
    const std::size_t k = 1 + i % 8;
    CVec modes;
    while (modes.size() < k) {
      const cplx cand = testing::random_unit(rng);
      bool ok = true;
      for (const auto& x : modes) ok = ok && std::abs(x - cand) > 0.1;
      if (ok) modes.push_back(cand);
    }
    CVec amps(k);
    for (auto& a : amps) a = testing::random_unit(rng) * uniform(rng, 0.5, 2.0);
    const CVec g = testing::geometric_sum(amps, modes, 4 * k + 4);
    const PronyResult pr = prony(g, k);
    double gmax = 0.0, res = 0.0;
    for (const auto& x : g) gmax = std::max(gmax, std::abs(x));
    for (std::size_t n = k; n < g.size(); ++n) {
      cplx acc{0.0, 0.0};
      for (std::size_t m = 0; m <= k; ++m) acc += pr.filter[m] * g[n - m];
      res = std::max(res, std::abs(acc));
    }
    CHECK(res < 1e-8 * gmax);
  }
}

TEST_CASE("sampling-rate independence of exact recovery") {
  auto rng = rng_for(10);
  const SinusoidalModel base{{cplx(1.0, 0.3), cplx(-0.6, 0.9), cplx(1.4, -0.2)}, {1.0, 2.0, 3.0}};
  int done = 0;
  while (done < kCases) {
    const double fs = std::exp(uniform(rng, std::log(10.0), std::log(1e4)));
    const double ws = kTwoPi * fs;
    SinusoidalModel m = base;
    m.frequencies = {ws * 37.113, -ws * 211.487, ws * 5.62};
    const double wmax = ws * 211.487;
    const double td = 0.9 * kPi / wmax;
    const double ratio = td * fs;
    if (ratio >= 0.5 && std::abs(ratio - std::round(ratio)) < 1e-9) continue;
    std::vector<double> nu;
    for (double w : m.frequencies) nu.push_back(wrap_to_band(w, ws));
    bool collide = false;
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = a + 1; b < 3; ++b) collide = collide || std::abs(nu[a] - nu[b]) < 1e-3 * ws;
    if (collide) continue;
    CaptureConfig c;
    c.sample_rate = fs;
    c.delay = td;
    c.counts = {7, 7, 4, 4};
    const SpectralEstimate est = recover_exact(capture(m, c).data, 3);
    for (double w : m.frequencies) {
      double best = 1e300;
      for (double e : est.frequencies) best = std::min(best, std::abs(e - w));
      CHECK(best < 1e-6 * std::abs(w));
    }
    ++done;
  }
}

TEST_CASE("one sample below the bound is rank deficient") {
  auto rng = rng_for(11);
  for (int i = 0; i < kCases; ++i) {
    const std::size_t k = 1 + i % 5;
    SinusoidalModel m;
    for (std::size_t j = 0; j < k; ++j) {
      m.amplitudes.push_back(testing::random_unit(rng));
      m.frequencies.push_back(kTwoPi * (3.0 + 11.0 * j + uniform(rng, 0.0, 5.0)));
    }
    CaptureConfig c;
    c.sample_rate = 200.0;
    c.delay = 1e-3;
    c.counts = {2 * k, 2 * k, k + 1, k + 1};
    CHECK_THROWS_AS(recover_exact(capture(m, c).data, k), RankDeficientError);
  }
}

TEST_CASE("closed-form residue refinement: KKT, case partition, feasibility") {
  auto rng = rng_for(12);
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int i = 0; i < kCases; ++i) {
    const double sigma = uniform(rng, 0.01, 1.0);
    std::array<CVec, kChannels> g, v;
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
      g[ch] = {cplx(nd(rng), 0.0)};
      v[ch] = {cplx(nd(rng), 0.0)};
    }
    const ResidueVectors r = refine_residues_relaxed(g, v, sigma);
    for (std::size_t p = 0; p < 2; ++p) {
      const std::size_t a = 2 * p, b = a + 1;
      const double g0 = g[a][0].real(), g1 = g[b][0].real();
      const double w0 = r.u[a][0].real() + v[a][0].real(), w1 = r.u[b][0].real() + v[b][0].real();
      // feasibility
      CHECK(std::abs(w0 - w1) <= sigma + 1e-12);
      // KKT of min (w0-g0)^2 + (w1-g1)^2 s.t. -sigma <= w0 - w1 <= sigma
      const double mu_hi = std::max(0.0, -2 * (w0 - g0)), mu_lo = std::max(0.0, 2 * (w0 - g0));
      CHECK(std::abs((w0 - g0) + (w1 - g1)) < 1e-9);
      CHECK(std::abs(mu_hi * (w0 - w1 - sigma)) < 1e-9);
      CHECK(std::abs(mu_lo * (w1 - w0 - sigma)) < 1e-9);
      const double f = (w0 - g0) * (w0 - g0) + (w1 - g1) * (w1 - g1);
      int worse = 0;
      for (int t = 0; t < 1000; ++t) {
        const double p0 = w0 + uniform(rng, -0.5, 0.5), p1 = w1 + uniform(rng, -0.5, 0.5);
        if (std::abs(p0 - p1) > sigma) continue;
        if ((p0 - g0) * (p0 - g0) + (p1 - g1) * (p1 - g1) < f - 1e-12) ++worse;
      }
      CHECK(worse == 0);
      // exactly one case applies and its formula matches bit for bit
      const double zeta = g0 - g1;
      const int cases = (std::abs(zeta) < sigma) + (zeta <= -sigma) + (zeta >= sigma);
      CHECK(cases == 1);
      for (std::size_t ch : {a, b}) {
        const double s = ch == a ? 1.0 : -1.0;
        const double eta = (g0 + g1) - 2.0 * v[ch][0].real();
        double expect;
        if (std::abs(zeta) < sigma) expect = 0.5 * (eta + s * zeta);
        else if (zeta <= -sigma) expect = 0.5 * (eta - s * sigma);
        else expect = 0.5 * (eta + s * sigma);
        CHECK(r.u[ch][0].real() == expect);
      }
    }
  }
}

TEST_CASE("fit objectives agree in time and frequency") {
  auto rng = rng_for(13);
  for (int i = 0; i < kCases; ++i) {
    const std::size_t len = 12 + i % 20, k = 1 + i % 3;
    std::array<CVec, kChannels> g, ghat, amps;
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
      g[ch] = random_cvec(rng, len);
      ghat[ch] = dft(g[ch]);
    }
    CVec rts;
    for (std::size_t j = 0; j < k; ++j) rts.push_back(testing::random_unit(rng) * uniform(rng, 0.9, 1.1));
    const CVec h = Polynomial::from_roots(rts).reversed().coefficients();  // prod (1 - u z)
    const CVec q = random_cvec(rng, kChannels * k);
    for (std::size_t ch = 0; ch < kChannels; ++ch)
      for (const auto& u : rts)
        amps[ch].push_back(amplitude_from_residue(h, std::span<const cplx>(q).subspan(ch * k, k), u, len));
    const double fo = frequency_objective(ghat, h, q, k);
    CHECK(std::abs(time_objective(g, rts, amps) - fo / len) <= 1e-9 * fo / len);
  }
}

TEST_CASE("noiseless fixed point of the robust alternation") {
  auto rng = rng_for(14);
  RobustConfig cfg;
  for (int i = 0; i < kCases; ++i) {
    const SinusoidalModel m = random_real_model(rng, 1 + i % 3, 2000.0, uniform(rng, 0.5, 9.0));
    CaptureConfig c;
    c.sample_rate = uniform(rng, 20.0, 900.0);
    c.counts.fill(40);
    std::vector<double> nu;
    for (double w : m.frequencies) nu.push_back(wrap_to_band(w, c.omega_s()));
    bool collide = false;
    for (std::size_t a = 0; a < nu.size(); ++a)
      for (std::size_t b = a + 1; b < nu.size(); ++b)
        collide = collide || std::abs(nu[a] - nu[b]) < 0.05 * c.omega_s();
    for (double x : nu) collide = collide || std::abs(x) < 0.02 * c.omega_s() || std::abs(std::abs(x) - c.omega_s() / 2) < 0.02 * c.omega_s();
    if (collide) {
      --i;
      continue;
    }
    cfg.seed = i;
    const RobustResult r = recover_robust(capture(m, c).data, m.size(), cfg);
    CHECK(r.diagnostics.outer_iterations == 1);
    CHECK(r.diagnostics.final_criterion < 1e-10);
  }
}

TEST_CASE("matching and report determinism") {
  auto rng = rng_for(15);
  for (int i = 0; i < kCases; ++i) {
    std::vector<double> truth, est;
    for (int k = 0; k < 3; ++k) {
      truth.push_back(uniform(rng, 1.0, 1e4));
      est.push_back(truth.back() + uniform(rng, -1.0, 1.0));
      est.push_back(-est.back());
    }
    const auto base = match_frequencies(truth, est, true);
    std::shuffle(est.begin(), est.end(), rng);
    std::shuffle(truth.begin(), truth.end(), rng);
    CHECK(match_frequencies(truth, est, true) == base);
  }
  const auto spec = parse_specs(R"({"id": "d", "seed": 9, "repetitions": 4,
    "model": {"f_hz": [400, 700, 1000], "g_inf_v": 8.9},
    "capture": {"f_s_hz": 89, "N": 100, "lambda0_v": 0.98, "lambda1_v": 1.88, "bit_depth": 6, "noise_sd_v": 0.02}})");
  std::ostringstream a, b;
  write_report_csv(a, run_suite(spec, Execution::parallel));
  write_report_csv(b, run_suite(spec, Execution::serial));
  CHECK(a.str() == b.str());
}

}  // TEST_SUITE
