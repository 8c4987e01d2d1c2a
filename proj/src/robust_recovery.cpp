#include "usfspec/robust_recovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <omp.h>

#include "usfspec/errors.hpp"
#include "usfspec/numerics.hpp"

namespace usfspec {

double estimate_sigma(double lambda0, double lambda1, int bits, double alpha) {
  if (bits < 1) throw ConfigError("estimate_sigma: bit depth must be at least 1");
  if (!(alpha > 0.0)) throw ConfigError("estimate_sigma: alpha must be positive");
  return 2.0 * alpha * std::max(std::abs(lambda0), std::abs(lambda1)) / (std::ldexp(1.0, bits) - 1.0);
}

double default_alpha(double max_frequency_hz) { return std::abs(max_frequency_hz) > 1000.0 ? 4.0 : 2.0; }

void RobustConfig::validate() const {
  if (inner_max < 1) throw ConfigError("robust config: inner_max must be at least 1");
  if (restarts < 1) throw ConfigError("robust config: restarts must be at least 1");
  if (outer_max < 1) throw ConfigError("robust config: outer_max must be at least 1");
  if (sigma <= 0.0 && (bit_depth < 1 || !(alpha > 0.0)))
    throw ConfigError("robust config: need sigma > 0 or a valid (bit_depth, alpha)");
  if (e_max < 1) throw ConfigError("robust config: e_max must be at least 1");
}

double RobustConfig::resolved_sigma(double lambda0, double lambda1) const {
  return sigma > 0.0 ? sigma : estimate_sigma(lambda0, lambda1, bit_depth, alpha);
}

CVec estimate_amplitudes_tukey(std::span<const cplx> sequence, std::span<const cplx> roots, double cutoff,
                               int max_iter) {
  if (!(cutoff > 0.0)) throw ConfigError("estimate_amplitudes_tukey: cutoff must be positive");
  CVec c = estimate_amplitudes(sequence, roots);
  const std::size_t k = roots.size();
  const auto rows = static_cast<Eigen::Index>(sequence.size());
  CMatrix theta(rows, static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) {
    cplx p{1.0, 0.0};
    for (Eigen::Index n = 0; n < rows; ++n) {
      theta(n, static_cast<Eigen::Index>(j)) = p;
      p *= roots[j];
    }
  }
  CVector x = to_eigen(c);
  for (int it = 0; it < max_iter; ++it) {
    const CVector r = to_eigen(sequence) - theta * x;
    Eigen::VectorXd w(rows);
    Eigen::Index kept = 0;
    for (Eigen::Index n = 0; n < rows; ++n) {
      const double t = std::abs(r(n)) / cutoff;
      w(n) = t < 1.0 ? 1.0 - t * t : 0.0;  // sqrt of the biweight
      if (w(n) > 0.0) ++kept;
    }
    if (kept < static_cast<Eigen::Index>(2 * k)) break;
    const CVector next = lstsq(w.cast<cplx>().asDiagonal() * theta, w.cast<cplx>().cwiseProduct(to_eigen(sequence)));
    const double step = (next - x).norm();
    x = next;
    if (step <= 1e-12 * (1.0 + x.norm())) break;
  }
  return to_std(x);
}

double channel_agreement(const std::array<CVec, kChannels>& g) {
  double worst = 0.0;
  for (std::size_t p = 0; p < 2; ++p) {
    const CVec& a = g[2 * p];
    const CVec& b = g[2 * p + 1];
    if (a.size() != b.size()) throw ConfigError("channel_agreement: length mismatch");
    for (std::size_t n = 0; n < a.size(); ++n) worst = std::max(worst, std::abs(a[n] - b[n]));
  }
  return worst;
}

namespace {

cplx poly_eval(std::span<const cplx> c, cplx z) {
  cplx acc{0.0, 0.0};
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * z + *it;
  return acc;
}

cplx poly_derivative_eval(std::span<const cplx> c, cplx z) {
  cplx acc{0.0, 0.0};
  for (std::size_t i = c.size(); i-- > 1;) acc = acc * z + static_cast<double>(i) * c[i];
  return acc;
}

CVec synthesize(std::span<const cplx> amplitudes, std::span<const cplx> roots, std::size_t length) {
  CVec out(length, cplx(0.0, 0.0));
  for (std::size_t k = 0; k < roots.size(); ++k) {
    cplx p = amplitudes[k];
    for (std::size_t n = 0; n < length; ++n) {
      out[n] += p;
      p *= roots[k];
    }
  }
  return out;
}

}  // namespace

double frequency_objective(const std::array<CVec, kChannels>& gbar_hat, std::span<const cplx> h,
                           std::span<const cplx> q, std::size_t order) {
  const std::size_t len = gbar_hat[0].size();
  if (h.size() != order + 1 || q.size() != kChannels * order)
    throw ConfigError("frequency_objective: coefficient length mismatch");
  double acc = 0.0;
  for (std::size_t m = 0; m < len; ++m) {
    const cplx z = std::polar(1.0, -kTwoPi * static_cast<double>(m) / static_cast<double>(len));
    const cplx hz = poly_eval(h, z);
    for (std::size_t i = 0; i < kChannels; ++i) {
      const cplx pz = poly_eval(q.subspan(i * order, order), z);
      acc += std::norm(gbar_hat[i][m] - pz / hz);
    }
  }
  return acc;
}

double time_objective(const std::array<CVec, kChannels>& gbar, std::span<const cplx> roots,
                      const std::array<CVec, kChannels>& amplitudes) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kChannels; ++i) {
    const CVec model = synthesize(amplitudes[i], roots, gbar[i].size());
    for (std::size_t n = 0; n < model.size(); ++n) acc += std::norm(gbar[i][n] - model[n]);
  }
  return acc;
}

cplx amplitude_from_residue(std::span<const cplx> h, std::span<const cplx> q_i, cplx root, std::size_t length) {
  const cplx w = 1.0 / root;
  const cplx edge = 1.0 - std::pow(root, static_cast<double>(length));
  return -root * poly_eval(q_i, w) / (edge * poly_derivative_eval(h, w));
}

CVec amplitudes_from_residues(std::span<const cplx> h, std::span<const cplx> q_i, std::span<const cplx> roots,
                              std::size_t length, std::span<const cplx> sequence) {
  for (const auto& u : roots)
    if (std::abs(1.0 - std::pow(u, static_cast<double>(length))) < 1e-10)
      return estimate_amplitudes(sequence, roots);
  CVec out(roots.size());
  for (std::size_t k = 0; k < roots.size(); ++k) out[k] = amplitude_from_residue(h, q_i, roots[k], length);
  return out;
}

namespace {

struct RestartOutcome {
  bool valid = false;
  JointFit fit;
};

CVec random_denominator(std::size_t order, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> theta(-kPi, kPi);
  CVec r(order);
  for (auto& x : r) x = std::polar(1.0, theta(rng));
  return Polynomial::from_roots(r).coefficients();
}

CVec normalized(CVec h) {
  double s = 0.0;
  for (const auto& c : h) s += std::norm(c);
  s = std::sqrt(s);
  for (auto& c : h) c /= s;
  return h;
}

struct FitContext {
  const std::array<CVec, kChannels>& gbar;
  std::array<CVec, kChannels> ghat;
  std::size_t order;
  std::size_t length;
  double period;
  double sigma;
  const RobustConfig& cfg;
  CMatrix vh;  // L x (K+1)
  CMatrix vq;  // L x K
  double energy = 0.0;  // sum of |g_hat|^2 over channels
};

RestartOutcome run_restart(const FitContext& ctx, const CVec& h_init, int restart) {
  const std::size_t k = ctx.order;
  const auto len = static_cast<Eigen::Index>(ctx.length);
  const CVector h0 = to_eigen(normalized(h_init));
  CVector h_prev = h0;
  double prev_obj = std::numeric_limits<double>::infinity();

  RestartOutcome out;
  std::vector<double> trace;
  struct Iterate {
    CVec h, q, roots;
    double objective;
    int iteration;
  };
  std::optional<Iterate> last;
  for (int j = 1; j <= ctx.cfg.inner_max; ++j) {
    CVector hgrid = ctx.vh * h_prev;
    const double floor = 1e-12 * h_prev.cwiseAbs().sum();
    for (Eigen::Index m = 0; m < len; ++m) {
      const double mag = std::abs(hgrid(m));
      if (mag < floor) hgrid(m) = mag == 0.0 ? cplx(floor, 0.0) : hgrid(m) * (floor / mag);
    }
    const CVector rdiag = hgrid.cwiseInverse();
    const CMatrix b_block = rdiag.asDiagonal() * ctx.vq;
    std::array<CMatrix, kChannels> a_blocks;
    for (std::size_t i = 0; i < kChannels; ++i) {
      const CVector w = to_eigen(ctx.ghat[i]).cwiseProduct(rdiag);
      a_blocks[i] = w.asDiagonal() * ctx.vh;
    }
    const ConstrainedUpdate upd = constrained_lstsq_update_blocked(a_blocks, b_block, h0);
    if (upd.restart_needed || !upd.h.allFinite() || !upd.q.allFinite()) break;

    const CVec h = to_std(upd.h);
    const CVec q = to_std(upd.q);
    const Polynomial reversed = Polynomial(h).reversed();
    if (reversed.degree() != static_cast<int>(k)) break;
    CVec u;
    try {
      u = roots(reversed);
    } catch (const Error&) {
      break;
    }
    const double obj = frequency_objective(ctx.ghat, h, q, k);
    if (!std::isfinite(obj)) break;
    trace.push_back(obj);
    last = Iterate{h, q, u, obj, j};
    if (obj <= 1e-24 * ctx.energy) break;
    if (std::isfinite(prev_obj) && std::abs(prev_obj - obj) <= ctx.cfg.objective_rtol * prev_obj) break;
    prev_obj = obj;
    h_prev = upd.h;
  }
  if (!last) return out;

  JointFit fit;
  CVec u = last->roots;
  bool projected = false;
  if (ctx.cfg.unit_modulus) {
    CVec w = u;
    for (auto& r : w) r /= std::abs(r);
    try {
      for (std::size_t i = 0; i < kChannels; ++i)
        fit.estimate.channel_amplitudes[i] = ctx.cfg.outlier_cutoff > 0.0
                                                 ? estimate_amplitudes_tukey(ctx.gbar[i], w, ctx.cfg.outlier_cutoff)
                                                 : estimate_amplitudes(ctx.gbar[i], w);
      u = w;
      projected = true;
    } catch (const Error&) {
      projected = false;  // clustered after projection; keep the rational-fit modes
    }
  }
  if (!projected) {
    for (std::size_t i = 0; i < kChannels; ++i) {
      try {
        fit.estimate.channel_amplitudes[i] = amplitudes_from_residues(
            last->h, std::span<const cplx>(last->q).subspan(i * k, k), u, ctx.length, ctx.gbar[i]);
      } catch (const Error&) {
        return out;
      }
    }
  }
  for (std::size_t i = 0; i < kChannels; ++i) {
    fit.fitted[i] = synthesize(fit.estimate.channel_amplitudes[i], u, ctx.length);
    for (const auto& x : fit.fitted[i])
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return out;
  }
  fit.estimate.roots = u;
  for (const auto& r : u) fit.estimate.aliased.push_back(aliased_frequency(r, ctx.period));
  fit.criterion = channel_agreement(fit.fitted);
  fit.state = RationalFitState{last->h, last->q, last->iteration, restart, last->objective, fit.criterion <= ctx.sigma};
  fit.objective_trace = trace;
  fit.total_iterations = last->iteration;
  out.fit = std::move(fit);
  out.valid = true;
  return out;
}

}  // namespace

JointFit joint_spectral_fit(const std::array<CVec, kChannels>& gbar, std::size_t order, double period,
                            const RobustConfig& cfg, double sigma, const std::optional<CVec>& initial_h) {
  cfg.validate();
  if (order < 1) throw ConfigError("joint_spectral_fit: K must be at least 1");
  const std::size_t len = gbar[0].size();
  for (const auto& g : gbar)
    if (g.size() != len) throw ConfigError("joint_spectral_fit: channels must have equal length");
  if (len < 2 * order + 1) throw ConfigError("joint_spectral_fit: need at least 2K+1 differences per channel");
  if (initial_h && initial_h->size() != order + 1) throw ConfigError("joint_spectral_fit: bad initial h length");

  FitContext ctx{gbar, {}, order, len, period, sigma, cfg, vandermonde(len, len, order + 1),
                 vandermonde(len, len, order)};
  for (std::size_t i = 0; i < kChannels; ++i) {
    ctx.ghat[i] = dft(gbar[i]);
    for (const auto& x : ctx.ghat[i]) ctx.energy += std::norm(x);
  }

  auto init_for = [&](int r) {
    if (r == 0 && initial_h) return *initial_h;
    return random_denominator(order, derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(r)));
  };

  const int restarts = cfg.restarts;
  std::vector<RestartOutcome> outcomes;
  int total_iterations = 0;
  if (cfg.parallel_restarts) {
    outcomes.resize(static_cast<std::size_t>(restarts));
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < restarts; ++r) outcomes[static_cast<std::size_t>(r)] = run_restart(ctx, init_for(r), r);
  } else {
    for (int r = 0; r < restarts; ++r) {
      outcomes.push_back(run_restart(ctx, init_for(r), r));
      if (outcomes.back().valid && outcomes.back().fit.state.converged) break;
    }
  }

  // First converged restart wins; otherwise the lowest objective, ties to the lowest index.
  // Iterations are counted up to the winner, as the serial path would have run them.
  const RestartOutcome* chosen = nullptr;
  for (const auto& o : outcomes) {
    if (o.valid) total_iterations += o.fit.total_iterations;
    if (o.valid && o.fit.state.converged) {
      chosen = &o;
      break;
    }
  }
  if (!chosen)
    for (const auto& o : outcomes)
      if (o.valid && (!chosen || o.fit.state.objective < chosen->fit.state.objective)) chosen = &o;
  if (!chosen) throw IllConditionedError("joint_spectral_fit: no restart produced a valid fit");

  JointFit result = chosen->fit;
  result.total_iterations = total_iterations;
  return result;
}

double threshold_pair(double x, double y, double sigma) {
  const double s = y > 0.0 ? 1.0 : (y < 0.0 ? -1.0 : 0.0);
  return 0.5 * (x + s * std::min(std::abs(y), sigma));
}

ResidueVectors refine_residues_relaxed(const std::array<CVec, kChannels>& fitted,
                                       const std::array<CVec, kChannels>& v, double sigma) {
  ResidueVectors out;
  for (std::size_t p = 0; p < 2; ++p) {
    const std::size_t a = 2 * p;
    const std::size_t b = a + 1;
    const std::size_t len = fitted[a].size();
    if (fitted[b].size() != len || v[a].size() != len || v[b].size() != len)
      throw ConfigError("refine_residues: length mismatch");
    out.u[a].resize(len);
    out.u[b].resize(len);
    for (std::size_t n = 0; n < len; ++n) {
      const cplx sum = fitted[a][n] + fitted[b][n];
      const cplx zeta = fitted[a][n] - fitted[b][n];
      for (std::size_t i : {a, b}) {
        const double sign = i == a ? 1.0 : -1.0;
        const cplx eta = sum - 2.0 * v[i][n];
        out.u[i][n] = {threshold_pair(eta.real(), sign * zeta.real(), sigma),
                       threshold_pair(eta.imag(), sign * zeta.imag(), sigma)};
      }
    }
  }
  return out;
}

ResidueVectors refine_residues(const std::array<CVec, kChannels>& fitted, const std::array<CVec, kChannels>& v,
                               double lambda0, double lambda1, double sigma) {
  ResidueVectors out = refine_residues_relaxed(fitted, v, sigma);
  for (std::size_t i = 0; i < kChannels; ++i) {
    const FoldThreshold lambda(i % 2 == 0 ? lambda0 : lambda1);
    for (auto& x : out.u[i]) x = {quantize_grid(x.real(), lambda), quantize_grid(x.imag(), lambda)};
  }
  return out;
}

RobustResult recover_robust(const MultiChannelCapture& capture, std::size_t order, const RobustConfig& cfg) {
  capture.validate();
  cfg.validate();
  const CaptureConfig& cc = capture.config;
  for (std::size_t i = 1; i < kChannels; ++i)
    if (cc.counts[i] != cc.counts[0]) throw ConfigError("recover_robust: all channels need equal length");
  const double sigma = cfg.resolved_sigma(cc.lambda0, cc.lambda1);
  const double period = cc.period();

  const DifferenceStreams diff = finite_difference(capture);
  std::array<CVec, kChannels> gbar;
  for (std::size_t p = 0; p < 2; ++p) {
    const std::size_t a = 2 * p;
    auto [sa, sb] = separate_residues(diff.v[a], diff.v[a + 1], cc.lambda0, cc.lambda1, cfg.e_max, 0.0);
    gbar[a] = unfold_channel(diff.v[a], sa);
    gbar[a + 1] = unfold_channel(diff.v[a + 1], sb);
  }

  RobustResult best;
  bool have_best = false;
  RobustDiagnostics diag;
  diag.sigma = sigma;
  for (int outer = 1; outer <= cfg.outer_max; ++outer) {
    std::optional<CVec> initial_h;
    try {
      initial_h = prony(std::span<const CVec>(gbar), order).filter;
    } catch (const Error&) {
      initial_h.reset();
    }
    RobustConfig inner = cfg;
    inner.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(outer));
    if (inner.outlier_cutoff < 0.0) inner.outlier_cutoff = 2.0 * std::min(cc.lambda0, cc.lambda1);
    const JointFit fit = joint_spectral_fit(gbar, order, period, inner, sigma, initial_h);
    const ResidueVectors res = refine_residues(fit.fitted, diff.v, cc.lambda0, cc.lambda1, sigma);

    diag.outer_iterations = outer;
    diag.inner_iterations += fit.total_iterations;
    diag.criterion_trace.push_back(fit.criterion);
    diag.objective_trace.push_back(fit.state.objective);

    // Stop at a fixed point of the alternation: agreement within sigma and
    // residues that the refinement step leaves unchanged.
    bool stable = true;
    for (std::size_t i = 0; i < kChannels && stable; ++i) {
      const double tol = 1e-9 * cc.threshold(i);
      for (std::size_t n = 0; n < gbar[i].size(); ++n)
        if (std::abs(gbar[i][n] - diff.v[i][n] - res.u[i][n]) > tol) {
          stable = false;
          break;
        }
    }
    const bool met = fit.criterion <= sigma && stable;
    if (!have_best || met || fit.criterion < best.diagnostics.final_criterion) {
      best.estimate = fit.estimate;
      best.fit_state = fit.state;
      best.residues = res;
      best.diagnostics.final_criterion = fit.criterion;
      have_best = true;
    }
    if (met) {
      diag.converged = true;
      break;
    }
    for (std::size_t i = 0; i < kChannels; ++i) {
      gbar[i] = diff.v[i];
      for (std::size_t n = 0; n < gbar[i].size(); ++n) gbar[i][n] += res.u[i][n];
    }
  }
  diag.final_criterion = best.diagnostics.final_criterion;
  best.diagnostics = diag;

  SpectralEstimate& est = best.estimate;
  const std::size_t k = est.roots.size();
  CVec c_direct(k), c_delayed(k);
  for (std::size_t j = 0; j < k; ++j) {
    c_direct[j] = 0.5 * (est.channel_amplitudes[0][j] + est.channel_amplitudes[1][j]);
    c_delayed[j] = 0.5 * (est.channel_amplitudes[2][j] + est.channel_amplitudes[3][j]);
  }
  est.frequencies.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    try {
      est.frequencies[j] = dealias(est.aliased[j], c_direct[j], c_delayed[j], cc.delay, cc.omega_s());
    } catch (const IllConditionedError&) {
      est.frequencies[j] = est.aliased[j];
    }
  }
  est.amplitudes = time_domain_amplitudes(c_direct, est.frequencies, period);

  for (std::size_t i = 0; i < kChannels; ++i) {
    best.recovered[i] = diff.v[i];
    for (std::size_t n = 0; n < best.recovered[i].size(); ++n) best.recovered[i][n] += best.residues.u[i][n];
  }
  return best;
}

}  // namespace usfspec
