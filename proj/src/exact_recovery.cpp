#include "usfspec/exact_recovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "usfspec/errors.hpp"
#include "usfspec/numerics.hpp"

namespace usfspec {

FoldPairTable::FoldPairTable(double lambda_a, double lambda_b, int e_max, double distortion_bound)
    : lambda_a_(lambda_a), lambda_b_(lambda_b), e_max_(e_max) {
  if (!(lambda_a > 0.0) || !(lambda_b > 0.0)) throw ConfigError("fold thresholds must be positive");
  if (e_max < 1) throw ConfigError("e_max must be at least 1");
  table_.reserve(static_cast<std::size_t>((2 * e_max + 1) * (2 * e_max + 1)));
  for (std::int64_t ea = -e_max; ea <= e_max; ++ea)
    for (std::int64_t eb = -e_max; eb <= e_max; ++eb) {
      const Pair p{ea, eb};
      table_.push_back({value(p), p});
    }
  std::sort(table_.begin(), table_.end(), [](const Entry& x, const Entry& y) { return x.value < y.value; });
  min_gap_ = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < table_.size(); ++i)
    min_gap_ = std::min(min_gap_, table_[i].value - table_[i - 1].value);
  if (!(min_gap_ > 4.0 * std::max(distortion_bound, 0.0)))
    throw IllConditionedError("fold thresholds are not separable: grid gap " + std::to_string(min_gap_) +
                              " vs distortion bound " + std::to_string(distortion_bound));
}

double FoldPairTable::value(const Pair& p) const {
  return 2.0 * lambda_b_ * static_cast<double>(p.e_b) - 2.0 * lambda_a_ * static_cast<double>(p.e_a);
}

FoldPairTable::Pair FoldPairTable::decode(double d) const {
  auto it = std::lower_bound(table_.begin(), table_.end(), d,
                             [](const Entry& e, double x) { return e.value < x; });
  if (it == table_.end()) return table_.back().pair;
  if (it == table_.begin()) return it->pair;
  const auto prev = std::prev(it);
  return (d - prev->value <= it->value - d) ? prev->pair : it->pair;
}

double default_distortion_bound(double lambda_a, double lambda_b, int e_max) {
  return 1e-9 * (lambda_a + lambda_b) * static_cast<double>(e_max);
}

std::pair<ResidueSpikes, ResidueSpikes> separate_residues(std::span<const cplx> v_a,
                                                          std::span<const cplx> v_b,
                                                          double lambda_a, double lambda_b, int e_max,
                                                          double distortion_bound) {
  if (v_a.size() != v_b.size()) throw ConfigError("separate_residues: length mismatch");
  if (distortion_bound < 0.0) distortion_bound = default_distortion_bound(lambda_a, lambda_b, e_max);
  const FoldPairTable table(lambda_a, lambda_b, e_max, distortion_bound);

  ResidueSpikes a{{}, lambda_a, 0};
  ResidueSpikes b{{}, lambda_b, 1};
  for (std::size_t n = 0; n < v_a.size(); ++n) {
    const cplx d = v_b[n] - v_a[n];
    if (d == cplx(0.0, 0.0)) continue;
    // d = u_a - u_b; the table's pair satisfies d ~ 2 lb eb - 2 la ea, so the
    // residue counts are the negated pair.
    const auto re = table.decode(d.real());
    const auto im = d.imag() != 0.0 ? table.decode(d.imag()) : FoldPairTable::Pair{};
    if (re.e_a != 0 || im.e_a != 0) a.spikes.push_back({n, -re.e_a, -im.e_a});
    if (re.e_b != 0 || im.e_b != 0) b.spikes.push_back({n, -re.e_b, -im.e_b});
  }
  return {std::move(a), std::move(b)};
}

CVec unfold_channel(std::span<const cplx> v, const ResidueSpikes& spikes) {
  CVec g(v.begin(), v.end());
  for (const auto& s : spikes.spikes) {
    if (s.position >= g.size()) throw ConfigError("unfold_channel: spike position out of range");
    g[s.position] += s.amplitude(spikes.threshold);
  }
  return g;
}

PronyResult prony(std::span<const CVec> sequences, std::size_t order) {
  if (order < 1) throw ConfigError("prony: order must be at least 1");
  const auto k = static_cast<Eigen::Index>(order);
  Eigen::Index rows = 0;
  for (const auto& s : sequences)
    if (s.size() > order) rows += static_cast<Eigen::Index>(s.size() - order);
  if (rows < k)
    throw RankDeficientError("prony: " + std::to_string(rows) + " equations for " + std::to_string(order) +
                             " filter taps; need at least 2K samples");

  CMatrix t(rows, k);
  CVector rhs(rows);
  Eigen::Index r = 0;
  for (const auto& s : sequences) {
    for (std::size_t n = order; n < s.size(); ++n, ++r) {
      for (std::size_t m = 1; m <= order; ++m) t(r, static_cast<Eigen::Index>(m - 1)) = s[n - m];
      rhs(r) = -s[n];
    }
  }
  Eigen::JacobiSVD<CMatrix> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(0) == 0.0 || sv(k - 1) <= 1e-12 * sv(0))
    throw RankDeficientError("prony: annihilating system is rank deficient (fewer than K active modes?)");
  const CVector taps = svd.solve(rhs);

  PronyResult out;
  out.filter.resize(order + 1);
  out.filter[0] = 1.0;
  for (std::size_t m = 1; m <= order; ++m) out.filter[m] = taps(static_cast<Eigen::Index>(m - 1));
  // z^K H(1/z) has the modes u_k as zeros.
  out.roots = roots(Polynomial(out.filter).reversed());
  return out;
}

PronyResult prony(std::span<const cplx> sequence, std::size_t order) {
  const CVec s(sequence.begin(), sequence.end());
  return prony(std::span<const CVec>(&s, 1), order);
}

int fold_range_for_peak(double peak, double lambda_min) {
  if (!(lambda_min > 0.0) || !(peak >= 0.0)) throw ConfigError("fold_range_for_peak: need peak >= 0, lambda > 0");
  return static_cast<int>(std::floor(peak / lambda_min)) + 1;
}

CVec estimate_amplitudes(std::span<const cplx> sequence, std::span<const cplx> roots) {
  const std::size_t k = roots.size();
  if (k == 0) throw ConfigError("estimate_amplitudes: no roots");
  if (sequence.size() < k)
    throw RankDeficientError("estimate_amplitudes: need at least K samples, got " +
                             std::to_string(sequence.size()));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b)
      if (std::abs(roots[a] - roots[b]) < 1e-6)
        throw IllConditionedError("estimate_amplitudes: clustered roots");
  const auto rows = static_cast<Eigen::Index>(sequence.size());
  CMatrix theta(rows, static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) {
    cplx p{1.0, 0.0};
    for (Eigen::Index n = 0; n < rows; ++n) {
      theta(n, static_cast<Eigen::Index>(j)) = p;
      p *= roots[j];
    }
  }
  return to_std(lstsq(theta, to_eigen(sequence)));
}

namespace {
void check_delay(double delay, double omega_s) {
  if (!(delay > 0.0)) throw ConfigError("dealias: channel delay must be positive");
  const double ratio = delay * omega_s / kTwoPi;  // Td / T
  if (ratio >= 0.5 && std::abs(ratio - std::round(ratio)) <= 1e-12 * ratio)
    throw ConfigError("dealias: channel delay is an integer multiple of the sampling period");
}
}  // namespace

double dealias(double aliased, cplx c_direct, cplx c_delayed, double delay, double omega_s) {
  check_delay(delay, omega_s);
  if (c_direct == cplx(0.0, 0.0)) throw IllConditionedError("dealias: zero amplitude, phase undefined");
  const double phase = std::arg(c_delayed / c_direct);
  const double coarse = phase / delay;
  const double band = std::round((coarse - aliased) / omega_s);
  return aliased + band * omega_s;
}

std::vector<double> dealias(std::span<const double> aliased, std::span<const cplx> c_direct,
                            std::span<const cplx> c_delayed, double delay, double omega_s) {
  if (aliased.size() != c_direct.size() || aliased.size() != c_delayed.size())
    throw ConfigError("dealias: length mismatch");
  double cmax = 0.0;
  for (const auto& c : c_direct) cmax = std::max(cmax, std::abs(c));
  std::vector<double> out(aliased.size());
  for (std::size_t k = 0; k < aliased.size(); ++k) {
    if (std::abs(c_direct[k]) <= 1e-12 * cmax)
      throw IllConditionedError("dealias: component " + std::to_string(k) + " has vanishing amplitude");
    out[k] = dealias(aliased[k], c_direct[k], c_delayed[k], delay, omega_s);
  }
  return out;
}

double aliased_frequency(cplx root, double period) {
  return wrap_to_band(std::arg(root) / period, kTwoPi / period);
}

CVec time_domain_amplitudes(std::span<const cplx> c_breve, std::span<const double> omega, double period) {
  if (c_breve.size() != omega.size()) throw ConfigError("time_domain_amplitudes: length mismatch");
  const double omega_s = kTwoPi / period;
  CVec out(c_breve.size());
  for (std::size_t k = 0; k < c_breve.size(); ++k) {
    const cplx step = std::polar(1.0, wrap_to_band(omega[k], omega_s) * period) - 1.0;
    if (std::abs(step) == 0.0) throw IllConditionedError("component aliases to DC; amplitude undefined");
    out[k] = c_breve[k] / step;
  }
  return out;
}

namespace {

double stacked_residual(const std::array<CVec, kChannels>& g, const CVec& roots,
                        const std::array<CVec, kChannels>& amps, CVector* out) {
  std::size_t total = 0;
  for (const auto& s : g) total += s.size();
  if (out) out->resize(static_cast<Eigen::Index>(total));
  double cost = 0.0;
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < kChannels; ++i) {
    const CVec model = [&] {
      CVec m(g[i].size(), cplx{0.0, 0.0});
      for (std::size_t k = 0; k < roots.size(); ++k) {
        cplx p = amps[i][k];
        for (auto& x : m) {
          x += p;
          p *= roots[k];
        }
      }
      return m;
    }();
    for (std::size_t n = 0; n < g[i].size(); ++n, ++row) {
      const cplx r = g[i][n] - model[n];
      if (out) (*out)(row) = r;
      cost += std::norm(r);
    }
  }
  return cost;
}

}  // namespace

void polish_modes(const std::array<CVec, kChannels>& g, CVec& roots, std::array<CVec, kChannels>& amps,
                  int max_iter) {
  const std::size_t k = roots.size();
  for (const auto& a : amps)
    if (a.size() != k) throw ConfigError("polish_modes: amplitude count must match root count");
  std::size_t total = 0;
  for (const auto& s : g) total += s.size();
  const std::size_t unknowns = k * (kChannels + 1);
  if (total < unknowns) return;

  CVector r;
  double cost = stacked_residual(g, roots, amps, &r);
  for (int it = 0; it < max_iter && cost > 0.0; ++it) {
    CMatrix jac = CMatrix::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(unknowns));
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < kChannels; ++i)
      for (std::size_t n = 0; n < g[i].size(); ++n, ++row)
        for (std::size_t j = 0; j < k; ++j) {
          const cplx pn1 = n == 0 ? cplx{0.0, 0.0} : std::pow(roots[j], static_cast<int>(n - 1));
          const cplx pn = std::pow(roots[j], static_cast<int>(n));
          jac(row, static_cast<Eigen::Index>(j)) = amps[i][j] * static_cast<double>(n) * pn1;
          jac(row, static_cast<Eigen::Index>(k + i * k + j)) = pn;
        }
    const CVector step = lstsq(jac, r);
    CVec roots_new = roots;
    auto amps_new = amps;
    double scale = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      roots_new[j] += step(static_cast<Eigen::Index>(j));
      scale = std::max(scale, std::abs(roots[j]));
      for (std::size_t i = 0; i < kChannels; ++i) {
        amps_new[i][j] += step(static_cast<Eigen::Index>(k + i * k + j));
        scale = std::max(scale, std::abs(amps[i][j]));
      }
    }
    CVector r_new;
    const double cost_new = stacked_residual(g, roots_new, amps_new, &r_new);
    if (!(cost_new < cost)) break;
    roots = std::move(roots_new);
    amps = std::move(amps_new);
    r = std::move(r_new);
    cost = cost_new;
    if (step.cwiseAbs().maxCoeff() <= 1e-15 * scale) break;
  }
}

cplx SpectralEstimate::evaluate(double t) const {
  cplx acc{0.0, 0.0};
  for (std::size_t k = 0; k < frequencies.size(); ++k) acc += amplitudes[k] * std::polar(1.0, frequencies[k] * t);
  return acc;
}

SpectralEstimate recover_exact(const MultiChannelCapture& capture, std::size_t order,
                               const ExactOptions& options) {
  capture.validate();
  const CaptureConfig& cfg = capture.config;
  if (order < 1) throw ConfigError("recover_exact: K must be at least 1");
  if (cfg.counts[0] != cfg.counts[1] || cfg.counts[2] != cfg.counts[3])
    throw ConfigError("recover_exact: paired channels must have equal lengths");

  const DifferenceStreams diff = finite_difference(capture);
  const double bound = options.distortion_bound >= 0.0
                           ? options.distortion_bound
                           : default_distortion_bound(cfg.lambda0, cfg.lambda1, options.e_max);

  std::array<CVec, kChannels> gbar;
  for (std::size_t pair = 0; pair < 2; ++pair) {
    const std::size_t ia = 2 * pair;
    const std::size_t ib = ia + 1;
    auto [sa, sb] = separate_residues(diff.v[ia], diff.v[ib], cfg.lambda0, cfg.lambda1, options.e_max, bound);
    sa.channel = ia;
    sb.channel = ib;
    gbar[ia] = unfold_channel(diff.v[ia], sa);
    gbar[ib] = unfold_channel(diff.v[ib], sb);
  }

  const std::array<CVec, 2> direct{gbar[0], gbar[1]};
  const PronyResult pr = prony(std::span<const CVec>(direct), order);

  SpectralEstimate est;
  const double period = cfg.period();
  est.roots = pr.roots;
  for (std::size_t i = 0; i < kChannels; ++i) est.channel_amplitudes[i] = estimate_amplitudes(gbar[i], pr.roots);
  polish_modes(gbar, est.roots, est.channel_amplitudes);
  est.aliased.clear();
  for (const auto& u : est.roots) est.aliased.push_back(aliased_frequency(u, period));
  est.frequencies = dealias(est.aliased, est.channel_amplitudes[0], est.channel_amplitudes[2], cfg.delay,
                            cfg.omega_s());
  est.amplitudes = time_domain_amplitudes(est.channel_amplitudes[0], est.frequencies, period);
  return est;
}

}  // namespace usfspec
