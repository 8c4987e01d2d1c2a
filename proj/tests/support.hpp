#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "usfspec/signal_core.hpp"

namespace usfspec::testing {

inline double max_abs_diff(const CVec& a, const CVec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline CVec geometric_sum(const CVec& amps, const CVec& roots, std::size_t len) {
  CVec out(len, cplx{0.0, 0.0});
  for (std::size_t k = 0; k < amps.size(); ++k) {
    cplx p = amps[k];
    for (auto& x : out) {
      x += p;
      p *= roots[k];
    }
  }
  return out;
}

inline cplx random_unit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  return std::polar(1.0, ang(rng));
}

inline SinusoidalModel table1_model(double peak = 8.88) {
  const double f[] = {400.0, 700.0, 1000.0};
  const double a[] = {peak / 3.0, peak / 3.0, peak / 3.0};
  return SinusoidalModel::from_real_tones(f, a);
}

}  // namespace usfspec::testing
