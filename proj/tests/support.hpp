// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gdasjae/gdasjae.hpp"

namespace testing_support {

using namespace gdasjae;

/// Entries uniform in [lo, hi] with magnitude at least `gap`, so LeakyReLU
/// kinks stay out of finite-difference stencils.
inline Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0,
                            double gap = 0.0) {
  Tensor t(r, c);
  for (double& v : t.values()) {
    do v = uniform(rng, lo, hi);
    while (std::abs(v) < gap);
  }
  return t;
}

/// Plain central difference of a scalar function of a flat vector.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double eps) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double o = x[i];
    x[i] = o + eps;
    const double up = f(x);
    x[i] = o - eps;
    const double down = f(x);
    x[i] = o;
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

inline Dataset tiny_dataset(std::size_t n_flawed, std::size_t n_not, std::size_t wa = 3, std::size_t wb = 2,
                            std::uint64_t seed = 1, double separation = 6.0) {
  SynthSpec s;
  s.n_flawed = n_flawed;
  s.n_not_flawed = n_not;
  s.width_a = wa;
  s.width_b = wb;
  s.separation = separation;
  s.seed = seed;
  return synth_generate(s);
}

/// Small model widths so training-based tests stay fast.
inline ModelConfig small_model(std::size_t wa, std::size_t wb, MixingSpec mixing) {
  ModelConfig c;
  c.modality_a_dim = wa;
  c.modality_b_dim = wb;
  c.encoder_hidden = 8;
  c.encoder_out = 6;
  c.mixing = std::move(mixing);
  return c;
}

}  // namespace testing_support
