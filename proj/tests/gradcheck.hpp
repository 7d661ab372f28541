#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "surfgest/model.hpp"

namespace surfgest::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t params = 0;
  // Parameters whose difference quotient at the base step disagreed with the
  // one at half the step, i.e. a pool or ReLU kink lies within the step.
  std::size_t refined = 0;
  double smallest_step = 0.0;
};

// Central differences against loss_and_grad on a float64 model. The rng is
// re-seeded for every evaluation so each pass draws the same dropout mask.
// Each parameter uses step h unless the quotients at h and h/2 disagree by
// more than tol/10, in which case the step is halved until they agree.
inline GradCheck check_gradient(model::SepCnn<double>& net, const std::vector<float>& x,
                                const std::vector<int>& labels, std::uint64_t rng_seed, double h = 1e-3,
                                double tol = 1e-4) {
  std::vector<double> grad(net.count_parameters()), scratch(grad.size());
  std::mt19937_64 rng(rng_seed);
  net.loss_and_grad(x, labels, grad, rng);
  auto params = net.params();
  auto quotient = [&](std::size_t k, double step) {
    const double keep = params[k];
    params[k] = keep + step;
    std::mt19937_64 up_rng(rng_seed);
    const double up = net.loss_and_grad(x, labels, scratch, up_rng);
    params[k] = keep - step;
    std::mt19937_64 down_rng(rng_seed);
    const double down = net.loss_and_grad(x, labels, scratch, down_rng);
    params[k] = keep;
    return (up - down) / (2.0 * step);
  };
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); };

  GradCheck out;
  out.params = params.size();
  out.smallest_step = h;
  for (std::size_t k = 0; k < params.size(); ++k) {
    double step = h;
    double fd = quotient(k, step);
    double half = quotient(k, step / 2.0);
    bool refined = false;
    while (rel(fd, half) > tol / 10.0 && step > 1e-6) {
      refined = true;
      step /= 2.0;
      fd = half;
      half = quotient(k, step / 2.0);
    }
    if (refined) {
      ++out.refined;
      out.smallest_step = std::min(out.smallest_step, step);
    }
    out.max_rel_error = std::max(out.max_rel_error, rel(fd, grad[k]));
  }
  return out;
}

// Tiny random configuration for gradient checks.
inline model::SepCnnConfig random_tiny_config(std::mt19937_64& rng) {
  model::SepCnnConfig c;
  c.in_channels = 1 + rng() % 3;
  c.num_blocks = 1 + rng() % 3;
  c.block_width = 2 + rng() % 4;
  c.kernel_size = 1 + 2 * (rng() % 4);
  c.pool_out = 1 + rng() % 2;
  c.classifier_hidden = 3 + rng() % 4;
  c.num_classes = 2 + rng() % 4;
  c.dropout_p = 0.25;
  c.input_length = (8u << c.num_blocks) + rng() % 7;
  return c;
}

}  // namespace surfgest::testing
