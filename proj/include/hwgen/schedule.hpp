#pragma once

#include <vector>

#include "hwgen/latent_codec.hpp"
#include "hwgen/tensor.hpp"

namespace hwgen {

// beta_t linear in t; alpha_bar_t = prod_{s<=t}(1 - beta_s). 1-based timesteps;
// alpha_bar(0) == 1 by convention for the terminal sampler step.
struct NoiseSchedule {
    int T = 0;
    double beta_start = 0, beta_end = 0;
    std::vector<double> betas;       // index 0 <-> t=1
    std::vector<double> alphas;
    std::vector<double> alpha_bars;

    double alpha_bar(int t) const {  // t in [0, T]
        if (t == 0) return 1.0;
        return alpha_bars[size_t(t - 1)];
    }
};

NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s);

// deterministic (eta = 0) update:
//   x0_hat = (z_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t)
//   z_prev = sqrt(abar_prev) x0_hat + sqrt(1-abar_prev) eps_hat
Tensor ddim_step(const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& s);

// runs ddim_step over the given descending timesteps (terminal step goes to
// t=0), keeping the running latent in double so rounding does not compound
// across many steps; eps_fn receives the float view of the current latent
Tensor ddim_chain(const Tensor& z_start,
                  const std::function<Tensor(const Tensor& z_t, int t)>& eps_fn,
                  const std::vector<int>& timesteps, const NoiseSchedule& s);

// evenly spaced descending timesteps from T down to 1, `steps` of them
std::vector<int> sampling_timesteps(int T, int steps);

Tensor randn_latent(Rng& rng);

}  // namespace hwgen
