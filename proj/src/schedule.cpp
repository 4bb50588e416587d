#include "hwgen/schedule.hpp"

#include <cmath>

namespace hwgen {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.betas.resize(size_t(T));
    s.alphas.resize(size_t(T));
    s.alpha_bars.resize(size_t(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        const double beta =
            T == 1 ? beta_start : beta_start + (beta_end - beta_start) * double(t) / double(T - 1);
        s.betas[size_t(t)] = beta;
        s.alphas[size_t(t)] = 1.0 - beta;
        prod *= 1.0 - beta;
        s.alpha_bars[size_t(t)] = prod;
    }
    return s;
}

namespace {
void check_step(const NoiseSchedule& s, int t) {
    if (t < 1 || t > s.T) throw NumericError("timestep out of range");
}
}  // namespace

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s) {
    check_step(s, t);
    if (!z0.same_shape(eps)) throw NumericError("q_sample: shape mismatch");
    const double ab = s.alpha_bar(t);
    const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    Tensor out(z0.shape);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = float(c0 * z0.v[i] + c1 * eps.v[i]);
    return out;
}

Tensor ddim_step(const Tensor& z_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& s) {
    check_step(s, t);
    if (t_prev < 0 || t_prev >= t) throw NumericError("ddim_step: need 0 <= t_prev < t");
    if (!z_t.same_shape(eps_hat)) throw NumericError("ddim_step: shape mismatch");
    const double ab_t = s.alpha_bar(t);
    const double ab_p = s.alpha_bar(t_prev);
    const double sq_t = std::sqrt(ab_t), sq1_t = std::sqrt(1.0 - ab_t);
    const double sq_p = std::sqrt(ab_p), sq1_p = std::sqrt(1.0 - ab_p);
    Tensor out(z_t.shape);
    for (size_t i = 0; i < out.v.size(); ++i) {
        const double x0 = (double(z_t.v[i]) - sq1_t * eps_hat.v[i]) / sq_t;
        out.v[i] = float(sq_p * x0 + sq1_p * eps_hat.v[i]);
    }
    return out;
}

Tensor ddim_chain(const Tensor& z_start,
                  const std::function<Tensor(const Tensor& z_t, int t)>& eps_fn,
                  const std::vector<int>& timesteps, const NoiseSchedule& s) {
    if (timesteps.empty()) throw NumericError("ddim_chain: empty timestep list");
    std::vector<double> z(z_start.v.begin(), z_start.v.end());
    Tensor z_float = z_start;
    for (size_t i = 0; i < timesteps.size(); ++i) {
        const int t = timesteps[i];
        const int t_prev = i + 1 < timesteps.size() ? timesteps[i + 1] : 0;
        check_step(s, t);
        if (t_prev >= t) throw NumericError("ddim_chain: timesteps must descend");
        const Tensor eps_hat = eps_fn(z_float, t);
        if (!eps_hat.same_shape(z_start)) throw NumericError("ddim_chain: eps shape mismatch");
        const double ab_t = s.alpha_bar(t), ab_p = s.alpha_bar(t_prev);
        const double sq_t = std::sqrt(ab_t), sq1_t = std::sqrt(1.0 - ab_t);
        const double sq_p = std::sqrt(ab_p), sq1_p = std::sqrt(1.0 - ab_p);
        for (size_t j = 0; j < z.size(); ++j) {
            const double x0 = (z[j] - sq1_t * eps_hat.v[j]) / sq_t;
            z[j] = sq_p * x0 + sq1_p * eps_hat.v[j];
            z_float.v[j] = float(z[j]);
        }
    }
    return z_float;
}

std::vector<int> sampling_timesteps(int T, int steps) {
    if (steps < 1) throw ConfigError("sampling steps must be >= 1");
    steps = std::min(steps, T);
    std::vector<int> ts;
    if (steps == 1) {
        ts.push_back(T);
        return ts;
    }
    // evenly spaced, first == T, last == 1
    for (int i = 0; i < steps; ++i) {
        const double f = double(i) / double(steps - 1);
        int t = int(std::lround(double(T) - f * double(T - 1)));
        ts.push_back(t);
    }
    // enforce strict descent in case of rounding collisions
    for (size_t i = 1; i < ts.size(); ++i)
        if (ts[i] >= ts[i - 1]) ts[i] = ts[i - 1] - 1;
    while (!ts.empty() && ts.back() < 1) ts.pop_back();
    return ts;
}

Tensor randn_latent(Rng& rng) {
    return Tensor::randn({kLatentC, kLatentH, kLatentW}, rng);
}

}  // namespace hwgen
