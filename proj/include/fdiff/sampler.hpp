#pragma once

// Annealed Langevin dynamics, the Crank-Nicolson proposal step, DDPM ancestral
// sampling, and the exact score for Gaussian data.
//
// A drift maps a batch of states at level t to F(u, t) in the Langevin update
// u <- u + h_t F + sqrt(2 h_t) xi, xi ~ N(0, C); with C-preconditioning the
// exact drift for a perturbed Gaussian is -E[eta | v] / sigma_t^2.

#include <fdiff/training.hpp>

#include <functional>

namespace fdiff {

using BatchDrift = std::function<std::vector<GridFunction>(std::span<const GridFunction>, std::size_t t)>;

struct SamplerConfig {
    std::size_t M = 200;
    double epsilon = 2e-5;
    NoiseSchedule schedule;
    std::uint64_t seed = 0;
    std::size_t chains = 1;
    bool zero_noise = false;  // debug: every xi = 0

    void validate() const {
        if (M == 0) throw ConfigError("sampler.M", "must be >= 1");
        if (!(epsilon > 0.0)) throw ConfigError("sampler.epsilon", "must be > 0");
        if (chains == 0) throw ConfigError("sampler.chains", "must be >= 1");
        schedule.validate();
    }
};

/// h_t = epsilon sigma_t^2 / sigma_T^2.
inline double langevin_step_size(const SamplerConfig& cfg, std::size_t t) {
    const double sT = cfg.schedule.sigma(cfg.schedule.levels());
    const double st = cfg.schedule.sigma(t);
    return cfg.epsilon * st * st / (sT * sT);
}

/// Independent per-chain generator seeded from (seed, chain).
inline Rng chain_rng(std::uint64_t seed, std::size_t chain) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(chain), std::uint32_t(chain >> 32),
                      0x5eedu};
    return Rng(seq);
}

/// u0 ~ N(0, sigma_1^2 C) per chain.
inline std::vector<GridFunction> default_initial_states(const SamplerConfig& cfg, std::size_t resolution,
                                                        std::vector<Rng>& rngs) {
    const NoiseSampler ns(cfg.schedule.base, resolution);
    const double s1 = cfg.schedule.kind == NoiseSchedule::Kind::Ncsn ? cfg.schedule.sigma(1) : 1.0;
    std::vector<GridFunction> out;
    for (auto& r : rngs) {
        Rng sub(r());
        out.push_back(s1 * ns.sample(sub));
    }
    return out;
}

inline void check_finite(const GridFunction& u, const std::string& where) {
    if (!u.all_finite()) throw NumericError(where + ": non-finite state");
}

/// Annealed Langevin over a batch of chains. Each step's noise for chain c comes from
/// a generator seeded by one draw of rngs[c]; coefficients are drawn low modes
/// first, so chains with equal seeds share their low-mode noise at every resolution.
inline std::vector<GridFunction> annealed_langevin(const BatchDrift& F, const SamplerConfig& cfg,
                                                   std::vector<GridFunction> u, std::vector<Rng>& rngs) {
    cfg.validate();
    if (cfg.schedule.kind != NoiseSchedule::Kind::Ncsn) throw ConfigError("sampler.schedule", "needs an ncsn schedule");
    if (u.empty()) return u;
    if (rngs.size() != u.size()) throw ShapeError("annealed_langevin: one rng per chain");
    const std::size_t n = u.front().resolution();
    for (const auto& x : u)
        if (!x.same_shape(u.front())) throw ShapeError("annealed_langevin: chains must share domain and resolution");
    if (!(cfg.schedule.base.domain() == u.front().domain()))
        throw ShapeError("annealed_langevin: noise covariance domain differs from the state");
    const NoiseSampler ns(cfg.schedule.base, n);

    for (std::size_t t = 1; t <= cfg.schedule.levels(); ++t) {
        const double h = langevin_step_size(cfg, t);
        const double amp = std::sqrt(2.0 * h);
        for (std::size_t step = 0; step < cfg.M; ++step) {
            const auto f = F(u, t);
            if (f.size() != u.size()) throw ShapeError("annealed_langevin: drift returned wrong batch size");
            for (std::size_t c = 0; c < u.size(); ++c) {
                u[c].axpy(h, f[c]);
                if (!cfg.zero_noise) {
                    Rng step_rng(rngs[c]());
                    u[c].axpy(amp, ns.sample(step_rng));
                }
                if (!u[c].all_finite())
                    throw NumericError("annealed_langevin: non-finite state at level " + std::to_string(t) + ", step " +
                                       std::to_string(step + 1) + ", chain " + std::to_string(c));
            }
        }
    }
    return u;
}

/// Single chain.
inline GridFunction annealed_langevin(const BatchDrift& F, const SamplerConfig& cfg, const GridFunction& u0, Rng& rng) {
    std::vector<Rng> r{rng};
    auto out = annealed_langevin(F, cfg, std::vector<GridFunction>{u0}, r);
    rng = r.front();
    return std::move(out.front());
}

/// cfg.chains chains at `resolution` started from the default initial law.
inline std::vector<GridFunction> sample_chains(const BatchDrift& F, const SamplerConfig& cfg, std::size_t resolution) {
    std::vector<Rng> rngs;
    for (std::size_t c = 0; c < cfg.chains; ++c) rngs.push_back(chain_rng(cfg.seed, c));
    auto u0 = default_initial_states(cfg, resolution, rngs);
    return annealed_langevin(F, cfg, std::move(u0), rngs);
}

struct CrankNicolsonCoefficients {
    double alpha = 0.0;
    double beta = 0.0;
};

/// beta^2 = 8h/(2+h)^2, alpha = sqrt(1 - beta^2).
inline CrankNicolsonCoefficients crank_nicolson_coefficients(double h) {
    if (!(h > 0.0 && h <= 2.0)) throw ConfigError("h", "Crank-Nicolson step needs h in (0, 2]");
    const double b2 = 8.0 * h / ((2.0 + h) * (2.0 + h));
    return {std::sqrt(std::max(0.0, 1.0 - b2)), std::sqrt(b2)};
}

/// alpha u + (1 - alpha) G(u, t) + beta xi with xi ~ N(0, C) (xi = 0 when noise is null).
inline GridFunction crank_nicolson_step(const std::function<GridFunction(const GridFunction&, std::size_t)>& G,
                                        const GridFunction& u, std::size_t t, double h, const NoiseModel* noise,
                                        Rng& rng) {
    const auto k = crank_nicolson_coefficients(h);
    auto out = k.alpha * u;
    out.axpy(1.0 - k.alpha, G(u, t));
    if (noise) out.axpy(k.beta, noise->sample(u.resolution(), rng));
    check_finite(out, "crank_nicolson_step");
    return out;
}

/// Posterior variance factor c_t = (1 - alpha_{t-1}) beta_t / (1 - alpha_t).
inline double ddpm_posterior_variance(const NoiseSchedule& s, std::size_t t) {
    return (1.0 - s.alpha(t - 1)) * s.beta(t) / (1.0 - s.alpha(t));
}

enum class DdpmParameterization { W2, Kl };

/// Ancestral sampling from the given u_T down to the last level; no noise at the last step.
/// W2: F predicts the noise and the walk ends at u_0. Kl: F is the C^{1/2}-range network of
/// the KL loss, mean = C^{1/2} F + sqrt(1-beta_t)(1-alpha_{t-1})/(1-alpha_t) u_t, which is only
/// trained for t >= 2, so the walk ends at u_1.
inline std::vector<GridFunction> ddpm_sample(const BatchDrift& F, const NoiseSchedule& s, std::vector<GridFunction> u,
                                             std::vector<Rng>& rngs, DdpmParameterization p = DdpmParameterization::W2,
                                             bool zero_noise = false) {
    if (s.kind != NoiseSchedule::Kind::Ddpm) throw ConfigError("schedule", "ddpm_sample needs a ddpm schedule");
    if (rngs.size() != u.size()) throw ShapeError("ddpm_sample: one rng per chain");
    const std::size_t last = p == DdpmParameterization::Kl ? 2 : 1;
    if (s.levels() < last) throw ConfigError("schedule.T", "ddpm_kl sampling needs T >= 2");
    if (u.empty()) return u;
    const NoiseSampler ns(s.base, u.front().resolution());
    for (std::size_t t = s.levels(); t >= last; --t) {
        const double b = s.beta(t), a = s.alpha(t);
        const auto f = F(u, t);
        if (f.size() != u.size()) throw ShapeError("ddpm_sample: network returned wrong batch size");
        for (std::size_t c = 0; c < u.size(); ++c) {
            if (p == DdpmParameterization::W2) {
                u[c].axpy(-b / std::sqrt(1.0 - a), f[c]);
                u[c] *= 1.0 / std::sqrt(1.0 - b);
            } else {
                auto mean = s.base.apply_power(f[c], 0.5);
                mean.axpy(std::sqrt(1.0 - b) * (1.0 - s.alpha(t - 1)) / (1.0 - a), u[c]);
                u[c] = std::move(mean);
            }
            if (t > last && !zero_noise) u[c].axpy(std::sqrt(ddpm_posterior_variance(s, t)), ns.sample(rngs[c]));
            if (!u[c].all_finite())
                throw NumericError("ddpm_sample: non-finite state at level " + std::to_string(t) + ", chain " +
                                   std::to_string(c));
        }
        if (t == 1) break;
    }
    return u;
}

/// `chains` DDPM samples from u_T ~ N(0, C).
inline std::vector<GridFunction> ddpm_sample_chains(const BatchDrift& F, const NoiseSchedule& s, std::size_t chains,
                                                    std::size_t resolution, std::uint64_t seed,
                                                    DdpmParameterization p = DdpmParameterization::W2) {
    std::vector<Rng> rngs;
    for (std::size_t c = 0; c < chains; ++c) rngs.push_back(chain_rng(seed, c));
    const NoiseSampler ns(s.base, resolution);
    std::vector<GridFunction> u;
    for (auto& r : rngs) u.push_back(ns.sample(r));
    return ddpm_sample(F, s, std::move(u), rngs, p);
}

/// Exact conditional-expectation map for Gaussian data N(m, C_d) and noise sigma_t^2 C.
struct OracleScore {
    GridFunction mean;
    std::vector<double> data_eigenvalues;   // d_k in coefficient storage order
    std::vector<double> noise_eigenvalues;  // c_k

    OracleScore(GridFunction m, std::vector<double> d, std::vector<double> c)
        : mean(std::move(m)), data_eigenvalues(std::move(d)), noise_eigenvalues(std::move(c)) {
        if (data_eigenvalues.size() != noise_eigenvalues.size() ||
            data_eigenvalues.size() != detail::coefficient_count(mean.domain(), mean.resolution()))
            throw ShapeError("OracleScore: eigenvalue tables do not match the mean's resolution");
        for (std::size_t k = 0; k < data_eigenvalues.size(); ++k)
            if (!(data_eigenvalues[k] > 0.0) || !(noise_eigenvalues[k] > 0.0))
                throw ConfigError("oracle", "eigenvalues must be > 0");
    }

    static OracleScore gaussian(const GridFunction& m, const MaternCovariance& data, const NoiseModel& noise) {
        return {m, data.eigenvalues(m.resolution()), noise.eigenvalues(m.resolution())};
    }
};

/// -sum_k (sigma^2 c_k / (d_k + sigma^2 c_k)) (v_k - m_k) phi_k = -E[eta | v].
inline GridFunction oracle_score(const OracleScore& o, const GridFunction& v, double sigma) {
    if (!v.same_shape(o.mean)) throw ShapeError("oracle_score: input differs from the oracle's resolution");
    std::vector<double> table(o.data_eigenvalues.size());
    const double s2 = sigma * sigma;
    for (std::size_t k = 0; k < table.size(); ++k) {
        const double c = s2 * o.noise_eigenvalues[k];
        table[k] = -c / (o.data_eigenvalues[k] + c);
    }
    return apply_multiplier(v - o.mean, std::span<const double>(table));
}

/// Langevin drift from the oracle: oracle_score / sigma_t^2.
inline BatchDrift oracle_drift(const OracleScore& o, const NoiseSchedule& s) {
    return [o, s](std::span<const GridFunction> u, std::size_t t) {
        const double sig = s.sigma(t);
        std::vector<GridFunction> out;
        out.reserve(u.size());
        for (const auto& v : u) out.push_back((1.0 / (sig * sig)) * oracle_score(o, v, sig));
        return out;
    };
}

/// Langevin drift from a trained network. RescaledDsm models already output
/// -E[eta|v]/sigma^2; PlainDsm outputs -E[eta|v]; PrecondDsm outputs +E[eta|v].
inline BatchDrift model_drift(const FnoModel& m, const NoiseSchedule& s, LossKind kind, std::size_t workers = 1) {
    if (is_ddpm(kind)) throw ConfigError("loss", "ddpm models are sampled with ddpm_sample");
    return [&m, s, kind, workers](std::span<const GridFunction> u, std::size_t t) {
        const std::vector<double> cond(u.size(), s.conditioning(t));
        auto out = m.forward_parallel(u, cond, workers);
        const double sig = s.sigma(t);
        const double scale = kind == LossKind::RescaledDsm ? 1.0
                             : kind == LossKind::PlainDsm  ? 1.0 / (sig * sig)
                                                           : -1.0 / (sig * sig);
        if (scale != 1.0)
            for (auto& g : out) g *= scale;
        return out;
    };
}

/// Network output for DDPM sampling.
inline BatchDrift ddpm_model(const FnoModel& m, const NoiseSchedule& s, std::size_t workers = 1) {
    return [&m, s, workers](std::span<const GridFunction> u, std::size_t t) {
        const std::vector<double> cond(u.size(), s.conditioning(t));
        return m.forward_parallel(u, cond, workers);
    };
}

}  // namespace fdiff
