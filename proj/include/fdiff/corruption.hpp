#pragma once

// Noise schedules and the forward corruption v_t = A_t u + eta_t for the NCSN
// (geometric sigma), DDPM (beta/alpha) and heat-dissipation variants.
// Levels are indexed t = 1..T; t = 1 is the widest noise.

#include <fdiff/config.hpp>
#include <fdiff/grf.hpp>

#include <cmath>
#include <vector>

namespace fdiff {

/// sigma_t = sigma_1 r^(t-1), r = (sigma_T/sigma_1)^(1/(T-1)); the last entry is sigma_T exactly.
inline std::vector<double> geometric_sigmas(double sigma_1, double sigma_T, std::size_t T) {
    if (T == 0) throw ConfigError("T", "must be >= 1");
    if (!(sigma_1 > 0.0) || !(sigma_T > 0.0)) throw ConfigError("sigma_1", "sigmas must be > 0");
    if (sigma_T > sigma_1) throw ConfigError("sigma_T", "must be <= sigma_1");
    if (T == 1) return {sigma_1};
    const double r = std::pow(sigma_T / sigma_1, 1.0 / double(T - 1));
    std::vector<double> s(T);
    for (std::size_t t = 0; t < T; ++t) s[t] = sigma_1 * std::pow(r, double(t));
    s.back() = sigma_T;
    return s;
}

/// alpha_t = prod_{s<=t} (1 - beta_s).
inline std::vector<double> ddpm_alphas(const std::vector<double>& betas) {
    std::vector<double> a(betas.size());
    double acc = 1.0;
    for (std::size_t t = 0; t < betas.size(); ++t) {
        acc *= 1.0 - betas[t];
        a[t] = acc;
    }
    return a;
}

inline std::vector<double> linear_betas(double beta_1, double beta_T, std::size_t T) {
    std::vector<double> b(T);
    for (std::size_t t = 0; t < T; ++t)
        b[t] = T == 1 ? beta_1 : beta_1 + (beta_T - beta_1) * double(t) / double(T - 1);
    return b;
}

struct NoiseSchedule {
    enum class Kind { Ncsn, Ddpm };

    Kind kind = Kind::Ncsn;
    std::vector<double> sigmas;              // Ncsn
    std::vector<double> betas;               // Ddpm
    std::vector<double> alphas;              // Ddpm, derived
    NoiseModel base;
    std::vector<SmoothingOperator> smoothing;  // empty: identity at every level

    static NoiseSchedule ncsn(std::vector<double> sigmas, NoiseModel base) {
        NoiseSchedule s;
        s.kind = Kind::Ncsn;
        s.sigmas = std::move(sigmas);
        s.base = std::move(base);
        s.validate();
        return s;
    }

    static NoiseSchedule ddpm(std::vector<double> betas, NoiseModel base) {
        NoiseSchedule s;
        s.kind = Kind::Ddpm;
        s.betas = std::move(betas);
        s.alphas = ddpm_alphas(s.betas);
        s.base = std::move(base);
        s.validate();
        return s;
    }

    /// A_t = HeatSemigroup(time_t) with time_t log-spaced from t_max (t = 1) down to t_min (t = T).
    static NoiseSchedule heat_dissipation(std::vector<double> sigmas, NoiseModel base, double t_min, double t_max) {
        if (!(t_min > 0.0)) throw ConfigError("smoothing.t_min", "must be > 0");
        if (!(t_max >= t_min)) throw ConfigError("smoothing.t_max", "must be >= t_min");
        auto s = ncsn(std::move(sigmas), std::move(base));
        for (double v : geometric_sigmas(t_max, t_min, s.levels())) s.smoothing.push_back(SmoothingOperator::heat(v));
        return s;
    }

    std::size_t levels() const { return kind == Kind::Ncsn ? sigmas.size() : betas.size(); }

    void validate() const {
        if (levels() == 0) throw ConfigError("schedule.T", "must be >= 1");
        if (kind == Kind::Ncsn) {
            for (std::size_t t = 0; t < sigmas.size(); ++t) {
                if (!(sigmas[t] > 0.0) || !std::isfinite(sigmas[t]))
                    throw ConfigError("schedule.sigmas", "sigmas must be finite and > 0");
                if (t > 0 && sigmas[t] > sigmas[t - 1])
                    throw ConfigError("schedule.sigmas", "sigmas must be non-increasing");
            }
        } else {
            for (std::size_t t = 0; t < betas.size(); ++t) {
                if (!(betas[t] > 0.0 && betas[t] < 1.0)) throw ConfigError("schedule.betas", "betas must lie in (0, 1)");
                if (t > 0 && betas[t] < betas[t - 1])
                    throw ConfigError("schedule.betas", "betas must be non-decreasing");
            }
            if (alphas.size() != betas.size()) throw ConfigError("schedule.betas", "alphas not derived");
        }
        if (!smoothing.empty() && smoothing.size() != levels())
            throw ConfigError("schedule.smoothing", "one smoothing operator per level required");
    }

    void check_level(std::size_t t) const {
        if (t < 1 || t > levels())
            throw std::out_of_range("noise level t=" + std::to_string(t) + " outside [1, " +
                                    std::to_string(levels()) + "]");
    }

    double sigma(std::size_t t) const {
        check_level(t);
        return sigmas.at(t - 1);
    }
    double beta(std::size_t t) const {
        check_level(t);
        return betas.at(t - 1);
    }
    /// alpha_0 = 1.
    double alpha(std::size_t t) const {
        if (t == 0) return 1.0;
        check_level(t);
        return alphas.at(t - 1);
    }

    /// Multiplier on the clean signal: A_t (Ncsn) or sqrt(alpha_t) (Ddpm).
    GridFunction clean_part(const GridFunction& u, std::size_t t) const {
        check_level(t);
        if (kind == Kind::Ddpm) return std::sqrt(alpha(t)) * u;
        if (smoothing.empty()) return u;
        return smooth(smoothing[t - 1], u);
    }

    /// Scale applied to a N(0, C) draw: sigma_t (Ncsn) or sqrt(1 - alpha_t) (Ddpm).
    double noise_scale(std::size_t t) const {
        return kind == Kind::Ncsn ? sigma(t) : std::sqrt(1.0 - alpha(t));
    }

    /// Scalar conditioning fed to the score network: log sigma_t or t/T.
    double conditioning(std::size_t t) const {
        return kind == Kind::Ncsn ? std::log(sigma(t)) : double(t) / double(levels());
    }
};

struct CorruptionSample {
    std::size_t t = 0;
    GridFunction clean;
    GridFunction noisy;
    GridFunction noise;
};

/// Corruption with a supplied standard draw z ~ N(0, C): noise = noise_scale(t) z.
inline CorruptionSample corrupt_with(const NoiseSchedule& s, const GridFunction& u, std::size_t t,
                                     const GridFunction& z) {
    s.check_level(t);
    u.require_same_shape(z, "corrupt");
    CorruptionSample c{t, s.clean_part(u, t), {}, s.noise_scale(t) * z};
    c.noisy = c.clean + c.noise;
    return c;
}

inline CorruptionSample corrupt(const NoiseSchedule& s, const GridFunction& u, std::size_t t, Rng& rng) {
    s.check_level(t);
    if (!(s.base.domain() == u.domain())) throw ShapeError("corrupt: schedule covariance domain differs from input");
    return corrupt_with(s, u, t, s.base.sample(u.resolution(), rng));
}

inline nlohmann::json schedule_to_json(const NoiseSchedule& s) {
    nlohmann::json j;
    j["covariance"] = s.base.to_json();
    j["covariance"].erase("boundary");
    if (s.kind == NoiseSchedule::Kind::Ncsn) {
        j["kind"] = "ncsn";
        j["sigmas"] = s.sigmas;
    } else {
        j["kind"] = "ddpm";
        j["betas"] = s.betas;
    }
    if (!s.smoothing.empty()) {
        if (s.smoothing.front().kind == SmoothingOperator::Kind::GaussianBlur) {
            j["smoothing"] = {{"kind", "blur"}, {"bandwidth", s.smoothing.front().parameter}};
        } else {
            std::vector<double> times;
            for (const auto& a : s.smoothing) times.push_back(a.parameter);
            j["smoothing"] = {{"kind", "heat"}, {"times", times}};
        }
    }
    return j;
}

/// {kind: "ncsn", T, sigma_1, sigma_T | sigmas, covariance, smoothing}
/// {kind: "ddpm", betas | T, beta_1, beta_T, covariance}
inline NoiseSchedule schedule_from_json(const nlohmann::json& j, const DomainSpec& d, const std::string& path) {
    using namespace config;
    check_keys(j, {"kind", "T", "sigma_1", "sigma_T", "sigmas", "betas", "beta_1", "beta_T", "covariance", "smoothing"},
               path);
    const auto kind = get_or<std::string>(j, "kind", "ncsn", path);
    const auto base = j.contains("covariance") ? noise_from_json(j.at("covariance"), d, join(path, "covariance"))
                                               : NoiseModel(MaternCovariance(d, 1.0, 1.0, 0.5 * d.dims + 0.5));
    auto wrap = [&](auto&& make) {
        try {
            return make();
        } catch (const ConfigError& e) {
            throw ConfigError(join(path, e.key()), e.what());
        }
    };
    if (kind == "ddpm") {
        if (j.contains("sigmas") || j.contains("sigma_1") || j.contains("sigma_T") || j.contains("smoothing"))
            throw ConfigError(path, "ddpm schedules take betas only");
        std::vector<double> betas;
        if (j.contains("betas")) {
            betas = get<std::vector<double>>(j, "betas", path);
        } else {
            const auto T = get_or<std::size_t>(j, "T", 1000, path);
            betas = linear_betas(get_or<double>(j, "beta_1", 1e-4, path), get_or<double>(j, "beta_T", 0.02, path), T);
        }
        return wrap([&] { return NoiseSchedule::ddpm(betas, base); });
    }
    if (kind != "ncsn") throw ConfigError(join(path, "kind"), "expected \"ncsn\" or \"ddpm\"");
    if (j.contains("betas") || j.contains("beta_1") || j.contains("beta_T"))
        throw ConfigError(path, "ncsn schedules take sigmas only");
    std::vector<double> sigmas;
    if (j.contains("sigmas")) {
        sigmas = get<std::vector<double>>(j, "sigmas", path);
    } else {
        const auto T = get_or<std::size_t>(j, "T", 10, path);
        sigmas = wrap([&] {
            return geometric_sigmas(get_or<double>(j, "sigma_1", 1.0, path), get_or<double>(j, "sigma_T", 0.01, path), T);
        });
    }
    if (!j.contains("smoothing")) return wrap([&] { return NoiseSchedule::ncsn(sigmas, base); });

    const auto& sj = j.at("smoothing");
    const auto spath = join(path, "smoothing");
    require_object(sj, spath);
    const auto skind = get<std::string>(sj, "kind", spath);
    if (skind == "identity") {
        check_keys(sj, {"kind"}, spath);
        return wrap([&] { return NoiseSchedule::ncsn(sigmas, base); });
    }
    if (skind == "heat") {
        if (sj.contains("times")) {
            check_keys(sj, {"kind", "times"}, spath);
            auto s = wrap([&] { return NoiseSchedule::ncsn(sigmas, base); });
            for (double v : get<std::vector<double>>(sj, "times", spath))
                s.smoothing.push_back(wrap([&] { return SmoothingOperator::heat(v); }));
            wrap([&] { s.validate(); return 0; });
            return s;
        }
        check_keys(sj, {"kind", "t_min", "t_max"}, spath);
        return wrap([&] {
            return NoiseSchedule::heat_dissipation(sigmas, base, get<double>(sj, "t_min", spath),
                                                   get<double>(sj, "t_max", spath));
        });
    }
    if (skind == "blur") {
        check_keys(sj, {"kind", "bandwidth"}, spath);
        auto s = wrap([&] { return NoiseSchedule::ncsn(sigmas, base); });
        const auto a = wrap([&] { return SmoothingOperator::gaussian_blur(get<double>(sj, "bandwidth", spath)); });
        s.smoothing.assign(s.levels(), a);
        return s;
    }
    throw ConfigError(join(spath, "kind"), "expected identity, heat or blur");
}

}  // namespace fdiff
