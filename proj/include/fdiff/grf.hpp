#pragma once

// Matérn-type covariance operators C = sigma^2 (-Laplacian + tau^2 I)^(-alpha),
// Karhunen-Loeve sampling, fractional powers of C, white noise and smoothing
// operators. Everything here is diagonal in the Laplacian eigenbasis.

#include <fdiff/spectral.hpp>

#include <json.hpp>

#include <optional>
#include <random>
#include <variant>

namespace fdiff {

using Rng = std::mt19937_64;

/// Standard normal draw; the only source of Gaussian randomness in the library.
inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return n(rng);
}

struct MaternCovariance {
    DomainSpec domain{};
    double sigma = 1.0;
    double tau = 1.0;
    double alpha = 1.0;

    MaternCovariance() = default;
    MaternCovariance(DomainSpec d, double sigma_, double tau_, double alpha_)
        : domain(d), sigma(sigma_), tau(tau_), alpha(alpha_) {
        validate();
    }

    /// sigma = 0 is accepted as the degenerate zero covariance.
    void validate() const {
        domain.validate();
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma", "must be >= 0");
        if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau", "must be > 0");
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha", "must be > 0");
        if (!(alpha > 0.5 * domain.dims))
            throw ConfigError("alpha", "covariance is not trace-class: need alpha > dims/2");
    }

    double eigenvalue(const Wavenumber& k) const {
        return sigma * sigma * std::pow(laplacian_eigenvalue(domain, k) + tau * tau, -alpha);
    }

    /// lambda_k for every coefficient slot at a resolution.
    std::vector<double> eigenvalues(std::size_t n) const {
        std::vector<double> out;
        for (const auto& k : mode_wavenumbers(domain, n)) out.push_back(eigenvalue(k));
        return out;
    }
};

inline void to_json(nlohmann::json& j, const MaternCovariance& c) {
    j = {{"sigma", c.sigma}, {"tau", c.tau}, {"alpha", c.alpha}, {"boundary", to_string(c.domain.boundary)}};
}

/// i.i.d. N(0, sd^2) at each grid point. Not trace-class in the continuum limit.
struct WhiteNoise {
    DomainSpec domain{};
    double sd = 1.0;
};

namespace detail {

/// Draws Gaussian coefficients with variances `var` in storage order. Periodic
/// fields get Hermitian symmetry so the synthesized function is real.
inline void draw_coefficients(const DomainSpec& d, std::size_t n, std::span<const double> var, Rng& rng,
                              std::span<cplx> out) {
    if (d.boundary == Boundary::Dirichlet) {
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = cplx(std::sqrt(var[k]) * standard_normal(rng), 0.0);
        return;
    }
    auto partner = [&](std::size_t i) -> std::size_t {
        if (d.dims == 1) return (n - i) % n;
        const std::size_t ix = i / n, iy = i % n;
        return ((n - ix) % n) * n + (n - iy) % n;
    };
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t p = partner(i);
        if (p == i) {
            out[i] = cplx(std::sqrt(var[i]) * standard_normal(rng), 0.0);
        } else if (i < p) {
            const double s = std::sqrt(0.5 * var[i]);
            const double re = standard_normal(rng);
            const double im = standard_normal(rng);
            out[i] = cplx(s * re, s * im);
            out[p] = std::conj(out[i]);
        }
    }
}

}  // namespace detail

/// Karhunen-Loeve sampler for one covariance at one resolution, with the
/// eigenvalue table computed once.
class KlSampler {
  public:
    KlSampler(const MaternCovariance& c, std::size_t resolution)
        : domain_(c.domain), resolution_(resolution), var_(c.eigenvalues(resolution)) {
        check_resolution(domain_, resolution_);
    }

    GridFunction sample(Rng& rng) const {
        std::vector<cplx> coeffs(var_.size());
        detail::draw_coefficients(domain_, resolution_, var_, rng, coeffs);
        GridFunction u(domain_, resolution_);
        detail::from_coefficients(domain_, resolution_, coeffs, u.values());
        return u;
    }

    const std::vector<double>& eigenvalues() const { return var_; }

  private:
    DomainSpec domain_;
    std::size_t resolution_;
    std::vector<double> var_;
};

/// u = mean + sum_k sqrt(lambda_k) xi_k phi_k over every represented mode.
inline GridFunction sample(const MaternCovariance& c, const GridFunction* mean, std::size_t resolution, Rng& rng) {
    c.validate();
    if (mean && (!(mean->domain() == c.domain) || mean->resolution() != resolution))
        throw ShapeError("sample: mean does not match covariance domain/resolution");
    auto u = KlSampler(c, resolution).sample(rng);
    if (mean) u += *mean;
    return u;
}

inline GridFunction sample(const MaternCovariance& c, std::size_t resolution, Rng& rng) {
    return sample(c, nullptr, resolution, rng);
}

/// C^power u.
inline GridFunction apply_power(const MaternCovariance& c, const GridFunction& u, double power) {
    if (!(u.domain() == c.domain)) throw ShapeError("apply_power: domain mismatch");
    auto table = c.eigenvalues(u.resolution());
    for (double& v : table) v = std::pow(v, power);
    return apply_multiplier(u, std::span<const double>(table));
}

/// Partial trace: sum of lambda_k over the modes represented at a resolution.
inline double trace(const MaternCovariance& c, std::size_t resolution) {
    double s = 0.0;
    for (double v : c.eigenvalues(resolution)) s += v;
    return s;
}

inline GridFunction white_sample(const WhiteNoise& w, std::size_t resolution, Rng& rng) {
    GridFunction u(w.domain, resolution);
    for (double& v : u.values()) v = w.sd * standard_normal(rng);
    if (w.domain.boundary == Boundary::Dirichlet) u.values().back() = 0.0;
    return u;
}

/// Diagonal operator in the Laplacian eigenbasis used to smooth the clean signal.
struct SmoothingOperator {
    enum class Kind { Identity, HeatSemigroup, GaussianBlur, Scalar };

    Kind kind = Kind::Identity;
    double parameter = 0.0;  // t, bandwidth or scale factor

    static SmoothingOperator identity() { return {}; }
    static SmoothingOperator heat(double t) {
        if (!(t > 0.0)) throw ConfigError("smoothing.t", "heat semigroup time must be > 0");
        return {Kind::HeatSemigroup, t};
    }
    static SmoothingOperator gaussian_blur(double bandwidth) {
        if (!(bandwidth > 0.0)) throw ConfigError("smoothing.bandwidth", "must be > 0");
        return {Kind::GaussianBlur, bandwidth};
    }
    static SmoothingOperator scalar(double f) { return {Kind::Scalar, f}; }

    /// Multiplier on the eigenfunction with -Laplacian eigenvalue `eig`.
    double multiplier(double eig) const {
        switch (kind) {
            case Kind::Identity: return 1.0;
            case Kind::HeatSemigroup: return std::exp(-parameter * eig);
            case Kind::GaussianBlur: return std::exp(-0.5 * parameter * parameter * eig);
            case Kind::Scalar: return parameter;
        }
        return 1.0;
    }
};

inline GridFunction smooth(const SmoothingOperator& a, const GridFunction& u) {
    switch (a.kind) {
        case SmoothingOperator::Kind::Identity: return u;
        case SmoothingOperator::Kind::Scalar: return a.parameter * u;
        default: break;
    }
    auto table = mode_eigenvalues(u.domain(), u.resolution());
    for (double& v : table) v = a.multiplier(v);
    return apply_multiplier(u, std::span<const double>(table));
}

/// max_k a(k)^2 / (g * lambda_k) over the modes represented at a resolution: a
/// finite value that stops growing under refinement indicates A(H) lies in the
/// Cameron-Martin space of g*C.
inline double cameron_martin_ratio(const SmoothingOperator& a, const MaternCovariance& c, double g,
                                   std::size_t resolution) {
    double worst = 0.0;
    for (const auto& k : mode_wavenumbers(c.domain, resolution)) {
        const double m = a.multiplier(laplacian_eigenvalue(c.domain, k));
        worst = std::max(worst, m * m / (g * c.eigenvalue(k)));
    }
    return worst;
}

/// Reference noise: a trace-class Matérn covariance or per-point white noise.
class NoiseModel {
  public:
    NoiseModel() = default;
    NoiseModel(MaternCovariance c) : model_(c) {}  // NOLINT(google-explicit-constructor)
    NoiseModel(WhiteNoise w) : model_(w) {}        // NOLINT(google-explicit-constructor)

    bool is_white() const { return std::holds_alternative<WhiteNoise>(model_); }
    const MaternCovariance& matern() const { return std::get<MaternCovariance>(model_); }
    const WhiteNoise& white() const { return std::get<WhiteNoise>(model_); }

    const DomainSpec& domain() const {
        return is_white() ? white().domain : matern().domain;
    }

    /// Variance of each orthonormal coefficient. White noise with per-point sd
    /// has coefficient variance sd^2 * h^dims on every mode.
    std::vector<double> eigenvalues(std::size_t n) const {
        if (!is_white()) return matern().eigenvalues(n);
        const double h = domain().extent / double(n);
        const double v = white().sd * white().sd * (domain().dims == 1 ? h : h * h);
        return std::vector<double>(detail::coefficient_count(domain(), n), v);
    }

    GridFunction sample(std::size_t n, Rng& rng) const {
        if (is_white()) return white_sample(white(), n, rng);
        return fdiff::sample(matern(), n, rng);
    }

    GridFunction apply_power(const GridFunction& u, double power) const {
        auto table = eigenvalues(u.resolution());
        for (double& v : table) v = std::pow(v, power);
        return apply_multiplier(u, std::span<const double>(table));
    }

    nlohmann::json to_json() const {
        if (is_white()) return {{"kind", "white"}, {"sd", white().sd}};
        nlohmann::json j = matern();
        j["kind"] = "matern";
        return j;
    }

  private:
    std::variant<MaternCovariance, WhiteNoise> model_{MaternCovariance{}};
};

/// Precomputed noise draws for one NoiseModel at one resolution.
class NoiseSampler {
  public:
    NoiseSampler(const NoiseModel& m, std::size_t n) : model_(m), n_(n) {
        if (!m.is_white()) kl_.emplace(m.matern(), n);
    }

    GridFunction sample(Rng& rng) const {
        if (kl_) return kl_->sample(rng);
        return white_sample(model_.white(), n_, rng);
    }

  private:
    NoiseModel model_;
    std::size_t n_;
    std::optional<KlSampler> kl_;
};

}  // namespace fdiff
