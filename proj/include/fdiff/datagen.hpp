#pragma once

// Reference datasets: the two-component Gaussian mixture of random fields and
// the Navier-Stokes vorticity pushforward of Gaussian random forcings.

#include <fdiff/config.hpp>

#include <cmath>
#include <exception>
#include <numbers>
#include <thread>

namespace fdiff {

/// Uniform draw in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return double(rng() >> 11) * 0x1.0p-53; }

enum class MixtureMean { SinHalf, Linear };

inline const char* to_string(MixtureMean m) { return m == MixtureMean::SinHalf ? "sin_half" : "linear"; }

/// u ~ N(f1, C) with probability p, else N(f2, C), f2 = -f1.
/// SinHalf: f1 = sin(x/2). Linear: f1 = -10/6 x + 5.
struct GaussianMixtureSpec {
    DomainSpec domain = DomainSpec::interval(2 * std::numbers::pi, Boundary::Dirichlet);
    MixtureMean mean = MixtureMean::SinHalf;
    double p = 0.5;
    MaternCovariance cov{DomainSpec::interval(2 * std::numbers::pi, Boundary::Dirichlet), 3.0, 3.0, 3.0};

    void validate() const {
        domain.validate();
        if (domain.dims != 1) throw ConfigError("domain.dims", "the mixture is one-dimensional");
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p", "must lie in [0, 1]");
        if (!(cov.domain == domain)) throw ConfigError("covariance", "covariance domain differs from the dataset domain");
        cov.validate();
    }

    double f1(double x) const { return mean == MixtureMean::SinHalf ? std::sin(x / 2) : -10.0 / 6.0 * x + 5.0; }

    GridFunction first_mean(std::size_t resolution) const {
        return GridFunction::from_function(domain, resolution, [this](double x) { return f1(x); });
    }
};

inline Dataset gen_gaussian_mixture(const GaussianMixtureSpec& spec, std::size_t N, std::size_t resolution, Rng& rng) {
    spec.validate();
    Dataset d{spec.domain, resolution, {}, {}};
    d.validate();
    const auto m1 = spec.first_mean(resolution);
    const auto m2 = -1.0 * m1;
    const KlSampler kl(spec.cov, resolution);
    d.samples.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
        const bool first = uniform01(rng) < spec.p;
        auto u = kl.sample(rng);
        u += first ? m1 : m2;
        d.samples.push_back(std::move(u));
    }
    d.metadata = {{"generator", "gaussian_mixture"},
                  {"mean", to_string(spec.mean)},
                  {"p", spec.p},
                  {"covariance", spec.cov},
                  {"N", N}};
    return d;
}

/// ||C^{-1/2} u|| over the modes represented at u's resolution.
inline double cameron_martin_norm(const GridFunction& u, const NoiseModel& noise) {
    return l2_norm(noise.apply_power(u, -0.5));
}

inline GaussianMixtureSpec gm_spec_from_json(const nlohmann::json& j, const std::string& path) {
    using namespace config;
    check_keys(j, {"domain", "mean", "p", "covariance"}, path);
    GaussianMixtureSpec s;
    if (j.contains("domain")) s.domain = domain_from_json(j.at("domain"), join(path, "domain"));
    const auto mean = get_or<std::string>(j, "mean", "sin_half", path);
    if (mean == "sin_half") s.mean = MixtureMean::SinHalf;
    else if (mean == "linear") s.mean = MixtureMean::Linear;
    else throw ConfigError(join(path, "mean"), "expected \"sin_half\" or \"linear\"");
    s.p = get_or<double>(j, "p", 0.5, path);
    if (!(s.p >= 0.0 && s.p <= 1.0)) throw ConfigError(join(path, "p"), "must lie in [0, 1]");
    s.cov = j.contains("covariance") ? matern_from_json(j.at("covariance"), s.domain, join(path, "covariance"))
                                     : MaternCovariance(s.domain, 3.0, 3.0, 3.0);
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(join(path, e.key()), e.what());
    }
    return s;
}

/// Vorticity form on the periodic torus:
/// d_t w + u . grad w - eps lap w = f, u = (d_y psi, -d_x psi), -lap psi = w.
struct NavierStokesSpec {
    DomainSpec domain = DomainSpec::unit_torus(2);
    double viscosity = 1.0 / 500.0;
    double final_time = 5.0;
    MaternCovariance forcing{DomainSpec::unit_torus(2), 3.0 * std::sqrt(3.0), 3.0, 4.0};
    double forcing_scale = 1.0;
    double dt = 0.0;  // 0: 1e-3 * 64 / resolution
    std::size_t resolution = 64;

    double step() const { return dt > 0.0 ? dt : 1e-3 * 64.0 / double(resolution); }

    void validate() const {
        domain.validate();
        if (domain.dims != 2 || domain.boundary != Boundary::Periodic)
            throw ConfigError("domain", "Navier-Stokes runs on the periodic 2D torus");
        if (!(viscosity >= 0.0) || !std::isfinite(viscosity)) throw ConfigError("viscosity", "must be >= 0");
        if (!(final_time > 0.0)) throw ConfigError("final_time", "must be > 0");
        if (!(dt >= 0.0)) throw ConfigError("dt", "must be >= 0");
        if (!std::isfinite(forcing_scale)) throw ConfigError("forcing_scale", "must be finite");
        if (!(forcing.domain == domain)) throw ConfigError("forcing", "forcing domain differs from the solver domain");
        forcing.validate();
        try {
            check_resolution(domain, resolution);
        } catch (const ShapeError& e) {
            throw ConfigError("resolution", e.what());
        }
    }
};

inline constexpr double kCflLimit = 0.5;

namespace detail {

/// Pseudo-spectral vorticity solver on the r2c half spectrum (unnormalized DFT).
class NsSolver {
  public:
    using Half = std::vector<cplx>;

    NsSolver(const DomainSpec& d, std::size_t n, double viscosity) : d_(d), n_(n), nh_(n / 2 + 1), eps_(viscosity) {
        const double w = 2.0 * std::numbers::pi / d.extent;
        const std::size_t m = n_ * nh_;
        eig_.resize(m);
        ikx_.resize(m);
        iky_.resize(m);
        mask_.resize(m);
        for (auto& a : a_) a.resize(m);
        for (auto& g : g_) g.resize(n_ * n_);
        for (std::size_t i = 0; i < n_; ++i) {
            const int kx = signed_index(i, n_);
            for (std::size_t j = 0; j < nh_; ++j) {
                const int ky = int(j);
                const std::size_t s = i * nh_ + j;
                eig_[s] = w * w * (double(kx) * kx + double(ky) * ky);
                const bool nyq_x = 2 * std::size_t(std::abs(kx)) == n_;
                const bool nyq_y = 2 * std::size_t(ky) == n_;
                ikx_[s] = nyq_x ? cplx{} : cplx(0.0, w * kx);
                iky_[s] = nyq_y ? cplx{} : cplx(0.0, w * ky);
                const double cut = double(n_) / 3.0;
                mask_[s] = (std::abs(kx) > cut || ky > cut) ? 0.0 : 1.0;
            }
        }
    }

    std::size_t half_size() const { return n_ * nh_; }

    Half to_half(const SpectralField& s) const {
        if (!(s.domain == d_) || s.resolution != n_) throw ShapeError("ns_step: field shape differs from solver");
        const double scale = double(n_ * n_) / d_.extent;
        Half h(half_size());
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < nh_; ++j) h[i * nh_ + j] = s.coeffs[i * n_ + j] * scale;
        return h;
    }

    SpectralField from_half(const Half& h) const {
        SpectralField s{d_, n_, std::vector<cplx>(n_ * n_)};
        const double scale = d_.extent / double(n_ * n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) {
                s.coeffs[i * n_ + j] = j < nh_ ? h[i * nh_ + j] * scale
                                               : std::conj(h[((n_ - i) % n_) * nh_ + (n_ - j)]) * scale;
            }
        return s;
    }

    Half from_grid(const GridFunction& u) const {
        Half h(half_size());
        rfft(2, int(n_), u.data(), h.data());
        return h;
    }

    GridFunction to_grid(const Half& h) const {
        GridFunction u(d_, n_);
        grid(h, u.values());
        return u;
    }

    /// -(u . grad w)^ dealiased, plus f; returns max |u| on the grid.
    double rhs(const Half& w, const Half& f, Half& out) {
        const std::size_t m = half_size();
        for (std::size_t s = 0; s < m; ++s) {
            const cplx psi = eig_[s] > 0.0 ? w[s] / eig_[s] : cplx{};
            a_[0][s] = iky_[s] * psi;
            a_[1][s] = -ikx_[s] * psi;
            a_[2][s] = ikx_[s] * w[s];
            a_[3][s] = iky_[s] * w[s];
        }
        for (int c = 0; c < 4; ++c) grid(a_[c], g_[c]);
        double u2max = 0.0;
        const std::size_t total = n_ * n_;
        for (std::size_t i = 0; i < total; ++i) {
            u2max = std::max(u2max, g_[0][i] * g_[0][i] + g_[1][i] * g_[1][i]);
            g_[4][i] = g_[0][i] * g_[2][i] + g_[1][i] * g_[3][i];
        }
        const double umax = std::sqrt(u2max);
        out.resize(m);
        rfft(2, int(n_), g_[4].data(), out.data());
        for (std::size_t s = 0; s < m; ++s) out[s] = f[s] - mask_[s] * out[s];
        out[0] = cplx{};
        return umax;
    }

    /// Heun with the exact integrating factor exp(-eps eig dt) for diffusion.
    void step(Half& w, const Half& f, double dt) {
        const std::size_t m = half_size();
        const double umax = rhs(w, f, n1_);
        if (!std::isfinite(umax)) throw NumericError("ns_step: non-finite velocity");
        const double cfl = dt * umax * double(n_) / d_.extent;
        if (cfl > kCflLimit)
            throw NumericError("ns_step: CFL number " + std::to_string(cfl) + " exceeds " + std::to_string(kCflLimit) +
                               " (dt=" + std::to_string(dt) + ", max|u|=" + std::to_string(umax) + ")");
        if (dt != decay_dt_) {
            decay_.resize(m);
            for (std::size_t s = 0; s < m; ++s) decay_[s] = std::exp(-eps_ * eig_[s] * dt);
            decay_dt_ = dt;
        }
        star_.resize(m);
        for (std::size_t s = 0; s < m; ++s) star_[s] = decay_[s] * (w[s] + dt * n1_[s]);
        rhs(star_, f, n2_);
        for (std::size_t s = 0; s < m; ++s) {
            const double e = decay_[s];
            w[s] = e * w[s] + 0.5 * dt * (e * n1_[s] + n2_[s]);
            if (!std::isfinite(w[s].real()) || !std::isfinite(w[s].imag()))
                throw NumericError("ns_step: non-finite vorticity");
        }
        w[0] = cplx{};
    }

  private:
    void grid(const Half& h, std::span<double> out) const {
        tmp_.assign(h.begin(), h.end());
        irfft(2, int(n_), tmp_.data(), out.data());
        const double inv = 1.0 / double(n_ * n_);
        for (double& v : out) v *= inv;
    }
    void grid(const Half& h, std::vector<double>& out) {
        out.resize(n_ * n_);
        grid(h, std::span<double>(out));
    }

    DomainSpec d_;
    std::size_t n_, nh_;
    double eps_;
    std::vector<double> eig_, mask_, decay_;
    double decay_dt_ = -1.0;
    std::vector<cplx> ikx_, iky_;
    Half a_[4], n1_, n2_, star_;
    mutable Half tmp_;
    std::vector<double> g_[5];
};

}  // namespace detail

/// One time step on orthonormal coefficients (storage as in forward()).
inline SpectralField ns_step(const SpectralField& omega, const SpectralField& forcing, const NavierStokesSpec& spec,
                             double dt) {
    spec.validate();
    if (!(dt > 0.0)) throw ConfigError("dt", "must be > 0");
    detail::NsSolver solver(spec.domain, omega.resolution, spec.viscosity);
    auto w = solver.to_half(omega);
    const auto f = solver.to_half(forcing);
    solver.step(w, f, dt);
    return solver.from_half(w);
}

/// Integrates from w0 over `time` with a fixed forcing, in ceil(time/dt) equal steps.
inline GridFunction ns_solve(const GridFunction& w0, const GridFunction& forcing, const NavierStokesSpec& spec,
                             double time) {
    spec.validate();
    w0.require_same_shape(forcing, "ns_solve");
    if (!(w0.domain() == spec.domain)) throw ShapeError("ns_solve: field domain differs from spec");
    detail::NsSolver solver(spec.domain, w0.resolution(), spec.viscosity);
    auto w = solver.from_grid(w0);
    w[0] = cplx{};
    const auto f = solver.from_grid(forcing);
    const auto steps = std::size_t(std::ceil(time / spec.step() - 1e-9));
    const double dt = time / double(steps);
    for (std::size_t k = 0; k < steps; ++k) solver.step(w, f, dt);
    return solver.to_grid(w);
}

/// Per sample: forcing ~ forcing_scale * N(0, C_f), w0 = 0, store w(final_time).
/// Forcings are drawn sequentially from rng; trajectories are solved on
/// `workers` threads, so the output does not depend on the worker count.
inline Dataset gen_navier_stokes(const NavierStokesSpec& spec, std::size_t N, Rng& rng, std::size_t workers = 1) {
    spec.validate();
    Dataset d{spec.domain, spec.resolution, {}, {}};
    const KlSampler kl(spec.forcing, spec.resolution);
    const GridFunction zero(spec.domain, spec.resolution);
    std::vector<GridFunction> forcings;
    for (std::size_t i = 0; i < N; ++i) forcings.push_back(spec.forcing_scale * kl.sample(rng));
    d.samples.assign(N, zero);
    workers = std::max<std::size_t>(1, std::min(workers, N));
    std::vector<std::exception_ptr> errors(workers);
    auto solve = [&](std::size_t w) {
        try {
            for (std::size_t i = w; i < N; i += workers) d.samples[i] = ns_solve(zero, forcings[i], spec, spec.final_time);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (workers == 1) {
        solve(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(solve, w);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    d.metadata = {{"generator", "navier_stokes"},
                  {"viscosity", spec.viscosity},
                  {"final_time", spec.final_time},
                  {"forcing", spec.forcing},
                  {"forcing_scale", spec.forcing_scale},
                  {"dt", spec.step()},
                  {"N", N}};
    return d;
}

inline NavierStokesSpec ns_spec_from_json(const nlohmann::json& j, const std::string& path) {
    using namespace config;
    check_keys(j, {"viscosity", "final_time", "forcing", "forcing_scale", "dt", "resolution"}, path);
    NavierStokesSpec s;
    s.viscosity = get_or<double>(j, "viscosity", s.viscosity, path);
    s.final_time = get_or<double>(j, "final_time", s.final_time, path);
    if (j.contains("forcing")) s.forcing = matern_from_json(j.at("forcing"), s.domain, join(path, "forcing"));
    s.forcing_scale = get_or<double>(j, "forcing_scale", s.forcing_scale, path);
    s.dt = get_or<double>(j, "dt", s.dt, path);
    s.resolution = get_or<std::size_t>(j, "resolution", s.resolution, path);
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(join(path, e.key()), e.what());
    }
    return s;
}

}  // namespace fdiff
