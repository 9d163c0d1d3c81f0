#pragma once

// Evaluation statistics (spectra, kinetic energy, projected Wasserstein
// distances, turbulence histograms) and the resolution-transfer, noise-regularity
// and smoothing experiments built on them.

#include <fdiff/datagen.hpp>
#include <fdiff/sampler.hpp>

#include <algorithm>
#include <limits>
#include <map>
#include <ostream>

namespace fdiff {

/// max_k |S_model(k) - S_data(k)| of the radially binned mean |coefficient|.
inline double spectrum_sup_error(const Dataset& model, const Dataset& data) {
    if (!(model.domain == data.domain) || model.resolution != data.resolution)
        throw ShapeError("spectrum_sup_error: datasets differ in domain or resolution");
    const auto a = average_spectrum(model);
    const auto b = average_spectrum(data);
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i].value - b[i].value));
    return e;
}

/// 1/2 sum_{k != 0} |w_k|^2 / eig(k).
inline double kinetic_energy(const GridFunction& w) {
    const auto s = forward(w);
    const auto eig = mode_eigenvalues(w.domain(), w.resolution());
    double e = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (eig[i] > 0.0) e += std::norm(s.coeffs[i]) / eig[i];
    return 0.5 * e;
}

/// Exact W2 between two empirical measures on the line (quantile coupling;
/// sizes may differ).
inline double empirical_w2(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ShapeError("empirical_w2: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = double(a.size()), nb = double(b.size());
    std::size_t i = 0, j = 0;
    double level = 0.0, acc = 0.0;
    while (i < a.size() && j < b.size()) {
        const double next = std::min(double(i + 1) / na, double(j + 1) / nb);
        acc += (next - level) * (a[i] - b[j]) * (a[i] - b[j]);
        level = next;
        if (double(i + 1) / na <= next) ++i;
        if (double(j + 1) / nb <= next) ++j;
    }
    return std::sqrt(acc);
}

inline std::vector<double> project(const Dataset& d, const GridFunction& phi) {
    std::vector<double> p;
    p.reserve(d.count());
    for (const auto& u : d.samples) {
        u.require_same_shape(phi, "project");
        p.push_back(l2_inner(u, phi));
    }
    return p;
}

inline double empirical_w2_projection(const Dataset& a, const Dataset& b, const GridFunction& phi) {
    return empirical_w2(project(a, phi), project(b, phi));
}

/// Fraction of samples with <u, f1> > 0.
inline double mode_balance(const Dataset& d, const GridFunction& f1) {
    if (d.count() == 0) throw ShapeError("mode_balance: empty dataset");
    std::size_t pos = 0;
    for (double v : project(d, f1)) pos += v > 0.0;
    return double(pos) / double(d.count());
}

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> mass;  // sums to 1

    std::size_t bin(double v) const {
        const std::size_t n = mass.size();
        if (!(hi > lo)) return 0;
        const auto b = std::ptrdiff_t(std::floor((v - lo) / (hi - lo) * double(n)));
        return std::size_t(std::clamp<std::ptrdiff_t>(b, 0, std::ptrdiff_t(n) - 1));
    }
};

inline Histogram histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
    if (bins == 0) throw ConfigError("bins", "must be >= 1");
    Histogram h{lo, hi, std::vector<double>(bins, 0.0)};
    if (values.empty()) return h;
    for (double v : values) h.mass[h.bin(v)] += 1.0;
    for (double& m : h.mass) m /= double(values.size());
    return h;
}

inline constexpr std::size_t kHistogramBins = 64;

struct TurbulenceStats {
    std::vector<SpectrumPoint> energy_spectrum;  // mean over samples of 1/2 sum_{|k| in bin} |w_k|^2 / eig(k)
    Histogram pointwise;
    Histogram energy;
};

namespace detail {

inline std::vector<SpectrumPoint> energy_spectrum(const Dataset& d) {
    const auto bins = spectrum_bins(d.domain, d.resolution);
    const auto eig = mode_eigenvalues(d.domain, d.resolution);
    std::map<int, double> acc;
    for (int b : bins) acc[b];
    for (const auto& w : d.samples) {
        const auto s = forward(w);
        for (std::size_t i = 0; i < s.size(); ++i)
            if (eig[i] > 0.0) acc[bins[i]] += 0.5 * std::norm(s.coeffs[i]) / eig[i];
    }
    std::vector<SpectrumPoint> out;
    for (const auto& [k, v] : acc) out.push_back({k, v / double(d.count())});
    return out;
}

inline std::pair<double, double> pooled_range(std::initializer_list<std::span<const double>> sets) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto s : sets)
        for (double v : s) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!(hi > lo)) hi = lo + 1.0;
    return {lo, hi};
}

}  // namespace detail

/// Statistics of one or two datasets on shared histogram edges (pooled min/max).
inline std::vector<TurbulenceStats> turbulence_stats(const std::vector<const Dataset*>& sets,
                                                     std::size_t bins = kHistogramBins) {
    std::vector<std::vector<double>> values, energies;
    for (const auto* d : sets) {
        if (d->count() == 0) throw ShapeError("turbulence_stats: empty dataset");
        std::vector<double> v, e;
        for (const auto& w : d->samples) {
            v.insert(v.end(), w.values().begin(), w.values().end());
            e.push_back(kinetic_energy(w));
        }
        values.push_back(std::move(v));
        energies.push_back(std::move(e));
    }
    double vlo = std::numeric_limits<double>::infinity(), vhi = -vlo, elo = vlo, ehi = -vlo;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const auto [a, b] = detail::pooled_range({values[i]});
        const auto [c, e] = detail::pooled_range({energies[i]});
        vlo = std::min(vlo, a), vhi = std::max(vhi, b), elo = std::min(elo, c), ehi = std::max(ehi, e);
    }
    std::vector<TurbulenceStats> out;
    for (std::size_t i = 0; i < sets.size(); ++i)
        out.push_back({detail::energy_spectrum(*sets[i]), histogram(values[i], vlo, vhi, bins),
                       histogram(energies[i], elo, ehi, bins)});
    return out;
}

inline void write_histogram_csv(std::ostream& os, const std::vector<std::string>& names,
                                const std::vector<const Histogram*>& hs) {
    os.precision(17);
    os << "bin,lo,hi";
    for (const auto& n : names) os << ',' << n;
    os << '\n';
    const auto& h0 = *hs.front();
    const std::size_t n = h0.mass.size();
    for (std::size_t b = 0; b < n; ++b) {
        const double w = (h0.hi - h0.lo) / double(n);
        os << b << ',' << h0.lo + w * double(b) << ',' << h0.lo + w * double(b + 1);
        for (const auto* h : hs) os << ',' << h->mass[b];
        os << '\n';
    }
}

struct SpectrumReport {
    std::vector<std::size_t> resolutions;
    std::vector<double> errors;
    std::vector<double> balance;  // mode balance per resolution (empty without a reference mean)
    std::string noise_kind;
};

inline void write_spectrum_report_csv(std::ostream& os, const SpectrumReport& r) {
    os.precision(17);
    os << "resolution,sup_error" << (r.balance.empty() ? "" : ",mode_balance") << ",noise\n";
    for (std::size_t i = 0; i < r.resolutions.size(); ++i) {
        os << r.resolutions[i] << ',' << r.errors[i];
        if (!r.balance.empty()) os << ',' << r.balance[i];
        os << ',' << r.noise_kind << '\n';
    }
}

/// Seed for an independent run per resolution.
inline std::uint64_t resolution_seed(std::uint64_t seed, std::size_t resolution) {
    return seed ^ (0x9e3779b97f4a7c15ULL * (resolution + 1));
}

/// For each resolution: cfg.chains samples via annealed Langevin, spectrum sup
/// error against data_hires resampled to that resolution. Every resolution
/// uses the same chain seeds, so the chains share their low-mode noise.
inline SpectrumReport invariance_report(const BatchDrift& F, std::size_t min_resolution, const Dataset& data_hires,
                                        const std::vector<std::size_t>& resolutions, const SamplerConfig& cfg,
                                        const std::string& noise_kind, const GridFunction* f1_hires = nullptr) {
    SpectrumReport r;
    r.noise_kind = noise_kind;
    for (std::size_t n : resolutions) {
        if (n < min_resolution)
            throw ShapeError("invariance_report: resolution " + std::to_string(n) + " below the model bound " +
                             std::to_string(min_resolution));
        if (n > data_hires.resolution)
            throw ShapeError("invariance_report: resolution " + std::to_string(n) + " above the data resolution");
    }
    for (std::size_t n : resolutions) {
        Dataset gen{data_hires.domain, n, sample_chains(F, cfg, n), {}};
        const auto ref = resample(data_hires, n);
        r.resolutions.push_back(n);
        r.errors.push_back(spectrum_sup_error(gen, ref));
        if (f1_hires) r.balance.push_back(mode_balance(gen, resample(*f1_hires, n)));
    }
    return r;
}

struct W2BoundRow {
    double w2 = 0.0;        // clean vs corrupted, independent draws
    double noise_sd = 0.0;  // sd of <sigma eta, phi>
    double slack = 0.0;     // clean vs clean, independent draws
    bool holds() const { return w2 <= noise_sd + 3.0 * slack; }
};

/// Projected W2 between N clean mixture draws and N independent corrupted
/// draws v = u + sigma eta, for random unit projections phi.
inline std::vector<W2BoundRow> wasserstein_bound_experiment(const GaussianMixtureSpec& spec, const NoiseModel& noise,
                                                            double sigma, std::size_t N, std::size_t resolution,
                                                            std::size_t projections, Rng& rng) {
    if (!(noise.domain() == spec.domain)) throw ShapeError("wasserstein_bound_experiment: noise domain differs");
    const auto clean = gen_gaussian_mixture(spec, N, resolution, rng);
    const auto clean2 = gen_gaussian_mixture(spec, N, resolution, rng);
    auto noisy = gen_gaussian_mixture(spec, N, resolution, rng);
    const NoiseSampler ns(noise, resolution);
    for (auto& u : noisy.samples) u.axpy(sigma, ns.sample(rng));
    const auto c = noise.eigenvalues(resolution);
    const MaternCovariance dir(spec.domain, 1.0, 1.0, 1.0);
    std::vector<W2BoundRow> rows;
    for (std::size_t p = 0; p < projections; ++p) {
        auto phi = sample(dir, resolution, rng);
        phi *= 1.0 / l2_norm(phi);
        const auto s = forward(phi);
        double var = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) var += c[k] * std::norm(s.coeffs[k]);
        rows.push_back({empirical_w2_projection(clean, noisy, phi), sigma * std::sqrt(var),
                        empirical_w2_projection(clean, clean2, phi)});
    }
    return rows;
}

/// Per resolution, train one model with the plain loss
/// ||eta - G(u + eta)||^2 and one with the preconditioned loss
/// ||C^{-1/2}(eta - G(u + eta))||^2, report both test errors.
struct NoiseRegularityConfig {
    std::vector<std::size_t> resolutions{32, 64, 128, 256};
    MaternCovariance data{DomainSpec::unit_torus(1), 4.0, 1.0, 3.0};
    MaternCovariance noise{DomainSpec::unit_torus(1), 0.2, 1.0, 2.0};
    FnoConfig fno{1, 8, 16, 4, 2, 1, true};
    TrainConfig train{};
    std::size_t n_train = 512;
    std::size_t n_test = 256;
    std::uint64_t seed = 0;
};

struct NoiseRegularityRow {
    std::size_t resolution = 0;
    double plain = 0.0;
    double precond = 0.0;
};

inline void write_noise_regularity_csv(std::ostream& os, const std::vector<NoiseRegularityRow>& rows) {
    os.precision(17);
    os << "resolution,plain_test_error,precond_test_error\n";
    for (const auto& r : rows) os << r.resolution << ',' << r.plain << ',' << r.precond << '\n';
}

inline std::vector<NoiseRegularityRow> noise_regularity_experiment(
    const NoiseRegularityConfig& cfg, const std::function<void(const std::string&)>& log = {}) {
    if (cfg.resolutions.empty()) throw ConfigError("resolutions", "must not be empty");
    if (cfg.n_train == 0 || cfg.n_test == 0) throw ConfigError("n_train", "sample counts must be >= 1");
    const auto schedule = NoiseSchedule::ncsn({1.0}, cfg.noise);
    std::vector<NoiseRegularityRow> rows;
    for (std::size_t n : cfg.resolutions) {
        // one substream per draw so equal seeds share low modes across resolutions
        Rng rng(cfg.seed);
        const KlSampler data(cfg.data, n);
        const NoiseSampler noise(cfg.noise, n);
        Dataset train_set{cfg.data.domain, n, {}, {}};
        for (std::size_t i = 0; i < cfg.n_train; ++i) {
            Rng sub(rng());
            train_set.samples.push_back(data.sample(sub));
        }
        std::vector<TrainingExample> test;
        for (std::size_t i = 0; i < cfg.n_test; ++i) {
            Rng su(rng()), se(rng());
            test.push_back({data.sample(su), 1, noise.sample(se)});
        }
        NoiseRegularityRow row{n, 0.0, 0.0};
        for (LossKind kind : {LossKind::PlainDsm, LossKind::PrecondDsm}) {
            const LossSpec spec{kind, schedule};
            Rng init(cfg.seed + 1);
            auto model = init_model(cfg.fno, init);
            auto tc = cfg.train;
            tc.seed = cfg.seed + 2;
            train(train_set, spec, model, tc);
            const double err = loss_value(model, test, spec);
            (kind == LossKind::PlainDsm ? row.plain : row.precond) = err;
            if (log) log("resolution " + std::to_string(n) + " " + to_string(kind) + " test error " + std::to_string(err));
        }
        rows.push_back(row);
    }
    return rows;
}

/// Train one model on mixture data at train_resolution, then sample it at every
/// resolution and compare spectra with an independent reference set.
struct TransferConfig {
    GaussianMixtureSpec data{};
    NoiseSchedule schedule = NoiseSchedule::ncsn(geometric_sigmas(1.0, 0.01, 10),
                                                 MaternCovariance(data.domain, 0.5, 0.1, 0.6));
    LossKind loss = LossKind::RescaledDsm;
    std::size_t train_resolution = 64;
    std::vector<std::size_t> resolutions{64, 128, 256, 512};
    std::size_t n_train = 2000;
    std::size_t n_reference = 2000;
    FnoConfig fno{1, 16, 16, 4, 2, 1, true};
    TrainConfig train{};
    SamplerConfig sampler{};
    std::uint64_t seed = 0;
    bool divergence_as_inf = false;  // a diverging sampler reports an infinite error instead of throwing
};

struct TransferResult {
    SpectrumReport report;
    FnoModel model;
    std::vector<EpochRecord> history;
};

inline std::string noise_kind(const NoiseModel& n) { return n.is_white() ? "white" : "matern"; }

inline TransferResult transfer_experiment(const TransferConfig& cfg,
                                          const std::function<void(const std::string&)>& log = {}) {
    if (cfg.resolutions.empty()) throw ConfigError("resolutions", "must not be empty");
    if (cfg.n_train == 0 || cfg.n_reference == 0) throw ConfigError("n_train", "sample counts must be >= 1");
    const std::size_t top = std::max(cfg.train_resolution, *std::max_element(cfg.resolutions.begin(), cfg.resolutions.end()));
    Rng rng(cfg.seed);
    const auto train_set = resample(gen_gaussian_mixture(cfg.data, cfg.n_train, top, rng), cfg.train_resolution);
    const auto reference = gen_gaussian_mixture(cfg.data, cfg.n_reference, top, rng);

    Rng init(resolution_seed(cfg.seed + 1, cfg.train_resolution));
    auto model = init_model(cfg.fno, init);
    auto tc = cfg.train;
    tc.seed = resolution_seed(cfg.seed + 2, cfg.train_resolution);
    const LossSpec spec{cfg.loss, cfg.schedule};
    auto res = train(train_set, spec, model, tc, [&](const EpochRecord& r, const FnoModel&) {
        if (log) log("epoch " + std::to_string(r.epoch) + " loss " + std::to_string(r.mean_loss));
    });

    auto sc = cfg.sampler;
    sc.schedule = cfg.schedule;
    sc.seed = cfg.seed + 3;
    const auto F = model_drift(model, cfg.schedule, cfg.loss, cfg.train.workers);
    const auto f1 = cfg.data.first_mean(top);
    SpectrumReport report;
    report.noise_kind = noise_kind(cfg.schedule.base);
    for (std::size_t n : cfg.resolutions) {
        SpectrumReport r;
        try {
            r = invariance_report(F, 2 * std::size_t(cfg.fno.modes), reference, {n}, sc, report.noise_kind, &f1);
        } catch (const NumericError& e) {
            if (!cfg.divergence_as_inf) throw;
            if (log) log(std::string("resolution ") + std::to_string(n) + " diverged: " + e.what());
            r.errors = {std::numeric_limits<double>::infinity()};
            r.balance = {std::numeric_limits<double>::quiet_NaN()};
        }
        if (log) log("resolution " + std::to_string(n) + " sup error " + std::to_string(r.errors[0]) + " balance " +
                     std::to_string(r.balance[0]));
        report.resolutions.push_back(n);
        report.errors.push_back(r.errors[0]);
        report.balance.push_back(r.balance[0]);
    }
    return {std::move(report), std::move(model), std::move(res.history)};
}

/// The four noise conditions of the smoothing comparison on the linear-mean mixture.
struct SmoothingExperimentConfig {
    TransferConfig base = [] {
        TransferConfig c;
        c.data.mean = MixtureMean::Linear;
        c.data.cov = MaternCovariance(c.data.domain, 3.0, 3.0, 1.5);
        c.train_resolution = 128;
        c.resolutions = {128, 256, 512};
        return c;
    }();
    double white_sd = 1.0;
    double blur_bandwidth = 0.3;
};

struct SmoothingRow {
    std::string condition;
    std::size_t resolution = 0;
    double sup_error = 0.0;
    double balance = 0.0;
};

inline std::vector<std::pair<std::string, NoiseSchedule>> smoothing_conditions(const SmoothingExperimentConfig& cfg) {
    const auto& d = cfg.base.data.domain;
    const auto& sig = cfg.base.schedule.sigmas;
    auto blurred = NoiseSchedule::ncsn(sig, MaternCovariance(d, 10.0, 3.0, 2.0));
    blurred.smoothing.assign(blurred.levels(), SmoothingOperator::gaussian_blur(cfg.blur_bandwidth));
    return {{"a_white", NoiseSchedule::ncsn(sig, WhiteNoise{d, cfg.white_sd})},
            {"b_cm_contains_data", NoiseSchedule::ncsn(sig, MaternCovariance(d, 1.73, 3.0, 1.0))},
            {"c_cm_misses_data", NoiseSchedule::ncsn(sig, MaternCovariance(d, 10.0, 3.0, 2.0))},
            {"d_blur", blurred}};
}

inline std::vector<SmoothingRow> smoothing_experiment(const SmoothingExperimentConfig& cfg,
                                                      const std::function<void(const std::string&)>& log = {}) {
    std::vector<SmoothingRow> rows;
    for (const auto& [name, schedule] : smoothing_conditions(cfg)) {
        auto c = cfg.base;
        c.schedule = schedule;
        if (log) log("condition " + name);
        const auto r = transfer_experiment(c, log);
        for (std::size_t i = 0; i < r.report.resolutions.size(); ++i)
            rows.push_back({name, r.report.resolutions[i], r.report.errors[i], r.report.balance[i]});
    }
    return rows;
}

inline void write_smoothing_csv(std::ostream& os, const std::vector<SmoothingRow>& rows) {
    os.precision(17);
    os << "condition,resolution,sup_error,mode_balance\n";
    for (const auto& r : rows) os << r.condition << ',' << r.resolution << ',' << r.sup_error << ',' << r.balance << '\n';
}

}  // namespace fdiff
