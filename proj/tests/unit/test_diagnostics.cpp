#include <fdiff/diagnostics.hpp>

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

using namespace fdiff;

namespace {

const double kPi = std::numbers::pi;
const DomainSpec kTorus1 = DomainSpec::unit_torus(1);
const DomainSpec kTorus2 = DomainSpec::unit_torus(2);
const DomainSpec kDir = DomainSpec::interval(2 * kPi, Boundary::Dirichlet);

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

Dataset gaussian_set(const MaternCovariance& c, std::size_t N, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    const KlSampler s(c, n);
    Dataset d{c.domain, n, {}, {}};
    for (std::size_t i = 0; i < N; ++i) d.samples.push_back(s.sample(rng));
    return d;
}

}  // namespace

TEST(EmpiricalW2, EqualSizesUseSortedPairs) {
    std::vector<double> a{3.0, -1.0, 0.5, 2.0}, b{0.0, 1.0, 1.0, -4.0};
    // sorted: a = -1, 0.5, 2, 3; b = -4, 0, 1, 1
    const double expect = std::sqrt((9.0 + 0.25 + 1.0 + 4.0) / 4.0);
    EXPECT_NEAR(empirical_w2(a, b), expect, 1e-14);
    EXPECT_NEAR(empirical_w2(b, a), expect, 1e-14);
}

TEST(EmpiricalW2, UnequalSizes) {
    EXPECT_NEAR(empirical_w2({0.0}, {0.0, 1.0}), std::sqrt(0.5), 1e-14);
    // {0, 3} vs {0, 1, 2}: quantile pieces [0,1/3] 0-0, [1/3,1/2] 0-1, [1/2,2/3] 3-1, [2/3,1] 3-2
    EXPECT_NEAR(empirical_w2({3.0, 0.0}, {2.0, 0.0, 1.0}), std::sqrt((1.0 + 4.0) / 6.0 + 1.0 / 3.0), 1e-14);
    EXPECT_THROW(empirical_w2({}, {1.0}), ShapeError);
}

TEST(EmpiricalW2, ShiftGivesShiftDistance) {
    Rng rng(4);
    std::vector<double> a(257), b;
    for (double& v : a) v = standard_normal(rng);
    for (double v : a) b.push_back(v + 0.75);
    EXPECT_NEAR(empirical_w2(a, b), 0.75, 1e-12);
}

TEST(KineticEnergy, MatchesVelocityIntegral) {
    // omega = cos(2 pi x) has velocity (0, sin(2 pi x) / (2 pi)); energy 1/2 int |v|^2 = 1/(16 pi^2).
    const std::size_t n = 32;
    GridFunction w(kTorus2, n);
    double direct = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double x = double(i) / double(n);
            w.values()[i * n + j] = std::cos(2 * kPi * x);
            const double vy = std::sin(2 * kPi * x) / (2 * kPi);
            direct += 0.5 * vy * vy / double(n * n);
        }
    EXPECT_NEAR(kinetic_energy(w), direct, 1e-14);
    EXPECT_NEAR(kinetic_energy(w), 1.0 / (16 * kPi * kPi), 1e-14);
}

TEST(KineticEnergy, IgnoresMeanAndScalesQuadratically) {
    auto w = fdiff::testing::random_function(kTorus2, 16, 3);
    const double e = kinetic_energy(w);
    GridFunction shifted = w;
    for (double& v : shifted.values()) v += 5.0;
    EXPECT_NEAR(kinetic_energy(shifted), e, 1e-12 * e);
    EXPECT_NEAR(kinetic_energy(3.0 * w), 9.0 * e, 1e-12 * e);
}

TEST(SpectrumError, ZeroForIdenticalAndSupOfBinDifferences) {
    const MaternCovariance c(kTorus1, 1.0, 1.0, 1.5);
    const auto d = gaussian_set(c, 20, 32, 1);
    EXPECT_EQ(spectrum_sup_error(d, d), 0.0);
    Dataset scaled = d;
    for (auto& u : scaled.samples) u *= 2.0;
    const auto s = average_spectrum(d);
    double expect = 0.0;
    for (const auto& p : s) expect = std::max(expect, p.value);
    EXPECT_NEAR(spectrum_sup_error(scaled, d), expect, 1e-12);
    EXPECT_THROW(spectrum_sup_error(d, resample(d, 64)), ShapeError);
}

TEST(ModeBalance, CountsPositiveProjections) {
    const GaussianMixtureSpec spec;
    const auto f1 = spec.first_mean(64);
    Dataset d{kDir, 64, {}, {}};
    for (int i = 0; i < 3; ++i) d.samples.push_back(f1);
    d.samples.push_back(-1.0 * f1);
    EXPECT_DOUBLE_EQ(mode_balance(d, f1), 0.75);
}

TEST(TurbulenceStats, HistogramsShareEdgesAndSumToOne) {
    const MaternCovariance c(kTorus2, 1.0, 2.0, 2.0);
    const auto a = gaussian_set(c, 10, 16, 2);
    auto b = gaussian_set(c, 12, 16, 3);
    for (auto& u : b.samples) u *= 1.5;
    const auto st = turbulence_stats({&a, &b});
    ASSERT_EQ(st.size(), 2u);
    for (const auto& s : st) {
        EXPECT_EQ(s.pointwise.mass.size(), kHistogramBins);
        EXPECT_NEAR(sum(s.pointwise.mass), 1.0, 1e-12);
        EXPECT_NEAR(sum(s.energy.mass), 1.0, 1e-12);
    }
    EXPECT_EQ(st[0].pointwise.lo, st[1].pointwise.lo);
    EXPECT_EQ(st[0].pointwise.hi, st[1].pointwise.hi);
    EXPECT_EQ(st[0].energy.hi, st[1].energy.hi);
    // the wider set owns both extremes
    double lo = 0.0, hi = 0.0;
    for (const auto& u : b.samples)
        for (double v : u.values()) lo = std::min(lo, v), hi = std::max(hi, v);
    EXPECT_EQ(st[0].pointwise.lo, lo);
    EXPECT_EQ(st[0].pointwise.hi, hi);
    double total = 0.0;
    for (const auto& p : st[0].energy_spectrum) total += p.value;
    double mean_e = 0.0;
    for (const auto& u : a.samples) mean_e += kinetic_energy(u) / double(a.count());
    EXPECT_NEAR(total, mean_e, 1e-12 * mean_e);
}

TEST(TurbulenceStats, CsvHasOneRowPerBin) {
    Histogram h = histogram(std::vector<double>{0.0, 0.5, 1.0}, 0.0, 1.0, 4);
    EXPECT_DOUBLE_EQ(h.mass[0], 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(h.mass[2], 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(h.mass[3], 1.0 / 3.0);
    std::ostringstream os;
    write_histogram_csv(os, {"a"}, {&h});
    const auto text = os.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(InvarianceReport, RejectsResolutionsBelowModelBound) {
    const MaternCovariance c(kTorus1, 1.0, 1.0, 1.5);
    const auto data = gaussian_set(c, 4, 64, 1);
    SamplerConfig cfg;
    cfg.schedule = NoiseSchedule::ncsn({1.0}, NoiseModel(c));
    const BatchDrift none = [](std::span<const GridFunction> u, std::size_t) {
        return std::vector<GridFunction>(u.begin(), u.end());
    };
    EXPECT_THROW(invariance_report(none, 32, data, {16, 32}, cfg, "matern"), ShapeError);
    EXPECT_THROW(invariance_report(none, 16, data, {128}, cfg, "matern"), ShapeError);
}

TEST(InvarianceReport, ExactDriftIsAccurateAtEveryResolution) {
    const MaternCovariance data_cov(kTorus1, 1.0, 2.0, 2.0);
    const MaternCovariance noise(kTorus1, 1.0, 1.0, 1.0);
    // the last level samples the perturbed law u + sigma_T eta
    auto data = gaussian_set(data_cov, 400, 64, 5);
    Rng rng(6);
    for (auto& u : data.samples) u.axpy(0.3, sample(noise, 64, rng));
    SamplerConfig cfg;
    cfg.schedule = NoiseSchedule::ncsn(geometric_sigmas(1.0, 0.3, 3), NoiseModel(noise));
    cfg.M = 200;
    cfg.epsilon = 0.02;
    cfg.chains = 400;
    std::map<std::size_t, BatchDrift> drifts;
    const BatchDrift F = [&](std::span<const GridFunction> u, std::size_t t) {
        const std::size_t n = u.front().resolution();
        if (!drifts.count(n))
            drifts.emplace(n, oracle_drift(OracleScore::gaussian(GridFunction(kTorus1, n), data_cov, noise),
                                           cfg.schedule));
        return drifts.at(n)(u, t);
    };
    const auto r = invariance_report(F, 16, data, {16, 32, 64}, cfg, "matern");
    ASSERT_EQ(r.errors.size(), 3u);
    const auto s = average_spectrum(data);
    // about four standard errors of the largest bin with 400 + 400 draws
    for (double e : r.errors) EXPECT_LT(e, 0.2 * s[0].value);
    std::ostringstream os;
    write_spectrum_report_csv(os, r);
    EXPECT_NE(os.str().find("64,"), std::string::npos);
}

TEST(WassersteinBound, NoNoiseGivesOnlySamplingSlack) {
    GaussianMixtureSpec spec;
    Rng rng(9);
    const MaternCovariance noise(spec.domain, 1.0, 1.0, 1.0);
    const auto rows = wasserstein_bound_experiment(spec, NoiseModel(noise), 0.0, 300, 64, 5, rng);
    ASSERT_EQ(rows.size(), 5u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.noise_sd, 0.0);
        EXPECT_LT(r.w2, 6.0 * r.slack + 1e-12);
    }
}

TEST(WassersteinBound, NoiseSdMatchesProjectedNoise) {
    // sd of <eta, phi> checked against direct draws
    const MaternCovariance noise(kDir, 0.7, 1.0, 1.2);
    Rng rng(2);
    auto phi = sample(MaternCovariance(kDir, 1.0, 1.0, 1.0), 64, rng);
    phi *= 1.0 / l2_norm(phi);
    const auto s = forward(phi);
    const auto c = noise.eigenvalues(64);
    double var = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) var += c[k] * std::norm(s.coeffs[k]);
    const KlSampler ks(noise, 64);
    double acc = 0.0;
    const int N = 40000;
    for (int i = 0; i < N; ++i) {
        const double p = l2_inner(ks.sample(rng), phi);
        acc += p * p;
    }
    EXPECT_NEAR(acc / N, var, 0.03 * var);
}

TEST(NoiseRegularity, ProducesOneRowPerResolution) {
    NoiseRegularityConfig cfg;
    cfg.resolutions = {16, 32};
    cfg.fno = FnoConfig{1, 4, 4, 1, 2, 1, true};
    cfg.train.epochs = 2;
    cfg.n_train = 16;
    cfg.n_test = 8;
    const auto rows = noise_regularity_experiment(cfg);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1].resolution, 32u);
    for (const auto& r : rows) {
        EXPECT_GT(r.plain, 0.0);
        EXPECT_GT(r.precond, 0.0);
    }
    cfg.resolutions.clear();
    EXPECT_THROW(noise_regularity_experiment(cfg), ConfigError);
}
