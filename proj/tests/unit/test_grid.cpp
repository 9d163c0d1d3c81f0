#include <fdiff/grid.hpp>

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <numbers>

using namespace fdiff;
using fdiff::testing::max_abs_diff;
using fdiff::testing::random_function;

namespace {

const double kPi = std::numbers::pi;
const DomainSpec kDirichlet2Pi = DomainSpec::interval(2 * kPi, Boundary::Dirichlet);

GridFunction half_sine(std::size_t n) {
    return GridFunction::from_function(kDirichlet2Pi, n, [](double x) { return std::sin(x / 2); });
}

}  // namespace

TEST(DomainSpec, RejectsDirichletTorusAndBadExtent) {
    EXPECT_THROW((DomainSpec{2, 1.0, Boundary::Dirichlet}.validate()), ShapeError);
    EXPECT_THROW((DomainSpec{1, 0.0, Boundary::Periodic}.validate()), ShapeError);
    EXPECT_THROW((DomainSpec{3, 1.0, Boundary::Periodic}.validate()), ShapeError);
    EXPECT_NO_THROW(DomainSpec::unit_torus(2).validate());
}

TEST(GridFunction, RequiresPowerOfTwoAndMatchingSize) {
    EXPECT_THROW(GridFunction(DomainSpec::unit_torus(1), 12), ShapeError);
    EXPECT_THROW(GridFunction(DomainSpec::unit_torus(2), 8, std::vector<double>(8)), ShapeError);
    EXPECT_EQ(GridFunction(DomainSpec::unit_torus(2), 8).size(), 64u);
}

TEST(GridFunction, DirichletNodesEndOnBoundary) {
    GridFunction g(kDirichlet2Pi, 8);
    EXPECT_DOUBLE_EQ(g.node(0), 2 * kPi / 8);
    EXPECT_DOUBLE_EQ(g.node(7), 2 * kPi);
    EXPECT_EQ(half_sine(8).values().back(), 0.0);
}

TEST(L2Inner, ConstantOnUnitTorus) {
    GridFunction one(DomainSpec::unit_torus(2), 8, std::vector<double>(64, 1.0));
    EXPECT_DOUBLE_EQ(l2_inner(one, one), 1.0);
}

TEST(L2Inner, HalfSineSquaredIntegratesToPi) {
    const auto a = half_sine(1024);
    EXPECT_NEAR(l2_inner(a, a), kPi, 1e-6);
    EXPECT_NEAR(l2_norm(a), std::sqrt(kPi), 1e-6);
}

TEST(L2Inner, ZeroElementAndShapeMismatch) {
    const auto a = random_function(DomainSpec::unit_torus(1), 32, 1);
    EXPECT_EQ(l2_inner(a, GridFunction(DomainSpec::unit_torus(1), 32)), 0.0);
    EXPECT_THROW(l2_inner(a, GridFunction(DomainSpec::unit_torus(1), 64)), ShapeError);
    EXPECT_THROW(l2_inner(a, GridFunction(DomainSpec::interval(1.0, Boundary::Dirichlet), 32)), ShapeError);
}

TEST(Resample, UpsampleHalfSineIsExact) {
    const auto up = resample(half_sine(64), 256);
    EXPECT_LT(max_abs_diff(up, half_sine(256)), 1e-12);
}

TEST(Resample, BandLimitedRoundTrip) {
    // periodic 1D, periodic 2D and Dirichlet functions with modes below min resolution / 2
    const auto p1 = GridFunction::from_function(DomainSpec::unit_torus(1), 64, [](double x) {
        return std::cos(2 * kPi * 3 * x) - 0.5 * std::sin(2 * kPi * 7 * x) + 0.25;
    });
    EXPECT_LT(max_abs_diff(resample(resample(p1, 16), 64), p1), 1e-12);
    EXPECT_LT(max_abs_diff(resample(resample(p1, 256), 64), p1), 1e-12);

    const auto p2 = GridFunction::from_function(DomainSpec::unit_torus(2), 32, [](double x, double y) {
        return std::sin(2 * kPi * (2 * x + 3 * y)) + std::cos(2 * kPi * 5 * y);
    });
    EXPECT_LT(max_abs_diff(resample(resample(p2, 16), 32), p2), 1e-12);
    EXPECT_LT(max_abs_diff(resample(resample(p2, 64), 32), p2), 1e-12);

    const auto d = GridFunction::from_function(kDirichlet2Pi, 64,
                                               [](double x) { return std::sin(x / 2) + 0.3 * std::sin(5 * x / 2); });
    EXPECT_LT(max_abs_diff(resample(resample(d, 16), 64), d), 1e-12);
}

TEST(Resample, ZeroStaysZeroAndFixedResolutionIsIdentity) {
    GridFunction z(DomainSpec::unit_torus(2), 16);
    for (std::size_t n : {4u, 16u, 64u}) {
        const auto r = resample(z, n);
        for (double v : r.values()) EXPECT_EQ(v, 0.0);
    }
    const auto u = random_function(DomainSpec::unit_torus(1), 32, 7);
    EXPECT_LT(max_abs_diff(resample(u, 32), u), 1e-12);
    EXPECT_THROW(resample(u, 48), ShapeError);
}

TEST(Resample, RefinementPreservesNormOfRandomField) {
    // Refining keeps every sine coefficient, so the L2 norm is unchanged.
    const auto u = random_function(kDirichlet2Pi, 32, 11);
    EXPECT_NEAR(l2_norm(resample(u, 128)), l2_norm(u), 1e-10);

    // periodic: the Nyquist coefficient c is split into c/2 at +-N/2
    const auto p = random_function(DomainSpec::unit_torus(1), 32, 11);
    double nyq = 0.0;
    for (std::size_t j = 0; j < 32; ++j) nyq += (j % 2 ? -1.0 : 1.0) * p[j];
    nyq /= 32.0;  // orthonormal coefficient on the unit interval: sum/N * sqrt(L)
    const double expect = std::sqrt(l2_inner(p, p) - 0.5 * nyq * nyq);
    EXPECT_NEAR(l2_norm(resample(p, 128)), expect, 1e-10);
}

class DatasetIo : public ::testing::Test {
  protected:
    fdiff::testing::TempDir tmp{"fdiff_grid"};
};

TEST_F(DatasetIo, RoundTripIsBitExact) {
    Dataset d{kDirichlet2Pi, 32, {}, {{"source", "unit-test"}}};
    for (int s = 0; s < 3; ++s) d.push_back(random_function(kDirichlet2Pi, 32, 100 + s));
    const auto path = tmp.path() / "d.ddof";
    save_dataset(d, path);
    const auto back = load_dataset(path);
    ASSERT_EQ(back.count(), 3u);
    EXPECT_EQ(back.domain, d.domain);
    EXPECT_EQ(back.resolution, 32u);
    EXPECT_EQ(back.metadata["source"], "unit-test");
    for (int s = 0; s < 3; ++s)
        EXPECT_EQ(std::memcmp(back.samples[s].data(), d.samples[s].data(), 32 * sizeof(double)), 0);
}

TEST_F(DatasetIo, EmptyDatasetRoundTrips) {
    Dataset d{DomainSpec::unit_torus(2), 16, {}, {}};
    const auto path = tmp.path() / "empty.ddof";
    save_dataset(d, path);
    const auto back = load_dataset(path);
    EXPECT_EQ(back.count(), 0u);
    EXPECT_EQ(back.domain.dims, 2);
    EXPECT_FALSE(std::filesystem::exists(metadata_path(path)));
}

TEST_F(DatasetIo, HeaderLayoutIsLittleEndian) {
    Dataset d{DomainSpec::unit_torus(1), 4, {}, {}};
    d.push_back(GridFunction(d.domain, 4, {1.0, 2.0, 3.0, 4.0}));
    const auto path = tmp.path() / "layout.ddof";
    save_dataset(d, path);
    const auto bytes = detail::read_file(path);
    ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 4 + 8 + 4 + 8 + 4 * 8);
    EXPECT_EQ(std::string(bytes.data(), 4), "DDOF");
    EXPECT_EQ(bytes[4], 1);   // version
    EXPECT_EQ(bytes[8], 1);   // dims
    EXPECT_EQ(bytes[12], 0);  // periodic
    EXPECT_EQ(bytes[24], 4);  // resolution
    EXPECT_EQ(bytes[28], 1);  // count
}

TEST_F(DatasetIo, RejectsBadMagicTruncationAndCountMismatch) {
    Dataset d{DomainSpec::unit_torus(1), 8, {}, {}};
    d.push_back(random_function(d.domain, 8, 3));
    d.push_back(random_function(d.domain, 8, 4));
    const auto path = tmp.path() / "ok.ddof";
    save_dataset(d, path);
    auto bytes = detail::read_file(path);

    auto bad = bytes;
    bad[0] = 'X';
    detail::write_file(tmp.path() / "magic.ddof", bad);
    EXPECT_THROW(load_dataset(tmp.path() / "magic.ddof"), FormatError);

    auto version = bytes;
    version[4] = 2;
    detail::write_file(tmp.path() / "version.ddof", version);
    EXPECT_THROW(load_dataset(tmp.path() / "version.ddof"), FormatError);

    auto truncated = std::vector<char>(bytes.begin(), bytes.begin() + 20);
    detail::write_file(tmp.path() / "trunc.ddof", truncated);
    EXPECT_THROW(load_dataset(tmp.path() / "trunc.ddof"), FormatError);

    auto short_payload = std::vector<char>(bytes.begin(), bytes.end() - 8);
    detail::write_file(tmp.path() / "short.ddof", short_payload);
    EXPECT_THROW(load_dataset(tmp.path() / "short.ddof"), FormatError);

    auto count = bytes;
    count[28] = 5;
    detail::write_file(tmp.path() / "count.ddof", count);
    EXPECT_THROW(load_dataset(tmp.path() / "count.ddof"), FormatError);
}
