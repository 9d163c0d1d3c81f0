#pragma once

// Transforms that diagonalize the Laplacian for each boundary condition,
// spectral multipliers, 2/3 dealiasing and averaged spectra.

#include <fdiff/grid.hpp>

#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <vector>

namespace fdiff {

struct Wavenumber {
    int kx = 0;
    int ky = 0;

    double norm() const { return std::sqrt(double(kx) * kx + double(ky) * ky); }
    friend bool operator==(const Wavenumber&, const Wavenumber&) = default;
};

/// Eigenvalue of -Laplacian for the basis function with wavenumber k.
inline double laplacian_eigenvalue(const DomainSpec& d, const Wavenumber& k) {
    if (d.boundary == Boundary::Dirichlet) {
        const double w = std::numbers::pi * k.kx / d.extent;
        return w * w;
    }
    const double w = 2.0 * std::numbers::pi / d.extent;
    return w * w * (double(k.kx) * k.kx + double(k.ky) * k.ky);
}

/// Signed wavenumber of an FFT-ordered index.
constexpr int signed_index(std::size_t i, std::size_t n) {
    return i < n / 2 ? int(i) : int(i) - int(n);
}

/// Wavenumber of every coefficient slot, in storage order.
inline std::vector<Wavenumber> mode_wavenumbers(const DomainSpec& d, std::size_t n) {
    std::vector<Wavenumber> ks;
    if (d.boundary == Boundary::Dirichlet) {
        for (std::size_t k = 1; k < n; ++k) ks.push_back({int(k), 0});
    } else if (d.dims == 1) {
        for (std::size_t i = 0; i < n; ++i) ks.push_back({signed_index(i, n), 0});
    } else {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) ks.push_back({signed_index(i, n), signed_index(j, n)});
    }
    return ks;
}

inline std::vector<double> mode_eigenvalues(const DomainSpec& d, std::size_t n) {
    std::vector<double> eig;
    for (const auto& k : mode_wavenumbers(d, n)) eig.push_back(laplacian_eigenvalue(d, k));
    return eig;
}

/// Orthonormal-basis coefficients of a GridFunction. Periodic coefficients are
/// complex in FFT order (conjugate-symmetric for real input); Dirichlet
/// coefficients are real sine coefficients for k = 1..N-1.
struct SpectralField {
    DomainSpec domain{};
    std::size_t resolution = 0;
    std::vector<cplx> coeffs;

    std::size_t size() const noexcept { return coeffs.size(); }
    std::vector<Wavenumber> wavenumbers() const { return mode_wavenumbers(domain, resolution); }
};

inline SpectralField forward(const GridFunction& u) {
    SpectralField s{u.domain(), u.resolution(),
                    std::vector<cplx>(detail::coefficient_count(u.domain(), u.resolution()))};
    detail::to_coefficients(u.domain(), u.resolution(), u.values(), s.coeffs);
    return s;
}

inline GridFunction inverse(const SpectralField& s) {
    if (s.coeffs.size() != detail::coefficient_count(s.domain, s.resolution))
        throw ShapeError("inverse: coefficient count does not match resolution");
    GridFunction u(s.domain, s.resolution);
    detail::from_coefficients(s.domain, s.resolution, s.coeffs, u.values());
    return u;
}

/// inverse(m(k) * forward(u)) with a multiplier given per storage slot.
inline GridFunction apply_multiplier(const GridFunction& u, std::span<const double> table) {
    auto s = forward(u);
    if (table.size() != s.size()) throw ShapeError("apply_multiplier: table size mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(table[i])) throw NumericError("apply_multiplier: non-finite multiplier value");
        s.coeffs[i] *= table[i];
    }
    return inverse(s);
}

inline std::vector<double> multiplier_table(const DomainSpec& d, std::size_t n,
                                            const std::function<double(const Wavenumber&)>& m) {
    std::vector<double> table;
    for (const auto& k : mode_wavenumbers(d, n)) table.push_back(m(k));
    return table;
}

inline GridFunction apply_multiplier(const GridFunction& u, const std::function<double(const Wavenumber&)>& m) {
    const auto table = multiplier_table(u.domain(), u.resolution(), m);
    return apply_multiplier(u, std::span<const double>(table));
}

/// Zeroes every coefficient with some |k_i| > N/3.
inline SpectralField dealias_two_thirds(SpectralField s) {
    const auto ks = s.wavenumbers();
    const double cut = double(s.resolution) / 3.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (std::abs(ks[i].kx) > cut || std::abs(ks[i].ky) > cut) s.coeffs[i] = cplx{};
    return s;
}

struct SpectrumPoint {
    int k = 0;
    double value = 0.0;
};

/// Radial bin (rounded |k|) of every coefficient slot.
inline std::vector<int> spectrum_bins(const DomainSpec& d, std::size_t n) {
    std::vector<int> bins;
    for (const auto& k : mode_wavenumbers(d, n)) bins.push_back(int(std::lround(k.norm())));
    return bins;
}

/// Mean |coefficient| per radial bin over all samples.
inline std::vector<SpectrumPoint> average_spectrum(const Dataset& data) {
    if (data.count() == 0) throw ShapeError("average_spectrum: empty dataset");
    const auto bins = spectrum_bins(data.domain, data.resolution);
    std::map<int, std::pair<double, std::size_t>> acc;
    for (int b : bins) acc[b];
    for (const auto& u : data.samples) {
        const auto s = forward(u);
        for (std::size_t i = 0; i < s.size(); ++i) {
            auto& [sum, cnt] = acc[bins[i]];
            sum += std::abs(s.coeffs[i]);
            ++cnt;
        }
    }
    std::vector<SpectrumPoint> out;
    for (const auto& [k, sc] : acc) out.push_back({k, sc.first / double(sc.second)});
    return out;
}

inline void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumPoint>& spectrum) {
    os << "k,mean_abs_coeff\n";
    os.precision(17);
    for (const auto& p : spectrum) os << p.k << ',' << p.value << '\n';
}

}  // namespace fdiff
