#pragma once

// Discretized functions on a uniform grid over a 1D interval or the 2D torus,
// L2 inner products, spectral resampling and the binary dataset format.

#include <fdiff/detail/fft.hpp>
#include <fdiff/errors.hpp>

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace fdiff {

using cplx = std::complex<double>;

enum class Boundary : std::uint32_t { Periodic = 0, Dirichlet = 1 };

inline const char* to_string(Boundary b) { return b == Boundary::Periodic ? "periodic" : "dirichlet"; }

inline Boundary boundary_from_string(const std::string& s) {
    if (s == "periodic") return Boundary::Periodic;
    if (s == "dirichlet") return Boundary::Dirichlet;
    throw ConfigError("boundary", "expected \"periodic\" or \"dirichlet\", got \"" + s + "\"");
}

struct DomainSpec {
    int dims = 1;
    double extent = 1.0;
    Boundary boundary = Boundary::Periodic;

    void validate() const {
        if (dims != 1 && dims != 2) throw ShapeError("DomainSpec: dims must be 1 or 2");
        if (!(extent > 0.0) || !std::isfinite(extent)) throw ShapeError("DomainSpec: extent must be > 0");
        if (dims == 2 && boundary != Boundary::Periodic)
            throw ShapeError("DomainSpec: 2D domains must be periodic");
    }

    static DomainSpec unit_torus(int dims) { return {dims, 1.0, Boundary::Periodic}; }
    static DomainSpec interval(double extent, Boundary b) { return {1, extent, b}; }

    friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

constexpr bool is_power_of_two(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

inline void check_resolution(const DomainSpec& domain, std::size_t resolution) {
    if (!is_power_of_two(resolution) || resolution < 2)
        throw ShapeError("resolution must be a power of two >= 2, got " + std::to_string(resolution));
    (void)domain;
}

/// Number of grid values: resolution^dims.
inline std::size_t grid_size(const DomainSpec& domain, std::size_t resolution) {
    return domain.dims == 1 ? resolution : resolution * resolution;
}

/// A real function sampled on a uniform grid, values row-major.
///
/// Periodic nodes sit at x_j = j*h, j = 0..N-1. Dirichlet nodes sit at
/// x_j = (j+1)*h, j = 0..N-1, so the last stored node lies on the right
/// boundary and is held at zero (the left boundary is implicit).
class GridFunction {
  public:
    GridFunction() = default;

    GridFunction(DomainSpec domain, std::size_t resolution)
        : domain_(domain), resolution_(resolution), values_(grid_size(domain, resolution), 0.0) {
        domain_.validate();
        check_resolution(domain_, resolution_);
    }

    GridFunction(DomainSpec domain, std::size_t resolution, std::vector<double> values)
        : domain_(domain), resolution_(resolution), values_(std::move(values)) {
        domain_.validate();
        check_resolution(domain_, resolution_);
        if (values_.size() != grid_size(domain_, resolution_))
            throw ShapeError("GridFunction: expected " + std::to_string(grid_size(domain_, resolution_)) +
                             " values, got " + std::to_string(values_.size()));
    }

    /// Samples f at the grid nodes (the Dirichlet boundary node is set to 0).
    static GridFunction from_function(DomainSpec domain, std::size_t resolution,
                                      const std::function<double(double)>& f) {
        GridFunction g(domain, resolution);
        if (domain.dims != 1) throw ShapeError("from_function(x): domain must be 1D");
        for (std::size_t j = 0; j < resolution; ++j) g.values_[j] = f(g.node(j));
        if (domain.boundary == Boundary::Dirichlet) g.values_.back() = 0.0;
        return g;
    }

    static GridFunction from_function(DomainSpec domain, std::size_t resolution,
                                      const std::function<double(double, double)>& f) {
        GridFunction g(domain, resolution);
        if (domain.dims != 2) throw ShapeError("from_function(x, y): domain must be 2D");
        const double h = g.spacing();
        for (std::size_t i = 0; i < resolution; ++i)
            for (std::size_t j = 0; j < resolution; ++j) g.values_[i * resolution + j] = f(i * h, j * h);
        return g;
    }

    const DomainSpec& domain() const noexcept { return domain_; }
    std::size_t resolution() const noexcept { return resolution_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    double spacing() const { return domain_.extent / double(resolution_); }
    double cell_volume() const { return domain_.dims == 1 ? spacing() : spacing() * spacing(); }

    /// 1D node coordinate.
    double node(std::size_t j) const {
        const double offset = domain_.boundary == Boundary::Dirichlet ? 1.0 : 0.0;
        return (double(j) + offset) * spacing();
    }

    bool same_shape(const GridFunction& other) const {
        return domain_ == other.domain_ && resolution_ == other.resolution_;
    }

    void require_same_shape(const GridFunction& other, const char* what) const {
        if (!same_shape(other)) throw ShapeError(std::string(what) + ": domain/resolution mismatch");
    }

    GridFunction& operator+=(const GridFunction& o) {
        require_same_shape(o, "operator+=");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    GridFunction& operator-=(const GridFunction& o) {
        require_same_shape(o, "operator-=");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
        return *this;
    }
    GridFunction& operator*=(double s) {
        for (double& v : values_) v *= s;
        return *this;
    }
    /// this += s * o
    GridFunction& axpy(double s, const GridFunction& o) {
        require_same_shape(o, "axpy");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * o.values_[i];
        return *this;
    }

    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(double s, GridFunction a) { return a *= s; }
    friend GridFunction operator*(GridFunction a, double s) { return a *= s; }

    bool all_finite() const {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

  private:
    DomainSpec domain_{};
    std::size_t resolution_ = 0;
    std::vector<double> values_;
};

/// Riemann sum  h^dims * sum_j a_j b_j.
inline double l2_inner(const GridFunction& a, const GridFunction& b) {
    a.require_same_shape(b, "l2_inner");
    double s = 0.0;
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
    return s * a.cell_volume();
}

inline double l2_norm(const GridFunction& a) { return std::sqrt(l2_inner(a, a)); }

namespace detail {

/// Number of orthonormal coefficients represented at a resolution.
inline std::size_t coefficient_count(const DomainSpec& d, std::size_t n) {
    return d.boundary == Boundary::Dirichlet ? n - 1 : grid_size(d, n);
}

/// Grid values -> L2-orthonormal basis coefficients.
/// Periodic: e_k(x) = exp(2 pi i k.x / L) / L^(d/2), FFT ordering.
/// Dirichlet: phi_k(x) = sqrt(2/L) sin(pi k x / L), k = 1..N-1 at index k-1.
inline void to_coefficients(const DomainSpec& d, std::size_t n, std::span<const double> u, std::span<cplx> out) {
    const double L = d.extent;
    if (d.boundary == Boundary::Dirichlet) {
        const std::size_t m = n - 1;
        std::vector<double> tmp(m);
        dst1(int(m), u.data(), tmp.data());
        const double scale = std::sqrt(L / 2.0) / double(n);
        for (std::size_t k = 0; k < m; ++k) out[k] = cplx(tmp[k] * scale, 0.0);
        return;
    }
    const std::size_t total = grid_size(d, n);
    std::vector<cplx> in(total);
    for (std::size_t i = 0; i < total; ++i) in[i] = cplx(u[i], 0.0);
    dft(d.dims, int(n), in, out, true);
    const double scale = std::pow(L, 0.5 * d.dims) / double(total);
    for (std::size_t i = 0; i < total; ++i) out[i] *= scale;
}

/// Inverse of to_coefficients. Periodic fields keep the real part.
inline void from_coefficients(const DomainSpec& d, std::size_t n, std::span<const cplx> c, std::span<double> out) {
    const double L = d.extent;
    if (d.boundary == Boundary::Dirichlet) {
        const std::size_t m = n - 1;
        std::vector<double> re(m);
        for (std::size_t k = 0; k < m; ++k) re[k] = c[k].real();
        dst1(int(m), re.data(), out.data());
        const double scale = 1.0 / std::sqrt(2.0 * L);
        for (std::size_t j = 0; j < m; ++j) out[j] *= scale;
        out[m] = 0.0;
        return;
    }
    const std::size_t total = grid_size(d, n);
    std::vector<cplx> tmp(total);
    dft(d.dims, int(n), c, tmp, false);
    const double scale = 1.0 / std::pow(L, 0.5 * d.dims);
    for (std::size_t i = 0; i < total; ++i) out[i] = tmp[i].real() * scale;
}

/// Maps one periodic coefficient line of length n onto length m (zero-pad or
/// truncate). The -n/2 slot is split evenly on refinement; +-m/2 fold together
/// on coarsening.
inline void resample_line(std::span<const cplx> in, std::span<cplx> out) {
    const long n = long(in.size());
    const long m = long(out.size());
    std::fill(out.begin(), out.end(), cplx{});
    for (long i = 0; i < n; ++i) {
        const long k = i < n / 2 ? i : i - n;
        const cplx c = in[std::size_t(i)];
        if (m == n) {
            out[std::size_t(i)] = c;
        } else if (m > n) {
            if (k == -n / 2) {
                out[std::size_t(n / 2)] += 0.5 * c;
                out[std::size_t(m - n / 2)] += 0.5 * c;
            } else {
                out[std::size_t((k + m) % m)] += c;
            }
        } else {
            const long ak = k < 0 ? -k : k;
            if (ak < m / 2) out[std::size_t((k + m) % m)] += c;
            else if (ak == m / 2) out[std::size_t(m / 2)] += c;
        }
    }
}

/// Resamples an orthonormal coefficient array between resolutions.
inline std::vector<cplx> resample_coefficients(const DomainSpec& d, std::size_t n, std::span<const cplx> c,
                                               std::size_t m) {
    if (d.boundary == Boundary::Dirichlet) {
        std::vector<cplx> out(m - 1, cplx{});
        const std::size_t keep = std::min(n, m) - 1;
        std::copy_n(c.begin(), keep, out.begin());
        return out;
    }
    if (d.dims == 1) {
        std::vector<cplx> out(m);
        resample_line(c, out);
        return out;
    }
    // separable: rows first (axis 1), then columns (axis 0)
    std::vector<cplx> stage(n * m);
    for (std::size_t i = 0; i < n; ++i)
        resample_line(c.subspan(i * n, n), std::span<cplx>(stage).subspan(i * m, m));
    std::vector<cplx> out(m * m);
    std::vector<cplx> col_in(n), col_out(m);
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < n; ++i) col_in[i] = stage[i * m + j];
        resample_line(col_in, col_out);
        for (std::size_t i = 0; i < m; ++i) out[i * m + j] = col_out[i];
    }
    return out;
}

}  // namespace detail

/// Spectral interpolation to a new power-of-two resolution.
inline GridFunction resample(const GridFunction& u, std::size_t new_resolution) {
    check_resolution(u.domain(), new_resolution);
    if (new_resolution == u.resolution()) return u;
    const auto& d = u.domain();
    std::vector<cplx> c(detail::coefficient_count(d, u.resolution()));
    detail::to_coefficients(d, u.resolution(), u.values(), c);
    auto r = detail::resample_coefficients(d, u.resolution(), c, new_resolution);
    GridFunction out(d, new_resolution);
    detail::from_coefficients(d, new_resolution, r, out.values());
    return out;
}

/// An ordered collection of samples sharing one domain and resolution.
struct Dataset {
    DomainSpec domain{};
    std::size_t resolution = 0;
    std::vector<GridFunction> samples;
    nlohmann::json metadata = nlohmann::json::object();

    std::size_t count() const noexcept { return samples.size(); }

    void push_back(GridFunction g) {
        if (!(g.domain() == domain) || g.resolution() != resolution)
            throw ShapeError("Dataset::push_back: sample shape differs from dataset");
        samples.push_back(std::move(g));
    }

    void validate() const {
        domain.validate();
        check_resolution(domain, resolution);
        for (const auto& s : samples)
            if (!(s.domain() == domain) || s.resolution() != resolution)
                throw ShapeError("Dataset: samples must share domain and resolution");
    }
};

/// Resamples every member of a dataset.
inline Dataset resample(const Dataset& d, std::size_t new_resolution) {
    Dataset out{d.domain, new_resolution, {}, d.metadata};
    out.samples.reserve(d.count());
    for (const auto& s : d.samples) out.samples.push_back(resample(s, new_resolution));
    return out;
}

namespace detail {

template <class T>
void put_le(std::vector<char>& buf, T value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    buf.insert(buf.end(), bytes, bytes + sizeof(T));
}

class ByteReader {
  public:
    ByteReader(const std::vector<char>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

    template <class T>
    T get() {
        need(sizeof(T));
        char bytes[sizeof(T)];
        std::memcpy(bytes, buf_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, bytes, sizeof(T));
        return v;
    }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return buf_.size() - pos_; }

  private:
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw FormatError(what_ + ": truncated payload");
    }

    const std::vector<char>& buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw FormatError("write failed: " + path.string());
}

}  // namespace detail

inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::filesystem::path metadata_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".meta.json");
}

/// Writes the little-endian "DDOF" format; metadata (if any) goes to <path>.meta.json.
inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    d.validate();
    std::vector<char> buf;
    const std::size_t per = grid_size(d.domain, d.resolution);
    buf.reserve(40 + d.count() * per * 8);
    for (char c : {'D', 'D', 'O', 'F'}) buf.push_back(c);
    detail::put_le<std::uint32_t>(buf, kDatasetVersion);
    detail::put_le<std::uint32_t>(buf, std::uint32_t(d.domain.dims));
    detail::put_le<std::uint32_t>(buf, std::uint32_t(d.domain.boundary));
    detail::put_le<double>(buf, d.domain.extent);
    detail::put_le<std::uint32_t>(buf, std::uint32_t(d.resolution));
    detail::put_le<std::uint64_t>(buf, std::uint64_t(d.count()));
    for (const auto& s : d.samples)
        for (double v : s.values()) detail::put_le<double>(buf, v);
    detail::write_file(path, buf);
    if (!d.metadata.empty()) {
        std::ofstream meta(metadata_path(path), std::ios::trunc);
        meta << d.metadata.dump(2) << "\n";
    }
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    const auto buf = detail::read_file(path);
    detail::ByteReader r(buf, "dataset " + path.string());
    if (r.get_bytes(4) != "DDOF") throw FormatError("dataset " + path.string() + ": bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != kDatasetVersion)
        throw FormatError("dataset " + path.string() + ": unsupported version " + std::to_string(version));
    Dataset d;
    d.domain.dims = int(r.get<std::uint32_t>());
    const auto boundary = r.get<std::uint32_t>();
    if (boundary > 1) throw FormatError("dataset: unknown boundary code " + std::to_string(boundary));
    d.domain.boundary = Boundary(boundary);
    d.domain.extent = r.get<double>();
    d.resolution = r.get<std::uint32_t>();
    const auto count = r.get<std::uint64_t>();
    try {
        d.domain.validate();
        check_resolution(d.domain, d.resolution);
    } catch (const ShapeError& e) {
        throw FormatError(std::string("dataset: invalid header: ") + e.what());
    }
    const std::size_t per = grid_size(d.domain, d.resolution);
    if (r.remaining() != count * per * sizeof(double))
        throw FormatError("dataset " + path.string() + ": payload size does not match count " +
                          std::to_string(count));
    d.samples.reserve(count);
    for (std::uint64_t s = 0; s < count; ++s) {
        std::vector<double> v(per);
        for (auto& x : v) x = r.get<double>();
        d.samples.emplace_back(d.domain, d.resolution, std::move(v));
    }
    if (auto mp = metadata_path(path); std::filesystem::exists(mp)) {
        std::ifstream in(mp);
        try {
            d.metadata = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("dataset metadata " + mp.string() + ": " + e.what());
        }
    }
    return d;
}

}  // namespace fdiff
