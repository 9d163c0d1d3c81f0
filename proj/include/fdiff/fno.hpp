#pragma once

// Fourier neural operator with a constant conditioning channel:
//   lift([u, c]) -> L x (spectral conv + pointwise bypass, GELU between blocks) -> projection.
// All parameters live in one flat vector in the order given by ParamLayout.

#include <fdiff/config.hpp>
#include <fdiff/detail/fft.hpp>
#include <fdiff/grid.hpp>

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <thread>
#include <vector>

namespace fdiff {

struct FnoConfig {
    int dims = 1;
    int modes = 16;
    int width = 32;
    int layers = 4;
    int in_channels = 2;
    int out_channels = 1;
    bool activation = true;  // false: linear debug mode

    void validate() const {
        if (dims != 1 && dims != 2) throw ConfigError("model.dims", "must be 1 or 2");
        if (modes < 1) throw ConfigError("model.modes", "must be >= 1");
        if (width < 1) throw ConfigError("model.width", "must be >= 1");
        if (layers < 1) throw ConfigError("model.layers", "must be >= 1");
        if (in_channels != 2) throw ConfigError("model.in_channels", "must be 2 (value + conditioning)");
        if (out_channels != 1) throw ConfigError("model.out_channels", "must be 1");
    }

    std::size_t min_resolution() const { return 2 * std::size_t(modes); }

    /// Retained spectral modes per layer: k in [0, modes) in 1D;
    /// kx in [0, modes) u [-modes, 0), ky in [0, modes) in 2D.
    std::size_t spectral_modes() const {
        return dims == 1 ? std::size_t(modes) : 2 * std::size_t(modes) * std::size_t(modes);
    }

    friend bool operator==(const FnoConfig&, const FnoConfig&) = default;
};

inline nlohmann::json fno_config_to_json(const FnoConfig& c) {
    return {{"dims", c.dims},     {"modes", c.modes},           {"width", c.width},
            {"layers", c.layers}, {"in_channels", c.in_channels}, {"out_channels", c.out_channels},
            {"activation", c.activation}};
}

inline FnoConfig fno_config_from_json(const nlohmann::json& j, const std::string& path) {
    using namespace config;
    check_keys(j, {"dims", "modes", "width", "layers", "in_channels", "out_channels", "activation"}, path);
    FnoConfig c;
    c.dims = get_or<int>(j, "dims", c.dims, path);
    c.modes = get_or<int>(j, "modes", c.modes, path);
    c.width = get_or<int>(j, "width", c.width, path);
    c.layers = get_or<int>(j, "layers", c.layers, path);
    c.in_channels = get_or<int>(j, "in_channels", c.in_channels, path);
    c.out_channels = get_or<int>(j, "out_channels", c.out_channels, path);
    c.activation = get_or<bool>(j, "activation", c.activation, path);
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(join(path, e.key().substr(e.key().find('.') + 1)), e.what());
    }
    return c;
}

/// Offsets of every parameter block in the flat vector. Spectral weights are
/// complex, stored [mode][out][in] as interleaved (re, im).
struct ParamLayout {
    std::size_t lift_w = 0, lift_b = 0;
    std::vector<std::size_t> spectral, bypass_w, bypass_b;
    std::size_t proj_w = 0, proj_b = 0;
    std::size_t total = 0;

    explicit ParamLayout(const FnoConfig& c) {
        const std::size_t W = std::size_t(c.width);
        std::size_t off = 0;
        auto take = [&](std::size_t n) {
            const std::size_t at = off;
            off += n;
            return at;
        };
        lift_w = take(W * std::size_t(c.in_channels));
        lift_b = take(W);
        for (int l = 0; l < c.layers; ++l) {
            spectral.push_back(take(2 * c.spectral_modes() * W * W));
            bypass_w.push_back(take(W * W));
            bypass_b.push_back(take(W));
        }
        proj_w = take(std::size_t(c.out_channels) * W);
        proj_b = take(std::size_t(c.out_channels));
        total = off;
    }
};

/// Closed-form parameter count.
inline std::size_t parameter_count(const FnoConfig& c) {
    const std::size_t W = std::size_t(c.width);
    return W * std::size_t(c.in_channels) + W +
           std::size_t(c.layers) * (2 * c.spectral_modes() * W * W + W * W + W) + std::size_t(c.out_channels) * (W + 1);
}

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CRowMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic>;

inline double gelu_exact(double z) { return 0.5 * z * (1.0 + std::erf(z * M_SQRT1_2)); }
inline double gelu_grad_exact(double z) {
    return 0.5 * (1.0 + std::erf(z * M_SQRT1_2)) + z * std::exp(-0.5 * z * z) * (0.5 * M_2_SQRTPI * M_SQRT1_2);
}
inline double gelu_second_exact(double z) {
    return std::exp(-0.5 * z * z) * (0.5 * M_2_SQRTPI * M_SQRT1_2) * (2.0 - z * z);
}
inline double gelu_third_exact(double z) {
    return std::exp(-0.5 * z * z) * (0.5 * M_2_SQRTPI * M_SQRT1_2) * (z * z * z - 4.0 * z);
}

/// Cubic Hermite tables for GELU and its derivative on [-8, 8] (spacing 1/256,
/// error below 1e-12); outside, GELU is z or 0 to double precision.
class GeluTable {
  public:
    static constexpr double kRange = 8.0;
    static constexpr double kScale = 256.0;

    GeluTable() {
        const std::size_t n = std::size_t(2 * kRange * kScale) + 1;
        f_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double z = -kRange + double(i) / kScale;
            f_[i] = {gelu_exact(z), gelu_grad_exact(z), gelu_second_exact(z), gelu_third_exact(z)};
        }
    }

    static const GeluTable& get() {
        static const GeluTable t;
        return t;
    }

    double value(double z) const {
        if (!(z > -kRange)) return z < 0 ? 0.0 : z;  // also passes NaN through
        if (z >= kRange) return z;
        return interp(z, 0);
    }
    double grad(double z) const {
        if (!(z > -kRange)) return z < 0 ? 0.0 : 1.0;
        if (z >= kRange) return 1.0;
        return interp(z, 1);
    }

  private:
    double interp(double z, int k) const {
        const double s = (z + kRange) * kScale;
        auto i = std::size_t(s);
        if (i + 1 >= f_.size()) i = f_.size() - 2;
        const double t = s - double(i), h = 1.0 / kScale;
        const double p0 = f_[i][k], p1 = f_[i + 1][k], m0 = f_[i][k + 1] * h, m1 = f_[i + 1][k + 1] * h;
        const double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * m1;
    }

    std::vector<std::array<double, 4>> f_;
};

inline double gelu(double z) { return GeluTable::get().value(z); }
inline double gelu_grad(double z) { return GeluTable::get().grad(z); }

inline RowMat gelu(const RowMat& z) {
    const auto& t = GeluTable::get();
    RowMat out(z.rows(), z.cols());
    const double* src = z.data();
    double* dst = out.data();
    for (Eigen::Index i = 0, n = z.size(); i < n; ++i) dst[i] = t.value(src[i]);
    return out;
}

/// dh * gelu'(z)
inline RowMat gelu_backward(const RowMat& dh, const RowMat& z) {
    const auto& t = GeluTable::get();
    RowMat out(z.rows(), z.cols());
    const double* a = dh.data();
    const double* b = z.data();
    double* dst = out.data();
    for (Eigen::Index i = 0, n = z.size(); i < n; ++i) dst[i] = a[i] * t.grad(b[i]);
    return out;
}

/// Retained modes as indices into the r2c half spectrum, with synthesis weights
/// (1 on the last-axis-zero column, 2 elsewhere).
struct ModeTable {
    int dims = 1;
    std::size_t n = 0;
    std::size_t half = 0;  // r2c output size
    std::vector<std::size_t> index;
    std::vector<double> weight;

    ModeTable(const FnoConfig& c, std::size_t n_) : dims(c.dims), n(n_) {
        const std::size_t hn = n / 2 + 1;
        half = dims == 1 ? hn : n * hn;
        const int m = c.modes;
        if (dims == 1) {
            for (int k = 0; k < m; ++k) {
                index.push_back(std::size_t(k));
                weight.push_back(k == 0 ? 1.0 : 2.0);
            }
            return;
        }
        for (int s = 0; s < 2 * m; ++s) {
            const int kx = s < m ? s : s - 2 * m;
            const std::size_t ix = std::size_t((kx + int(n)) % int(n));
            for (int ky = 0; ky < m; ++ky) {
                index.push_back(ix * hn + std::size_t(ky));
                weight.push_back(ky == 0 ? 1.0 : 2.0);
            }
        }
    }

    std::size_t points() const { return dims == 1 ? n : n * n; }
    double norm() const { return double(points()); }

    /// Makes the ky = 0 column Hermitian so c2r sees the real part of the synthesis.
    void symmetrize(std::vector<cplx>& h) const {
        if (dims == 1) {
            h[0] = cplx(h[0].real(), 0.0);
            return;
        }
        const std::size_t hn = n / 2 + 1;
        std::vector<cplx> col(n);
        for (std::size_t kx = 0; kx < n; ++kx) col[kx] = h[kx * hn];
        for (std::size_t kx = 0; kx < n; ++kx) h[kx * hn] = 0.5 * (col[kx] + std::conj(col[(n - kx) % n]));
    }
};

/// Out-of-place r2c of every (channel, batch) row segment, gathered at the
/// retained modes. Result layout [mode][batch][channel].
inline std::vector<cplx> gather_modes(const ModeTable& t, const RowMat& h, std::size_t batch) {
    const std::size_t W = std::size_t(h.rows()), P = t.points(), M = t.index.size();
    std::vector<cplx> out(M * W * batch);
    std::vector<cplx> half(t.half);
    for (std::size_t c = 0; c < W; ++c) {
        for (std::size_t b = 0; b < batch; ++b) {
            rfft(t.dims, int(t.n), h.row(Eigen::Index(c)).data() + b * P, half.data());
            for (std::size_t m = 0; m < M; ++m) out[(m * batch + b) * W + c] = half[t.index[m]];
        }
    }
    return out;
}

/// out += sum_k (w_k / N^d) Re(Y_k e^{ikx}) for Y in [mode][batch][channel] layout.
inline void synthesize_add(const ModeTable& t, const std::vector<cplx>& Y, std::size_t W, std::size_t batch,
                           RowMat& out) {
    const std::size_t P = t.points(), M = t.index.size();
    std::vector<cplx> half(t.half);
    std::vector<double> buf(P);
    const double inv = 1.0 / t.norm();
    for (std::size_t c = 0; c < W; ++c) {
        for (std::size_t b = 0; b < batch; ++b) {
            std::fill(half.begin(), half.end(), cplx{});
            for (std::size_t m = 0; m < M; ++m) half[t.index[m]] = Y[(m * batch + b) * W + c];
            t.symmetrize(half);
            irfft(t.dims, int(t.n), half.data(), buf.data());
            double* dst = out.row(Eigen::Index(c)).data() + b * P;
            for (std::size_t j = 0; j < P; ++j) dst[j] += inv * buf[j];
        }
    }
}

/// Odd 2L-periodic extension of a Dirichlet function: 2N nodes at i*h, i = 0..2N-1.
inline GridFunction odd_extension(const GridFunction& u) {
    const std::size_t n = u.resolution();
    GridFunction e(DomainSpec::interval(2.0 * u.domain().extent, Boundary::Periodic), 2 * n);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        e[j + 1] = u[j];
        e[2 * n - j - 1] = -u[j];
    }
    return e;
}

/// y_j = (e(x_j) - e(-x_j)) / 2 at the Dirichlet nodes x_j = (j+1) h.
inline GridFunction odd_part(const GridFunction& e, const DomainSpec& d) {
    const std::size_t n = e.resolution() / 2;
    GridFunction y(d, n);
    for (std::size_t j = 0; j + 1 < n; ++j) y[j] = 0.5 * (e[j + 1] - e[2 * n - j - 1]);
    return y;
}

inline GridFunction odd_part_adjoint(const GridFunction& g, const DomainSpec& extended) {
    const std::size_t n = g.resolution();
    GridFunction e(extended, 2 * n);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        e[j + 1] += 0.5 * g[j];
        e[2 * n - j - 1] -= 0.5 * g[j];
    }
    return e;
}

}  // namespace detail

/// Intermediate activations kept for the backward pass.
struct FnoCache {
    std::size_t batch = 0;
    std::size_t resolution = 0;
    DomainSpec domain{};  // domain the network ran on (periodic)
    detail::RowMat input;                  // in_channels x (batch * points)
    std::vector<detail::RowMat> h;         // block inputs, layers + 1 entries
    std::vector<detail::RowMat> z;         // pre-activations
    std::vector<std::vector<cplx>> modes;  // retained coefficients of each block input
    bool odd_extension = false;
    DomainSpec outer_domain{};
    std::size_t outer_resolution = 0;
};

struct InitOptions {
    double scale = 1.0;  // multiplies every weight (not bias); 0 gives the zero-scale debug model
};

class FnoModel {
  public:
    FnoModel() : FnoModel(FnoConfig{}) {}
    explicit FnoModel(const FnoConfig& cfg) : cfg_(cfg), layout_((cfg.validate(), cfg)) {
        params_.assign(layout_.total, 0.0);
    }
    FnoModel(const FnoConfig& cfg, std::vector<double> params) : FnoModel(cfg) {
        if (params.size() != layout_.total)
            throw ShapeError("FnoModel: expected " + std::to_string(layout_.total) + " parameters, got " +
                             std::to_string(params.size()));
        params_ = std::move(params);
    }

    const FnoConfig& config() const { return cfg_; }
    const ParamLayout& layout() const { return layout_; }
    std::vector<double>& parameters() { return params_; }
    const std::vector<double>& parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }

    void check_input(const DomainSpec& d, std::size_t n) const {
        if (d.dims != cfg_.dims) throw ShapeError("FnoModel: input dims differ from model dims");
        if (n < cfg_.min_resolution())
            throw ShapeError("FnoModel: resolution " + std::to_string(n) + " below 2*modes = " +
                             std::to_string(cfg_.min_resolution()));
    }

    GridFunction forward(const GridFunction& u, double cond) const {
        return forward_batch({&u, 1}, {&cond, 1}).front();
    }

    /// Evaluates every input; with `cache` the activations needed by backward() are kept.
    /// Dirichlet inputs are processed on their odd periodic extension and the odd
    /// part of the output is returned, so outputs vanish on the boundary.
    std::vector<GridFunction> forward_batch(std::span<const GridFunction> inputs, std::span<const double> conds,
                                            FnoCache* cache = nullptr) const {
        if (inputs.empty()) return {};
        if (conds.size() != inputs.size()) throw ShapeError("forward_batch: one conditioning value per input");
        const auto& d = inputs.front().domain();
        const std::size_t n = inputs.front().resolution();
        check_input(d, n);
        for (const auto& u : inputs)
            if (!(u.domain() == d) || u.resolution() != n) throw ShapeError("forward_batch: mixed input shapes");
        if (d.boundary == Boundary::Periodic) {
            auto out = forward_periodic(inputs, conds, cache);
            if (cache) cache->odd_extension = false;
            return out;
        }
        std::vector<GridFunction> ext;
        ext.reserve(inputs.size());
        for (const auto& u : inputs) ext.push_back(detail::odd_extension(u));
        const auto y = forward_periodic(ext, conds, cache);
        if (cache) {
            cache->odd_extension = true;
            cache->outer_domain = d;
            cache->outer_resolution = n;
        }
        std::vector<GridFunction> out;
        out.reserve(y.size());
        for (const auto& v : y) out.push_back(detail::odd_part(v, d));
        return out;
    }

    /// Batch evaluation split across worker threads (no cache).
    std::vector<GridFunction> forward_parallel(std::span<const GridFunction> inputs, std::span<const double> conds,
                                               std::size_t workers) const {
        workers = std::max<std::size_t>(1, std::min(workers, inputs.size()));
        if (workers == 1) return forward_batch(inputs, conds);
        std::vector<std::vector<GridFunction>> parts(workers);
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        const std::size_t chunk = (inputs.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t lo = std::min(inputs.size(), w * chunk), hi = std::min(inputs.size(), lo + chunk);
            pool.emplace_back([&, w, lo, hi] {
                try {
                    parts[w] = forward_batch(inputs.subspan(lo, hi - lo), conds.subspan(lo, hi - lo));
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        std::vector<GridFunction> out;
        out.reserve(inputs.size());
        for (auto& p : parts)
            for (auto& g : p) out.push_back(std::move(g));
        return out;
    }

    /// Parameter gradient given dLoss/dOutput for every cached example.
    std::vector<double> backward(const FnoCache& cache, std::span<const GridFunction> grad_out) const {
        if (!cache.odd_extension) return backward_periodic(cache, grad_out);
        std::vector<GridFunction> ext;
        ext.reserve(grad_out.size());
        for (const auto& g : grad_out) {
            if (!(g.domain() == cache.outer_domain) || g.resolution() != cache.outer_resolution)
                throw ShapeError("backward: gradient shape mismatch");
            ext.push_back(detail::odd_part_adjoint(g, cache.domain));
        }
        return backward_periodic(cache, ext);
    }

  private:
    std::vector<double> backward_periodic(const FnoCache& cache, std::span<const GridFunction> grad_out) const {
        using detail::RowMat;
        const std::size_t B = cache.batch, n = cache.resolution, P = grid_size(cache.domain, n);
        const std::size_t W = std::size_t(cfg_.width);
        if (grad_out.size() != B) throw ShapeError("backward: one output gradient per cached example");
        const detail::ModeTable table(cfg_, n);
        std::vector<double> g(params_.size(), 0.0);

        RowMat dout(1, Eigen::Index(B * P));
        for (std::size_t b = 0; b < B; ++b) {
            if (grad_out[b].size() != P) throw ShapeError("backward: gradient shape mismatch");
            std::copy(grad_out[b].data(), grad_out[b].data() + P, dout.row(0).data() + b * P);
        }
        const auto& hL = cache.h.back();
        map_rows(g, layout_.proj_w, 1, W) += dout * hL.transpose();
        map_vec(g, layout_.proj_b, 1) += dout.rowwise().sum();
        RowMat dh = proj_weight().transpose() * dout;

        for (int l = cfg_.layers - 1; l >= 0; --l) {
            const auto li = std::size_t(l);
            RowMat dz;
            if (cfg_.activation && l + 1 < cfg_.layers) {
                dz = detail::gelu_backward(dh, cache.z[li]);
            } else {
                dz = std::move(dh);
            }
            const auto& h = cache.h[li];
            map_rows(g, layout_.bypass_w[li], W, W) += dz * h.transpose();
            map_vec(g, layout_.bypass_b[li], W) += dz.rowwise().sum();
            dh = bypass_weight(l).transpose() * dz;

            // spectral block: dR_m = (w_m/N^d) G_m X_m^H, input grad = synth(R_m^H G_m)
            const auto G = detail::gather_modes(table, dz, B);
            const std::size_t M = table.index.size();
            auto* dR = reinterpret_cast<cplx*>(g.data() + layout_.spectral[li]);
            const auto* R = spectral(l);
            std::vector<cplx> V(G.size());
            const auto& X = cache.modes[li];
            for (std::size_t m = 0; m < M; ++m) {
                Eigen::Map<const detail::CMat> Gm(G.data() + m * B * W, Eigen::Index(W), Eigen::Index(B));
                Eigen::Map<const detail::CMat> Xm(X.data() + m * B * W, Eigen::Index(W), Eigen::Index(B));
                Eigen::Map<detail::CRowMat> dRm(dR + m * W * W, Eigen::Index(W), Eigen::Index(W));
                Eigen::Map<const detail::CRowMat> Rm(R + m * W * W, Eigen::Index(W), Eigen::Index(W));
                dRm.noalias() += (table.weight[m] / table.norm()) * (Gm * Xm.adjoint());
                Eigen::Map<detail::CMat>(V.data() + m * B * W, Eigen::Index(W), Eigen::Index(B)).noalias() =
                    Rm.adjoint() * Gm;
            }
            detail::synthesize_add(table, V, W, B, dh);
        }
        map_rows(g, layout_.lift_w, W, 2) += dh * cache.input.transpose();
        map_vec(g, layout_.lift_b, W) += dh.rowwise().sum();
        return g;
    }

  private:
    std::vector<GridFunction> forward_periodic(std::span<const GridFunction> inputs, std::span<const double> conds,
                                               FnoCache* cache) const {
        using detail::RowMat;
        const auto& d = inputs.front().domain();
        const std::size_t n = inputs.front().resolution();

        const std::size_t B = inputs.size(), P = grid_size(d, n), W = std::size_t(cfg_.width);
        const Eigen::Index BP = Eigen::Index(B * P);
        const detail::ModeTable table(cfg_, n);

        RowMat x(2, BP);
        for (std::size_t b = 0; b < B; ++b) {
            std::copy(inputs[b].data(), inputs[b].data() + P, x.row(0).data() + b * P);
            std::fill(x.row(1).data() + b * P, x.row(1).data() + (b + 1) * P, conds[b]);
        }
        RowMat h = lift_weight() * x;
        h.colwise() += lift_bias();
        if (cache) {
            *cache = FnoCache{B, n, d, x, {}, {}, {}};
        }
        for (int l = 0; l < cfg_.layers; ++l) {
            auto X = detail::gather_modes(table, h, B);
            auto Y = mix(l, X, B);
            RowMat z = bypass_weight(l) * h;
            z.colwise() += bypass_bias(l);
            detail::synthesize_add(table, Y, W, B, z);
            const bool act = cfg_.activation && l + 1 < cfg_.layers;
            if (cache) {
                cache->h.push_back(h);
                cache->modes.push_back(std::move(X));
            }
            if (act) {
                if (cache) cache->z.push_back(z);
                h = detail::gelu(z);
            } else {
                if (cache) cache->z.emplace_back();
                h = std::move(z);
            }
        }
        RowMat out = proj_weight() * h;
        out.colwise() += proj_bias();
        if (cache) cache->h.push_back(std::move(h));

        std::vector<GridFunction> result;
        result.reserve(B);
        for (std::size_t b = 0; b < B; ++b) {
            std::vector<double> v(out.row(0).data() + b * P, out.row(0).data() + (b + 1) * P);
            result.emplace_back(d, n, std::move(v));
        }
        return result;
    }

    using ConstRows = Eigen::Map<const detail::RowMat>;
    using ConstVec = Eigen::Map<const Eigen::VectorXd>;

    ConstRows lift_weight() const { return {params_.data() + layout_.lift_w, cfg_.width, 2}; }
    ConstVec lift_bias() const { return {params_.data() + layout_.lift_b, cfg_.width}; }
    ConstRows bypass_weight(int l) const {
        return {params_.data() + layout_.bypass_w[std::size_t(l)], cfg_.width, cfg_.width};
    }
    ConstVec bypass_bias(int l) const { return {params_.data() + layout_.bypass_b[std::size_t(l)], cfg_.width}; }
    ConstRows proj_weight() const { return {params_.data() + layout_.proj_w, 1, cfg_.width}; }
    ConstVec proj_bias() const { return {params_.data() + layout_.proj_b, 1}; }
    const cplx* spectral(int l) const {
        return reinterpret_cast<const cplx*>(params_.data() + layout_.spectral[std::size_t(l)]);
    }

    static Eigen::Map<detail::RowMat> map_rows(std::vector<double>& g, std::size_t off, std::size_t r,
                                               std::size_t c) {
        return {g.data() + off, Eigen::Index(r), Eigen::Index(c)};
    }
    static Eigen::Map<Eigen::VectorXd> map_vec(std::vector<double>& g, std::size_t off, std::size_t n) {
        return {g.data() + off, Eigen::Index(n)};
    }

    /// Y_m = R_m X_m for every retained mode.
    std::vector<cplx> mix(int l, const std::vector<cplx>& X, std::size_t B) const {
        const std::size_t W = std::size_t(cfg_.width), M = X.size() / (W * B);
        std::vector<cplx> Y(X.size());
        const auto* R = spectral(l);
        for (std::size_t m = 0; m < M; ++m) {
            Eigen::Map<const detail::CRowMat> Rm(R + m * W * W, Eigen::Index(W), Eigen::Index(W));
            Eigen::Map<const detail::CMat> Xm(X.data() + m * B * W, Eigen::Index(W), Eigen::Index(B));
            Eigen::Map<detail::CMat>(Y.data() + m * B * W, Eigen::Index(W), Eigen::Index(B)).noalias() = Rm * Xm;
        }
        return Y;
    }

    FnoConfig cfg_;
    ParamLayout layout_;
    std::vector<double> params_;
};

/// Affine weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); spectral weights
/// (re, im) ~ U(0, 1) / width^2.
inline FnoModel init_model(const FnoConfig& cfg, Rng& rng, InitOptions opt = {}) {
    FnoModel m(cfg);
    auto& p = m.parameters();
    const auto& L = m.layout();
    const std::size_t W = std::size_t(cfg.width);
    auto fill = [&](std::size_t off, std::size_t count, double bound, double scale) {
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t i = 0; i < count; ++i) p[off + i] = scale * u(rng);
    };
    const double lift = 1.0 / std::sqrt(double(cfg.in_channels));
    const double wide = 1.0 / std::sqrt(double(W));
    fill(L.lift_w, W * 2, lift, opt.scale);
    fill(L.lift_b, W, lift, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int l = 0; l < cfg.layers; ++l) {
        const auto li = std::size_t(l);
        const std::size_t count = 2 * cfg.spectral_modes() * W * W;
        for (std::size_t i = 0; i < count; ++i) p[L.spectral[li] + i] = opt.scale * unit(rng) / double(W * W);
        fill(L.bypass_w[li], W * W, wide, opt.scale);
        fill(L.bypass_b[li], W, wide, 1.0);
    }
    fill(L.proj_w, W, wide, opt.scale);
    fill(L.proj_b, 1, wide, 1.0);
    return m;
}

inline constexpr std::uint32_t kModelVersion = 1;

/// "DDOM" | u32 version | u32 config length | config JSON | u64 count | f64 params (all little-endian).
inline void save_model(const FnoModel& m, const std::filesystem::path& path) {
    std::vector<char> buf;
    for (char c : {'D', 'D', 'O', 'M'}) buf.push_back(c);
    detail::put_le<std::uint32_t>(buf, kModelVersion);
    const std::string cfg = fno_config_to_json(m.config()).dump();
    detail::put_le<std::uint32_t>(buf, std::uint32_t(cfg.size()));
    buf.insert(buf.end(), cfg.begin(), cfg.end());
    detail::put_le<std::uint64_t>(buf, std::uint64_t(m.parameter_count()));
    for (double v : m.parameters()) detail::put_le<double>(buf, v);
    detail::write_file(path, buf);
}

inline FnoModel load_model(const std::filesystem::path& path) {
    const auto buf = detail::read_file(path);
    detail::ByteReader r(buf, "model " + path.string());
    if (r.get_bytes(4) != "DDOM") throw FormatError("model " + path.string() + ": bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != kModelVersion)
        throw FormatError("model " + path.string() + ": unsupported version " + std::to_string(version));
    const auto len = r.get<std::uint32_t>();
    FnoConfig cfg;
    try {
        cfg = fno_config_from_json(nlohmann::json::parse(r.get_bytes(len)), "model");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("model " + path.string() + ": bad config header: " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError("model " + path.string() + ": bad config header: " + e.what());
    }
    const auto count = r.get<std::uint64_t>();
    if (count != parameter_count(cfg))
        throw FormatError("model " + path.string() + ": header declares " + std::to_string(count) +
                          " parameters, config implies " + std::to_string(parameter_count(cfg)));
    if (r.remaining() != count * 8) throw FormatError("model " + path.string() + ": payload size mismatch");
    std::vector<double> p(count);
    for (auto& v : p) v = r.get<double>();
    return FnoModel(cfg, std::move(p));
}

}  // namespace fdiff
