#pragma once

// Thin FFTW3 wrapper. Plans are created once per (kind, dims, size) with
// FFTW_ESTIMATE | FFTW_UNALIGNED and executed through the new-array interface,
// which is thread-safe; only planning is serialized.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <tuple>

namespace fdiff::detail {

using cplx = std::complex<double>;

enum class PlanKind { c2c_forward, c2c_backward, r2c, c2r, rodft00 };

class PlanCache {
  public:
    PlanCache() = default;
    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    fftw_plan get(PlanKind kind, int dims, int n) {
        std::lock_guard<std::mutex> lock(mutex_);
        const auto key = std::make_tuple(kind, dims, n);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;

        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        const std::size_t total = dims == 1 ? std::size_t(n) : std::size_t(n) * std::size_t(n);
        auto* rin = fftw_alloc_real(total + 2);
        auto* cin = fftw_alloc_complex(total + 2);
        auto* cout = fftw_alloc_complex(total + 2);
        auto* rout = fftw_alloc_real(total + 2);
        fftw_plan plan = nullptr;
        switch (kind) {
            case PlanKind::c2c_forward:
            case PlanKind::c2c_backward: {
                const int sign = kind == PlanKind::c2c_forward ? FFTW_FORWARD : FFTW_BACKWARD;
                plan = dims == 1 ? fftw_plan_dft_1d(n, cin, cout, sign, flags)
                                 : fftw_plan_dft_2d(n, n, cin, cout, sign, flags);
                break;
            }
            case PlanKind::r2c:
                plan = dims == 1 ? fftw_plan_dft_r2c_1d(n, rin, cout, flags)
                                 : fftw_plan_dft_r2c_2d(n, n, rin, cout, flags);
                break;
            case PlanKind::c2r:
                plan = dims == 1 ? fftw_plan_dft_c2r_1d(n, cin, rout, flags)
                                 : fftw_plan_dft_c2r_2d(n, n, cin, rout, flags);
                break;
            case PlanKind::rodft00:
                plan = fftw_plan_r2r_1d(n, rin, rout, FFTW_RODFT00, flags);
                break;
        }
        fftw_free(rin);
        fftw_free(cin);
        fftw_free(cout);
        fftw_free(rout);
        plans_.emplace(key, plan);
        return plan;
    }

  private:
    std::mutex mutex_;
    std::map<std::tuple<PlanKind, int, int>, fftw_plan> plans_;
};

inline PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

inline fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }
inline fftw_complex* as_fftw(const cplx* p) {
    return reinterpret_cast<fftw_complex*>(const_cast<cplx*>(p));
}

/// Unnormalized complex DFT, sign -1 (forward) or +1 (backward). `in` is not modified.
inline void dft(int dims, int n, std::span<const cplx> in, std::span<cplx> out, bool forward) {
    auto plan = plan_cache().get(forward ? PlanKind::c2c_forward : PlanKind::c2c_backward, dims, n);
    fftw_execute_dft(plan, as_fftw(in.data()), as_fftw(out.data()));
}

/// Unnormalized real-to-half-complex transform. Output has n/2+1 entries along the last axis.
inline void rfft(int dims, int n, const double* in, cplx* out) {
    auto plan = plan_cache().get(PlanKind::r2c, dims, n);
    fftw_execute_dft_r2c(plan, const_cast<double*>(in), as_fftw(out));
}

/// Unnormalized half-complex-to-real transform. FFTW destroys the input.
inline void irfft(int dims, int n, cplx* in, double* out) {
    auto plan = plan_cache().get(PlanKind::c2r, dims, n);
    fftw_execute_dft_c2r(plan, as_fftw(in), out);
}

/// DST-I: out[k] = 2 sum_j in[j] sin(pi (j+1)(k+1) / (n+1)).
inline void dst1(int n, const double* in, double* out) {
    auto plan = plan_cache().get(PlanKind::rodft00, 1, n);
    fftw_execute_r2r(plan, const_cast<double*>(in), out);
}

}  // namespace fdiff::detail
