#pragma once

// Denoising objectives with exact parameter gradients, Adam, and the training loop.
// Every example carries its level t and a standard draw z ~ N(0, C); the loss
// kinds differ only in how the corrupted input, the residual and its weighting
// are formed from (u, t, z).

#include <fdiff/corruption.hpp>
#include <fdiff/fno.hpp>

#include <algorithm>
#include <functional>
#include <numeric>
#include <ostream>
#include <thread>

namespace fdiff {

enum class LossKind { RescaledDsm, PlainDsm, PrecondDsm, DdpmW2, DdpmKl };

inline const char* to_string(LossKind k) {
    switch (k) {
        case LossKind::RescaledDsm: return "rescaled_dsm";
        case LossKind::PlainDsm: return "plain_dsm";
        case LossKind::PrecondDsm: return "precond_dsm";
        case LossKind::DdpmW2: return "ddpm_w2";
        case LossKind::DdpmKl: return "ddpm_kl";
    }
    return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
    for (auto k : {LossKind::RescaledDsm, LossKind::PlainDsm, LossKind::PrecondDsm, LossKind::DdpmW2, LossKind::DdpmKl})
        if (s == to_string(k)) return k;
    throw ConfigError("loss", "unknown loss kind \"" + s + "\"");
}

inline bool is_ddpm(LossKind k) { return k == LossKind::DdpmW2 || k == LossKind::DdpmKl; }

struct LossSpec {
    LossKind kind = LossKind::RescaledDsm;
    NoiseSchedule schedule;

    void validate() const {
        schedule.validate();
        const bool ddpm = schedule.kind == NoiseSchedule::Kind::Ddpm;
        if (is_ddpm(kind) != ddpm)
            throw ConfigError("loss", std::string(to_string(kind)) + " needs a " + (is_ddpm(kind) ? "ddpm" : "ncsn") +
                                          " schedule");
        if (kind == LossKind::DdpmKl && schedule.levels() < 2)
            throw ConfigError("loss", "ddpm_kl needs T >= 2 (the t = 1 weight is unbounded)");
    }

    /// Smallest admissible level.
    std::size_t first_level() const { return kind == LossKind::DdpmKl ? 2 : 1; }
};

struct TrainingExample {
    GridFunction u;
    std::size_t t = 1;
    GridFunction z;  // standard draw from the base covariance
};

/// Network input and loss for one example, plus dLoss/dOutput given the output.
struct LossTerms {
    GridFunction input;
    double cond = 0.0;
};

inline LossTerms loss_input(const LossSpec& spec, const TrainingExample& ex) {
    const auto& s = spec.schedule;
    if (ex.t < spec.first_level() || ex.t > s.levels())
        throw std::out_of_range("loss: level t=" + std::to_string(ex.t) + " out of range");
    return {corrupt_with(s, ex.u, ex.t, ex.z).noisy, s.conditioning(ex.t)};
}

/// Loss of one example given the network output y; writes dLoss/dy into grad when non-null.
inline double loss_from_output(const LossSpec& spec, const TrainingExample& ex, const GridFunction& y,
                               GridFunction* grad) {
    const auto& s = spec.schedule;
    const double hd = y.cell_volume();
    const std::size_t t = ex.t;
    switch (spec.kind) {
        case LossKind::RescaledDsm: {
            // || eta_t/sigma_t + sigma_t F ||^2 with eta_t = sigma_t z
            const double sig = s.sigma(t);
            const auto r = ex.z + sig * y;
            if (grad) *grad = (2.0 * hd * sig) * r;
            return l2_inner(r, r);
        }
        case LossKind::PlainDsm: {
            const auto r = s.sigma(t) * ex.z + y;
            if (grad) *grad = (2.0 * hd) * r;
            return l2_inner(r, r);
        }
        case LossKind::PrecondDsm: {
            const auto r = s.sigma(t) * ex.z - y;
            const auto w = s.base.apply_power(r, -0.5);
            if (grad) *grad = (-2.0 * hd) * s.base.apply_power(w, -0.5);
            return l2_inner(w, w);
        }
        case LossKind::DdpmW2: {
            const double b = s.beta(t), a = s.alpha(t);
            const double wt = b * b / ((1.0 - b) * (1.0 - a));
            const auto r = y - ex.z;
            if (grad) *grad = (2.0 * hd * wt) * r;
            return wt * l2_inner(r, r);
        }
        case LossKind::DdpmKl: {
            const double b = s.beta(t), a = s.alpha(t), a_prev = s.alpha(t - 1);
            const double wt = (1.0 - a) / ((1.0 - a_prev) * b);
            const double coef = std::sqrt(a_prev) * b / (1.0 - a);
            const auto r = coef * ex.u - s.base.apply_power(y, 0.5);
            const auto w = s.base.apply_power(r, -0.5);
            if (grad) *grad = (-2.0 * hd * wt) * w;
            return wt * l2_inner(w, w);
        }
    }
    return 0.0;
}

struct GradientTape {
    double loss = 0.0;  // mean over the batch
    std::vector<double> grad;
};

namespace detail {

inline GradientTape shard_sum(const FnoModel& m, std::span<const TrainingExample> batch, const LossSpec& spec,
                              double inv_batch) {
    std::vector<GridFunction> inputs;
    std::vector<double> conds;
    for (const auto& ex : batch) {
        auto li = loss_input(spec, ex);
        inputs.push_back(std::move(li.input));
        conds.push_back(li.cond);
    }
    FnoCache cache;
    const auto out = m.forward_batch(inputs, conds, &cache);
    GradientTape tape;
    std::vector<GridFunction> gout(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        tape.loss += inv_batch * loss_from_output(spec, batch[b], out[b], &gout[b]);
        gout[b] *= inv_batch;
    }
    tape.grad = m.backward(cache, gout);
    return tape;
}

}  // namespace detail

/// Mean loss over the batch and its exact gradient. With workers > 1 the batch is
/// split into contiguous shards whose gradients are summed in shard order.
inline GradientTape loss_and_grad(const FnoModel& m, std::span<const TrainingExample> batch, const LossSpec& spec,
                                  std::size_t workers = 1) {
    if (batch.empty()) throw ShapeError("loss_and_grad: empty batch");
    const double inv = 1.0 / double(batch.size());
    workers = std::max<std::size_t>(1, std::min(workers, batch.size()));
    if (workers == 1) return detail::shard_sum(m, batch, spec, inv);

    std::vector<GradientTape> parts(workers);
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    const std::size_t chunk = (batch.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = std::min(batch.size(), w * chunk), hi = std::min(batch.size(), lo + chunk);
        if (lo == hi) continue;
        pool.emplace_back([&, w, lo, hi] {
            try {
                parts[w] = detail::shard_sum(m, batch.subspan(lo, hi - lo), spec, inv);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    GradientTape tape;
    tape.grad.assign(m.parameter_count(), 0.0);
    for (const auto& p : parts) {
        if (p.grad.empty()) continue;
        tape.loss += p.loss;
        for (std::size_t i = 0; i < p.grad.size(); ++i) tape.grad[i] += p.grad[i];
    }
    return tape;
}

/// Mean loss only.
inline double loss_value(const FnoModel& m, std::span<const TrainingExample> batch, const LossSpec& spec) {
    std::vector<GridFunction> inputs;
    std::vector<double> conds;
    for (const auto& ex : batch) {
        auto li = loss_input(spec, ex);
        inputs.push_back(std::move(li.input));
        conds.push_back(li.cond);
    }
    const auto out = m.forward_batch(inputs, conds);
    double acc = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) acc += loss_from_output(spec, batch[b], out[b], nullptr);
    return acc / double(batch.size());
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    std::uint64_t step = 0;
};

inline void adam_step(std::vector<double>& params, std::span<const double> grads, double lr, AdamState& st,
                      const AdamConfig& cfg = {}) {
    if (grads.size() != params.size()) throw ShapeError("adam_step: gradient size mismatch");
    if (st.m.empty()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
    }
    ++st.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, double(st.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, double(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grads[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        params[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.eps);
    }
}

struct TrainConfig {
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::size_t lr_halving_period = 50;
    AdamConfig adam{};
    std::uint64_t seed = 0;
    bool sum_over_levels = false;  // every example at every level instead of one uniform level
    std::size_t workers = 1;

    void validate() const {
        if (epochs == 0) throw ConfigError("train.epochs", "must be >= 1");
        if (batch_size == 0) throw ConfigError("train.batch_size", "must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("train.lr", "must be > 0");
        if (lr_halving_period == 0) throw ConfigError("train.lr_halving_period", "must be >= 1");
        if (workers == 0) throw ConfigError("train.workers", "must be >= 1");
        if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0)) throw ConfigError("train.beta1", "must lie in (0, 1)");
        if (!(adam.beta2 > 0.0 && adam.beta2 < 1.0)) throw ConfigError("train.beta2", "must lie in (0, 1)");
        if (!(adam.eps > 0.0)) throw ConfigError("train.eps", "must be > 0");
    }

    double lr_at(std::size_t epoch) const {
        return lr * std::pow(0.5, double(epoch / lr_halving_period));
    }
};

inline TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path) {
    using namespace config;
    check_keys(j, {"epochs", "batch_size", "lr", "lr_halving_period", "beta1", "beta2", "eps", "sum_over_levels"}, path);
    TrainConfig c;
    c.epochs = get_or<std::size_t>(j, "epochs", c.epochs, path);
    c.batch_size = get_or<std::size_t>(j, "batch_size", c.batch_size, path);
    c.lr = get_or<double>(j, "lr", c.lr, path);
    c.lr_halving_period = get_or<std::size_t>(j, "lr_halving_period", c.lr_halving_period, path);
    c.adam.beta1 = get_or<double>(j, "beta1", c.adam.beta1, path);
    c.adam.beta2 = get_or<double>(j, "beta2", c.adam.beta2, path);
    c.adam.eps = get_or<double>(j, "eps", c.adam.eps, path);
    c.sum_over_levels = get_or<bool>(j, "sum_over_levels", c.sum_over_levels, path);
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(join(path, e.key().substr(e.key().find('.') + 1)), e.what());
    }
    return c;
}

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
};

inline void write_loss_history(std::ostream& os, const std::vector<EpochRecord>& h) {
    os << "epoch,mean_loss,lr\n";
    os.precision(17);
    for (const auto& r : h) os << r.epoch << ',' << r.mean_loss << ',' << r.lr << '\n';
}

using EpochCallback = std::function<void(const EpochRecord&, const FnoModel&)>;

/// Adam over shuffled mini-batches with fresh levels and noise per example per epoch.
/// Noise comes from a per-example substream, so equal seeds share low modes across resolutions.
inline TrainResult train(const Dataset& data, const LossSpec& spec, FnoModel& model, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
    cfg.validate();
    spec.validate();
    if (data.count() == 0) throw ShapeError("train: empty dataset");
    model.check_input(data.domain, data.resolution);
    if (!(spec.schedule.base.domain() == data.domain))
        throw ShapeError("train: schedule covariance domain differs from the dataset domain");

    Rng rng(cfg.seed);
    const NoiseSampler noise(spec.schedule.base, data.resolution);
    const std::size_t lo = spec.first_level(), hi = spec.schedule.levels();
    std::uniform_int_distribution<std::size_t> level(lo, hi);
    AdamState adam;
    TrainResult result;
    std::vector<std::size_t> order(data.count());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = cfg.lr_at(epoch);
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<TrainingExample> batch;
            for (std::size_t i = start; i < stop; ++i) {
                const auto& u = data.samples[order[i]];
                Rng sub(rng());
                if (cfg.sum_over_levels) {
                    for (std::size_t t = lo; t <= hi; ++t) batch.push_back({u, t, noise.sample(sub)});
                } else {
                    const std::size_t t = level(rng);
                    batch.push_back({u, t, noise.sample(sub)});
                }
            }
            auto tape = loss_and_grad(model, batch, spec, cfg.workers);
            bool finite = std::isfinite(tape.loss);
            for (double g : tape.grad) finite = finite && std::isfinite(g);
            if (!finite)
                throw NumericError("train: non-finite loss/gradient at epoch " + std::to_string(epoch + 1) +
                                   ", batch starting at " + std::to_string(start) + " (loss " +
                                   std::to_string(tape.loss) + ")");
            adam_step(model.parameters(), tape.grad, lr, adam, cfg.adam);
            loss_sum += tape.loss * double(batch.size());
            loss_count += batch.size();
        }
        EpochRecord rec{epoch + 1, loss_sum / double(loss_count), lr};
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec, model);
    }
    return result;
}

}  // namespace fdiff
