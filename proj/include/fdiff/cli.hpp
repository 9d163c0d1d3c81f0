#pragma once

// Command-line front end: every subcommand reads a JSON config, writes its
// outputs into a staging directory and moves them to --out only on success.

#include <fdiff/diagnostics.hpp>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fdiff::cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumeric = 2;
inline constexpr int kConfigSchema = 1;

/// Git blob hash: sha1("blob <size>\0" + bytes), hex.
inline std::string git_blob_sha1(const std::vector<char>& bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, header.data(), header.size());
    EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        const unsigned char c = md[i];
        out += hex[c >> 4];
        out += hex[c & 15];
    }
    return out;
}

inline std::string file_sha1(const fs::path& p) { return git_blob_sha1(detail::read_file(p)); }

struct Options {
    std::string command;
    fs::path config;
    fs::path out;
    std::optional<std::uint64_t> seed;
    bool force = false;
    std::size_t workers = 1;
};

/// Outputs accumulate in a sibling staging directory.
class Staging {
  public:
    Staging(const fs::path& out, bool force) : out_(out), force_(force) {
        if (fs::exists(out_) && !force_ && !fs::is_empty(out_))
            throw ConfigError("--out", out_.string() + " exists and is not empty (use --force)");
        dir_ = out_.parent_path() / ("." + out_.filename().string() + ".staging");
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    ~Staging() {
        std::error_code ec;
        if (!committed_) fs::remove_all(dir_, ec);
    }
    Staging(const Staging&) = delete;
    Staging& operator=(const Staging&) = delete;

    fs::path path(const std::string& name) const { return dir_ / name; }

    void write_text(const std::string& name, const std::string& text) {
        std::ofstream os(path(name), std::ios::binary | std::ios::trunc);
        os << text;
        if (!os) throw FormatError("cannot write " + path(name).string());
    }

    void commit() {
        if (fs::exists(out_)) fs::remove_all(out_);
        fs::rename(dir_, out_);
        committed_ = true;
    }

  private:
    fs::path out_, dir_;
    bool force_ = false;
    bool committed_ = false;
};

inline json read_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("--config", "cannot open " + path.string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
    }
}

/// Removes "schema" (must be 1 if present) and "seed" (overridden by --seed).
inline std::uint64_t take_common(json& j, const Options& o) {
    config::require_object(j, "");
    if (j.contains("schema")) {
        if (config::get<int>(j, "schema", "") != kConfigSchema)
            throw ConfigError("schema", "unsupported schema version");
        j.erase("schema");
    }
    std::uint64_t seed = config::get_or<std::uint64_t>(j, "seed", 0, "");
    j.erase("seed");
    if (o.seed) seed = *o.seed;
    return seed;
}

inline std::string to_csv(const std::function<void(std::ostream&)>& write) {
    std::ostringstream os;
    write(os);
    return os.str();
}

inline void write_manifest(Staging& st, const Options& o, const json& cfg, std::uint64_t seed,
                           const std::vector<std::string>& outputs, json extra = json::object()) {
    json m = {{"schema", kConfigSchema}, {"command", o.command}, {"seed", seed}, {"workers", o.workers},
              {"config", cfg}};
    json files = json::object();
    for (const auto& name : outputs) files[name] = file_sha1(st.path(name));
    m["outputs"] = files;
    for (auto& [k, v] : extra.items()) m[k] = v;
    st.write_text("manifest.json", m.dump(2) + "\n");
}

inline SamplerConfig sampler_from_json(const json& j, const std::string& path) {
    using namespace config;
    check_keys(j, {"M", "epsilon", "chains"}, path);
    SamplerConfig s;
    s.M = get_or<std::size_t>(j, "M", s.M, path);
    s.epsilon = get_or<double>(j, "epsilon", s.epsilon, path);
    s.chains = get_or<std::size_t>(j, "chains", 512, path);
    if (s.M == 0) throw ConfigError(join(path, "M"), "must be >= 1");
    if (!(s.epsilon > 0.0)) throw ConfigError(join(path, "epsilon"), "must be > 0");
    if (s.chains == 0) throw ConfigError(join(path, "chains"), "must be >= 1");
    return s;
}

inline json sampler_to_json(const SamplerConfig& s) { return {{"M", s.M}, {"epsilon", s.epsilon}, {"chains", s.chains}}; }

inline std::vector<std::size_t> resolutions_from_json(const json& j, const std::string& key, const std::string& path,
                                                      std::vector<std::size_t> fallback) {
    auto r = config::get_or<std::vector<std::size_t>>(j, key, fallback, path);
    if (r.empty()) throw ConfigError(config::join(path, key), "must not be empty");
    for (auto n : r)
        if (!is_power_of_two(n) || n < 2) throw ConfigError(config::join(path, key), "resolutions must be powers of two");
    return r;
}

inline TransferConfig transfer_from_json(const json& j, const std::string& path, std::uint64_t seed) {
    using namespace config;
    check_keys(j, {"data", "schedule", "loss", "train_resolution", "resolutions", "n_train", "n_reference", "fno",
                   "train", "sampler"},
               path);
    TransferConfig c;
    if (j.contains("data")) c.data = gm_spec_from_json(j.at("data"), join(path, "data"));
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"), c.data.domain, join(path, "schedule"));
    else c.schedule = NoiseSchedule::ncsn(c.schedule.sigmas, MaternCovariance(c.data.domain, 0.5, 0.1, 0.6));
    c.loss = loss_kind_from_string(get_or<std::string>(j, "loss", to_string(c.loss), path));
    if (is_ddpm(c.loss)) throw ConfigError(join(path, "loss"), "Langevin experiments need an ncsn loss");
    c.train_resolution = get_or<std::size_t>(j, "train_resolution", c.train_resolution, path);
    c.resolutions = resolutions_from_json(j, "resolutions", path, c.resolutions);
    c.n_train = get_or<std::size_t>(j, "n_train", c.n_train, path);
    c.n_reference = get_or<std::size_t>(j, "n_reference", c.n_reference, path);
    if (j.contains("fno")) c.fno = fno_config_from_json(j.at("fno"), join(path, "fno"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), join(path, "train"));
    if (j.contains("sampler")) c.sampler = sampler_from_json(j.at("sampler"), join(path, "sampler"));
    else c.sampler.chains = 512;
    c.seed = seed;
    return c;
}

inline json transfer_to_json(const TransferConfig& c) {
    return {{"data",
             {{"domain", config::domain_to_json(c.data.domain)},
              {"mean", to_string(c.data.mean)},
              {"p", c.data.p},
              {"covariance", c.data.cov}}},
            {"schedule", schedule_to_json(c.schedule)},
            {"loss", to_string(c.loss)},
            {"train_resolution", c.train_resolution},
            {"resolutions", c.resolutions},
            {"n_train", c.n_train},
            {"n_reference", c.n_reference},
            {"fno", fno_config_to_json(c.fno)},
            {"train",
             {{"epochs", c.train.epochs},
              {"batch_size", c.train.batch_size},
              {"lr", c.train.lr},
              {"lr_halving_period", c.train.lr_halving_period},
              {"sum_over_levels", c.train.sum_over_levels}}},
            {"sampler", sampler_to_json(c.sampler)}};
}

inline json gm_to_json(const GaussianMixtureSpec& s) {
    return {{"domain", config::domain_to_json(s.domain)}, {"mean", to_string(s.mean)}, {"p", s.p}, {"covariance", s.cov}};
}

inline void log_line(const std::string& s) { std::cerr << s << '\n'; }

// ---- subcommands ----------------------------------------------------------

inline void cmd_gen_gm(const Options& o, json j) {
    using namespace config;
    const auto seed = take_common(j, o);
    check_keys(j, {"spec", "N", "resolution"}, "");
    const auto spec = j.contains("spec") ? gm_spec_from_json(j.at("spec"), "spec") : GaussianMixtureSpec{};
    const auto N = get_or<std::size_t>(j, "N", 10000, "");
    const auto res = get_or<std::size_t>(j, "resolution", 256, "");
    if (!is_power_of_two(res) || res < 2) throw ConfigError("resolution", "must be a power of two >= 2");
    const json resolved = {{"spec", gm_to_json(spec)}, {"N", N}, {"resolution", res}};
    Staging st(o.out, o.force);
    Rng rng(seed);
    auto d = gen_gaussian_mixture(spec, N, res, rng);
    d.metadata["seed"] = seed;
    save_dataset(d, st.path("dataset.ddof"));
    write_manifest(st, o, resolved, seed, {"dataset.ddof", "dataset.ddof.meta.json"});
    st.commit();
}

inline void cmd_gen_ns(const Options& o, json j) {
    using namespace config;
    const auto seed = take_common(j, o);
    check_keys(j, {"spec", "N"}, "");
    const auto spec = j.contains("spec") ? ns_spec_from_json(j.at("spec"), "spec") : NavierStokesSpec{};
    const auto N = get_or<std::size_t>(j, "N", 2000, "");
    const json resolved = {{"spec",
                            {{"viscosity", spec.viscosity},
                             {"final_time", spec.final_time},
                             {"forcing", spec.forcing},
                             {"forcing_scale", spec.forcing_scale},
                             {"dt", spec.step()},
                             {"resolution", spec.resolution}}},
                           {"N", N}};
    Staging st(o.out, o.force);
    Rng rng(seed);
    auto d = gen_navier_stokes(spec, N, rng, o.workers);
    d.metadata["seed"] = seed;
    save_dataset(d, st.path("dataset.ddof"));
    write_manifest(st, o, resolved, seed, {"dataset.ddof", "dataset.ddof.meta.json"});
    st.commit();
}

inline void cmd_train(const Options& o, json j) {
    using namespace config;
    const auto seed = take_common(j, o);
    check_keys(j, {"dataset", "fno", "loss", "schedule", "train"}, "");
    const fs::path data_path = get<std::string>(j, "dataset", "");
    const auto data = load_dataset(data_path);
    FnoConfig fc;
    fc.dims = data.domain.dims;
    if (j.contains("fno")) fc = fno_config_from_json(j.at("fno"), "fno");
    if (fc.dims != data.domain.dims) throw ConfigError("fno.dims", "does not match the dataset");
    const auto loss = loss_kind_from_string(get_or<std::string>(j, "loss", "rescaled_dsm", ""));
    const auto schedule = schedule_from_json(j.contains("schedule") ? j.at("schedule") : json::object(), data.domain,
                                             "schedule");
    auto tc = j.contains("train") ? train_config_from_json(j.at("train"), "train") : TrainConfig{};
    tc.seed = seed + 2;
    tc.workers = o.workers;
    const LossSpec spec{loss, schedule};
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(e.key() == "loss" ? "loss" : "schedule", e.what());
    }
    const json resolved = {{"dataset", data_path.string()},
                           {"dataset_sha1", file_sha1(data_path)},
                           {"domain", domain_to_json(data.domain)},
                           {"resolution", data.resolution},
                           {"fno", fno_config_to_json(fc)},
                           {"loss", to_string(loss)},
                           {"schedule", schedule_to_json(schedule)},
                           {"train",
                            {{"epochs", tc.epochs},
                             {"batch_size", tc.batch_size},
                             {"lr", tc.lr},
                             {"lr_halving_period", tc.lr_halving_period},
                             {"beta1", tc.adam.beta1},
                             {"beta2", tc.adam.beta2},
                             {"eps", tc.adam.eps},
                             {"sum_over_levels", tc.sum_over_levels}}}};
    Staging st(o.out, o.force);
    Rng init(seed + 1);
    auto model = init_model(fc, init);
    const auto result = train(data, spec, model, tc, [](const EpochRecord& r, const FnoModel&) {
        log_line("epoch " + std::to_string(r.epoch) + " loss " + std::to_string(r.mean_loss));
    });
    save_model(model, st.path("model.ddom"));
    st.write_text("loss_history.csv", to_csv([&](std::ostream& os) { write_loss_history(os, result.history); }));
    write_manifest(st, o, resolved, seed, {"model.ddom", "loss_history.csv"},
                   {{"model_hash", file_sha1(st.path("model.ddom"))}});
    st.commit();
}

inline void cmd_sample(const Options& o, json j) {
    using namespace config;
    const auto seed = take_common(j, o);
    check_keys(j, {"train_dir", "resolution", "sampler"}, "");
    const fs::path dir = get<std::string>(j, "train_dir", "");
    json tm;
    try {
        std::ifstream is(dir / "manifest.json");
        if (!is) throw ConfigError("train_dir", "no manifest.json in " + dir.string());
        tm = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("train_dir", std::string("malformed training manifest: ") + e.what());
    }
    const auto& tc = tm.at("config");
    const auto domain = domain_from_json(tc.at("domain"), "train_dir.domain");
    const auto schedule = schedule_from_json(tc.at("schedule"), domain, "train_dir.schedule");
    const auto loss = loss_kind_from_string(tc.at("loss").get<std::string>());
    const auto model = load_model(dir / "model.ddom");
    const auto res = get_or<std::size_t>(j, "resolution", tc.at("resolution").get<std::size_t>(), "");
    auto sc = j.contains("sampler") ? sampler_from_json(j.at("sampler"), "sampler") : SamplerConfig{};
    if (!j.contains("sampler")) sc.chains = 512;
    sc.schedule = schedule;
    sc.seed = seed;
    try {
        model.check_input(domain, res);
    } catch (const ShapeError& e) {
        throw ConfigError("resolution", e.what());
    }
    const json resolved = {{"train_dir", dir.string()},
                           {"model_hash", file_sha1(dir / "model.ddom")},
                           {"resolution", res},
                           {"sampler", sampler_to_json(sc)}};
    Staging st(o.out, o.force);
    Dataset d{domain, res, {}, {}};
    if (is_ddpm(loss)) {
        const auto p = loss == LossKind::DdpmKl ? DdpmParameterization::Kl : DdpmParameterization::W2;
        d.samples = ddpm_sample_chains(ddpm_model(model, schedule, o.workers), schedule, sc.chains, res, seed, p);
    } else {
        d.samples = sample_chains(model_drift(model, schedule, loss, o.workers), sc, res);
    }
    d.metadata = {{"generator", "sample"}, {"model_hash", resolved["model_hash"]}, {"seed", seed}};
    save_dataset(d, st.path("samples.ddof"));
    write_manifest(st, o, resolved, seed, {"samples.ddof", "samples.ddof.meta.json"});
    st.commit();
}

inline std::pair<Dataset, Dataset> load_pair(const json& j) {
    using namespace config;
    auto a = load_dataset(get<std::string>(j, "samples", ""));
    auto b = load_dataset(get<std::string>(j, "data", ""));
    if (!(a.domain == b.domain)) throw ConfigError("data", "domain differs from the samples");
    if (b.resolution != a.resolution) b = resample(b, a.resolution);
    return {std::move(a), std::move(b)};
}

inline void cmd_eval_spectrum(const Options& o, json j) {
    const auto seed = take_common(j, o);
    config::check_keys(j, {"samples", "data"}, "");
    const auto [a, b] = load_pair(j);
    const auto sa = average_spectrum(a), sb = average_spectrum(b);
    Staging st(o.out, o.force);
    st.write_text("spectrum.csv", to_csv([&](std::ostream& os) {
                      os.precision(17);
                      os << "k,samples,data\n";
                      for (std::size_t i = 0; i < sa.size(); ++i)
                          os << sa[i].k << ',' << sa[i].value << ',' << sb[i].value << '\n';
                  }));
    const json metrics = {{"sup_error", spectrum_sup_error(a, b)}, {"resolution", a.resolution},
                          {"n_samples", a.count()}, {"n_data", b.count()}};
    st.write_text("metrics.json", metrics.dump(2) + "\n");
    write_manifest(st, o, j, seed, {"spectrum.csv", "metrics.json"});
    st.commit();
}

inline void cmd_eval_turbulence(const Options& o, json j) {
    const auto seed = take_common(j, o);
    config::check_keys(j, {"samples", "data"}, "");
    const auto [a, b] = load_pair(j);
    if (a.domain.dims != 2) throw ConfigError("samples", "turbulence statistics need 2D vorticity fields");
    const auto st2 = turbulence_stats({&a, &b});
    Staging st(o.out, o.force);
    st.write_text("energy_spectrum.csv", to_csv([&](std::ostream& os) {
                      os.precision(17);
                      os << "k,samples,data\n";
                      for (std::size_t i = 0; i < st2[0].energy_spectrum.size(); ++i)
                          os << st2[0].energy_spectrum[i].k << ',' << st2[0].energy_spectrum[i].value << ','
                             << st2[1].energy_spectrum[i].value << '\n';
                  }));
    st.write_text("pointwise_density.csv", to_csv([&](std::ostream& os) {
                      write_histogram_csv(os, {"samples", "data"}, {&st2[0].pointwise, &st2[1].pointwise});
                  }));
    st.write_text("energy_density.csv", to_csv([&](std::ostream& os) {
                      write_histogram_csv(os, {"samples", "data"}, {&st2[0].energy, &st2[1].energy});
                  }));
    write_manifest(st, o, j, seed, {"energy_spectrum.csv", "pointwise_density.csv", "energy_density.csv"},
                   {{"histogram", {{"bins", kHistogramBins}, {"edges", "uniform over pooled min/max"}}}});
    st.commit();
}

inline void cmd_exp_invariance(const Options& o, json j) {
    const auto seed = take_common(j, o);
    const bool retrain = config::get_or<bool>(j, "retrain", false, "");
    j.erase("retrain");
    auto cfg = transfer_from_json(j, "", seed);
    cfg.train.workers = o.workers;
    auto resolved = transfer_to_json(cfg);
    resolved["retrain"] = retrain;
    Staging st(o.out, o.force);
    SpectrumReport report;
    report.noise_kind = noise_kind(cfg.schedule.base);
    std::vector<std::string> outputs{"spectrum_report.csv"};
    if (retrain) {
        // one model per resolution, sampled at its own resolution
        for (std::size_t n : cfg.resolutions) {
            auto c = cfg;
            c.train_resolution = n;
            c.resolutions = {n};
            const auto r = transfer_experiment(c, log_line);
            report.resolutions.push_back(n);
            report.errors.push_back(r.report.errors[0]);
            report.balance.push_back(r.report.balance[0]);
        }
    } else {
        const auto r = transfer_experiment(cfg, log_line);
        report = r.report;
        save_model(r.model, st.path("model.ddom"));
        st.write_text("loss_history.csv", to_csv([&](std::ostream& os) { write_loss_history(os, r.history); }));
        outputs.insert(outputs.end(), {"model.ddom", "loss_history.csv"});
    }
    st.write_text("spectrum_report.csv", to_csv([&](std::ostream& os) { write_spectrum_report_csv(os, report); }));
    json extra = json::object();
    if (!retrain) extra["model_hash"] = file_sha1(st.path("model.ddom"));
    write_manifest(st, o, resolved, seed, outputs, extra);
    st.commit();
}

inline void cmd_exp_noise_regularity(const Options& o, json j) {
    using namespace config;
    const auto seed = take_common(j, o);
    check_keys(j, {"resolutions", "data", "noise", "fno", "train", "n_train", "n_test"}, "");
    NoiseRegularityConfig c;
    c.resolutions = resolutions_from_json(j, "resolutions", "", c.resolutions);
    if (j.contains("data")) c.data = matern_from_json(j.at("data"), c.data.domain, "data");
    if (j.contains("noise")) c.noise = matern_from_json(j.at("noise"), c.noise.domain, "noise");
    if (j.contains("fno")) c.fno = fno_config_from_json(j.at("fno"), "fno");
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), "train");
    c.train.workers = o.workers;
    c.n_train = get_or<std::size_t>(j, "n_train", c.n_train, "");
    c.n_test = get_or<std::size_t>(j, "n_test", c.n_test, "");
    c.seed = seed;
    const json resolved = {{"resolutions", c.resolutions},
                           {"data", c.data},
                           {"noise", c.noise},
                           {"fno", fno_config_to_json(c.fno)},
                           {"train", {{"epochs", c.train.epochs}, {"batch_size", c.train.batch_size},
                                      {"lr", c.train.lr}, {"lr_halving_period", c.train.lr_halving_period}}},
                           {"n_train", c.n_train},
                           {"n_test", c.n_test}};
    Staging st(o.out, o.force);
    const auto rows = noise_regularity_experiment(c, log_line);
    st.write_text("noise_regularity.csv", to_csv([&](std::ostream& os) { write_noise_regularity_csv(os, rows); }));
    write_manifest(st, o, resolved, seed, {"noise_regularity.csv"});
    st.commit();
}

inline void cmd_exp_smoothing(const Options& o, json j) {
    using namespace config;
    const auto seed = take_common(j, o);
    check_keys(j, {"experiment", "white_sd", "blur_bandwidth"}, "");
    SmoothingExperimentConfig c;
    if (j.contains("experiment")) {
        auto e = j.at("experiment");
        require_object(e, "experiment");
        if (e.contains("schedule")) throw ConfigError("experiment.schedule", "fixed by the four conditions; set sigmas via experiment.sigmas");
        std::vector<double> sig = c.base.schedule.sigmas;
        if (e.contains("sigmas")) {
            sig = get<std::vector<double>>(e, "sigmas", "experiment");
            e.erase("sigmas");
        }
        const auto defaults = c.base;
        c.base = transfer_from_json(e, "experiment", seed);
        if (!e.contains("data")) c.base.data = defaults.data;
        if (!e.contains("train_resolution")) c.base.train_resolution = defaults.train_resolution;
        if (!e.contains("resolutions")) c.base.resolutions = defaults.resolutions;
        c.base.schedule = NoiseSchedule::ncsn(sig, MaternCovariance(c.base.data.domain, 1.0, 1.0, 1.0));
    }
    c.base.seed = seed;
    c.base.train.workers = o.workers;
    c.white_sd = get_or<double>(j, "white_sd", c.white_sd, "");
    c.blur_bandwidth = positive(get_or<double>(j, "blur_bandwidth", c.blur_bandwidth, ""), "blur_bandwidth");
    auto resolved = transfer_to_json(c.base);
    resolved.erase("schedule");
    resolved["sigmas"] = c.base.schedule.sigmas;
    resolved["white_sd"] = c.white_sd;
    resolved["blur_bandwidth"] = c.blur_bandwidth;
    json conditions = json::object();
    for (const auto& [name, s] : smoothing_conditions(c)) conditions[name] = schedule_to_json(s);
    resolved["conditions"] = conditions;
    Staging st(o.out, o.force);
    const auto rows = smoothing_experiment(c, log_line);
    st.write_text("smoothing.csv", to_csv([&](std::ostream& os) { write_smoothing_csv(os, rows); }));
    write_manifest(st, o, resolved, seed, {"smoothing.csv"});
    st.commit();
}

inline const std::map<std::string, void (*)(const Options&, json)>& commands() {
    static const std::map<std::string, void (*)(const Options&, json)> table{
        {"gen-gm", cmd_gen_gm},
        {"gen-ns", cmd_gen_ns},
        {"train", cmd_train},
        {"sample", cmd_sample},
        {"eval-spectrum", cmd_eval_spectrum},
        {"eval-turbulence", cmd_eval_turbulence},
        {"exp-invariance", cmd_exp_invariance},
        {"exp-noise-regularity", cmd_exp_noise_regularity},
        {"exp-smoothing", cmd_exp_smoothing},
    };
    return table;
}

inline int run(int argc, char** argv) {
    CLI::App app{"Denoising diffusion operators: data generation, training, sampling and evaluation"};
    app.require_subcommand(1);
    Options o;
    for (const auto& [name, fn] : commands()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", o.config, "JSON config")->required();
        sub->add_option("--out", o.out, "output directory")->required();
        sub->add_option("--seed", o.seed, "overrides the config seed");
        sub->add_flag("--force", o.force, "replace an existing output directory");
        sub->add_option("--workers", o.workers, "threads for data-parallel sections")->check(CLI::PositiveNumber);
        sub->callback([&o, name = name] { o.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    try {
        const auto cfg = read_config(o.config);
        commands().at(o.command)(o, cfg);
        return kExitOk;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
    }
    return kExitConfig;
}

}  // namespace fdiff::cli
