#pragma once

// Strict JSON config reading: unknown keys and wrong types raise ConfigError
// carrying the dotted path of the offending field.

#include <fdiff/grf.hpp>

#include <json.hpp>

#include <initializer_list>
#include <string>

namespace fdiff::config {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expected a JSON object");
}

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& path) {
    require_object(j, path);
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(join(path, key), "unknown field");
    }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path) {
    const auto full = join(path, key);
    if (!j.contains(key)) throw ConfigError(full, "required field missing");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(full, std::string("wrong type: ") + e.what());
    }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& path) {
    if (!j.contains(key)) return fallback;
    return get<T>(j, key, path);
}

inline double positive(double v, const std::string& key) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(key, "must be > 0");
    return v;
}

inline DomainSpec domain_from_json(const json& j, const std::string& path) {
    check_keys(j, {"dims", "extent", "boundary"}, path);
    DomainSpec d;
    d.dims = get_or<int>(j, "dims", 1, path);
    d.extent = get_or<double>(j, "extent", 1.0, path);
    d.boundary = boundary_from_string(get_or<std::string>(j, "boundary", "periodic", path));
    try {
        d.validate();
    } catch (const ShapeError& e) {
        throw ConfigError(path, e.what());
    }
    return d;
}

inline json domain_to_json(const DomainSpec& d) {
    return {{"dims", d.dims}, {"extent", d.extent}, {"boundary", to_string(d.boundary)}};
}

inline MaternCovariance matern_from_json(const json& j, const DomainSpec& d, const std::string& path) {
    check_keys(j, {"kind", "sigma", "tau", "alpha", "boundary"}, path);
    if (j.contains("boundary") && boundary_from_string(get<std::string>(j, "boundary", path)) != d.boundary)
        throw ConfigError(join(path, "boundary"), "does not match the domain boundary");
    MaternCovariance c;
    c.domain = d;
    c.sigma = get<double>(j, "sigma", path);
    c.tau = get<double>(j, "tau", path);
    c.alpha = get<double>(j, "alpha", path);
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(join(path, e.key()), e.what());
    }
    return c;
}

/// {"kind": "matern", sigma, tau, alpha} or {"kind": "white", sd}.
inline NoiseModel noise_from_json(const json& j, const DomainSpec& d, const std::string& path) {
    require_object(j, path);
    const auto kind = get_or<std::string>(j, "kind", "matern", path);
    if (kind == "white") {
        check_keys(j, {"kind", "sd"}, path);
        const double sd = get_or<double>(j, "sd", 1.0, path);
        if (!(sd >= 0.0)) throw ConfigError(join(path, "sd"), "must be >= 0");
        return WhiteNoise{d, sd};
    }
    if (kind != "matern") throw ConfigError(join(path, "kind"), "expected \"matern\" or \"white\"");
    return matern_from_json(j, d, path);
}

}  // namespace fdiff::config
