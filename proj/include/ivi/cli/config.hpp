#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ivi/eval/diagnostics.hpp"
#include "ivi/infer/run_state.hpp"
#include "ivi/models/linear_gaussian.hpp"
#include "ivi/models/sprinkler.hpp"

namespace ivi::cli {

using nlohmann::json;

enum class DataSource { marginal, eval_points };

// Everything one run needs. Parsed from a flat JSON object; see README for keys.
struct ExperimentConfig {
    std::string model = "sprinkler";
    double prior_std = 1.0;                   // sprinkler
    std::vector<double> lg_weights{1.0, 1.0};  // linear_gaussian
    double lg_obs_std = 1.0;

    TrainLoopConfig train;
    NetworkConfig network;

    DataSource data = DataSource::marginal;
    std::size_t data_size = 50000;

    std::vector<double> eval_x{0.0, 8.0, 50.0};
    EvalOptions eval;

    std::string output_dir;
    std::uint64_t seed = 1;
};

namespace detail {

template <class T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

inline double get_real(const json& j, const std::string& key) {
    if (!j.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return j.get<double>();
}

inline std::size_t get_count(const json& j, const std::string& key) {
    if (!j.is_number_integer() || j.get<std::int64_t>() < 0)
        throw ConfigError("config key '" + key + "' must be a non-negative integer");
    return j.get<std::size_t>();
}

inline bool get_bool(const json& j, const std::string& key) {
    if (!j.is_boolean()) throw ConfigError("config key '" + key + "' must be true or false");
    return j.get<bool>();
}

inline std::string get_string(const json& j, const std::string& key) {
    if (!j.is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return j.get<std::string>();
}

inline std::vector<double> get_reals(const json& j, const std::string& key) {
    if (!j.is_array()) throw ConfigError("config key '" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : j) out.push_back(get_real(e, key));
    return out;
}

inline Activation get_activation(const json& j, const std::string& key) {
    try {
        return activation_from_string(get_string(j, key));
    } catch (const ConfigError& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
    if (c.model != "sprinkler" && c.model != "linear_gaussian")
        throw ConfigError("model must be 'sprinkler' or 'linear_gaussian'");
    if (!(c.prior_std > 0)) throw ConfigError("prior_std must be positive");
    if (!(c.lg_obs_std > 0)) throw ConfigError("lg_obs_std must be positive");
    if (c.lg_weights.size() != 2) throw ConfigError("lg_weights must have two entries");
    c.train.validate();
    if (c.network.hidden.empty()) throw ConfigError("hidden must list at least one layer width");
    for (auto w : c.network.hidden)
        if (w == 0) throw ConfigError("hidden layer widths must be positive");
    if (c.network.noise_dim == 0) throw ConfigError("noise_dim must be positive");
    if (c.network.ensemble_weight < 0) throw ConfigError("ensemble_weight must be non-negative");
    if (c.data == DataSource::marginal && c.data_size == 0) throw ConfigError("data_size must be positive");
    if (c.eval_x.empty()) throw ConfigError("eval_x must not be empty");
    c.eval.grid.validate();
    if (c.eval.samples == 0) throw ConfigError("eval_samples must be positive");
    if (c.eval.flatness_samples == 0) throw ConfigError("flatness_samples must be positive");
}

// Strict: unknown keys, wrong types and out-of-range values all raise ConfigError.
inline ExperimentConfig parse_config(const json& j) {
    using namespace detail;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    auto& t = c.train;
    auto& n = c.network;
    auto& g = c.eval.grid;
    for (const auto& [key, v] : j.items()) {
        if (key == "model") c.model = get_string(v, key);
        else if (key == "prior_std") c.prior_std = get_real(v, key);
        else if (key == "lg_weights") c.lg_weights = get_reals(v, key);
        else if (key == "lg_obs_std") c.lg_obs_std = get_real(v, key);
        else if (key == "method") t.method = method_from_string(get_string(v, key));
        else if (key == "outer_steps") t.outer_steps = get_count(v, key);
        else if (key == "inner_steps") t.inner_steps = get_count(v, key);
        else if (key == "batch_size") t.batch = get_count(v, key);
        else if (key == "psi_learning_rate") t.psi_learning_rate = get_real(v, key);
        else if (key == "phi_learning_rate") t.phi_learning_rate = get_real(v, key);
        else if (key == "lr_final_fraction") t.lr_final_fraction = get_real(v, key);
        else if (key == "noise_sigma") t.noise.sigma = get_real(v, key);
        else if (key == "noise_decay") t.noise.decay = get_real(v, key);
        else if (key == "noise_sigma_min") t.noise.sigma_min = get_real(v, key);
        else if (key == "warm_start_inner") t.warm_start_inner = get_bool(v, key);
        else if (key == "hybrid_alpha") t.hybrid_alpha = get_real(v, key);
        else if (key == "hidden") {
            n.hidden.clear();
            for (const auto& e : get_as<std::vector<json>>(v, key)) n.hidden.push_back(static_cast<std::uint32_t>(get_count(e, key)));
        } else if (key == "noise_dim") n.noise_dim = static_cast<std::uint32_t>(get_count(v, key));
        else if (key == "generator_activation") n.generator_activation = get_activation(v, key);
        else if (key == "ratio_activation") n.ratio_activation = get_activation(v, key);
        else if (key == "denoiser_activation") n.denoiser_activation = get_activation(v, key);
        else if (key == "ensemble_weight") n.ensemble_weight = get_real(v, key);
        else if (key == "denoiser_conditioned_on_x") n.denoiser_conditioned_on_x = get_bool(v, key);
        else if (key == "data") {
            const auto s = get_string(v, key);
            if (s == "marginal") c.data = DataSource::marginal;
            else if (s == "eval_points") c.data = DataSource::eval_points;
            else throw ConfigError("data must be 'marginal' or 'eval_points'");
        } else if (key == "data_size") c.data_size = get_count(v, key);
        else if (key == "eval_x") c.eval_x = get_reals(v, key);
        else if (key == "eval_samples") c.eval.samples = get_count(v, key);
        else if (key == "flatness_samples") c.eval.flatness_samples = get_count(v, key);
        else if (key == "grid_z1_min") g.z1_min = get_real(v, key);
        else if (key == "grid_z1_max") g.z1_max = get_real(v, key);
        else if (key == "grid_z2_min") g.z2_min = get_real(v, key);
        else if (key == "grid_z2_max") g.z2_max = get_real(v, key);
        else if (key == "grid_n1") g.n1 = static_cast<std::uint32_t>(get_count(v, key));
        else if (key == "grid_n2") g.n2 = static_cast<std::uint32_t>(get_count(v, key));
        else if (key == "output_dir") c.output_dir = get_string(v, key);
        else if (key == "seed") {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
                throw ConfigError("seed must be a non-negative integer");
            c.seed = v.get<std::uint64_t>();
        } else throw ConfigError("unknown config key '" + key + "'");
    }
    validate(c);
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

inline LatentVariableModel build_model(const ExperimentConfig& c) {
    if (c.model == "sprinkler") return sprinkler_model(c.prior_std);
    return linear_gaussian_model(c.lg_weights, c.lg_obs_std);
}

inline Dataset build_dataset(const ExperimentConfig& c, const LatentVariableModel& model, Rng& rng) {
    if (c.data == DataSource::eval_points) return Dataset{c.eval_x};
    return Dataset::from_model(model, c.data_size, rng);
}

}  // namespace ivi::cli
