#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ivi/eval/diagnostics.hpp"
#include "ivi/infer/run_state.hpp"

namespace ivi::cli {

using nlohmann::json;

// %.17g keeps every double exact through a text round trip.
inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Header "z1,z2,value", then one row per cell centre in storage order.
inline std::string grid_to_csv(const Grid2D& g) {
    std::string out = "z1,z2,value\n";
    const auto& s = g.spec;
    for (std::size_t i = 0; i < s.n1; ++i)
        for (std::size_t j = 0; j < s.n2; ++j) {
            out += format_real(s.z1(i));
            out += ',';
            out += format_real(s.z2(j));
            out += ',';
            out += format_real(g.values[i * s.n2 + j]);
            out += '\n';
        }
    return out;
}

// Values only; the lattice must be supplied since the CSV stores centres, not edges.
inline Grid2D grid_from_csv(const std::string& text, const GridSpec& spec) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "z1,z2,value") throw ConfigError("grid CSV: missing header");
    Grid2D g{spec, {}};
    g.values.reserve(spec.cells());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) throw ConfigError("grid CSV: malformed row");
        g.values.push_back(std::stod(line.substr(c2 + 1)));
    }
    if (g.values.size() != spec.cells()) throw ConfigError("grid CSV: cell count does not match the grid");
    return g;
}

inline json optional_to_json(const std::optional<double>& v) {
    if (v && std::isfinite(*v)) return *v;
    return nullptr;
}

inline json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json metrics_to_json(const StepMetrics& m) {
    json j = json::object();
    j["step"] = m.step;
    j["inner_loss"] = real_or_null(m.inner_loss);
    j["psi_objective"] = real_or_null(m.psi_objective);
    j["elbo_estimate"] = optional_to_json(m.elbo_estimate);
    j["psi_displacement_norm"] = real_or_null(m.psi_displacement_norm);
    return j;
}

inline json diagnostics_to_json(const Diagnostics& d) {
    json j = json::object();
    j["x"] = d.x;
    j["kl_nats"] = real_or_null(d.kl_nats);
    j["ratio_limit_std"] = optional_to_json(d.ratio_limit_std);
    j["flatness_mean_abs"] = optional_to_json(d.flatness_mean_abs);
    j["posterior_correlation"] = real_or_null(d.posterior_correlation);
    j["approx_correlation"] = real_or_null(d.approx_correlation);
    j["curl_proxy"] = optional_to_json(d.curl_proxy);
    j["out_of_bounds_fraction"] = d.out_of_bounds_fraction;
    return j;
}

inline std::optional<double> optional_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

inline Diagnostics diagnostics_from_json(const json& j) {
    Diagnostics d;
    d.x = j.at("x").get<double>();
    d.kl_nats = j.at("kl_nats").is_null() ? std::nan("") : j.at("kl_nats").get<double>();
    d.ratio_limit_std = optional_from_json(j.at("ratio_limit_std"));
    d.flatness_mean_abs = optional_from_json(j.at("flatness_mean_abs"));
    d.posterior_correlation = j.at("posterior_correlation").get<double>();
    d.approx_correlation = j.at("approx_correlation").get<double>();
    d.curl_proxy = optional_from_json(j.at("curl_proxy"));
    d.out_of_bounds_fraction = j.at("out_of_bounds_fraction").get<double>();
    return d;
}

// Network weights of a run. Optimizer moments are not kept.
inline json snapshot_to_json(const RunState& s, Method method) {
    auto values = [](const MlpParams& p) {
        const auto v = p.values();
        return json(std::vector<double>(v.begin(), v.end()));
    };
    json j = json::object();
    j["method"] = to_string(method);
    j["step"] = s.step;
    j["generator"] = values(s.q.generator);
    j["ratio"] = s.ratio ? values(s.ratio->net) : json(nullptr);
    j["denoiser_q"] = s.denoiser_q ? values(s.denoiser_q->net) : json(nullptr);
    j["denoiser_p"] = s.denoiser_p ? values(s.denoiser_p->net) : json(nullptr);
    return j;
}

// Overwrites the weights of a freshly initialised state; any shape or method
// mismatch is a configuration error.
inline void load_snapshot(RunState& s, Method method, const json& j) {
    try {
        if (j.at("method").get<std::string>() != to_string(method))
            throw ConfigError("snapshot was trained with method '" + j.at("method").get<std::string>() + "'");
        auto fill = [](MlpParams* p, const json& v, const char* name) {
            if (!p) {
                if (!v.is_null()) throw ConfigError(std::string("snapshot has unexpected network '") + name + "'");
                return;
            }
            if (v.is_null()) throw ConfigError(std::string("snapshot lacks network '") + name + "'");
            const auto vals = v.get<std::vector<double>>();
            if (vals.size() != p->size())
                throw ConfigError(std::string("snapshot network '") + name + "' does not match the configured shape");
            std::copy(vals.begin(), vals.end(), p->values().begin());
        };
        fill(&s.q.generator, j.at("generator"), "generator");
        fill(s.ratio ? &s.ratio->net : nullptr, j.at("ratio"), "ratio");
        fill(s.denoiser_q ? &s.denoiser_q->net : nullptr, j.at("denoiser_q"), "denoiser_q");
        fill(s.denoiser_p ? &s.denoiser_p->net : nullptr, j.at("denoiser_p"), "denoiser_p");
        s.step = j.at("step").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed snapshot: ") + e.what());
    }
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
    if (!out) throw ConfigError("write failed for '" + path + "'");
}

// File-name-safe rendering of an observation value ("8", "-2", "0.5").
inline std::string x_tag(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

}  // namespace ivi::cli
