#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ivi/cli/config.hpp"
#include "ivi/cli/io.hpp"
#include "ivi/eval/diagnostics.hpp"
#include "ivi/infer/algorithms.hpp"
#include "ivi/models/linear_gaussian.hpp"

namespace ivi::cli {

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numeric = 3 };

// Independent random streams of one run, all derived from the seed alone, so that
// `eval` on a saved snapshot reproduces the evaluation done at the end of `train`.
struct RunStreams {
    Rng data, init, train, eval;

    explicit RunStreams(std::uint64_t seed) {
        Rng master(seed);
        data = master.split();
        init = master.split();
        train = master.split();
        eval = master.split();
    }
};

inline std::filesystem::path prepare_out_dir(const ExperimentConfig& c, const std::string& out) {
    const std::filesystem::path dir = out.empty() ? std::filesystem::path(c.output_dir) : std::filesystem::path(out);
    if (dir.empty()) throw ConfigError("no output directory: pass --out or set output_dir");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

// Diagnostics and q-histogram grid for every eval x; returns the diagnostics array.
inline json evaluate_all(const RunState& s, const ExperimentConfig& c, const LatentVariableModel& model, Rng& eval_rng,
                         const std::filesystem::path& dir) {
    json all = json::array();
    for (double x : c.eval_x) {
        Rng rng = eval_rng.split();
        const auto res = evaluate_at(s, c.train.method, model, x, c.eval, rng);
        write_text((dir / ("approx_x" + x_tag(x) + ".csv")).string(), grid_to_csv(res.approx));
        all.push_back(diagnostics_to_json(res.diagnostics));
    }
    write_text((dir / "diagnostics.json").string(), all.dump(2) + "\n");
    return all;
}

inline void print_summary(const json& diagnostics) {
    for (const auto& d : diagnostics) {
        std::cout << "x=" << d["x"].get<double>() << " kl_nats=" << d["kl_nats"].dump();
        if (!d["ratio_limit_std"].is_null()) std::cout << " ratio_limit_std=" << d["ratio_limit_std"].dump();
        if (!d["flatness_mean_abs"].is_null()) std::cout << " flatness_mean_abs=" << d["flatness_mean_abs"].dump();
        if (!d["curl_proxy"].is_null()) std::cout << " curl_proxy=" << d["curl_proxy"].dump();
        std::cout << "\n";
    }
}

// Writes params.json, metrics.jsonl (one record per outer step), diagnostics.json
// and approx_x<x>.csv for every eval x.
inline void run_train(const ExperimentConfig& c, const std::string& out) {
    const auto dir = prepare_out_dir(c, out);
    const auto model = build_model(c);
    RunStreams rs(c.seed);
    const Dataset data = build_dataset(c, model, rs.data);
    RunState s = init_run_state(model, c.train, c.network, rs.init);

    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
    if (!metrics) throw ConfigError("cannot write metrics log in '" + dir.string() + "'");
    try {
        train(s, model, data, c.train, rs.train, [&](const StepMetrics& m) {
            metrics << metrics_to_json(m).dump() << "\n";
        });
    } catch (const NumericError&) {
        metrics.flush();
        write_text((dir / "params.json").string(), snapshot_to_json(s, c.train.method).dump() + "\n");
        throw;
    }
    metrics.close();
    write_text((dir / "params.json").string(), snapshot_to_json(s, c.train.method).dump() + "\n");
    print_summary(evaluate_all(s, c, model, rs.eval, dir));
}

inline void run_eval(const ExperimentConfig& c, const std::string& params_path, const std::string& out) {
    const auto dir = prepare_out_dir(c, out);
    const auto model = build_model(c);
    RunStreams rs(c.seed);
    RunState s = init_run_state(model, c.train, c.network, rs.init);
    json snap;
    try {
        snap = json::parse(read_text(params_path));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("params snapshot is not valid JSON: ") + e.what());
    }
    load_snapshot(s, c.train.method, snap);
    print_summary(evaluate_all(s, c, model, rs.eval, dir));
}

// posterior_x<x>.csv per eval x plus oracle_summary.json.
inline void run_oracle(const ExperimentConfig& c, const std::string& out) {
    const auto dir = prepare_out_dir(c, out);
    const auto model = build_model(c);
    json summary = json::array();
    for (double x : c.eval_x) {
        const Grid2D g = grid_posterior(model, x, c.eval.grid);
        write_text((dir / ("posterior_x" + x_tag(x) + ".csv")).string(), grid_to_csv(g));
        json e = {{"x", x}, {"posterior_correlation", grid_correlation(g)}, {"mass", g.mass()}};
        if (c.model == "linear_gaussian") {
            const auto post = exact_posterior(c.lg_weights, c.lg_obs_std, x);
            e["exact_correlation"] =
                post.covariance(0, 1) / std::sqrt(post.covariance(0, 0) * post.covariance(1, 1));
        }
        summary.push_back(e);
        std::cout << "x=" << x << " posterior_correlation=" << e["posterior_correlation"].dump() << "\n";
    }
    write_text((dir / "oracle_summary.json").string(), summary.dump(2) + "\n");
}

// Entry point of the command-line tool. Never throws; returns the exit code.
inline int run_cli(int argc, char** argv) {
    CLI::App app{"Implicit-posterior variational inference experiments"};
    app.require_subcommand(1);
    std::string config_path, out_dir, params_path;
    std::optional<std::uint64_t> seed;

    auto* train_cmd = app.add_subcommand("train", "train a posterior approximation and evaluate it");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved parameter snapshot");
    auto* oracle_cmd = app.add_subcommand("oracle", "write grid posteriors of the model");
    for (auto* cmd : {train_cmd, eval_cmd, oracle_cmd}) {
        cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
        cmd->add_option("--out", out_dir, "output directory (overrides output_dir)");
        cmd->add_option("--seed", seed, "override the config seed");
    }
    eval_cmd->add_option("--params", params_path, "params.json written by train")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        ExperimentConfig c = load_config(config_path);
        if (seed) c.seed = *seed;
        if (train_cmd->parsed()) run_train(c, out_dir);
        else if (eval_cmd->parsed()) run_eval(c, params_path, out_dir);
        else run_oracle(c, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return exit_numeric;
    }
    return exit_ok;
}

}  // namespace ivi::cli
