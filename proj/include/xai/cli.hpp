#pragma once

#include <algorithm>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xai/config.hpp"
#include "xai/pipeline.hpp"
#include "xai/selftest.hpp"

namespace xai {
namespace cli {

inline RunConfig build_config(const std::string& config_path,
                              const std::vector<std::string>& sets) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = parse_config_text(read_file(config_path));
    for (const auto& kv : sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
    }
    return cfg;
}

/// Full CLI entry point; args exclude the program name. Returns the process
/// exit code: 0 success, 1 usage/config error, 2 data error, 3 numerical or
/// feasibility error.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"xaikit: train a small tabular model zoo and explain it", "xaikit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    std::string seed_str, output_dir, dataset, model, sample;
    auto* opt_config = app.add_option("--config", config_path, "key=value config file");
    auto* opt_set =
        app.add_option("--set", sets, "override one config key, e.g. --set shap.draws=500");
    auto* opt_seed = app.add_option("--seed", seed_str, "global seed (default 42)");
    auto* opt_out = app.add_option("--output-dir", output_dir, "artifact directory");
    auto* opt_data = app.add_option("--dataset", dataset, "input CSV path or 'synthetic'");
    auto* opt_model = app.add_option("--model", model, "model to explain");
    auto* opt_sample =
        app.add_option("--sample", sample,
                       "sample selector: first-of-test, last-of-test, or index:<n>");

    CLI::App* cmd_prepare =
        app.add_subcommand("prepare", "load, filter, standardize, and split the data");
    CLI::App* cmd_train = app.add_subcommand("train", "train every configured model");
    CLI::App* cmd_evaluate =
        app.add_subcommand("evaluate", "score trained models and emit metrics JSON");
    CLI::App* cmd_explain =
        app.add_subcommand("explain", "run explanation methods against a trained model");
    CLI::App* cmd_report = app.add_subcommand("report", "render the SVG report bundle");
    CLI::App* cmd_selftest =
        app.add_subcommand("selftest", "run the bundled property suites on synthetic data");
    for (CLI::App* sub :
         {cmd_prepare, cmd_train, cmd_evaluate, cmd_explain, cmd_report, cmd_selftest}) {
        sub->fallthrough();
    }

    std::string what = "all";
    std::string method, mode, clazz, draws, features, background;
    cmd_explain->add_option("what", what,
                            "which family to run: shap, lime, perm, pdp, gradcam, all");
    auto* opt_method =
        cmd_explain->add_option("--method", method,
                                "shapley method: exact-subsets, exact-permutations, montecarlo");
    auto* opt_mode =
        cmd_explain->add_option("--mode", mode, "value function mode: marginal or retrain");
    auto* opt_class = cmd_explain->add_option("--class", clazz,
                                              "class index to explain (-1 = predicted)");
    auto* opt_draws = cmd_explain->add_option("--draws", draws, "montecarlo permutation draws");
    auto* opt_features =
        cmd_explain->add_option("--features", features, "how many top features to report");
    auto* opt_background =
        cmd_explain->add_option("--background", background, "marginal background rows");

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg = build_config(config_path, sets);
        if (opt_seed->count() > 0) cfg.set("seed", seed_str);
        if (opt_out->count() > 0) cfg.set("output_dir", output_dir);
        if (opt_data->count() > 0) cfg.set("dataset", dataset);
        if (opt_model->count() > 0) cfg.set("explain.model", model);
        if (opt_sample->count() > 0) cfg.set("explain.sample", sample);
        if (opt_method->count() > 0) cfg.set("shap.method", method);
        if (opt_mode->count() > 0) cfg.set("shap.mode", mode);
        if (opt_class->count() > 0) cfg.set("explain.class", clazz);
        if (opt_draws->count() > 0) cfg.set("shap.draws", draws);
        if (opt_features->count() > 0) cfg.set("shap.features", features);
        if (opt_background->count() > 0) cfg.set("shap.background", background);
        (void)opt_config;
        (void)opt_set;
        cfg.validate();

        if (cmd_prepare->parsed()) {
            prepare_run(cfg, out);
        } else if (cmd_train->parsed()) {
            train_run(cfg, out);
        } else if (cmd_evaluate->parsed()) {
            evaluate_run(cfg, out);
        } else if (cmd_explain->parsed()) {
            explain_run(cfg, what, out);
        } else if (cmd_report->parsed()) {
            report_run(cfg, out);
        } else {
            return selftest_run(cfg, out) ? 0 : 3;
        }
        return 0;
    } catch (const FeasibilityError& e) {
        err << "feasibility error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace cli
}  // namespace xai
