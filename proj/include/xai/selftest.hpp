#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "xai/pipeline.hpp"

namespace xai {
namespace selftest_detail {

/// Black box with a hand-chosen probability function; lets the suites check
/// explainers against closed-form ground truth.
class ProbeModel : public Model {
public:
    using Fn = std::function<double(const std::vector<double>&)>;

    ProbeModel(std::vector<std::string> feature_names, Fn fn)
        : Model(ModelSpec{}, std::move(feature_names), {"neg", "pos"}),
          fn_(std::move(fn)) {}

    nlohmann::json to_json() const override { return {{"kind", "probe"}}; }

protected:
    std::vector<double> proba(const double* x) const override {
        const std::vector<double> v(x, x + feature_names_.size());
        const double p = fn_(v);
        return {1.0 - p, p};
    }

private:
    Fn fn_;
};

inline CustomValueFunction random_table_game(std::size_t n, std::uint64_t seed,
                                             std::vector<double>* table_out = nullptr) {
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto table = std::make_shared<std::vector<double>>(std::size_t{1} << n);
    for (auto& v : *table) v = u(rng);
    (*table)[0] = 0.0;
    if (table_out != nullptr) *table_out = *table;
    return CustomValueFunction(
        n, [table](Coalition s, const std::vector<double>&) { return (*table)[s]; });
}

inline bool check_equivalence(std::ostream& log) {
    for (std::uint64_t t = 0; t < 20; ++t) {
        const std::size_t n = 2 + t % 4;
        const CustomValueFunction vf = random_table_game(n, derive_seed(11, "eq-" + std::to_string(t)));
        const std::vector<double> x(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double a = shapley_exact_subsets(vf, x, i);
            const double b = shapley_exact_permutations(vf, x, i);
            if (std::abs(a - b) > 1e-9) {
                log << "  subset/permutation mismatch at trial " << t << " feature " << i
                    << ": " << a << " vs " << b << "\n";
                return false;
            }
        }
    }
    return true;
}

inline bool check_axioms(std::ostream& log) {
    for (std::uint64_t t = 0; t < 20; ++t) {
        const std::size_t n = 2 + t % 4;
        const CustomValueFunction vf = random_table_game(n, derive_seed(13, "ax-" + std::to_string(t)));
        const std::vector<double> x(n, 0.0);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += shapley_exact_subsets(vf, x, i);
        const Coalition full = (Coalition{1} << n) - 1;
        if (std::abs(vf.value(full, x) - vf.base_value() - sum) > 1e-9) {
            log << "  efficiency failed at trial " << t << "\n";
            return false;
        }

        const CustomValueFunction null_vf(
            n, [n](Coalition s, const std::vector<double>&) {
                const Coalition without_last = s & ~(Coalition{1} << (n - 1));
                return static_cast<double>(std::popcount(without_last)) * 0.25;
            });
        if (shapley_exact_subsets(null_vf, x, n - 1) != 0.0) {
            log << "  null player credit is nonzero at trial " << t << "\n";
            return false;
        }
    }
    return true;
}

inline bool check_montecarlo(std::ostream& log) {
    int within = 0, total = 0;
    for (std::uint64_t t = 0; t < 3; ++t) {
        const std::size_t n = 6;
        const CustomValueFunction vf = random_table_game(n, derive_seed(17, "mc-" + std::to_string(t)));
        const std::vector<double> x(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double exact = shapley_exact_subsets(vf, x, i);
            const McEstimate mc =
                shapley_montecarlo(vf, x, i, 3000, derive_seed(19, "draw-" + std::to_string(t * n + i)));
            ++total;
            if (std::abs(mc.estimate - exact) <= 4.0 * std::max(mc.std_error, 1e-12)) {
                ++within;
            }
        }
    }
    if (within < total - 2) {
        log << "  only " << within << "/" << total << " estimates within 4 standard errors\n";
        return false;
    }
    return true;
}

inline bool check_lime(std::ostream& log) {
    const std::vector<double> w = {0.3, -0.2, 0.1};
    const ProbeModel model({"a", "b", "c"}, [w](const std::vector<double>& x) {
        return 0.5 + w[0] * x[0] + w[1] * x[1] + w[2] * x[2];
    });
    StandardizerParams stats;
    stats.feature_names = {"a", "b", "c"};
    stats.means = {0.0, 0.0, 0.0};
    stats.stddevs = {1.0, 1.0, 1.0};
    PerturbationConfig cfg;
    cfg.n_samples = 4000;
    cfg.top_k = 3;
    cfg.ridge_lambda = 1e-6;
    cfg.seed = 123;
    const LocalExplanation exp =
        explain_instance(model, {0.2, -0.1, 0.4}, 1, cfg, stats);
    for (const auto& c : exp.contributions) {
        const auto& names = model.feature_names();
        const auto it = std::find(names.begin(), names.end(), c.feature);
        const double truth = w[static_cast<std::size_t>(it - names.begin())];
        if (std::abs(c.weight - truth) > 0.05 * std::abs(truth)) {
            log << "  coefficient for " << c.feature << " is " << c.weight
                << ", expected " << truth << "\n";
            return false;
        }
    }
    if (exp.fidelity < 0.99) {
        log << "  fidelity " << exp.fidelity << " below 0.99\n";
        return false;
    }
    return true;
}

inline bool check_perm_importance(std::ostream& log) {
    Dataset ds = make_synthetic_classification(300, 3, 2, 71);
    ds.feature_names = {"signal", "dead", "noise"};
    for (std::size_t i = 0; i < ds.n_samples(); ++i) {
        ds.X.at(i, 0) = ds.y[i] == 1 ? 1.0 + ds.X.at(i, 0) * 0.1 : -1.0 + ds.X.at(i, 0) * 0.1;
    }
    const ProbeModel model({"signal", "dead", "noise"}, [](const std::vector<double>& x) {
        return x[0] > 0.0 ? 0.9 : 0.1;
    });
    const PermutationImportanceReport rep =
        permutation_importance(model, ds, PermMetric::kAccuracyDrop, 3, 77);
    if (rep.rows.front().feature != "signal") {
        log << "  planted feature ranked " << rep.rows.front().feature << " first\n";
        return false;
    }
    for (const auto& row : rep.rows) {
        if (row.feature != "signal" && row.mean_drop != 0.0) {
            log << "  ignored feature '" << row.feature << "' scored " << row.mean_drop
                << "\n";
            return false;
        }
    }
    return true;
}

inline bool check_pdp(std::ostream& log) {
    const ProbeModel model({"u", "v"}, [](const std::vector<double>& x) {
        return 0.1 * x[0] + 0.02 * x[1] + 0.4;
    });
    Dataset ds;
    ds.feature_names = {"u", "v"};
    ds.class_names = {"neg", "pos"};
    auto rng = make_rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ds.X = Matrix(40, 2);
    ds.y.resize(40);
    double v_mean = 0.0;
    for (std::size_t i = 0; i < 40; ++i) {
        ds.X.at(i, 0) = u(rng);
        ds.X.at(i, 1) = u(rng);
        v_mean += ds.X.at(i, 1);
        ds.y[i] = i % 2 == 0 ? 0 : 1;
    }
    v_mean /= 40.0;
    const PDPCurve curve = pdp_curve(model, ds, "u", TargetSelector::for_class(1));
    for (std::size_t g = 0; g < curve.grid.size(); ++g) {
        const double expected = 0.1 * curve.grid[g] + 0.02 * v_mean + 0.4;
        if (std::abs(curve.mean_response[g] - expected) > 1e-9) {
            log << "  pdp response off by "
                << std::abs(curve.mean_response[g] - expected) << " at grid point " << g
                << "\n";
            return false;
        }
    }
    return true;
}

inline bool check_gradcam(std::ostream& log) {
    ConvNetConfig cfg;
    cfg.filters = 1;
    cfg.kernel_size = 2;
    cfg.dropout = 0.0;
    Matrix kernel(2, 2);
    kernel.at(0, 0) = 1.0;
    kernel.at(0, 1) = -0.5;
    kernel.at(1, 0) = 0.25;
    kernel.at(1, 1) = 0.75;
    Matrix dense(2, 1);
    dense.at(0, 0) = 1.0;
    dense.at(1, 0) = -1.0;
    const ConvNet net(cfg, 3, 3, 2, {kernel}, {0.1}, dense, {0.0, 0.0});

    ImageSample img;
    img.pixels = Matrix(3, 3);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            img.pixels.at(r, c) = 0.1 * static_cast<double>(r * 3 + c + 1);
        }
    }
    for (int k = 0; k < 9; ++k) img.source_feature_order.push_back("p" + std::to_string(k));

    const ForwardTrace trace = net.forward_trace(img);
    const std::vector<Matrix> grads = net.grad_wrt_conv(trace, 0);
    const double h = 1e-4;
    for (std::size_t r = 0; r < net.conv_h(); ++r) {
        for (std::size_t c = 0; c < net.conv_w(); ++c) {
            std::vector<Matrix> plus = trace.conv_post;
            std::vector<Matrix> minus = trace.conv_post;
            plus[0].at(r, c) += h;
            minus[0].at(r, c) -= h;
            const double fd =
                (net.replay_scores(plus)[0] - net.replay_scores(minus)[0]) / (2.0 * h);
            const double scale = std::max(std::abs(fd), 1.0);
            if (std::abs(grads[0].at(r, c) - fd) > 1e-3 * scale) {
                log << "  analytic gradient " << grads[0].at(r, c)
                    << " disagrees with finite difference " << fd << "\n";
                return false;
            }
        }
    }

    const Heatmap heat = gradcam_heatmap(net, img, 0, 4);
    double peak = 0.0;
    for (std::size_t r = 0; r < heat.raw.rows(); ++r) {
        for (std::size_t c = 0; c < heat.raw.cols(); ++c) {
            peak = std::max(peak, heat.raw.at(r, c));
        }
    }
    if (peak > 0.0 && std::abs(peak - 1.0) > 1e-12) {
        log << "  heatmap peak " << peak << " is not normalized\n";
        return false;
    }
    return true;
}

inline RunConfig selftest_config(const std::string& output_dir, std::uint64_t seed) {
    RunConfig cfg;
    cfg.dataset_path = "synthetic";
    cfg.synthetic = {240, 9, 3};
    cfg.top_k_families = 3;
    cfg.seed = seed;
    cfg.output_dir = output_dir;
    cfg.models = {"linear", "tree", "forest", "knn", "mlp", "cnn"};
    cfg.forest_spec.n_trees = 15;
    cfg.mlp_spec.hidden = {16};
    cfg.mlp_spec.mlp_epochs = 10;
    cfg.mlp_spec.mlp_learning_rate = 0.01;
    cfg.linear_spec.linear_epochs = 20;
    cfg.cnn.filters = 2;
    cfg.cnn.epochs = 2;
    cfg.shap.draws = 200;
    cfg.shap.rows = 6;
    cfg.shap.background = 32;
    cfg.lime.n_samples = 1500;
    cfg.perm.repeats = 2;
    return cfg;
}

inline bool check_pipeline_determinism(const RunConfig& cfg, std::ostream& log) {
    std::ostringstream sink;
    prepare_run(cfg, sink);
    train_run(cfg, sink);
    evaluate_run(cfg, sink);
    explain_run(cfg, "all", sink);
    const std::vector<std::string> first = report_run(cfg, sink);
    const std::string manifest_path = cfg.output_dir + "/report/manifest.json";
    const std::string before = read_file(manifest_path);
    std::map<std::string, std::string> contents;
    for (const auto& rel : first) contents[rel] = read_file(cfg.output_dir + "/" + rel);

    explain_run(cfg, "all", sink);
    report_run(cfg, sink);
    if (read_file(manifest_path) != before) {
        log << "  report manifest changed between identical runs\n";
        return false;
    }
    for (const auto& [rel, body] : contents) {
        if (read_file(cfg.output_dir + "/" + rel) != body) {
            log << "  '" << rel << "' changed between identical runs\n";
            return false;
        }
    }
    return true;
}

}  // namespace selftest_detail

/// Runs every bundled property suite against synthetic data, then a mini
/// end-to-end pipeline whose outputs land in cfg.output_dir. Prints one line
/// per suite; returns true only if all pass.
inline bool selftest_run(const RunConfig& cfg, std::ostream& log) {
    namespace sd = selftest_detail;
    const std::vector<std::pair<std::string, std::function<bool(std::ostream&)>>> suites = {
        {"shapley-equivalence", sd::check_equivalence},
        {"shapley-axioms", sd::check_axioms},
        {"montecarlo-consistency", sd::check_montecarlo},
        {"lime-linear-recovery", sd::check_lime},
        {"permutation-importance", sd::check_perm_importance},
        {"pdp-additivity", sd::check_pdp},
        {"gradcam-gradient-check", sd::check_gradcam},
        {"pipeline-determinism",
         [&cfg](std::ostream& l) {
             return sd::check_pipeline_determinism(
                 sd::selftest_config(cfg.output_dir, cfg.seed), l);
         }},
    };

    bool all_ok = true;
    for (const auto& [name, fn] : suites) {
        bool ok = false;
        try {
            ok = fn(log);
        } catch (const std::exception& e) {
            log << "  " << name << " threw: " << e.what() << "\n";
        }
        log << (ok ? "PASS " : "FAIL ") << name << "\n";
        all_ok = all_ok && ok;
    }
    log << (all_ok ? "selftest: all " : "selftest: FAILURES among ") << suites.size()
        << " suites" << (all_ok ? " passed" : "") << "\n";
    return all_ok;
}

}  // namespace xai
