#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xai/config.hpp"
#include "xai/convnet.hpp"
#include "xai/dataset.hpp"
#include "xai/errors.hpp"
#include "xai/gradcam.hpp"
#include "xai/io.hpp"
#include "xai/lime.hpp"
#include "xai/model_zoo.hpp"
#include "xai/models.hpp"
#include "xai/prng.hpp"
#include "xai/report.hpp"
#include "xai/shapley.hpp"
#include "xai/synth.hpp"
#include "xai/tabular_xai.hpp"
#include "xai/version.hpp"

namespace xai {

inline nlohmann::json dataset_to_json(const Dataset& ds) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.n_samples(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < ds.n_features(); ++j) row.push_back(ds.X.at(i, j));
        rows.push_back(std::move(row));
    }
    return {{"feature_names", ds.feature_names},
            {"class_names", ds.class_names},
            {"X", std::move(rows)},
            {"y", ds.y},
            {"provenance", ds.provenance}};
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
    Dataset ds;
    ds.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    ds.class_names = j.at("class_names").get<std::vector<std::string>>();
    ds.y = j.at("y").get<std::vector<int>>();
    ds.provenance = j.value("provenance", "");
    const auto& rows = j.at("X");
    ds.X = Matrix(rows.size(), ds.feature_names.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != ds.feature_names.size())
            throw DataError("row " + std::to_string(i) + " has " +
                            std::to_string(row.size()) + " values, expected " +
                            std::to_string(ds.feature_names.size()));
        for (std::size_t c = 0; c < ds.feature_names.size(); ++c) {
            ds.X.at(i, c) = row[c].get<double>();
        }
    }
    ds.validate();
    return ds;
}

namespace detail {

inline std::string prepared_dir(const RunConfig& cfg) { return cfg.output_dir + "/prepared"; }
inline std::string models_dir(const RunConfig& cfg) { return cfg.output_dir + "/models"; }
inline std::string metrics_dir(const RunConfig& cfg) { return cfg.output_dir + "/metrics"; }
inline std::string explanations_dir(const RunConfig& cfg) {
    return cfg.output_dir + "/explanations";
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    write_file_atomic(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const std::string& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse '" + path + "': " + e.what());
    }
}

}  // namespace detail

/// Records what each subcommand produced; merged across invocations so one
/// manifest describes the whole run.
inline void update_run_manifest(const RunConfig& cfg, const std::string& command,
                                const std::vector<std::string>& artifacts) {
    const std::string path = cfg.output_dir + "/run_manifest.json";
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file(path));
    } catch (const Error&) {
        manifest = nlohmann::json::object();
    } catch (const nlohmann::json::exception&) {
        manifest = nlohmann::json::object();
    }
    manifest["version"] = kVersion;
    manifest["seed"] = cfg.seed;
    manifest["config"] = cfg.to_json();
    if (!manifest.contains("commands")) manifest["commands"] = nlohmann::json::object();
    manifest["commands"][command] = artifacts;
    ensure_directory(cfg.output_dir);
    detail::write_json(path, manifest);
}

inline Dataset load_input(const RunConfig& cfg) {
    if (cfg.dataset_path == "synthetic") {
        return make_synthetic_classification(cfg.synthetic.samples, cfg.synthetic.features,
                                             cfg.synthetic.classes,
                                             derive_seed(cfg.seed, "synth-data"));
    }
    return load_csv(cfg.dataset_path, cfg.label_column);
}

inline std::vector<std::string> prepare_run(const RunConfig& cfg, std::ostream& log) {
    const Dataset raw = load_input(cfg);
    log << "loaded " << raw.n_samples() << " samples x " << raw.n_features()
        << " features, " << raw.n_classes() << " classes\n";

    const FilterResult filtered = filter_top_families(raw, cfg.top_k_families);
    Dataset ds = filtered.dataset;
    if (filtered.warning) {
        log << "note: top_k_families=" << cfg.top_k_families
            << " already covers every class\n";
    } else {
        log << "kept top " << ds.n_classes() << " families, " << ds.n_samples()
            << " samples\n";
    }

    const StandardizerParams stats = fit_standardizer(ds);
    if (cfg.standardize_features) ds = standardize(ds, stats);

    const std::uint64_t split_seed = derive_seed(cfg.seed, "split");
    const SplitPlan plan = cfg.split_mode == SplitMode::kHoldout
                               ? stratified_holdout(ds, cfg.train_fraction, split_seed)
                               : stratified_kfold(ds, cfg.folds, split_seed);
    log << "split: " << to_string(cfg.split_mode) << " ("
        << (cfg.split_mode == SplitMode::kHoldout
                ? std::to_string(plan.train_indices().size()) + " train / " +
                      std::to_string(plan.test_indices().size()) + " test"
                : std::to_string(cfg.folds) + " folds")
        << ")\n";

    const std::string dir = detail::prepared_dir(cfg);
    ensure_directory(dir);
    detail::write_json(dir + "/dataset.json", dataset_to_json(ds));
    detail::write_json(dir + "/standardizer.json", stats.to_json());
    detail::write_json(dir + "/split.json", plan.to_json());

    const std::vector<std::string> artifacts = {
        "prepared/dataset.json", "prepared/standardizer.json", "prepared/split.json"};
    update_run_manifest(cfg, "prepare", artifacts);
    return artifacts;
}

struct PreparedRun {
    Dataset ds;
    StandardizerParams stats;
    SplitPlan plan;
};

inline PreparedRun load_prepared(const RunConfig& cfg) {
    const std::string dir = detail::prepared_dir(cfg);
    PreparedRun p;
    p.ds = dataset_from_json(detail::read_json(dir + "/dataset.json"));
    p.stats = StandardizerParams::from_json(detail::read_json(dir + "/standardizer.json"));
    p.plan = SplitPlan::from_json(detail::read_json(dir + "/split.json"));
    if (p.plan.assignments.size() != p.ds.n_samples())
        throw DataError("split assignments do not cover the prepared dataset");
    return p;
}

namespace detail {

inline std::vector<std::string> importance_order_for_packing(const Dataset& ds,
                                                             const Model* forest) {
    if (forest != nullptr) {
        const FeatureImportanceRanking ranking = native_importance(*forest);
        std::vector<std::string> order;
        order.reserve(ranking.entries.size());
        for (const auto& e : ranking.entries) order.push_back(e.feature_name);
        return order;
    }
    return ds.feature_names;
}

inline std::vector<ImageSample> pack_rows(const Dataset& ds,
                                          const std::vector<std::size_t>& rows,
                                          const std::vector<std::string>& order) {
    std::vector<ImageSample> images;
    images.reserve(rows.size());
    for (std::size_t i : rows) {
        std::vector<double> x(ds.n_features());
        for (std::size_t j = 0; j < ds.n_features(); ++j) x[j] = ds.X.at(i, j);
        ImageSample img = pack_image(x, ds.feature_names, order);
        img.label = ds.y[i];
        images.push_back(std::move(img));
    }
    return images;
}

}  // namespace detail

inline std::vector<std::string> train_run(const RunConfig& cfg, std::ostream& log) {
    const PreparedRun p = load_prepared(cfg);
    const std::vector<std::size_t> train_idx = cfg.split_mode == SplitMode::kHoldout
                                                   ? p.plan.train_indices()
                                                   : [&] {
                                                         std::vector<std::size_t> all(
                                                             p.ds.n_samples());
                                                         std::iota(all.begin(), all.end(),
                                                                   std::size_t{0});
                                                         return all;
                                                     }();
    const Dataset train_ds = subset_rows(p.ds, train_idx);

    const std::string dir = detail::models_dir(cfg);
    ensure_directory(dir);
    std::vector<std::string> artifacts;
    std::unique_ptr<Model> forest_for_order;

    for (const auto& name : cfg.models) {
        if (name == "cnn") continue;
        ModelSpec spec = cfg.spec_for(name);
        spec.seed = derive_seed(cfg.seed, "model-" + name);
        const std::unique_ptr<Model> model = train_model(spec, train_ds);
        detail::write_json(dir + "/" + name + ".json", model->to_json());
        artifacts.push_back("models/" + name + ".json");
        log << "trained " << name << "\n";
        if (name == "forest") forest_for_order = train_model(spec, train_ds);
    }

    if (std::find(cfg.models.begin(), cfg.models.end(), "cnn") != cfg.models.end()) {
        const std::vector<std::string> order =
            detail::importance_order_for_packing(p.ds, forest_for_order.get());
        const std::vector<ImageSample> images =
            detail::pack_rows(train_ds,
                              [&] {
                                  std::vector<std::size_t> all(train_ds.n_samples());
                                  std::iota(all.begin(), all.end(), std::size_t{0});
                                  return all;
                              }(),
                              order);
        ConvNetConfig cnn_cfg = cfg.cnn;
        cnn_cfg.seed = derive_seed(cfg.seed, "model-cnn");
        const ConvNet net(images, train_ds.y, cnn_cfg);
        detail::write_json(dir + "/cnn.json", net.to_json());
        detail::write_json(dir + "/cnn_meta.json",
                           {{"importance_order", order},
                            {"class_names", train_ds.class_names},
                            {"feature_names", train_ds.feature_names}});
        artifacts.push_back("models/cnn.json");
        artifacts.push_back("models/cnn_meta.json");
        log << "trained cnn\n";
    }

    update_run_manifest(cfg, "train", artifacts);
    return artifacts;
}

namespace detail {

inline nlohmann::json evaluate_tabular_holdout(const RunConfig& cfg, const PreparedRun& p,
                                               const std::string& name, std::ostream& log) {
    const std::unique_ptr<Model> model = load_model(models_dir(cfg) + "/" + name + ".json");
    const Dataset test_ds = subset_rows(p.ds, p.plan.test_indices());
    const Metrics m = evaluate(*model, test_ds, Averaging::kWeighted);
    log << name << ": accuracy=" << m.accuracy << " f1=" << m.f1 << "\n";
    return {{"model", name}, {"split", "holdout"}, {"metrics", m.to_json()}};
}

inline nlohmann::json evaluate_tabular_kfold(const RunConfig& cfg, const PreparedRun& p,
                                             const std::string& name, std::ostream& log) {
    nlohmann::json folds = nlohmann::json::array();
    double acc = 0.0, f1 = 0.0;
    for (int f = 0; f < cfg.folds; ++f) {
        ModelSpec spec = cfg.spec_for(name);
        spec.seed = derive_seed(cfg.seed, "model-" + name + "-fold-" + std::to_string(f));
        const Dataset train_ds = subset_rows(p.ds, p.plan.train_indices(f));
        const Dataset test_ds = subset_rows(p.ds, p.plan.test_indices(f));
        const std::unique_ptr<Model> model = train_model(spec, train_ds);
        const Metrics m = evaluate(*model, test_ds, Averaging::kWeighted);
        folds.push_back(m.to_json());
        acc += m.accuracy;
        f1 += m.f1;
    }
    acc /= cfg.folds;
    f1 /= cfg.folds;
    log << name << ": mean accuracy=" << acc << " mean f1=" << f1 << " over " << cfg.folds
        << " folds\n";
    return {{"model", name},
            {"split", "kfold"},
            {"folds", std::move(folds)},
            {"mean", {{"accuracy", acc}, {"f1", f1}}}};
}

inline nlohmann::json evaluate_cnn_holdout(const RunConfig& cfg, const PreparedRun& p,
                                           std::ostream& log) {
    const ConvNet net = ConvNet::from_json(read_json(models_dir(cfg) + "/cnn.json"));
    const nlohmann::json meta = read_json(models_dir(cfg) + "/cnn_meta.json");
    const auto order = meta.at("importance_order").get<std::vector<std::string>>();
    const std::vector<std::size_t> test_idx = p.plan.test_indices();
    const std::vector<ImageSample> images = pack_rows(p.ds, test_idx, order);
    std::vector<int> y_true, y_pred;
    for (std::size_t k = 0; k < images.size(); ++k) {
        const std::vector<double> proba = net.predict_proba(images[k]);
        y_pred.push_back(static_cast<int>(
            std::max_element(proba.begin(), proba.end()) - proba.begin()));
        y_true.push_back(p.ds.y[test_idx[k]]);
    }
    const Metrics m = compute_metrics(y_true, y_pred, p.ds.class_names, Averaging::kWeighted);
    log << "cnn: accuracy=" << m.accuracy << " f1=" << m.f1 << "\n";
    return {{"model", "cnn"}, {"split", "holdout"}, {"metrics", m.to_json()}};
}

}  // namespace detail

inline std::vector<std::string> evaluate_run(const RunConfig& cfg, std::ostream& log) {
    const PreparedRun p = load_prepared(cfg);
    const std::string dir = detail::metrics_dir(cfg);
    ensure_directory(dir);
    std::vector<std::string> artifacts;
    for (const auto& name : cfg.models) {
        nlohmann::json record;
        if (name == "cnn") {
            if (cfg.split_mode != SplitMode::kHoldout)
                throw ConfigError("cnn evaluation supports the holdout split only");
            record = detail::evaluate_cnn_holdout(cfg, p, log);
        } else {
            record = cfg.split_mode == SplitMode::kHoldout
                         ? detail::evaluate_tabular_holdout(cfg, p, name, log)
                         : detail::evaluate_tabular_kfold(cfg, p, name, log);
        }
        detail::write_json(dir + "/" + name + ".json", record);
        artifacts.push_back("metrics/" + name + ".json");
    }
    update_run_manifest(cfg, "evaluate", artifacts);
    return artifacts;
}

namespace detail {

inline std::size_t resolve_sample(const SplitPlan& plan, const SampleSelector& sel,
                                  std::size_t n_samples) {
    if (sel.kind == SampleSelector::Kind::kIndex) {
        if (sel.index >= n_samples)
            throw DataError("sample index " + std::to_string(sel.index) +
                            " is out of range for " + std::to_string(n_samples) +
                            " samples");
        return sel.index;
    }
    const std::vector<std::size_t> test = plan.test_indices(0);
    if (test.empty()) throw DataError("the split has no test samples to select from");
    return sel.kind == SampleSelector::Kind::kFirstOfTest ? test.front() : test.back();
}

inline int resolve_class(const RunConfig& cfg, const Model& model,
                         const std::vector<double>& x) {
    if (cfg.explain_class >= 0) {
        if (cfg.explain_class >= model.class_count())
            throw ConfigError("'explain.class' " + std::to_string(cfg.explain_class) +
                              " is out of range for " +
                              std::to_string(model.class_count()) + " classes");
        return cfg.explain_class;
    }
    return model.predict(x);
}

inline std::vector<double> row_vector(const Dataset& ds, std::size_t i) {
    std::vector<double> x(ds.n_features());
    for (std::size_t j = 0; j < ds.n_features(); ++j) x[j] = ds.X.at(i, j);
    return x;
}

inline void check_shap_feasible(const RunConfig& cfg, std::size_t n) {
    const std::string advice =
        "; use --method montecarlo, or reduce the feature set to <= " +
        std::to_string(kSubsetFeatureCap) +
        " first (recursive feature elimination)";
    if (cfg.shap.mode == "retrain" && n > kRetrainFeatureCap)
        throw FeasibilityError("retrain shapley over " + std::to_string(n) +
                               " features needs 2^" + std::to_string(n) + " trainings" +
                               advice);
    if (cfg.shap.method == ShapleyMethod::kExactSubsets && n > kSubsetFeatureCap)
        throw FeasibilityError("exact subset enumeration over " + std::to_string(n) +
                               " features is infeasible" + advice);
    if (cfg.shap.method == ShapleyMethod::kExactPermutations && n > kPermutationFeatureCap)
        throw FeasibilityError("exact permutation enumeration over " + std::to_string(n) +
                               " features is infeasible" + advice);
}

inline std::vector<std::size_t> shap_row_set(const SplitPlan& plan, std::size_t selected,
                                             std::size_t want) {
    std::vector<std::size_t> rows = {selected};
    for (std::size_t i : plan.test_indices(0)) {
        if (rows.size() >= want) break;
        if (i != selected) rows.push_back(i);
    }
    return rows;
}

inline std::vector<std::string> explain_shap(const RunConfig& cfg, const PreparedRun& p,
                                             std::ostream& log) {
    check_shap_feasible(cfg, p.ds.n_features());
    const std::unique_ptr<Model> model =
        load_model(models_dir(cfg) + "/" + cfg.explain_model + ".json");

    const std::size_t sel_row = resolve_sample(p.plan, cfg.sample, p.ds.n_samples());
    const std::vector<double> x = row_vector(p.ds, sel_row);
    const int target = resolve_class(cfg, *model, x);
    const TargetSelector selector = TargetSelector::for_class(target);

    const std::vector<std::size_t> train_idx = p.plan.train_indices(0);
    std::unique_ptr<ValueFunction> vf;
    std::shared_ptr<const Model> shared(model.get(), [](const Model*) {});
    if (cfg.shap.mode == "retrain") {
        ModelSpec spec = cfg.spec_for(cfg.explain_model);
        spec.seed = derive_seed(cfg.seed, "retrain-model");
        vf = std::make_unique<RetrainValueFunction>(
            [spec](const Dataset& d) { return train_model(spec, d); },
            subset_rows(p.ds, train_idx), selector);
    } else {
        std::vector<std::size_t> bg(train_idx.begin(),
                                    train_idx.begin() +
                                        std::min(cfg.shap.background, train_idx.size()));
        vf = std::make_unique<MarginalValueFunction>(shared, subset_rows(p.ds, bg).X,
                                                     selector);
    }

    const std::vector<std::size_t> rows =
        shap_row_set(p.plan, sel_row, std::min<std::size_t>(cfg.shap.rows,
                                                            p.ds.n_samples()));
    Matrix X_rows(rows.size(), p.ds.n_features());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t j = 0; j < p.ds.n_features(); ++j) {
            X_rows.at(r, j) = p.ds.X.at(rows[r], j);
        }
    }

    ShapleyParams params;
    params.method = cfg.shap.method;
    params.mc_draws = cfg.shap.draws;
    params.seed = derive_seed(cfg.seed, "shap");
    ShapleyMatrix matrix = shapley_matrix(*vf, X_rows, p.ds.feature_names, params);
    matrix.sample_ids.clear();
    for (std::size_t i : rows) matrix.sample_ids.push_back("sample-" + std::to_string(i));

    SummaryImportance summary = summary_importance(matrix);
    if (summary.entries.size() > static_cast<std::size_t>(cfg.shap.features)) {
        summary.entries.resize(static_cast<std::size_t>(cfg.shap.features));
    }
    BeeswarmData bees = beeswarm_data(matrix, X_rows);
    if (bees.features.size() > static_cast<std::size_t>(cfg.shap.features)) {
        bees.features.resize(static_cast<std::size_t>(cfg.shap.features));
    }

    std::vector<double> phi0(p.ds.n_features());
    for (std::size_t j = 0; j < p.ds.n_features(); ++j) phi0[j] = matrix.phi.at(0, j);
    const Coalition full =
        vf->n() >= 64 ? ~Coalition{0} : ((Coalition{1} << vf->n()) - 1);
    const double output = vf->value(full, x);
    const ForcePlotData force =
        force_data(phi0, p.ds.feature_names, matrix.base_value, output,
                   "sample-" + std::to_string(sel_row), to_string(params.method));

    const std::string dir = explanations_dir(cfg);
    const std::string prefix = "shap_" + cfg.explain_model;
    write_json(dir + "/" + prefix + "_matrix.json", matrix.to_json());
    write_json(dir + "/" + prefix + "_summary.json", summary.to_json());
    write_json(dir + "/" + prefix + "_beeswarm.json", bees.to_json());
    write_json(dir + "/" + prefix + "_force.json", force.to_json());
    log << "shap: " << to_string(params.method) << "/" << cfg.shap.mode << " over "
        << rows.size() << " rows, class " << target << "\n";
    return {"explanations/" + prefix + "_matrix.json",
            "explanations/" + prefix + "_summary.json",
            "explanations/" + prefix + "_beeswarm.json",
            "explanations/" + prefix + "_force.json"};
}

inline std::vector<std::string> explain_lime(const RunConfig& cfg, const PreparedRun& p,
                                             std::ostream& log) {
    const std::unique_ptr<Model> model =
        load_model(models_dir(cfg) + "/" + cfg.explain_model + ".json");
    const std::size_t sel_row = resolve_sample(p.plan, cfg.sample, p.ds.n_samples());
    const std::vector<double> x = row_vector(p.ds, sel_row);
    const int target = resolve_class(cfg, *model, x);

    PerturbationConfig lime_cfg = cfg.lime;
    lime_cfg.seed = derive_seed(cfg.seed, "lime");
    lime_cfg.top_k = std::min<int>(lime_cfg.top_k, static_cast<int>(p.ds.n_features()));
    const StandardizerParams stats = fit_standardizer(p.ds);
    const LocalExplanation exp = explain_instance(*model, x, target, lime_cfg, stats);

    std::vector<std::string> names;
    std::vector<double> phi;
    for (const auto& c : exp.contributions) {
        names.push_back(c.feature);
        phi.push_back(c.weight * x[p.ds.feature_index(c.feature)]);
    }
    const ForcePlotData force =
        force_data(phi, names, exp.intercept, exp.local_prediction,
                   "sample-" + std::to_string(sel_row), "lime");

    const std::string dir = explanations_dir(cfg);
    const std::string prefix = "lime_" + cfg.explain_model;
    write_json(dir + "/" + prefix + ".json", exp.to_json());
    write_json(dir + "/" + prefix + "_force.json", force.to_json());
    log << "lime: class " << target << " fidelity=" << exp.fidelity << "\n";
    return {"explanations/" + prefix + ".json", "explanations/" + prefix + "_force.json"};
}

inline std::vector<std::string> explain_perm(const RunConfig& cfg, const PreparedRun& p,
                                             std::ostream& log) {
    const std::unique_ptr<Model> model =
        load_model(models_dir(cfg) + "/" + cfg.explain_model + ".json");
    const Dataset eval_ds = subset_rows(p.ds, p.plan.test_indices(0));
    const PermutationImportanceReport report =
        permutation_importance(*model, eval_ds, cfg.perm.metric, cfg.perm.repeats,
                               derive_seed(cfg.seed, "perm"));
    const std::string path = explanations_dir(cfg) + "/perm_" + cfg.explain_model + ".json";
    write_json(path, report.to_json());
    log << "perm: " << report.rows.size() << " features, metric "
        << to_string(cfg.perm.metric) << "\n";
    return {"explanations/perm_" + cfg.explain_model + ".json"};
}

inline std::vector<std::string> explain_pdp(const RunConfig& cfg, const PreparedRun& p,
                                            std::ostream& log) {
    const std::unique_ptr<Model> model =
        load_model(models_dir(cfg) + "/" + cfg.explain_model + ".json");
    const std::size_t sel_row = resolve_sample(p.plan, cfg.sample, p.ds.n_samples());
    const int target = resolve_class(cfg, *model, row_vector(p.ds, sel_row));
    const std::string feature =
        cfg.pdp_feature.empty() ? p.ds.feature_names.front() : cfg.pdp_feature;
    const PDPCurve curve =
        pdp_curve(*model, p.ds, feature, TargetSelector::for_class(target));
    const std::string path = explanations_dir(cfg) + "/pdp_" + cfg.explain_model + ".json";
    write_json(path, curve.to_json());
    log << "pdp: feature '" << feature << "', " << curve.grid.size() << " grid points\n";
    return {"explanations/pdp_" + cfg.explain_model + ".json"};
}

inline std::vector<std::string> explain_gradcam(const RunConfig& cfg, const PreparedRun& p,
                                                std::ostream& log) {
    const ConvNet net = ConvNet::from_json(read_json(models_dir(cfg) + "/cnn.json"));
    const nlohmann::json meta = read_json(models_dir(cfg) + "/cnn_meta.json");
    const auto order = meta.at("importance_order").get<std::vector<std::string>>();

    const std::size_t sel_row = resolve_sample(p.plan, cfg.sample, p.ds.n_samples());
    ImageSample img = pack_image(row_vector(p.ds, sel_row), p.ds.feature_names, order);
    img.label = p.ds.y[sel_row];
    const std::vector<double> proba = net.predict_proba(img);
    int target = cfg.explain_class;
    if (target < 0) {
        target = static_cast<int>(std::max_element(proba.begin(), proba.end()) -
                                  proba.begin());
    } else if (static_cast<std::size_t>(target) >= proba.size()) {
        throw ConfigError("'explain.class' " + std::to_string(target) +
                          " is out of range for " + std::to_string(proba.size()) +
                          " classes");
    }
    const Heatmap heat = gradcam_heatmap(net, img, target, cfg.gradcam_top_cells,
                                         "sample-" + std::to_string(sel_row));
    const std::string path = explanations_dir(cfg) + "/gradcam.json";
    write_json(path, heat.to_json());
    log << "gradcam: " << heat.grid.rows() << "x" << heat.grid.cols() << " grid, class "
        << target << "\n";
    return {"explanations/gradcam.json"};
}

}  // namespace detail

inline std::vector<std::string> explain_run(const RunConfig& cfg, const std::string& what,
                                            std::ostream& log) {
    static const std::vector<std::string> kKnown = {"shap", "lime", "perm", "pdp",
                                                    "gradcam"};
    std::vector<std::string> jobs;
    if (what == "all") {
        for (const auto& k : kKnown) {
            if (k == "gradcam" &&
                std::find(cfg.models.begin(), cfg.models.end(), "cnn") == cfg.models.end())
                continue;
            jobs.push_back(k);
        }
    } else if (std::find(kKnown.begin(), kKnown.end(), what) != kKnown.end()) {
        jobs.push_back(what);
    } else {
        throw ConfigError("unknown explanation '" + what +
                          "' (expected shap, lime, perm, pdp, gradcam, or all)");
    }

    const PreparedRun p = load_prepared(cfg);
    ensure_directory(detail::explanations_dir(cfg));
    std::vector<std::string> artifacts;
    for (const auto& job : jobs) {
        if (job != "gradcam" && cfg.explain_model == "cnn")
            throw ConfigError("'" + job +
                              "' explains tabular models; set explain.model to one of "
                              "linear, tree, forest, knn, mlp");
        std::vector<std::string> produced;
        if (job == "shap") produced = detail::explain_shap(cfg, p, log);
        else if (job == "lime") produced = detail::explain_lime(cfg, p, log);
        else if (job == "perm") produced = detail::explain_perm(cfg, p, log);
        else if (job == "pdp") produced = detail::explain_pdp(cfg, p, log);
        else produced = detail::explain_gradcam(cfg, p, log);
        artifacts.insert(artifacts.end(), produced.begin(), produced.end());
    }
    update_run_manifest(cfg, "explain", artifacts);
    return artifacts;
}

namespace detail {

inline nlohmann::json truncate_bar_payload(nlohmann::json payload) {
    const std::size_t cap = 24;
    const std::string key = payload.at("kind") == "summary" ? "entries" : "rows";
    auto& arr = payload.at(key);
    if (arr.size() > cap) {
        nlohmann::json head = nlohmann::json::array();
        for (std::size_t i = 0; i < cap; ++i) head.push_back(arr[i]);
        payload[key] = std::move(head);
    }
    return payload;
}

}  // namespace detail

inline std::vector<std::string> report_run(const RunConfig& cfg, std::ostream& log) {
    namespace fs = std::filesystem;
    const std::string dir = detail::explanations_dir(cfg);
    if (!fs::is_directory(dir))
        throw DataError("no explanations found in '" + dir + "' (run `explain` first)");

    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());

    std::vector<ReportItem> items;
    for (const auto& path : files) {
        const nlohmann::json j = detail::read_json(path);
        if (!j.is_object()) continue;
        const std::string stem = fs::path(path).stem().string();
        PlotSpec spec;
        spec.title = stem;
        if (j.contains("kind") && j.at("kind").is_string()) {
            const std::string kind = j.at("kind").get<std::string>();
            if (kind == "summary" || kind == "perm_importance") {
                spec.kind = PlotKind::kBar;
                spec.payload = detail::truncate_bar_payload(j);
                spec.y_label = kind == "summary" ? "mean |phi|" : "score drop";
            } else if (kind == "beeswarm") {
                spec.kind = PlotKind::kBeeswarmScatter;
                spec.payload = j;
                spec.x_label = "phi";
            } else if (kind == "pdp") {
                spec.kind = PlotKind::kPdpScatter;
                spec.payload = j;
                spec.x_label = j.value("feature", "");
                spec.y_label = "mean response";
            } else if (kind == "force") {
                spec.kind = PlotKind::kForce;
                spec.payload = j;
            } else {
                continue;
            }
        } else if (j.contains("grid") && j.contains("class") && j.contains("top_cells")) {
            spec.kind = PlotKind::kHeatmap;
            spec.payload = j;
        } else {
            continue;
        }
        items.push_back({stem, std::move(spec)});
    }
    if (items.empty())
        throw DataError("no renderable explanation records in '" + dir +
                        "' (run `explain` first)");

    const std::map<std::string, std::uint64_t> seeds = {{"global", cfg.seed}};
    const nlohmann::json manifest =
        emit_bundle(items, cfg.output_dir + "/report", seeds);
    log << "report: " << items.size() << " plots, "
        << manifest.at("files").size() << " files\n";

    std::vector<std::string> artifacts;
    for (const auto& f : manifest.at("files")) {
        artifacts.push_back("report/" + f.get<std::string>());
    }
    update_run_manifest(cfg, "report", artifacts);
    return artifacts;
}

}  // namespace xai
