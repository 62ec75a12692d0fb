#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xai/convnet.hpp"
#include "xai/dataset.hpp"
#include "xai/errors.hpp"
#include "xai/lime.hpp"
#include "xai/metrics.hpp"
#include "xai/models.hpp"
#include "xai/shapley.hpp"
#include "xai/tabular_xai.hpp"

namespace xai {

/// Which sample of the prepared data an explanation targets.
struct SampleSelector {
    enum class Kind { kFirstOfTest, kLastOfTest, kIndex };
    Kind kind = Kind::kFirstOfTest;
    std::size_t index = 0;

    std::string describe() const {
        switch (kind) {
            case Kind::kFirstOfTest: return "first-of-test";
            case Kind::kLastOfTest: return "last-of-test";
            default: return "index:" + std::to_string(index);
        }
    }

    static SampleSelector parse(const std::string& s) {
        SampleSelector sel;
        if (s == "first-of-test") {
            sel.kind = Kind::kFirstOfTest;
            return sel;
        }
        if (s == "last-of-test") {
            sel.kind = Kind::kLastOfTest;
            return sel;
        }
        std::string digits = s;
        if (s.rfind("index:", 0) == 0) digits = s.substr(6);
        if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
            sel.kind = Kind::kIndex;
            sel.index = std::stoull(digits);
            return sel;
        }
        throw ConfigError("unknown sample selector '" + s +
                          "' (expected first-of-test, last-of-test, or index:<n>)");
    }
};

struct ShapSettings {
    ShapleyMethod method = ShapleyMethod::kMonteCarlo;
    std::string mode = "marginal";
    int draws = 2000;
    std::size_t background = 64;
    std::size_t rows = 16;
    int features = 10;
};

struct PermSettings {
    int repeats = 5;
    PermMetric metric = PermMetric::kAccuracyDrop;
};

struct SyntheticSettings {
    std::size_t samples = 2000;
    std::size_t features = 20;
    std::size_t classes = 10;
};

/// Everything one run needs, loaded from a key=value config file and then
/// possibly overridden by command-line flags.
struct RunConfig {
    std::string dataset_path = "synthetic";
    std::string label_column = "label";
    int top_k_families = 10;
    bool standardize_features = true;
    SplitMode split_mode = SplitMode::kHoldout;
    double train_fraction = 0.8;
    int folds = 5;
    std::uint64_t seed = 42;
    std::string output_dir = "out";

    std::vector<std::string> models = {"linear", "tree", "forest", "knn", "mlp"};
    ModelSpec linear_spec;
    ModelSpec tree_spec;
    ModelSpec forest_spec;
    ModelSpec knn_spec;
    ModelSpec mlp_spec;
    ConvNetConfig cnn;

    std::string explain_model = "forest";
    SampleSelector sample;
    int explain_class = -1;

    ShapSettings shap;
    PerturbationConfig lime;
    PermSettings perm;
    std::string pdp_feature;
    int gradcam_top_cells = 10;

    SyntheticSettings synthetic;

    RunConfig() {
        linear_spec.kind = ModelKind::kLinear;
        tree_spec.kind = ModelKind::kTree;
        forest_spec.kind = ModelKind::kForest;
        knn_spec.kind = ModelKind::kKnn;
        mlp_spec.kind = ModelKind::kMlp;
        cnn.filters = 8;
        cnn.epochs = 5;
        cnn.batch_size = 16;
    }

    const ModelSpec& spec_for(const std::string& name) const {
        if (name == "linear") return linear_spec;
        if (name == "tree") return tree_spec;
        if (name == "forest") return forest_spec;
        if (name == "knn") return knn_spec;
        if (name == "mlp") return mlp_spec;
        throw ConfigError("unknown model '" + name +
                          "' (expected linear, tree, forest, knn, mlp, or cnn)");
    }

    void validate() const;
    void set(const std::string& key, const std::string& value);

    nlohmann::json to_json() const {
        return {{"dataset", dataset_path},
                {"label_column", label_column},
                {"top_k_families", top_k_families},
                {"standardize", standardize_features},
                {"split", to_string(split_mode)},
                {"train_fraction", train_fraction},
                {"folds", folds},
                {"seed", seed},
                {"output_dir", output_dir},
                {"models", models},
                {"explain_model", explain_model},
                {"sample", sample.describe()},
                {"class", explain_class},
                {"shap",
                 {{"method", to_string(shap.method)},
                  {"mode", shap.mode},
                  {"draws", shap.draws},
                  {"background", shap.background},
                  {"rows", shap.rows},
                  {"features", shap.features}}},
                {"lime", lime.to_json()},
                {"perm", {{"repeats", perm.repeats}, {"metric", to_string(perm.metric)}}},
                {"pdp_feature", pdp_feature},
                {"gradcam_top_cells", gradcam_top_cells}};
    }
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("'" + key + "' expects a boolean, got '" + value + "'");
}

inline long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "' expects an integer, got '" + value + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
    }
}

inline std::vector<std::string> parse_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;

    if (key == "dataset") dataset_path = value;
    else if (key == "label_column") label_column = value;
    else if (key == "top_k_families") top_k_families = static_cast<int>(parse_int(key, value));
    else if (key == "standardize") standardize_features = parse_bool(key, value);
    else if (key == "split") {
        if (value == "holdout") split_mode = SplitMode::kHoldout;
        else if (value == "kfold") split_mode = SplitMode::kKFold;
        else throw ConfigError("'split' expects holdout or kfold, got '" + value + "'");
    } else if (key == "train_fraction") train_fraction = parse_double(key, value);
    else if (key == "folds") folds = static_cast<int>(parse_int(key, value));
    else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "output_dir") output_dir = value;
    else if (key == "models") models = detail::parse_list(value);
    else if (key == "linear.loss") linear_spec.loss = linear_loss_from_string(value);
    else if (key == "linear.epochs") linear_spec.linear_epochs = static_cast<int>(parse_int(key, value));
    else if (key == "linear.learning_rate") linear_spec.linear_learning_rate = parse_double(key, value);
    else if (key == "linear.lambda") linear_spec.lambda = parse_double(key, value);
    else if (key == "tree.max_depth") tree_spec.max_depth = static_cast<int>(parse_int(key, value));
    else if (key == "forest.n_trees") forest_spec.n_trees = static_cast<int>(parse_int(key, value));
    else if (key == "forest.max_depth") forest_spec.max_depth = static_cast<int>(parse_int(key, value));
    else if (key == "knn.k") knn_spec.knn_k = static_cast<int>(parse_int(key, value));
    else if (key == "mlp.hidden") {
        mlp_spec.hidden.clear();
        for (const auto& h : detail::parse_list(value)) {
            mlp_spec.hidden.push_back(static_cast<int>(parse_int(key, h)));
        }
    } else if (key == "mlp.epochs") mlp_spec.mlp_epochs = static_cast<int>(parse_int(key, value));
    else if (key == "mlp.learning_rate") mlp_spec.mlp_learning_rate = parse_double(key, value);
    else if (key == "mlp.batch_size") mlp_spec.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "cnn.filters") cnn.filters = static_cast<int>(parse_int(key, value));
    else if (key == "cnn.kernel_size") cnn.kernel_size = static_cast<int>(parse_int(key, value));
    else if (key == "cnn.dropout") cnn.dropout = parse_double(key, value);
    else if (key == "cnn.epochs") cnn.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "cnn.learning_rate") cnn.learning_rate = parse_double(key, value);
    else if (key == "cnn.batch_size") cnn.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "explain.model") explain_model = value;
    else if (key == "explain.sample") sample = SampleSelector::parse(value);
    else if (key == "explain.class") explain_class = static_cast<int>(parse_int(key, value));
    else if (key == "shap.method") shap.method = shapley_method_from_string(value);
    else if (key == "shap.mode") {
        if (value != "marginal" && value != "retrain")
            throw ConfigError("'shap.mode' expects marginal or retrain, got '" + value + "'");
        shap.mode = value;
    } else if (key == "shap.draws") shap.draws = static_cast<int>(parse_int(key, value));
    else if (key == "shap.background") shap.background = static_cast<std::size_t>(parse_int(key, value));
    else if (key == "shap.rows") shap.rows = static_cast<std::size_t>(parse_int(key, value));
    else if (key == "shap.features") shap.features = static_cast<int>(parse_int(key, value));
    else if (key == "lime.samples") lime.n_samples = static_cast<std::size_t>(parse_int(key, value));
    else if (key == "lime.noise") lime.noise_scale = parse_double(key, value);
    else if (key == "lime.width") lime.kernel_width = parse_double(key, value);
    else if (key == "lime.top_k") lime.top_k = static_cast<int>(parse_int(key, value));
    else if (key == "lime.lambda") lime.ridge_lambda = parse_double(key, value);
    else if (key == "perm.repeats") perm.repeats = static_cast<int>(parse_int(key, value));
    else if (key == "perm.metric") perm.metric = perm_metric_from_string(value);
    else if (key == "pdp.feature") pdp_feature = value;
    else if (key == "gradcam.top_cells") gradcam_top_cells = static_cast<int>(parse_int(key, value));
    else if (key == "synthetic.samples") synthetic.samples = static_cast<std::size_t>(parse_int(key, value));
    else if (key == "synthetic.features") synthetic.features = static_cast<std::size_t>(parse_int(key, value));
    else if (key == "synthetic.classes") synthetic.classes = static_cast<std::size_t>(parse_int(key, value));
    else throw ConfigError("unknown config key '" + key + "'");
}

inline void RunConfig::validate() const {
    if (dataset_path.empty()) throw ConfigError("'dataset' must not be empty");
    if (label_column.empty()) throw ConfigError("'label_column' must not be empty");
    if (top_k_families < 1) throw ConfigError("'top_k_families' must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("'train_fraction' must lie strictly between 0 and 1");
    if (folds < 2) throw ConfigError("'folds' must be >= 2");
    if (output_dir.empty()) throw ConfigError("'output_dir' must not be empty");
    if (models.empty()) throw ConfigError("'models' must name at least one model");
    for (const auto& name : models) {
        if (name == "cnn") {
            cnn.validate();
        } else {
            spec_for(name).validate();
        }
    }
    if (explain_model != "cnn") spec_for(explain_model);
    if (explain_class < -1) throw ConfigError("'explain.class' must be -1 (predicted) or a class index");
    if (shap.mode != "marginal" && shap.mode != "retrain")
        throw ConfigError("'shap.mode' expects marginal or retrain");
    if (shap.draws < 2) throw ConfigError("'shap.draws' must be >= 2");
    if (shap.background < 1) throw ConfigError("'shap.background' must be >= 1");
    if (shap.rows < 1) throw ConfigError("'shap.rows' must be >= 1");
    if (shap.features < 1) throw ConfigError("'shap.features' must be >= 1");
    lime.validate_perturbation();
    if (lime.top_k < 1) throw ConfigError("'lime.top_k' must be >= 1");
    if (lime.ridge_lambda < 0.0) throw ConfigError("'lime.lambda' must be >= 0");
    if (perm.repeats < 1) throw ConfigError("'perm.repeats' must be >= 1");
    if (gradcam_top_cells < 1) throw ConfigError("'gradcam.top_cells' must be >= 1");
    if (synthetic.samples < synthetic.classes || synthetic.features == 0 ||
        synthetic.classes < 2) {
        throw ConfigError("synthetic dataset shape is infeasible");
    }
}

/// Parses the line-oriented config format: one `key = value` per line,
/// blank lines and `#` comments ignored.
inline RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              " is not of the form key = value: '" + t + "'");
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + " has an empty key");
        cfg.set(key, value);
    }
    return cfg;
}

}  // namespace xai
