#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "xai/dataset.hpp"
#include "xai/errors.hpp"
#include "xai/matrix.hpp"
#include "xai/metrics.hpp"

namespace xai {

enum class ModelKind { kLinear, kTree, kForest, kKnn, kMlp };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::kLinear: return "linear";
        case ModelKind::kTree: return "tree";
        case ModelKind::kForest: return "forest";
        case ModelKind::kKnn: return "knn";
        case ModelKind::kMlp: return "mlp";
    }
    throw ContractError("invalid model kind");
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "linear") return ModelKind::kLinear;
    if (s == "tree") return ModelKind::kTree;
    if (s == "forest") return ModelKind::kForest;
    if (s == "knn") return ModelKind::kKnn;
    if (s == "mlp") return ModelKind::kMlp;
    throw ConfigError("unknown model kind '" + s + "'");
}

enum class LinearLoss { kHinge, kLogistic };

inline std::string to_string(LinearLoss l) {
    return l == LinearLoss::kHinge ? "hinge" : "logistic";
}

inline LinearLoss linear_loss_from_string(const std::string& s) {
    if (s == "hinge") return LinearLoss::kHinge;
    if (s == "logistic") return LinearLoss::kLogistic;
    throw ConfigError("unknown linear loss '" + s + "' (expected hinge or logistic)");
}

struct ModelSpec {
    ModelKind kind = ModelKind::kForest;
    std::uint64_t seed = 0;

    // linear
    LinearLoss loss = LinearLoss::kHinge;
    int linear_epochs = 50;
    double linear_learning_rate = 0.01;
    double lambda = 1e-4;

    // tree / forest
    int n_trees = 100;
    int max_depth = 0;  // 0 = unlimited

    // knn
    int knn_k = 5;

    // mlp
    std::vector<int> hidden = {300, 300};
    double mlp_learning_rate = 0.0001;
    int mlp_epochs = 30;
    int batch_size = 32;

    void validate() const {
        if (linear_epochs <= 0 || mlp_epochs <= 0) throw ConfigError("epochs must be positive");
        if (linear_learning_rate <= 0.0 || mlp_learning_rate <= 0.0)
            throw ConfigError("learning rate must be positive");
        if (lambda < 0.0) throw ConfigError("regularization strength must be non-negative");
        if (n_trees <= 0) throw ConfigError("tree count must be positive");
        if (max_depth < 0) throw ConfigError("max depth must be >= 0 (0 means unlimited)");
        if (knn_k < 1) throw ConfigError("k must be >= 1");
        if (batch_size <= 0) throw ConfigError("batch size must be positive");
        for (int h : hidden) {
            if (h <= 0) throw ConfigError("hidden layer sizes must be positive");
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"kind", xai::to_string(kind)}, {"seed", seed}};
        switch (kind) {
            case ModelKind::kLinear:
                j["loss"] = xai::to_string(loss);
                j["epochs"] = linear_epochs;
                j["learning_rate"] = linear_learning_rate;
                j["lambda"] = lambda;
                break;
            case ModelKind::kTree:
                j["max_depth"] = max_depth;
                break;
            case ModelKind::kForest:
                j["n_trees"] = n_trees;
                j["max_depth"] = max_depth;
                break;
            case ModelKind::kKnn:
                j["k"] = knn_k;
                break;
            case ModelKind::kMlp:
                j["hidden"] = hidden;
                j["learning_rate"] = mlp_learning_rate;
                j["epochs"] = mlp_epochs;
                j["batch_size"] = batch_size;
                break;
        }
        return j;
    }

    static ModelSpec from_json(const nlohmann::json& j) {
        ModelSpec s;
        s.kind = model_kind_from_string(j.at("kind").get<std::string>());
        s.seed = j.value("seed", std::uint64_t{0});
        switch (s.kind) {
            case ModelKind::kLinear:
                if (j.contains("loss")) s.loss = linear_loss_from_string(j["loss"]);
                s.linear_epochs = j.value("epochs", s.linear_epochs);
                s.linear_learning_rate = j.value("learning_rate", s.linear_learning_rate);
                s.lambda = j.value("lambda", s.lambda);
                break;
            case ModelKind::kTree:
                s.max_depth = j.value("max_depth", s.max_depth);
                break;
            case ModelKind::kForest:
                s.n_trees = j.value("n_trees", s.n_trees);
                s.max_depth = j.value("max_depth", s.max_depth);
                break;
            case ModelKind::kKnn:
                s.knn_k = j.value("k", s.knn_k);
                break;
            case ModelKind::kMlp:
                s.hidden = j.value("hidden", s.hidden);
                s.mlp_learning_rate = j.value("learning_rate", s.mlp_learning_rate);
                s.mlp_epochs = j.value("epochs", s.mlp_epochs);
                s.batch_size = j.value("batch_size", s.batch_size);
                break;
        }
        s.validate();
        return s;
    }
};

struct ImportanceEntry {
    std::string feature_name;
    double score = 0.0;
};

/// Importances sorted descending, ties kept in feature-index order.
struct FeatureImportanceRanking {
    std::vector<ImportanceEntry> entries;
    std::string source;

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : entries) arr.push_back({{"feature", e.feature_name}, {"score", e.score}});
        return {{"source", source}, {"ranking", arr}};
    }
};

namespace detail {

inline FeatureImportanceRanking make_ranking(const std::vector<std::string>& names,
                                             const std::vector<double>& scores,
                                             const std::string& source) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    FeatureImportanceRanking r;
    r.source = source;
    r.entries.reserve(order.size());
    for (std::size_t i : order) r.entries.push_back({names[i], scores[i]});
    return r;
}

inline void softmax_inplace(std::vector<double>& z) {
    double hi = z[0];
    for (double v : z) hi = std::max(hi, v);
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - hi);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

inline void check_finite(const Dataset& ds) {
    for (std::size_t i = 0; i < ds.n_samples(); ++i) {
        for (std::size_t j = 0; j < ds.n_features(); ++j) {
            if (!std::isfinite(ds.X.at(i, j)))
                throw DataError("non-finite value in feature '" + ds.feature_names[j] +
                                "', row " + std::to_string(i + 1));
        }
    }
}

}  // namespace detail

/// Trained classifier. Prediction is deterministic and safe to run from many
/// threads at once; training happens in the derived-class constructor.
class Model {
public:
    virtual ~Model() = default;

    const ModelSpec& spec() const { return spec_; }
    int class_count() const { return static_cast<int>(class_names_.size()); }
    const std::vector<std::string>& class_names() const { return class_names_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }
    std::size_t feature_count() const { return feature_names_.size(); }

    std::vector<double> predict_proba(const double* x, std::size_t n) const {
        if (n != feature_names_.size())
            throw ContractError("feature vector has length " + std::to_string(n) +
                                ", model expects " + std::to_string(feature_names_.size()));
        return proba(x);
    }

    std::vector<double> predict_proba(const std::vector<double>& x) const {
        return predict_proba(x.data(), x.size());
    }

    int predict(const double* x, std::size_t n) const {
        const std::vector<double> p = predict_proba(x, n);
        return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }

    int predict(const std::vector<double>& x) const { return predict(x.data(), x.size()); }

    std::vector<int> predict_rows(const Matrix& X) const {
        if (X.cols() != feature_names_.size())
            throw ContractError("matrix has " + std::to_string(X.cols()) +
                                " columns, model expects " +
                                std::to_string(feature_names_.size()));
        std::vector<int> out(X.rows());
        for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict(X.row(i), X.cols());
        return out;
    }

    virtual nlohmann::json to_json() const = 0;

protected:
    Model(ModelSpec spec, std::vector<std::string> feature_names,
          std::vector<std::string> class_names)
        : spec_(std::move(spec)),
          feature_names_(std::move(feature_names)),
          class_names_(std::move(class_names)) {}

    static void check_trainable(const Dataset& ds) {
        ds.validate();
        if (ds.n_samples() == 0) throw DataError("cannot train on an empty dataset");
        int distinct = 0;
        for (int c : ds.class_counts()) {
            if (c > 0) ++distinct;
        }
        if (distinct < 2) throw DataError("training requires at least 2 classes");
        detail::check_finite(ds);
    }

    virtual std::vector<double> proba(const double* x) const = 0;

    ModelSpec spec_;
    std::vector<std::string> feature_names_;
    std::vector<std::string> class_names_;
};

/// Picks the scalar model output explanations attach to: either one class's
/// probability or the probability of whichever class the model predicts.
struct TargetSelector {
    enum class Kind { kClassProb, kPredictedClassProb };
    Kind kind = Kind::kPredictedClassProb;
    int class_index = 0;

    static TargetSelector for_class(int index) {
        return TargetSelector{Kind::kClassProb, index};
    }
    static TargetSelector predicted() { return TargetSelector{}; }

    double select(const std::vector<double>& proba) const {
        if (kind == Kind::kClassProb) {
            if (class_index < 0 || static_cast<std::size_t>(class_index) >= proba.size())
                throw ContractError("target class " + std::to_string(class_index) +
                                    " is out of range for " + std::to_string(proba.size()) +
                                    " classes");
            return proba[static_cast<std::size_t>(class_index)];
        }
        return *std::max_element(proba.begin(), proba.end());
    }

    double select_from(const Model& m, const double* x, std::size_t n) const {
        return select(m.predict_proba(x, n));
    }

    std::string describe() const {
        return kind == Kind::kClassProb ? "class:" + std::to_string(class_index)
                                        : "predicted";
    }

    static TargetSelector parse(const std::string& s) {
        if (s == "predicted") return predicted();
        if (s.rfind("class:", 0) == 0) {
            try {
                return for_class(std::stoi(s.substr(6)));
            } catch (const std::exception&) {
                throw ConfigError("cannot parse target class in '" + s + "'");
            }
        }
        throw ConfigError("unknown target selector '" + s +
                          "' (expected 'predicted' or 'class:<index>')");
    }
};

inline Metrics evaluate(const Model& m, const Dataset& test_ds, Averaging averaging) {
    if (test_ds.n_samples() == 0) throw DataError("cannot evaluate on an empty dataset");
    if (test_ds.feature_names != m.feature_names())
        throw ContractError("evaluation feature names do not match the trained model");
    const std::vector<int> pred = m.predict_rows(test_ds.X);
    return compute_metrics(test_ds.y, pred, test_ds.class_names, averaging);
}

}  // namespace xai
