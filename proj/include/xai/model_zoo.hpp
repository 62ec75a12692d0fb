#pragma once

#include <fstream>
#include <memory>
#include <string>

#include "xai/decision_tree.hpp"
#include "xai/knn.hpp"
#include "xai/linear_model.hpp"
#include "xai/mlp.hpp"
#include "xai/models.hpp"

namespace xai {

inline std::unique_ptr<Model> train_model(const ModelSpec& spec, const Dataset& train_ds) {
    spec.validate();
    switch (spec.kind) {
        case ModelKind::kLinear: return std::make_unique<LinearModel>(spec, train_ds);
        case ModelKind::kTree: return std::make_unique<DecisionTreeModel>(spec, train_ds);
        case ModelKind::kForest: return std::make_unique<RandomForestModel>(spec, train_ds);
        case ModelKind::kKnn: return std::make_unique<KnnModel>(spec, train_ds);
        case ModelKind::kMlp: return std::make_unique<MlpModel>(spec, train_ds);
    }
    throw ContractError("invalid model kind");
}

inline std::unique_ptr<Model> model_from_json(const nlohmann::json& j) {
    const int version = j.value("version", 0);
    if (version != 1)
        throw DataError("unsupported model document version " + std::to_string(version));
    ModelSpec spec = ModelSpec::from_json(j.at("spec"));
    auto feature_names = j.at("feature_names").get<std::vector<std::string>>();
    auto class_names = j.at("class_names").get<std::vector<std::string>>();
    const nlohmann::json& p = j.at("params");
    switch (spec.kind) {
        case ModelKind::kLinear:
            return std::make_unique<LinearModel>(
                std::move(spec), std::move(feature_names), std::move(class_names),
                p.at("weights").get<std::vector<std::vector<double>>>(),
                p.at("biases").get<std::vector<double>>());
        case ModelKind::kTree:
            return std::make_unique<DecisionTreeModel>(
                std::move(spec), std::move(feature_names), std::move(class_names),
                detail::Tree::from_json(p.at("nodes")),
                p.at("raw_importance").get<std::vector<double>>());
        case ModelKind::kForest: {
            std::vector<detail::Tree> trees;
            for (const auto& t : p.at("trees")) trees.push_back(detail::Tree::from_json(t));
            return std::make_unique<RandomForestModel>(
                std::move(spec), std::move(feature_names), std::move(class_names),
                std::move(trees),
                p.at("tree_importances").get<std::vector<std::vector<double>>>());
        }
        case ModelKind::kKnn: {
            const auto& rows = p.at("train_X");
            Matrix X(rows.size(), feature_names.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto row = rows[i].get<std::vector<double>>();
                if (row.size() != X.cols())
                    throw DataError("stored training row has the wrong width");
                std::copy(row.begin(), row.end(), X.row(i));
            }
            return std::make_unique<KnnModel>(std::move(spec), std::move(feature_names),
                                              std::move(class_names), std::move(X),
                                              p.at("train_y").get<std::vector<int>>());
        }
        case ModelKind::kMlp:
            return std::make_unique<MlpModel>(std::move(spec), std::move(feature_names),
                                              std::move(class_names),
                                              MlpNetwork::from_json(p.at("layers")));
    }
    throw ContractError("invalid model kind");
}

inline std::unique_ptr<Model> load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model file '" + path + "' is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

/// Importance via the model's native mechanism: weights for linear models,
/// impurity decrease for trees and forests.
inline FeatureImportanceRanking native_importance(const Model& m) {
    switch (m.spec().kind) {
        case ModelKind::kLinear: return linear_importance(m);
        case ModelKind::kTree:
        case ModelKind::kForest: return forest_importance(m);
        default:
            throw ContractError("model kind '" + to_string(m.spec().kind) +
                                "' exposes no native feature importance");
    }
}

}  // namespace xai
