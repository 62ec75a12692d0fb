#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "xai/model_zoo.hpp"

namespace xai {

struct RfePoint {
    std::size_t size = 0;
    double accuracy = 0.0;
};

struct RfeResult {
    // Original-column indices of the features alive at the smallest target,
    // in descending importance order.
    std::vector<std::size_t> selected;
    FeatureImportanceRanking ranking;
    std::vector<RfePoint> curve;

    nlohmann::json to_json() const {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : curve) pts.push_back({{"size", p.size}, {"accuracy", p.accuracy}});
        return {{"selected", selected}, {"ranking", ranking.to_json()}, {"curve", pts}};
    }
};

/// Recursive feature elimination: repeatedly trains, ranks features by the
/// model's native importance, and drops the weakest ceil(remaining * 0.2)
/// (at least 1, never past the next target). Holdout accuracy is recorded at
/// every target size, largest first.
inline RfeResult rfe_select(const Dataset& ds, const ModelSpec& model_spec,
                            const std::vector<std::size_t>& target_sizes,
                            std::uint64_t seed) {
    if (model_spec.kind != ModelKind::kLinear && model_spec.kind != ModelKind::kTree &&
        model_spec.kind != ModelKind::kForest) {
        throw ConfigError("feature elimination needs a model with native importances "
                          "(linear, tree, or forest), got '" +
                          to_string(model_spec.kind) + "'");
    }
    if (target_sizes.empty()) throw ConfigError("at least one target size is required");
    std::set<std::size_t, std::greater<>> targets;
    for (std::size_t t : target_sizes) {
        if (t < 1) throw ConfigError("target size must be >= 1");
        if (t > ds.n_features())
            throw ConfigError("target size " + std::to_string(t) + " exceeds the " +
                              std::to_string(ds.n_features()) + " available features");
        targets.insert(t);
    }

    const SplitPlan plan = stratified_holdout(ds, 0.8, derive_seed(seed, "rfe-split"));
    const Dataset train_all = subset_rows(ds, plan.train_indices());
    const Dataset test_all = subset_rows(ds, plan.test_indices());

    std::vector<std::size_t> current(ds.n_features());
    std::iota(current.begin(), current.end(), std::size_t{0});

    RfeResult result;
    int step = 0;
    auto train_ranked = [&](const std::vector<std::size_t>& cols) {
        ModelSpec spec = model_spec;
        spec.seed = derive_seed(seed, "rfe-step-" + std::to_string(step++));
        const Dataset train = select_features(train_all, cols);
        const Dataset test = select_features(test_all, cols);
        auto model = train_model(spec, train);
        const double acc = evaluate(*model, test, Averaging::kWeighted).accuracy;
        return std::make_pair(native_importance(*model), acc);
    };

    for (std::size_t target : targets) {
        while (current.size() > target) {
            auto [ranking, acc] = train_ranked(current);
            (void)acc;
            std::size_t drop = static_cast<std::size_t>(
                std::ceil(static_cast<double>(current.size()) * 0.2));
            drop = std::max<std::size_t>(drop, 1);
            drop = std::min(drop, current.size() - target);
            // Survivors keep importance order; map names back to original columns.
            const std::size_t keep = ranking.entries.size() - drop;
            std::vector<std::size_t> next;
            next.reserve(keep);
            for (std::size_t i = 0; i < keep; ++i) {
                next.push_back(ds.feature_index(ranking.entries[i].feature_name));
            }
            current = std::move(next);
        }
        auto [ranking, acc] = train_ranked(current);
        result.curve.push_back({target, acc});
        result.ranking = ranking;
        std::vector<std::size_t> ordered;
        ordered.reserve(ranking.entries.size());
        for (const auto& e : ranking.entries) ordered.push_back(ds.feature_index(e.feature_name));
        result.selected = std::move(ordered);
        current = result.selected;
    }
    return result;
}

}  // namespace xai
