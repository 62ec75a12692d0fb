#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "xai/models.hpp"
#include "xai/prng.hpp"

namespace xai {
namespace detail {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> distribution;
};

struct Tree {
    std::vector<TreeNode> nodes;

    const TreeNode& leaf_for(const double* x) const {
        int idx = 0;
        while (nodes[static_cast<std::size_t>(idx)].feature >= 0) {
            const TreeNode& nd = nodes[static_cast<std::size_t>(idx)];
            idx = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(idx)];
    }

    int vote(const double* x) const {
        const std::vector<double>& dist = leaf_for(x).distribution;
        return static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& nd : nodes) {
            arr.push_back({{"feature", nd.feature},
                           {"threshold", nd.threshold},
                           {"left", nd.left},
                           {"right", nd.right},
                           {"distribution", nd.distribution}});
        }
        return arr;
    }

    static Tree from_json(const nlohmann::json& arr) {
        Tree t;
        for (const auto& j : arr) {
            TreeNode nd;
            nd.feature = j.at("feature").get<int>();
            nd.threshold = j.at("threshold").get<double>();
            nd.left = j.at("left").get<int>();
            nd.right = j.at("right").get<int>();
            nd.distribution = j.at("distribution").get<std::vector<double>>();
            t.nodes.push_back(std::move(nd));
        }
        return t;
    }
};

inline double gini(const std::vector<std::size_t>& counts, std::size_t total) {
    if (total == 0) return 0.0;
    double sum_sq = 0.0;
    for (std::size_t c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

/// Grows a CART classification tree on Gini impurity. Splits are
/// "x[f] <= threshold goes left"; the best split is chosen by largest
/// impurity decrease with ties resolved toward the lower feature index and
/// then the lower threshold. Weighted impurity decreases accumulate into
/// `importance` per split feature.
class TreeBuilder {
public:
    TreeBuilder(const Matrix& X, const std::vector<int>& y, std::size_t n_classes,
                int max_depth, std::size_t mtry, std::mt19937_64* rng,
                std::vector<double>& importance)
        : X_(X), y_(y), n_classes_(n_classes), max_depth_(max_depth), mtry_(mtry), rng_(rng),
          importance_(importance) {}

    Tree build(std::vector<std::size_t> rows) {
        Tree t;
        n_root_ = rows.size();
        grow(t, std::move(rows), 0);
        return t;
    }

private:
    int grow(Tree& t, std::vector<std::size_t> rows, int depth) {
        std::vector<std::size_t> counts(n_classes_, 0);
        for (std::size_t r : rows) counts[static_cast<std::size_t>(y_[r])]++;
        const double node_impurity = gini(counts, rows.size());

        const bool pure = node_impurity == 0.0;
        const bool depth_capped = max_depth_ > 0 && depth >= max_depth_;
        int best_feature = -1;
        double best_threshold = 0.0, best_decrease = 0.0;
        if (!pure && !depth_capped && rows.size() >= 2) {
            find_best_split(rows, node_impurity, best_feature, best_threshold, best_decrease);
        }

        std::vector<std::size_t> left_rows, right_rows;
        if (best_feature >= 0) {
            for (std::size_t r : rows) {
                if (X_.at(r, static_cast<std::size_t>(best_feature)) <= best_threshold) {
                    left_rows.push_back(r);
                } else {
                    right_rows.push_back(r);
                }
            }
            if (left_rows.empty() || right_rows.empty()) best_feature = -1;
        }

        const int idx = static_cast<int>(t.nodes.size());
        t.nodes.emplace_back();
        if (best_feature < 0) {
            std::vector<double>& dist = t.nodes[static_cast<std::size_t>(idx)].distribution;
            dist.resize(n_classes_);
            for (std::size_t c = 0; c < n_classes_; ++c) {
                dist[c] = static_cast<double>(counts[c]) / static_cast<double>(rows.size());
            }
            return idx;
        }

        importance_[static_cast<std::size_t>(best_feature)] +=
            static_cast<double>(rows.size()) / static_cast<double>(n_root_) * best_decrease;
        rows.clear();
        rows.shrink_to_fit();

        t.nodes[static_cast<std::size_t>(idx)].feature = best_feature;
        t.nodes[static_cast<std::size_t>(idx)].threshold = best_threshold;
        const int left = grow(t, std::move(left_rows), depth + 1);
        t.nodes[static_cast<std::size_t>(idx)].left = left;
        const int right = grow(t, std::move(right_rows), depth + 1);
        t.nodes[static_cast<std::size_t>(idx)].right = right;
        return idx;
    }

    void find_best_split(const std::vector<std::size_t>& rows, double node_impurity,
                         int& best_feature, double& best_threshold,
                         double& best_decrease) const {
        const std::size_t d = X_.cols();
        std::vector<std::size_t> candidates;
        if (mtry_ >= d) {
            candidates.resize(d);
            std::iota(candidates.begin(), candidates.end(), std::size_t{0});
        } else {
            std::vector<std::size_t> pool(d);
            std::iota(pool.begin(), pool.end(), std::size_t{0});
            for (std::size_t i = 0; i < mtry_; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, d - 1);
                std::swap(pool[i], pool[pick(*rng_)]);
            }
            candidates.assign(pool.begin(), pool.begin() + static_cast<long>(mtry_));
            std::sort(candidates.begin(), candidates.end());
        }

        const std::size_t n = rows.size();
        std::vector<std::pair<double, int>> values(n);
        std::vector<std::size_t> left_counts(n_classes_), right_counts(n_classes_);
        for (std::size_t f : candidates) {
            for (std::size_t i = 0; i < n; ++i) {
                values[i] = {X_.at(rows[i], f), y_[rows[i]]};
            }
            std::sort(values.begin(), values.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            if (values.front().first == values.back().first) continue;

            std::fill(left_counts.begin(), left_counts.end(), 0);
            std::fill(right_counts.begin(), right_counts.end(), 0);
            for (const auto& [v, label] : values) right_counts[static_cast<std::size_t>(label)]++;

            for (std::size_t i = 0; i + 1 < n; ++i) {
                const auto cls = static_cast<std::size_t>(values[i].second);
                left_counts[cls]++;
                right_counts[cls]--;
                if (values[i].first == values[i + 1].first) continue;
                const std::size_t n_left = i + 1, n_right = n - n_left;
                const double child =
                    (static_cast<double>(n_left) * gini(left_counts, n_left) +
                     static_cast<double>(n_right) * gini(right_counts, n_right)) /
                    static_cast<double>(n);
                const double decrease = node_impurity - child;
                if (decrease > best_decrease + 1e-12) {
                    best_decrease = decrease;
                    best_feature = static_cast<int>(f);
                    best_threshold = values[i].first + (values[i + 1].first - values[i].first) / 2.0;
                }
            }
        }
    }

    const Matrix& X_;
    const std::vector<int>& y_;
    std::size_t n_classes_;
    int max_depth_;
    std::size_t mtry_;
    std::mt19937_64* rng_;
    std::vector<double>& importance_;
    std::size_t n_root_ = 0;
};

}  // namespace detail

/// Single CART tree; probabilities are the training-class proportions of the
/// reached leaf.
class DecisionTreeModel : public Model {
public:
    DecisionTreeModel(const ModelSpec& spec, const Dataset& train_ds)
        : Model(spec, train_ds.feature_names, train_ds.class_names) {
        spec_.validate();
        check_trainable(train_ds);
        raw_importance_.assign(train_ds.n_features(), 0.0);
        std::vector<std::size_t> rows(train_ds.n_samples());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        detail::TreeBuilder builder(train_ds.X, train_ds.y, train_ds.n_classes(),
                                    spec.max_depth, train_ds.n_features(), nullptr,
                                    raw_importance_);
        tree_ = builder.build(std::move(rows));
    }

    DecisionTreeModel(ModelSpec spec, std::vector<std::string> feature_names,
                      std::vector<std::string> class_names, detail::Tree tree,
                      std::vector<double> raw_importance)
        : Model(std::move(spec), std::move(feature_names), std::move(class_names)),
          tree_(std::move(tree)),
          raw_importance_(std::move(raw_importance)) {}

    const detail::Tree& tree() const { return tree_; }
    const std::vector<double>& raw_importance() const { return raw_importance_; }

    nlohmann::json to_json() const override {
        return {{"version", 1},
                {"spec", spec_.to_json()},
                {"feature_names", feature_names_},
                {"class_names", class_names_},
                {"params", {{"nodes", tree_.to_json()}, {"raw_importance", raw_importance_}}}};
    }

protected:
    std::vector<double> proba(const double* x) const override {
        return tree_.leaf_for(x).distribution;
    }

private:
    detail::Tree tree_;
    std::vector<double> raw_importance_;
};

/// Bagged CART ensemble: bootstrap per tree, ceil(sqrt(d)) random candidate
/// features per split, majority-vote proportions as probabilities. Tree t
/// draws all randomness from a seed derived as "tree-t", so trees are
/// reproducible independent of training order.
class RandomForestModel : public Model {
public:
    RandomForestModel(const ModelSpec& spec, const Dataset& train_ds)
        : Model(spec, train_ds.feature_names, train_ds.class_names) {
        spec_.validate();
        check_trainable(train_ds);
        const std::size_t n = train_ds.n_samples();
        const std::size_t d = train_ds.n_features();
        const auto mtry = static_cast<std::size_t>(
            std::ceil(std::sqrt(static_cast<double>(d))));
        trees_.resize(static_cast<std::size_t>(spec.n_trees));
        tree_importances_.resize(trees_.size());
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            auto rng = make_rng(derive_seed(spec.seed, "tree-" + std::to_string(t)));
            std::vector<std::size_t> rows(n);
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (auto& r : rows) r = pick(rng);
            tree_importances_[t].assign(d, 0.0);
            detail::TreeBuilder builder(train_ds.X, train_ds.y, train_ds.n_classes(),
                                        spec.max_depth, mtry, &rng, tree_importances_[t]);
            trees_[t] = builder.build(std::move(rows));
        }
    }

    RandomForestModel(ModelSpec spec, std::vector<std::string> feature_names,
                      std::vector<std::string> class_names, std::vector<detail::Tree> trees,
                      std::vector<std::vector<double>> tree_importances)
        : Model(std::move(spec), std::move(feature_names), std::move(class_names)),
          trees_(std::move(trees)),
          tree_importances_(std::move(tree_importances)) {}

    const std::vector<detail::Tree>& trees() const { return trees_; }
    const std::vector<std::vector<double>>& tree_importances() const {
        return tree_importances_;
    }

    nlohmann::json to_json() const override {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& t : trees_) trees.push_back(t.to_json());
        return {{"version", 1},
                {"spec", spec_.to_json()},
                {"feature_names", feature_names_},
                {"class_names", class_names_},
                {"params",
                 {{"trees", std::move(trees)}, {"tree_importances", tree_importances_}}}};
    }

protected:
    std::vector<double> proba(const double* x) const override {
        std::vector<double> votes(class_names_.size(), 0.0);
        for (const auto& t : trees_) votes[static_cast<std::size_t>(t.vote(x))] += 1.0;
        for (double& v : votes) v /= static_cast<double>(trees_.size());
        return votes;
    }

private:
    std::vector<detail::Tree> trees_;
    std::vector<std::vector<double>> tree_importances_;
};

/// Per-feature Gini impurity decrease, averaged over trees and normalized to
/// sum 1 (all-zero totals stay zero).
inline FeatureImportanceRanking forest_importance(const Model& m) {
    std::vector<double> mean;
    if (const auto* tree = dynamic_cast<const DecisionTreeModel*>(&m)) {
        mean = tree->raw_importance();
    } else if (const auto* forest = dynamic_cast<const RandomForestModel*>(&m)) {
        mean.assign(m.feature_count(), 0.0);
        for (const auto& imp : forest->tree_importances()) {
            for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += imp[j];
        }
        for (double& v : mean) v /= static_cast<double>(forest->tree_importances().size());
    } else {
        throw ContractError("forest_importance requires a tree or forest model, got kind '" +
                            to_string(m.spec().kind) + "'");
    }
    double total = 0.0;
    for (double v : mean) total += v;
    if (total > 0.0) {
        for (double& v : mean) v /= total;
    }
    return detail::make_ranking(m.feature_names(), mean, "forest_impurity");
}

}  // namespace xai
