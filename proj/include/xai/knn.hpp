#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "xai/models.hpp"

namespace xai {

/// Lazy k-nearest-neighbor classifier: stores the training set verbatim and
/// votes among the k nearest rows by Euclidean distance. Distance ties break
/// toward the lower training index, vote ties toward the lower class index.
class KnnModel : public Model {
public:
    KnnModel(const ModelSpec& spec, const Dataset& train_ds)
        : Model(spec, train_ds.feature_names, train_ds.class_names),
          train_X_(train_ds.X),
          train_y_(train_ds.y) {
        spec_.validate();
        check_trainable(train_ds);
        if (static_cast<std::size_t>(spec.knn_k) > train_ds.n_samples())
            throw ConfigError("k = " + std::to_string(spec.knn_k) + " exceeds the " +
                              std::to_string(train_ds.n_samples()) + " training samples");
    }

    KnnModel(ModelSpec spec, std::vector<std::string> feature_names,
             std::vector<std::string> class_names, Matrix train_X, std::vector<int> train_y)
        : Model(std::move(spec), std::move(feature_names), std::move(class_names)),
          train_X_(std::move(train_X)),
          train_y_(std::move(train_y)) {}

    const Matrix& train_X() const { return train_X_; }
    const std::vector<int>& train_y() const { return train_y_; }

    nlohmann::json to_json() const override {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < train_X_.rows(); ++i) {
            rows.push_back(train_X_.row_vec(i));
        }
        return {{"version", 1},
                {"spec", spec_.to_json()},
                {"feature_names", feature_names_},
                {"class_names", class_names_},
                {"params", {{"train_X", std::move(rows)}, {"train_y", train_y_}}}};
    }

protected:
    std::vector<double> proba(const double* x) const override {
        const std::size_t n = train_X_.rows();
        const std::size_t d = feature_names_.size();
        std::vector<std::pair<double, std::size_t>> dist(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = train_X_.row(i);
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = x[j] - row[j];
                sq += diff * diff;
            }
            dist[i] = {sq, i};
        }
        const auto k = static_cast<std::size_t>(spec_.knn_k);
        std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
        std::vector<double> votes(class_names_.size(), 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            votes[static_cast<std::size_t>(train_y_[dist[i].second])] += 1.0;
        }
        for (double& v : votes) v /= static_cast<double>(k);
        return votes;
    }

private:
    Matrix train_X_;
    std::vector<int> train_y_;
};

}  // namespace xai
