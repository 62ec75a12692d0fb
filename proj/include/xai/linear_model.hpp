#pragma once

#include <cmath>
#include <vector>

#include "xai/models.hpp"
#include "xai/prng.hpp"

namespace xai {

/// One-vs-rest linear classifier trained by per-sample subgradient descent on
/// hinge or logistic loss with L2 regularization on the weights (bias
/// unregularized). Probabilities come from a softmax over the class scores.
class LinearModel : public Model {
public:
    LinearModel(const ModelSpec& spec, const Dataset& train_ds)
        : Model(spec, train_ds.feature_names, train_ds.class_names) {
        spec_.validate();
        check_trainable(train_ds);
        const std::size_t n = train_ds.n_samples();
        const std::size_t d = train_ds.n_features();
        const std::size_t c = train_ds.n_classes();
        weights_.assign(c, std::vector<double>(d, 0.0));
        biases_.assign(c, 0.0);

        auto rng = make_rng(derive_seed(spec.seed, "linear"));
        const double lr = spec.linear_learning_rate;
        const double lambda = spec.lambda;
        for (int epoch = 0; epoch < spec.linear_epochs; ++epoch) {
            const std::vector<std::size_t> order = shuffled_indices(n, rng);
            for (std::size_t i : order) {
                const double* x = train_ds.X.row(i);
                for (std::size_t cls = 0; cls < c; ++cls) {
                    const double t = train_ds.y[i] == static_cast<int>(cls) ? 1.0 : -1.0;
                    std::vector<double>& w = weights_[cls];
                    double z = biases_[cls];
                    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
                    double pull = 0.0;  // coefficient on t*x in the loss gradient
                    if (spec.loss == LinearLoss::kHinge) {
                        if (t * z < 1.0) pull = 1.0;
                    } else {
                        pull = 1.0 / (1.0 + std::exp(t * z));
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        w[j] -= lr * (lambda * w[j] - pull * t * x[j]);
                    }
                    biases_[cls] += lr * pull * t;
                }
            }
        }
    }

    LinearModel(ModelSpec spec, std::vector<std::string> feature_names,
                std::vector<std::string> class_names,
                std::vector<std::vector<double>> weights, std::vector<double> biases)
        : Model(std::move(spec), std::move(feature_names), std::move(class_names)),
          weights_(std::move(weights)),
          biases_(std::move(biases)) {}

    const std::vector<std::vector<double>>& weights() const { return weights_; }
    const std::vector<double>& biases() const { return biases_; }

    /// Mean hinge loss plus the L2 penalty, for convergence checks.
    double hinge_objective(const Dataset& ds) const {
        double total = 0.0;
        for (std::size_t i = 0; i < ds.n_samples(); ++i) {
            const double* x = ds.X.row(i);
            for (std::size_t cls = 0; cls < weights_.size(); ++cls) {
                const double t = ds.y[i] == static_cast<int>(cls) ? 1.0 : -1.0;
                double z = biases_[cls];
                for (std::size_t j = 0; j < ds.n_features(); ++j) z += weights_[cls][j] * x[j];
                total += std::max(0.0, 1.0 - t * z);
            }
        }
        return total / static_cast<double>(ds.n_samples());
    }

    nlohmann::json to_json() const override {
        return {{"version", 1},
                {"spec", spec_.to_json()},
                {"feature_names", feature_names_},
                {"class_names", class_names_},
                {"params", {{"weights", weights_}, {"biases", biases_}}}};
    }

protected:
    std::vector<double> proba(const double* x) const override {
        std::vector<double> z(weights_.size());
        for (std::size_t cls = 0; cls < weights_.size(); ++cls) {
            double s = biases_[cls];
            for (std::size_t j = 0; j < feature_names_.size(); ++j) s += weights_[cls][j] * x[j];
            z[cls] = s;
        }
        detail::softmax_inplace(z);
        return z;
    }

private:
    std::vector<std::vector<double>> weights_;
    std::vector<double> biases_;
};

/// Mean over classes of |w_{c,i}| per feature, sorted descending.
inline FeatureImportanceRanking linear_importance(const Model& m) {
    const auto* lin = dynamic_cast<const LinearModel*>(&m);
    if (lin == nullptr)
        throw ContractError("linear_importance requires a linear model, got kind '" +
                            to_string(m.spec().kind) + "'");
    const std::size_t d = lin->feature_count();
    std::vector<double> scores(d, 0.0);
    for (const auto& w : lin->weights()) {
        for (std::size_t j = 0; j < d; ++j) scores[j] += std::abs(w[j]);
    }
    for (double& s : scores) s /= static_cast<double>(lin->weights().size());
    return detail::make_ranking(lin->feature_names(), scores, "linear_weights");
}

}  // namespace xai
