#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xai/dataset.hpp"
#include "xai/errors.hpp"
#include "xai/matrix.hpp"
#include "xai/models.hpp"
#include "xai/prng.hpp"

namespace xai {

struct PerturbationConfig {
    std::size_t n_samples = 5000;
    double noise_scale = 1.0;
    /// 0 means "pick the default of 0.75 * sqrt(n_features)".
    double kernel_width = 0.0;
    std::size_t top_k = 10;
    double ridge_lambda = 1.0;
    std::uint64_t seed = 0;

    double resolved_kernel_width(std::size_t n_features) const {
        if (kernel_width > 0.0) return kernel_width;
        return 0.75 * std::sqrt(static_cast<double>(n_features));
    }

    void validate_perturbation() const {
        if (n_samples < 10)
            throw ConfigError("perturbation needs at least 10 samples");
        if (kernel_width < 0.0)
            throw ConfigError("kernel width must be positive");
        if (noise_scale < 0.0)
            throw ConfigError("noise scale cannot be negative");
    }

    void validate(std::size_t n_features) const {
        validate_perturbation();
        if (top_k < 1 || top_k > n_features)
            throw ConfigError("top_k must lie in [1, " + std::to_string(n_features) +
                              "], got " + std::to_string(top_k));
        if (ridge_lambda < 0.0)
            throw ConfigError("ridge lambda cannot be negative");
    }

    nlohmann::json to_json() const {
        return {{"n_samples", n_samples},   {"noise_scale", noise_scale},
                {"kernel_width", kernel_width}, {"top_k", top_k},
                {"ridge_lambda", ridge_lambda}, {"seed", seed}};
    }

    static PerturbationConfig from_json(const nlohmann::json& j) {
        PerturbationConfig cfg;
        cfg.n_samples = j.value("n_samples", cfg.n_samples);
        cfg.noise_scale = j.value("noise_scale", cfg.noise_scale);
        cfg.kernel_width = j.value("kernel_width", cfg.kernel_width);
        cfg.top_k = j.value("top_k", cfg.top_k);
        cfg.ridge_lambda = j.value("ridge_lambda", cfg.ridge_lambda);
        cfg.seed = j.value("seed", cfg.seed);
        return cfg;
    }
};

struct Neighborhood {
    Matrix X;
    std::vector<double> distances;
};

/// Gaussian neighbors of x with per-feature scale noise_scale * stddev.
/// Row 0 is x itself; distances are Euclidean after dividing each feature
/// difference by its training stddev.
inline Neighborhood perturb_samples(const std::vector<double>& x,
                                    const StandardizerParams& stats,
                                    const PerturbationConfig& cfg) {
    const std::size_t n = x.size();
    if (stats.stddevs.size() != n)
        throw ContractError("feature stats do not match the sample's dimension");
    cfg.validate_perturbation();
    if (std::all_of(stats.stddevs.begin(), stats.stddevs.end(),
                    [](double s) { return s == 0.0; }))
        throw DataError("degenerate neighborhood: every feature has zero variance");

    auto rng = make_rng(derive_seed(cfg.seed, "lime-perturb"));
    std::normal_distribution<double> unit(0.0, 1.0);
    Neighborhood out;
    out.X = Matrix(cfg.n_samples, n);
    out.distances.assign(cfg.n_samples, 0.0);
    for (std::size_t j = 0; j < n; ++j) out.X.at(0, j) = x[j];
    for (std::size_t r = 1; r < cfg.n_samples; ++r) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double scale = cfg.noise_scale * stats.stddevs[j];
            const double eps = scale == 0.0 ? 0.0 : scale * unit(rng);
            out.X.at(r, j) = x[j] + eps;
            const double div = stats.stddevs[j] == 0.0 ? 1.0 : stats.stddevs[j];
            const double z = eps / div;
            d2 += z * z;
        }
        out.distances[r] = std::sqrt(d2);
    }
    return out;
}

/// w = exp(-d^2 / width^2); 1 at distance zero, strictly decreasing.
inline std::vector<double> proximity_weights(const std::vector<double>& distances,
                                             double kernel_width) {
    if (kernel_width <= 0.0) throw ConfigError("kernel width must be positive");
    std::vector<double> w(distances.size());
    for (std::size_t i = 0; i < distances.size(); ++i) {
        w[i] = std::exp(-(distances[i] * distances[i]) / (kernel_width * kernel_width));
    }
    return w;
}

struct SurrogateFit {
    double intercept = 0.0;
    std::vector<std::pair<std::size_t, double>> coefficients;
    double fidelity = 0.0;
};

namespace detail {

/// Gaussian elimination with partial pivoting on a dense square system.
inline std::vector<double> solve_linear(std::vector<std::vector<double>> a,
                                        std::vector<double> b) {
    const std::size_t m = b.size();
    double scale = 0.0;
    for (const auto& row : a) {
        for (double v : row) scale = std::max(scale, std::abs(v));
    }
    for (std::size_t col = 0; col < m; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < m; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) <= 1e-12 * std::max(scale, 1.0))
            throw NumericalError("singular weighted design in the ridge solve");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < m; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < m; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> sol(m, 0.0);
    for (std::size_t r = m; r-- > 0;) {
        double v = b[r];
        for (std::size_t c = r + 1; c < m; ++c) v -= a[r][c] * sol[c];
        sol[r] = v / a[r][r];
    }
    return sol;
}

}  // namespace detail

/// Weighted ridge fit of outputs on the top_k features ranked by absolute
/// weighted covariance with the output. The intercept is unpenalized.
inline SurrogateFit fit_surrogate(const Matrix& neighbors,
                                  const std::vector<double>& outputs,
                                  const std::vector<double>& weights,
                                  const PerturbationConfig& cfg) {
    const std::size_t m = neighbors.rows();
    const std::size_t n = neighbors.cols();
    if (outputs.size() != m || weights.size() != m)
        throw ContractError("neighbors, outputs, and weights must align");
    cfg.validate(n);

    std::size_t effective = 0;
    for (double w : weights) {
        if (w > 0.0) ++effective;
    }
    if (effective < cfg.top_k + 2)
        throw DataError("too few weighted neighbors to fit a surrogate: have " +
                        std::to_string(effective) + ", need " +
                        std::to_string(cfg.top_k + 2));

    bool varied = false;
    for (std::size_t j = 0; j < n && !varied; ++j) {
        double lo = 0.0, hi = 0.0;
        bool first = true;
        for (std::size_t r = 0; r < m; ++r) {
            if (weights[r] <= 0.0) continue;
            const double v = neighbors.at(r, j);
            if (first) {
                lo = hi = v;
                first = false;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        varied = hi > lo;
    }
    if (!varied)
        throw DataError("degenerate neighborhood: all weighted neighbors coincide");

    const double w_sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<double> x_mean(n, 0.0);
    double y_mean = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        y_mean += weights[r] * outputs[r];
        for (std::size_t j = 0; j < n; ++j) x_mean[j] += weights[r] * neighbors.at(r, j);
    }
    y_mean /= w_sum;
    for (double& v : x_mean) v /= w_sum;

    std::vector<std::pair<double, std::size_t>> ranked(n);
    for (std::size_t j = 0; j < n; ++j) {
        double cov = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            cov += weights[r] * (neighbors.at(r, j) - x_mean[j]) * (outputs[r] - y_mean);
        }
        ranked[j] = {std::abs(cov / w_sum), j};
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::size_t> selected;
    for (std::size_t j = 0; j < cfg.top_k; ++j) selected.push_back(ranked[j].second);
    std::sort(selected.begin(), selected.end());

    const std::size_t k = selected.size();
    std::vector<std::vector<double>> a(k + 1, std::vector<double>(k + 1, 0.0));
    std::vector<double> b(k + 1, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        const double w = weights[r];
        if (w <= 0.0) continue;
        std::vector<double> z(k + 1, 1.0);
        for (std::size_t j = 0; j < k; ++j) z[j + 1] = neighbors.at(r, selected[j]);
        for (std::size_t p = 0; p <= k; ++p) {
            b[p] += w * z[p] * outputs[r];
            for (std::size_t q = 0; q <= k; ++q) a[p][q] += w * z[p] * z[q];
        }
    }
    for (std::size_t j = 1; j <= k; ++j) a[j][j] += cfg.ridge_lambda;

    const std::vector<double> beta = detail::solve_linear(a, b);

    SurrogateFit fit;
    fit.intercept = beta[0];
    for (std::size_t j = 0; j < k; ++j) {
        fit.coefficients.emplace_back(selected[j], beta[j + 1]);
    }

    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        double pred = fit.intercept;
        for (std::size_t j = 0; j < k; ++j) {
            pred += beta[j + 1] * neighbors.at(r, selected[j]);
        }
        ss_res += weights[r] * (outputs[r] - pred) * (outputs[r] - pred);
        ss_tot += weights[r] * (outputs[r] - y_mean) * (outputs[r] - y_mean);
    }
    fit.fidelity = ss_tot <= 1e-18 ? 0.0 : 1.0 - ss_res / ss_tot;
    return fit;
}

struct Contribution {
    std::string feature;
    double weight = 0.0;
};

struct LocalExplanation {
    int target_class = 0;
    std::string class_name;
    double intercept = 0.0;
    std::vector<Contribution> contributions;
    double local_prediction = 0.0;
    double black_box_prediction = 0.0;
    double fidelity = 0.0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        nlohmann::json contribs = nlohmann::json::array();
        for (const auto& c : contributions) {
            contribs.push_back({{"feature", c.feature}, {"weight", c.weight}});
        }
        return {{"class", class_name},
                {"intercept", intercept},
                {"contributions", std::move(contribs)},
                {"fidelity", fidelity},
                {"black_box_prediction", black_box_prediction},
                {"seed", seed}};
    }

    static LocalExplanation from_json(const nlohmann::json& j) {
        LocalExplanation e;
        e.target_class = -1;
        e.class_name = j.at("class").get<std::string>();
        e.intercept = j.at("intercept").get<double>();
        for (const auto& c : j.at("contributions")) {
            e.contributions.push_back(
                {c.at("feature").get<std::string>(), c.at("weight").get<double>()});
        }
        e.fidelity = j.at("fidelity").get<double>();
        e.black_box_prediction = j.at("black_box_prediction").get<double>();
        e.seed = j.at("seed").get<std::uint64_t>();
        return e;
    }
};

/// Full local pipeline: perturb, query the model, weight by proximity, fit
/// the sparse surrogate. Positive weight pushes toward target_class locally.
inline LocalExplanation explain_instance(const Model& model, const std::vector<double>& x,
                                         int target_class, const PerturbationConfig& cfg,
                                         const StandardizerParams& stats) {
    const std::size_t n = model.feature_count();
    if (x.size() != n)
        throw ContractError("sample has " + std::to_string(x.size()) +
                            " features, model expects " + std::to_string(n));
    if (target_class < 0 || static_cast<std::size_t>(target_class) >= model.class_count())
        throw ContractError("target class " + std::to_string(target_class) +
                            " is out of range");
    if (stats.feature_names != model.feature_names())
        throw ConfigError("feature stats were fitted on different features");
    cfg.validate(n);

    const Neighborhood hood = perturb_samples(x, stats, cfg);
    std::vector<double> outputs(hood.X.rows());
    for (std::size_t r = 0; r < hood.X.rows(); ++r) {
        outputs[r] =
            model.predict_proba(hood.X.row(r), n)[static_cast<std::size_t>(target_class)];
    }
    const std::vector<double> weights =
        proximity_weights(hood.distances, cfg.resolved_kernel_width(n));
    const SurrogateFit fit = fit_surrogate(hood.X, outputs, weights, cfg);

    LocalExplanation out;
    out.target_class = target_class;
    out.class_name = model.class_names()[static_cast<std::size_t>(target_class)];
    out.intercept = fit.intercept;
    out.fidelity = fit.fidelity;
    out.seed = cfg.seed;
    out.black_box_prediction = outputs[0];
    out.local_prediction = fit.intercept;
    for (const auto& [idx, coef] : fit.coefficients) {
        out.contributions.push_back({model.feature_names()[idx], coef});
        out.local_prediction += coef * x[idx];
    }
    std::stable_sort(out.contributions.begin(), out.contributions.end(),
                     [](const Contribution& a, const Contribution& b) {
                         return std::abs(a.weight) > std::abs(b.weight);
                     });
    return out;
}

}  // namespace xai
