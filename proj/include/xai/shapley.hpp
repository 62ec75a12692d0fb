#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "xai/dataset.hpp"
#include "xai/errors.hpp"
#include "xai/matrix.hpp"
#include "xai/models.hpp"
#include "xai/prng.hpp"

namespace xai {

/// Bitmask over feature indices; bit j set means feature j is present.
using Coalition = std::uint64_t;

inline constexpr std::size_t kRetrainFeatureCap = 20;
inline constexpr std::size_t kSubsetFeatureCap = 20;
inline constexpr std::size_t kPermutationFeatureCap = 10;
inline constexpr std::size_t kMaxBackgroundRows = 256;

enum class VfMode { kRetrain, kMarginal, kCustom };

inline std::string to_string(VfMode m) {
    switch (m) {
        case VfMode::kRetrain: return "RETRAIN";
        case VfMode::kMarginal: return "MARGINAL";
        case VfMode::kCustom: return "CUSTOM";
    }
    throw ContractError("invalid value-function mode");
}

/// Coalition value v(S, x): the model's restricted output when only the
/// features in S carry information from x.
class ValueFunction {
public:
    virtual ~ValueFunction() = default;

    std::size_t n() const { return n_; }
    virtual VfMode mode() const = 0;
    virtual double value(Coalition s, const std::vector<double>& x) const = 0;

    /// v(empty set); sample-independent in every mode.
    virtual double base_value() const = 0;

    /// One stochastic estimate of v(S+i, x) - v(S, x). The default is the
    /// deterministic difference; MARGINAL pairs both sides with a single
    /// random background row instead.
    virtual double draw_marginal(Coalition s, std::size_t i, const std::vector<double>& x,
                                 std::mt19937_64& rng) const {
        (void)rng;
        return value(s | (Coalition{1} << i), x) - value(s, x);
    }

protected:
    explicit ValueFunction(std::size_t n) : n_(n) {
        if (n == 0) throw ContractError("a value function needs at least one feature");
        if (n > 64) throw FeasibilityError("coalition bitmasks support at most 64 features");
    }

    void check_input(Coalition s, const std::vector<double>& x) const {
        if (x.size() != n_)
            throw ContractError("sample has " + std::to_string(x.size()) +
                                " features, value function expects " + std::to_string(n_));
        if (n_ < 64 && (s >> n_) != 0)
            throw ContractError("coalition has bits beyond the feature count");
    }

private:
    std::size_t n_;
};

/// The literal definition: v(S, x) is the output of a model retrained on the
/// feature subset S, and v(empty, x) = 0. Each coalition trains at most
/// once; concurrent requests for the same coalition share one training.
class RetrainValueFunction : public ValueFunction {
public:
    using ModelFactory = std::function<std::unique_ptr<Model>(const Dataset&)>;

    RetrainValueFunction(ModelFactory factory, Dataset train_ds, TargetSelector selector)
        : ValueFunction(train_ds.n_features()),
          factory_(std::move(factory)),
          train_ds_(std::move(train_ds)),
          selector_(selector) {
        if (n() > kRetrainFeatureCap)
            throw FeasibilityError(
                "RETRAIN over " + std::to_string(n()) + " features needs 2^" +
                std::to_string(n()) +
                " trainings (cap " + std::to_string(kRetrainFeatureCap) +
                "); reduce features with RFE or switch to MARGINAL");
    }

    VfMode mode() const override { return VfMode::kRetrain; }
    double base_value() const override { return 0.0; }

    double value(Coalition s, const std::vector<double>& x) const override {
        check_input(s, x);
        if (s == 0) return 0.0;
        const std::shared_ptr<const Model> model = model_for(s);
        std::vector<double> x_sub;
        for (std::size_t j = 0; j < n(); ++j) {
            if (s & (Coalition{1} << j)) x_sub.push_back(x[j]);
        }
        return selector_.select(model->predict_proba(x_sub));
    }

    std::size_t trained_coalitions() const {
        std::lock_guard<std::mutex> lock(mu_);
        return cache_.size();
    }

private:
    std::shared_ptr<const Model> model_for(Coalition s) const {
        std::shared_future<std::shared_ptr<const Model>> fut;
        std::shared_ptr<std::promise<std::shared_ptr<const Model>>> mine;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = cache_.find(s);
            if (it == cache_.end()) {
                mine = std::make_shared<std::promise<std::shared_ptr<const Model>>>();
                fut = mine->get_future().share();
                cache_.emplace(s, fut);
            } else {
                fut = it->second;
            }
        }
        if (mine != nullptr) {
            try {
                std::vector<std::size_t> cols;
                for (std::size_t j = 0; j < n(); ++j) {
                    if (s & (Coalition{1} << j)) cols.push_back(j);
                }
                mine->set_value(factory_(select_features(train_ds_, cols)));
            } catch (...) {
                mine->set_exception(std::current_exception());
            }
        }
        return fut.get();
    }

    ModelFactory factory_;
    Dataset train_ds_;
    TargetSelector selector_;
    mutable std::mutex mu_;
    mutable std::unordered_map<Coalition, std::shared_future<std::shared_ptr<const Model>>>
        cache_;
};

/// Expectation semantics: features outside S are replaced by background-row
/// values and the model output is averaged over the background set.
class MarginalValueFunction : public ValueFunction {
public:
    MarginalValueFunction(std::shared_ptr<const Model> model, const Matrix& background,
                          TargetSelector selector)
        : ValueFunction(model == nullptr ? 0 : model->feature_count()),
          model_(std::move(model)),
          selector_(selector) {
        if (background.rows() == 0)
            throw ConfigError("MARGINAL value function needs a non-empty background set");
        if (background.cols() != n())
            throw ContractError("background columns do not match the model's features");
        const std::size_t rows = std::min(background.rows(), kMaxBackgroundRows);
        background_ = Matrix(rows, background.cols());
        for (std::size_t r = 0; r < rows; ++r) {
            const double* src = background.row(r);
            std::copy(src, src + background.cols(), background_.row(r));
        }
        double total = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            total += selector_.select_from(*model_, background_.row(r), n());
        }
        base_ = total / static_cast<double>(rows);
    }

    VfMode mode() const override { return VfMode::kMarginal; }
    double base_value() const override { return base_; }
    const Matrix& background() const { return background_; }

    double value(Coalition s, const std::vector<double>& x) const override {
        check_input(s, x);
        const Coalition full = n() == 64 ? ~Coalition{0} : (Coalition{1} << n()) - 1;
        if (s == full) return selector_.select_from(*model_, x.data(), n());
        if (s == 0) return base_;
        double total = 0.0;
        std::vector<double> z(n());
        for (std::size_t r = 0; r < background_.rows(); ++r) {
            compose(s, x, background_.row(r), z);
            total += selector_.select(model_->predict_proba(z));
        }
        return total / static_cast<double>(background_.rows());
    }

    double draw_marginal(Coalition s, std::size_t i, const std::vector<double>& x,
                         std::mt19937_64& rng) const override {
        check_input(s, x);
        std::uniform_int_distribution<std::size_t> pick(0, background_.rows() - 1);
        const double* b = background_.row(pick(rng));
        std::vector<double> z(n());
        compose(s | (Coalition{1} << i), x, b, z);
        const double with_i = selector_.select(model_->predict_proba(z));
        compose(s, x, b, z);
        return with_i - selector_.select(model_->predict_proba(z));
    }

private:
    void compose(Coalition s, const std::vector<double>& x, const double* b,
                 std::vector<double>& z) const {
        for (std::size_t j = 0; j < n(); ++j) {
            z[j] = (s & (Coalition{1} << j)) ? x[j] : b[j];
        }
    }

    std::shared_ptr<const Model> model_;
    TargetSelector selector_;
    Matrix background_;
    double base_ = 0.0;
};

/// Arbitrary game for tests and axiom checks.
class CustomValueFunction : public ValueFunction {
public:
    using Game = std::function<double(Coalition, const std::vector<double>&)>;

    CustomValueFunction(std::size_t n, Game game)
        : ValueFunction(n), game_(std::move(game)) {
        base_ = game_(0, std::vector<double>(n, 0.0));
    }

    VfMode mode() const override { return VfMode::kCustom; }
    double base_value() const override { return base_; }

    double value(Coalition s, const std::vector<double>& x) const override {
        check_input(s, x);
        return game_(s, x);
    }

private:
    Game game_;
    double base_ = 0.0;
};

namespace detail {

inline double binomial(std::size_t n, std::size_t k) {
    double result = 1.0;
    for (std::size_t j = 1; j <= k; ++j) {
        result = result * static_cast<double>(n - k + j) / static_cast<double>(j);
    }
    return result;
}

using CoalitionMemo = std::unordered_map<Coalition, double>;

inline double memo_value(const ValueFunction& vf, Coalition s, const std::vector<double>& x,
                         CoalitionMemo* memo) {
    if (memo == nullptr) return vf.value(s, x);
    const auto it = memo->find(s);
    if (it != memo->end()) return it->second;
    const double v = vf.value(s, x);
    memo->emplace(s, v);
    return v;
}

inline void check_feature_index(const ValueFunction& vf, std::size_t i) {
    if (i >= vf.n())
        throw ContractError("feature index " + std::to_string(i) +
                            " is out of range for " + std::to_string(vf.n()) + " features");
}

inline double exact_subsets_impl(const ValueFunction& vf, const std::vector<double>& x,
                                 std::size_t i, CoalitionMemo* memo) {
    check_feature_index(vf, i);
    const std::size_t n = vf.n();
    if (n > kSubsetFeatureCap)
        throw FeasibilityError("exact subset enumeration over " + std::to_string(n) +
                               " features exceeds the cap of " +
                               std::to_string(kSubsetFeatureCap) +
                               "; use the montecarlo method");
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j) {
        if (j != i) others.push_back(j);
    }
    const Coalition i_bit = Coalition{1} << i;
    double phi = 0.0;
    const Coalition subsets = Coalition{1} << others.size();
    for (Coalition mask = 0; mask < subsets; ++mask) {
        Coalition s = 0;
        std::size_t size = 0;
        for (std::size_t b = 0; b < others.size(); ++b) {
            if (mask & (Coalition{1} << b)) {
                s |= Coalition{1} << others[b];
                ++size;
            }
        }
        const double gain =
            memo_value(vf, s | i_bit, x, memo) - memo_value(vf, s, x, memo);
        phi += gain / binomial(n - 1, size);
    }
    return phi / static_cast<double>(n);
}

inline double exact_permutations_impl(const ValueFunction& vf, const std::vector<double>& x,
                                      std::size_t i, CoalitionMemo* memo) {
    check_feature_index(vf, i);
    const std::size_t n = vf.n();
    if (n > kPermutationFeatureCap)
        throw FeasibilityError("permutation enumeration over " + std::to_string(n) +
                               " features exceeds the cap of " +
                               std::to_string(kPermutationFeatureCap) +
                               "; use the subsets or montecarlo method");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    const Coalition i_bit = Coalition{1} << i;
    double total = 0.0;
    std::size_t count = 0;
    do {
        Coalition before = 0;
        for (std::size_t p : perm) {
            if (p == i) break;
            before |= Coalition{1} << p;
        }
        total += memo_value(vf, before | i_bit, x, memo) - memo_value(vf, before, x, memo);
        ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return total / static_cast<double>(count);
}

}  // namespace detail

/// Subset form: Phi_i = (1/n) * sum over the 2^(n-1) coalitions S excluding
/// i of (v(S+i, x) - v(S, x)) / C(n-1, |S|).
inline double shapley_exact_subsets(const ValueFunction& vf, const std::vector<double>& x,
                                    std::size_t i) {
    return detail::exact_subsets_impl(vf, x, i, nullptr);
}

/// Permutation form: Phi_i = (1/n!) * sum over all n! orderings of the
/// marginal contribution of i over its predecessors.
inline double shapley_exact_permutations(const ValueFunction& vf,
                                         const std::vector<double>& x, std::size_t i) {
    return detail::exact_permutations_impl(vf, x, i, nullptr);
}

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    int draws = 0;
};

/// Averages marginal contributions over K random permutations; under
/// MARGINAL each draw pairs with one random background row.
inline McEstimate shapley_montecarlo(const ValueFunction& vf, const std::vector<double>& x,
                                     std::size_t i, int draws, std::uint64_t seed) {
    detail::check_feature_index(vf, i);
    if (draws < 2) throw ConfigError("monte-carlo needs at least 2 draws");
    auto rng = make_rng(seed);
    const std::size_t n = vf.n();
    double sum = 0.0, sum_sq = 0.0;
    for (int k = 0; k < draws; ++k) {
        const std::vector<std::size_t> perm = shuffled_indices(n, rng);
        Coalition before = 0;
        for (std::size_t p : perm) {
            if (p == i) break;
            before |= Coalition{1} << p;
        }
        const double contribution = vf.draw_marginal(before, i, x, rng);
        sum += contribution;
        sum_sq += contribution * contribution;
    }
    McEstimate est;
    est.draws = draws;
    est.estimate = sum / draws;
    const double var =
        std::max(0.0, (sum_sq - sum * sum / draws) / static_cast<double>(draws - 1));
    est.std_error = std::sqrt(var / draws);
    return est;
}

enum class ShapleyMethod { kExactSubsets, kExactPermutations, kMonteCarlo };

inline std::string to_string(ShapleyMethod m) {
    switch (m) {
        case ShapleyMethod::kExactSubsets: return "subsets";
        case ShapleyMethod::kExactPermutations: return "permutations";
        case ShapleyMethod::kMonteCarlo: return "montecarlo";
    }
    throw ContractError("invalid shapley method");
}

inline ShapleyMethod shapley_method_from_string(const std::string& s) {
    if (s == "subsets" || s == "exact-subsets") return ShapleyMethod::kExactSubsets;
    if (s == "permutations" || s == "exact-permutations")
        return ShapleyMethod::kExactPermutations;
    if (s == "montecarlo") return ShapleyMethod::kMonteCarlo;
    throw ConfigError("unknown shapley method '" + s + "'");
}

struct ShapleyParams {
    ShapleyMethod method = ShapleyMethod::kExactSubsets;
    int mc_draws = 2000;
    std::uint64_t seed = 0;
};

/// Per-sample rows of Shapley values, one column per feature.
struct ShapleyMatrix {
    Matrix phi;
    double base_value = 0.0;
    std::vector<std::string> sample_ids;
    std::vector<std::string> feature_names;
    std::string mode;
    std::string method;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < phi.rows(); ++r) rows.push_back(phi.row_vec(r));
        return {{"base_value", base_value}, {"feature_names", feature_names},
                {"phi", std::move(rows)},   {"mode", mode},
                {"method", method},         {"seed", seed}};
    }

    static ShapleyMatrix from_json(const nlohmann::json& j) {
        ShapleyMatrix m;
        m.base_value = j.at("base_value").get<double>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.mode = j.at("mode").get<std::string>();
        m.method = j.at("method").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        const auto& rows = j.at("phi");
        m.phi = Matrix(rows.size(), m.feature_names.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto row = rows[r].get<std::vector<double>>();
            if (row.size() != m.phi.cols())
                throw DataError("phi row width does not match the feature names");
            std::copy(row.begin(), row.end(), m.phi.row(r));
        }
        for (std::size_t r = 0; r < rows.size(); ++r) {
            m.sample_ids.push_back(std::to_string(r));
        }
        return m;
    }
};

/// Computes one Phi row per sample row. Monte-Carlo entries derive an
/// independent seed per (row, feature) so any evaluation order gives
/// bit-identical output.
inline ShapleyMatrix shapley_matrix(const ValueFunction& vf, const Matrix& samples,
                                    const std::vector<std::string>& feature_names,
                                    const ShapleyParams& params) {
    if (samples.cols() != vf.n())
        throw ContractError("sample columns do not match the value function's features");
    if (feature_names.size() != vf.n())
        throw ContractError("feature name count does not match the value function");
    ShapleyMatrix out;
    out.phi = Matrix(samples.rows(), vf.n());
    out.base_value = vf.base_value();
    out.feature_names = feature_names;
    out.mode = to_string(vf.mode());
    out.method = to_string(params.method);
    out.seed = params.seed;
    for (std::size_t r = 0; r < samples.rows(); ++r) {
        out.sample_ids.push_back(std::to_string(r));
        const std::vector<double> x = samples.row_vec(r);
        detail::CoalitionMemo memo;
        for (std::size_t i = 0; i < vf.n(); ++i) {
            double phi = 0.0;
            switch (params.method) {
                case ShapleyMethod::kExactSubsets:
                    phi = detail::exact_subsets_impl(vf, x, i, &memo);
                    break;
                case ShapleyMethod::kExactPermutations:
                    phi = detail::exact_permutations_impl(vf, x, i, &memo);
                    break;
                case ShapleyMethod::kMonteCarlo: {
                    const std::uint64_t cell_seed = derive_seed(
                        params.seed,
                        "mc-row-" + std::to_string(r) + "-f-" + std::to_string(i));
                    phi = shapley_montecarlo(vf, x, i, params.mc_draws, cell_seed).estimate;
                    break;
                }
            }
            out.phi.at(r, i) = phi;
        }
    }
    return out;
}

/// Element-wise mean of per-tree Shapley vectors; valid for ensembles whose
/// output is the mean of member outputs.
inline std::vector<double> forest_combine(const std::vector<std::vector<double>>& per_tree) {
    if (per_tree.empty()) throw ContractError("cannot combine zero per-tree vectors");
    const std::size_t n = per_tree[0].size();
    std::vector<double> out(n, 0.0);
    for (const auto& phi : per_tree) {
        if (phi.size() != n)
            throw ContractError("per-tree Shapley vectors differ in length");
        for (std::size_t j = 0; j < n; ++j) out[j] += phi[j];
    }
    for (double& v : out) v /= static_cast<double>(per_tree.size());
    return out;
}

}  // namespace xai
