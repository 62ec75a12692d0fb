#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xai/dataset.hpp"
#include "xai/errors.hpp"
#include "xai/matrix.hpp"
#include "xai/models.hpp"
#include "xai/prng.hpp"
#include "xai/shapley.hpp"

namespace xai {

enum class PermMetric { kAccuracyDrop, kMseIncrease };

inline std::string to_string(PermMetric m) {
    switch (m) {
        case PermMetric::kAccuracyDrop: return "accuracy_drop";
        case PermMetric::kMseIncrease: return "mse_increase";
    }
    throw ContractError("invalid permutation metric");
}

inline PermMetric perm_metric_from_string(const std::string& s) {
    if (s == "accuracy_drop") return PermMetric::kAccuracyDrop;
    if (s == "mse_increase") return PermMetric::kMseIncrease;
    throw ConfigError("unknown permutation metric '" + s + "'");
}

struct PermutationImportanceRow {
    std::string feature;
    double mean_drop = 0.0;
    double spread = 0.0;
};

struct PermutationImportanceReport {
    std::vector<PermutationImportanceRow> rows;
    PermMetric metric = PermMetric::kAccuracyDrop;
    int repeats = 1;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        nlohmann::json out_rows = nlohmann::json::array();
        for (const auto& r : rows) {
            out_rows.push_back({{"feature", r.feature},
                                {"mean_drop", r.mean_drop},
                                {"spread", r.spread}});
        }
        return {{"kind", "perm_importance"},
                {"rows", std::move(out_rows)},
                {"metric", to_string(metric)},
                {"repeats", repeats},
                {"seed", seed}};
    }

    static PermutationImportanceReport from_json(const nlohmann::json& j) {
        if (j.at("kind") != "perm_importance")
            throw DataError("expected a perm_importance record");
        PermutationImportanceReport rep;
        rep.metric = perm_metric_from_string(j.at("metric").get<std::string>());
        rep.repeats = j.at("repeats").get<int>();
        rep.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& r : j.at("rows")) {
            rep.rows.push_back({r.at("feature").get<std::string>(),
                                r.at("mean_drop").get<double>(),
                                r.at("spread").get<double>()});
        }
        return rep;
    }
};

namespace detail {

inline double perm_score(const Model& model, const Matrix& X, const std::vector<int>& y,
                         PermMetric metric) {
    double acc = 0.0, mse = 0.0;
    for (std::size_t r = 0; r < X.rows(); ++r) {
        const int pred = model.predict(X.row(r), X.cols());
        if (pred == y[r]) acc += 1.0;
        const double diff = static_cast<double>(pred - y[r]);
        mse += diff * diff;
    }
    const double n = static_cast<double>(X.rows());
    return metric == PermMetric::kAccuracyDrop ? acc / n : mse / n;
}

}  // namespace detail

/// Shuffles one column at a time with an independent PRNG per
/// (feature, repeat) and reports how much the score degrades.
inline PermutationImportanceReport permutation_importance(const Model& model,
                                                          const Dataset& ds,
                                                          PermMetric metric, int repeats,
                                                          std::uint64_t seed) {
    if (repeats < 1) throw ConfigError("permutation importance needs repeats >= 1");
    if (ds.n_samples() == 0) throw DataError("permutation importance needs a non-empty dataset");
    if (ds.feature_names != model.feature_names())
        throw ContractError("dataset features do not match the model's features");

    const double baseline = detail::perm_score(model, ds.X, ds.y, metric);
    PermutationImportanceReport rep;
    rep.metric = metric;
    rep.repeats = repeats;
    rep.seed = seed;

    const std::size_t n_rows = ds.n_samples();
    Matrix shuffled = ds.X;
    for (std::size_t f = 0; f < ds.n_features(); ++f) {
        const std::vector<double> original = ds.X.col_vec(f);
        double sum = 0.0, lo = 0.0, hi = 0.0;
        for (int r = 0; r < repeats; ++r) {
            auto rng = make_rng(derive_seed(
                seed, "perm-f" + std::to_string(f) + "-r" + std::to_string(r)));
            const std::vector<std::size_t> order = shuffled_indices(n_rows, rng);
            for (std::size_t row = 0; row < n_rows; ++row) {
                shuffled.at(row, f) = original[order[row]];
            }
            const double score = detail::perm_score(model, shuffled, ds.y, metric);
            const double drop = metric == PermMetric::kAccuracyDrop ? baseline - score
                                                                    : score - baseline;
            sum += drop;
            if (r == 0) {
                lo = hi = drop;
            } else {
                lo = std::min(lo, drop);
                hi = std::max(hi, drop);
            }
        }
        for (std::size_t row = 0; row < n_rows; ++row) {
            shuffled.at(row, f) = original[row];
        }
        rep.rows.push_back({ds.feature_names[f], sum / repeats, hi - lo});
    }
    std::stable_sort(rep.rows.begin(), rep.rows.end(),
                     [](const PermutationImportanceRow& a,
                        const PermutationImportanceRow& b) {
                         return a.mean_drop > b.mean_drop;
                     });
    return rep;
}

struct PdpGrid {
    std::size_t discrete_threshold = 32;
    std::size_t n_points = 20;
};

struct PDPCurve {
    std::string feature_name;
    std::vector<double> grid;
    std::vector<double> mean_response;
    std::string target;

    nlohmann::json to_json() const {
        return {{"kind", "pdp"},
                {"feature", feature_name},
                {"grid", grid},
                {"mean_response", mean_response},
                {"target", target}};
    }

    static PDPCurve from_json(const nlohmann::json& j) {
        if (j.at("kind") != "pdp") throw DataError("expected a pdp record");
        PDPCurve c;
        c.feature_name = j.at("feature").get<std::string>();
        c.grid = j.at("grid").get<std::vector<double>>();
        c.mean_response = j.at("mean_response").get<std::vector<double>>();
        c.target = j.at("target").get<std::string>();
        return c;
    }
};

/// Overwrites the chosen feature with each grid value across all rows and
/// averages the selected model output. Features with at most
/// grid.discrete_threshold distinct values use those values verbatim;
/// continuous features use n_points equally spaced levels.
inline PDPCurve pdp_curve(const Model& model, const Dataset& ds,
                          const std::string& feature, const TargetSelector& selector,
                          const PdpGrid& grid_policy = {}) {
    if (ds.n_samples() == 0) throw DataError("pdp needs a non-empty dataset");
    const std::size_t f = ds.feature_index(feature);
    if (ds.feature_names != model.feature_names())
        throw ContractError("dataset features do not match the model's features");

    std::set<double> distinct;
    for (std::size_t r = 0; r < ds.n_samples(); ++r) distinct.insert(ds.X.at(r, f));
    PDPCurve curve;
    curve.feature_name = feature;
    curve.target = selector.describe();
    if (distinct.size() <= grid_policy.discrete_threshold) {
        curve.grid.assign(distinct.begin(), distinct.end());
    } else {
        const double lo = *distinct.begin();
        const double hi = *distinct.rbegin();
        for (std::size_t i = 0; i < grid_policy.n_points; ++i) {
            curve.grid.push_back(lo + (hi - lo) * static_cast<double>(i) /
                                          static_cast<double>(grid_policy.n_points - 1));
        }
    }

    Matrix work = ds.X;
    for (double v : curve.grid) {
        for (std::size_t r = 0; r < work.rows(); ++r) work.at(r, f) = v;
        double total = 0.0;
        for (std::size_t r = 0; r < work.rows(); ++r) {
            total += selector.select_from(model, work.row(r), work.cols());
        }
        curve.mean_response.push_back(total / static_cast<double>(work.rows()));
    }
    return curve;
}

/// Picks the feature whose raw column correlates most strongly with the
/// Shapley column of feature i. Zero-variance columns score 0.
inline std::size_t strongest_interaction(const ShapleyMatrix& phi, const Matrix& X,
                                         std::size_t i) {
    if (phi.phi.cols() < 2)
        throw ContractError("interaction selection needs at least 2 features");
    if (i >= phi.phi.cols())
        throw ContractError("feature index " + std::to_string(i) + " is out of range");
    if (phi.phi.rows() < 3)
        throw ContractError("interaction selection needs at least 3 samples");
    if (X.rows() != phi.phi.rows() || X.cols() != phi.phi.cols())
        throw ContractError("raw matrix does not align with the Shapley matrix");

    const std::size_t m = phi.phi.rows();
    const std::vector<double> a = phi.phi.col_vec(i);
    double a_mean = 0.0;
    for (double v : a) a_mean += v;
    a_mean /= static_cast<double>(m);
    double a_var = 0.0;
    for (double v : a) a_var += (v - a_mean) * (v - a_mean);

    std::size_t best = i == 0 ? 1 : 0;
    double best_score = -1.0;
    for (std::size_t j = 0; j < X.cols(); ++j) {
        if (j == i) continue;
        double b_mean = 0.0;
        for (std::size_t r = 0; r < m; ++r) b_mean += X.at(r, j);
        b_mean /= static_cast<double>(m);
        double b_var = 0.0, cov = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            const double db = X.at(r, j) - b_mean;
            b_var += db * db;
            cov += (a[r] - a_mean) * db;
        }
        double score = 0.0;
        if (a_var > 0.0 && b_var > 0.0) {
            score = std::abs(cov / std::sqrt(a_var * b_var));
        }
        if (score > best_score) {
            best_score = score;
            best = j;
        }
    }
    return best;
}

struct SummaryEntry {
    std::string feature;
    double mean_abs_phi = 0.0;
};

struct SummaryImportance {
    std::vector<SummaryEntry> entries;

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& e : entries) {
            rows.push_back({{"feature", e.feature}, {"mean_abs_phi", e.mean_abs_phi}});
        }
        return {{"kind", "summary"}, {"entries", std::move(rows)}};
    }

    static SummaryImportance from_json(const nlohmann::json& j) {
        if (j.at("kind") != "summary") throw DataError("expected a summary record");
        SummaryImportance s;
        for (const auto& e : j.at("entries")) {
            s.entries.push_back({e.at("feature").get<std::string>(),
                                 e.at("mean_abs_phi").get<double>()});
        }
        return s;
    }
};

/// Mean |Phi| per feature, sorted descending with ties kept in feature order.
inline SummaryImportance summary_importance(const ShapleyMatrix& phi) {
    if (phi.phi.rows() == 0) throw ContractError("summary needs a non-empty matrix");
    SummaryImportance out;
    for (std::size_t j = 0; j < phi.phi.cols(); ++j) {
        double total = 0.0;
        for (std::size_t r = 0; r < phi.phi.rows(); ++r) {
            total += std::abs(phi.phi.at(r, j));
        }
        out.entries.push_back(
            {phi.feature_names[j], total / static_cast<double>(phi.phi.rows())});
    }
    std::stable_sort(out.entries.begin(), out.entries.end(),
                     [](const SummaryEntry& a, const SummaryEntry& b) {
                         return a.mean_abs_phi > b.mean_abs_phi;
                     });
    return out;
}

struct ForceEntry {
    std::string feature;
    double phi = 0.0;
};

struct ForcePlotData {
    double base_value = 0.0;
    std::vector<ForceEntry> contributions;
    std::vector<ForceEntry> positive;
    std::vector<ForceEntry> negative;
    double model_output = 0.0;
    std::string sample_id;
    bool approximate = false;

    nlohmann::json to_json() const {
        auto pack = [](const std::vector<ForceEntry>& entries) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& e : entries) {
                arr.push_back({{"feature", e.feature}, {"phi", e.phi}});
            }
            return arr;
        };
        return {{"kind", "force"},
                {"sample_id", sample_id},
                {"base_value", base_value},
                {"model_output", model_output},
                {"contributions", pack(contributions)},
                {"positive", pack(positive)},
                {"negative", pack(negative)},
                {"approximate", approximate}};
    }

    static ForcePlotData from_json(const nlohmann::json& j) {
        if (j.at("kind") != "force") throw DataError("expected a force record");
        ForcePlotData f;
        f.sample_id = j.at("sample_id").get<std::string>();
        f.base_value = j.at("base_value").get<double>();
        f.model_output = j.at("model_output").get<double>();
        f.approximate = j.at("approximate").get<bool>();
        auto unpack = [](const nlohmann::json& arr) {
            std::vector<ForceEntry> out;
            for (const auto& e : arr) {
                out.push_back(
                    {e.at("feature").get<std::string>(), e.at("phi").get<double>()});
            }
            return out;
        };
        f.contributions = unpack(j.at("contributions"));
        f.positive = unpack(j.at("positive"));
        f.negative = unpack(j.at("negative"));
        return f;
    }
};

/// Splits a Shapley row into the entries pushing the prediction up and
/// down. Exact methods must satisfy base + sum(Phi) = output within 1e-3;
/// Monte-Carlo rows skip the check and carry an approximate flag.
inline ForcePlotData force_data(const std::vector<double>& phi_row,
                                const std::vector<std::string>& feature_names,
                                double base_value, double model_output,
                                const std::string& sample_id,
                                const std::string& method) {
    if (phi_row.size() != feature_names.size())
        throw ContractError("Shapley row and feature names must align");
    ForcePlotData out;
    out.base_value = base_value;
    out.model_output = model_output;
    out.sample_id = sample_id;
    out.approximate = method == "montecarlo";

    double total = base_value;
    for (std::size_t j = 0; j < phi_row.size(); ++j) {
        total += phi_row[j];
        out.contributions.push_back({feature_names[j], phi_row[j]});
        if (phi_row[j] > 0.0) {
            out.positive.push_back({feature_names[j], phi_row[j]});
        } else if (phi_row[j] < 0.0) {
            out.negative.push_back({feature_names[j], phi_row[j]});
        }
    }
    if (!out.approximate && std::abs(total - model_output) > 1e-3)
        throw IntegrityError(
            "force plot efficiency violated: base + contributions = " +
            std::to_string(total) + " but the model output is " +
            std::to_string(model_output));
    auto by_magnitude = [](const ForceEntry& a, const ForceEntry& b) {
        return std::abs(a.phi) > std::abs(b.phi);
    };
    std::stable_sort(out.positive.begin(), out.positive.end(), by_magnitude);
    std::stable_sort(out.negative.begin(), out.negative.end(), by_magnitude);
    return out;
}

struct BeeswarmFeature {
    std::string feature;
    std::vector<double> phi;
    std::vector<double> raw;
    std::vector<double> color;
};

struct BeeswarmData {
    std::vector<BeeswarmFeature> features;

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& f : features) {
            arr.push_back({{"feature", f.feature},
                           {"phi", f.phi},
                           {"raw", f.raw},
                           {"color", f.color}});
        }
        return {{"kind", "beeswarm"}, {"features", std::move(arr)}};
    }

    static BeeswarmData from_json(const nlohmann::json& j) {
        if (j.at("kind") != "beeswarm") throw DataError("expected a beeswarm record");
        BeeswarmData b;
        for (const auto& f : j.at("features")) {
            b.features.push_back({f.at("feature").get<std::string>(),
                                  f.at("phi").get<std::vector<double>>(),
                                  f.at("raw").get<std::vector<double>>(),
                                  f.at("color").get<std::vector<double>>()});
        }
        return b;
    }
};

namespace detail {

/// Fractional average ranks scaled to [0, 1]; a constant column maps to 0.5.
inline std::vector<double> rank_colors(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&values](std::size_t a, std::size_t b) {
        return values[a] < values[b];
    });
    std::vector<double> ranks(n, 0.0);
    std::size_t pos = 0;
    while (pos < n) {
        std::size_t end = pos;
        while (end + 1 < n && values[order[end + 1]] == values[order[pos]]) ++end;
        const double avg = (static_cast<double>(pos) + static_cast<double>(end)) / 2.0;
        for (std::size_t k = pos; k <= end; ++k) ranks[order[k]] = avg;
        pos = end + 1;
    }
    std::vector<double> colors(n, 0.5);
    if (n > 1) {
        for (std::size_t k = 0; k < n; ++k) {
            colors[k] = ranks[k] / static_cast<double>(n - 1);
        }
    }
    return colors;
}

}  // namespace detail

/// Per-feature (Phi, raw value, color) triples ordered by mean |Phi|.
inline BeeswarmData beeswarm_data(const ShapleyMatrix& phi, const Matrix& X) {
    if (X.rows() != phi.phi.rows() || X.cols() != phi.phi.cols())
        throw ContractError("raw matrix does not align with the Shapley matrix");
    if (phi.phi.rows() == 0) throw ContractError("beeswarm needs a non-empty matrix");

    const SummaryImportance order = summary_importance(phi);
    BeeswarmData out;
    for (const auto& entry : order.entries) {
        std::size_t j = 0;
        for (; j < phi.feature_names.size(); ++j) {
            if (phi.feature_names[j] == entry.feature) break;
        }
        BeeswarmFeature f;
        f.feature = entry.feature;
        f.phi = phi.phi.col_vec(j);
        f.raw = X.col_vec(j);
        f.color = detail::rank_colors(f.raw);
        out.features.push_back(std::move(f));
    }
    return out;
}

}  // namespace xai
