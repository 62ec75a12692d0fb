#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "xai/errors.hpp"
#include "xai/matrix.hpp"
#include "xai/prng.hpp"

namespace xai {

/// Tabular sample collection: named real-valued feature columns plus one
/// integer class label per row.
struct Dataset {
    std::vector<std::string> feature_names;
    Matrix X;
    std::vector<int> y;
    std::vector<std::string> class_names;
    std::string provenance = "synthetic";

    std::size_t n_samples() const { return X.rows(); }
    std::size_t n_features() const { return X.cols(); }
    std::size_t n_classes() const { return class_names.size(); }

    std::size_t feature_index(const std::string& name) const {
        for (std::size_t j = 0; j < feature_names.size(); ++j) {
            if (feature_names[j] == name) return j;
        }
        throw ContractError("unknown feature '" + name + "'");
    }

    std::vector<int> class_counts() const {
        std::vector<int> counts(class_names.size(), 0);
        for (int label : y) counts[static_cast<std::size_t>(label)]++;
        return counts;
    }

    void validate() const {
        if (X.rows() != y.size()) throw DataError("row count does not match label count");
        if (X.cols() != feature_names.size())
            throw DataError("column count does not match feature name count");
        std::unordered_set<std::string> seen;
        for (const auto& name : feature_names) {
            if (!seen.insert(name).second)
                throw DataError("duplicate feature name '" + name + "'");
        }
        for (int label : y) {
            if (label < 0 || static_cast<std::size_t>(label) >= class_names.size())
                throw DataError("label out of range: " + std::to_string(label));
        }
    }
};

/// Rows of `ds` selected by index, order as given.
inline Dataset subset_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.feature_names = ds.feature_names;
    out.class_names = ds.class_names;
    out.provenance = ds.provenance;
    out.X = Matrix(rows.size(), ds.n_features());
    out.y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* src = ds.X.row(rows[i]);
        std::copy(src, src + ds.n_features(), out.X.row(i));
        out.y[i] = ds.y[rows[i]];
    }
    return out;
}

/// Feature columns of `ds` selected by index, order as given.
inline Dataset select_features(const Dataset& ds, const std::vector<std::size_t>& cols) {
    Dataset out;
    out.class_names = ds.class_names;
    out.provenance = ds.provenance;
    out.y = ds.y;
    out.feature_names.reserve(cols.size());
    for (std::size_t c : cols) out.feature_names.push_back(ds.feature_names.at(c));
    out.X = Matrix(ds.n_samples(), cols.size());
    for (std::size_t i = 0; i < ds.n_samples(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) out.X.at(i, j) = ds.X.at(i, cols[j]);
    }
    return out;
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

}  // namespace detail

/// Load a comma-separated file with a header row. Every column except
/// `label_column` is parsed as a real number; labels become contiguous
/// integers in first-appearance order.
inline Dataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");

    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw DataError("empty input: '" + path + "' has no rows");

    const std::vector<std::string> header = detail::split_csv_line(lines[0]);
    std::size_t label_col = header.size();
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == label_column) {
            label_col = j;
            break;
        }
    }
    if (label_col == header.size())
        throw ConfigError("label column '" + label_column + "' not found in header of '" +
                          path + "'");
    if (lines.size() == 1) throw DataError("empty input: '" + path + "' has no data rows");

    Dataset ds;
    ds.provenance = path;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j != label_col) ds.feature_names.push_back(header[j]);
    }
    {
        std::unordered_set<std::string> seen;
        for (const auto& name : ds.feature_names) {
            if (!seen.insert(name).second)
                throw DataError("duplicate feature column '" + name + "' in '" + path + "'");
        }
    }

    const std::size_t n_rows = lines.size() - 1;
    const std::size_t n_features = ds.feature_names.size();
    ds.X = Matrix(n_rows, n_features);
    ds.y.resize(n_rows);
    std::unordered_map<std::string, int> label_ids;

    for (std::size_t r = 0; r < n_rows; ++r) {
        const std::vector<std::string> cells = detail::split_csv_line(lines[r + 1]);
        if (cells.size() != header.size()) {
            throw ParseError("row " + std::to_string(r + 1) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header.size()));
        }
        std::size_t feat = 0;
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j == label_col) {
                const std::string& label = cells[j];
                auto it = label_ids.find(label);
                if (it == label_ids.end()) {
                    int id = static_cast<int>(ds.class_names.size());
                    label_ids.emplace(label, id);
                    ds.class_names.push_back(label);
                    ds.y[r] = id;
                } else {
                    ds.y[r] = it->second;
                }
            } else {
                const std::string& cell = cells[j];
                char* end = nullptr;
                const double value = std::strtod(cell.c_str(), &end);
                if (cell.empty() || end != cell.c_str() + cell.size()) {
                    throw ParseError("row " + std::to_string(r + 1) + ", column '" +
                                     ds.feature_names[feat] + "': cannot parse '" + cell +
                                     "' as a number");
                }
                ds.X.at(r, feat) = value;
                ++feat;
            }
        }
    }
    ds.validate();
    return ds;
}

struct FilterResult {
    Dataset dataset;
    // True when k covered every class and the input came back unchanged.
    bool warning = false;
};

/// Keep only samples from the k most frequent classes (ties broken by
/// first-appearance order), relabeling classes contiguously.
inline FilterResult filter_top_families(const Dataset& ds, int k) {
    if (ds.n_samples() == 0) throw DataError("cannot filter an empty dataset");
    if (k < 1) throw ConfigError("top-family count must be >= 1, got " + std::to_string(k));

    const std::vector<int> counts = ds.class_counts();
    int distinct = 0;
    for (int c : counts) {
        if (c > 0) ++distinct;
    }
    if (k > distinct) return FilterResult{ds, true};

    std::vector<std::size_t> order(counts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&counts](std::size_t a, std::size_t b) {
        return counts[a] > counts[b];
    });

    std::vector<bool> keep(counts.size(), false);
    int taken = 0;
    for (std::size_t cls : order) {
        if (counts[cls] == 0) continue;
        keep[cls] = true;
        if (++taken == k) break;
    }

    // Relabel in ascending original id so earlier-seen families keep lower ids.
    std::vector<int> new_id(counts.size(), -1);
    Dataset out;
    out.feature_names = ds.feature_names;
    out.provenance = ds.provenance;
    for (std::size_t cls = 0; cls < counts.size(); ++cls) {
        if (keep[cls]) {
            new_id[cls] = static_cast<int>(out.class_names.size());
            out.class_names.push_back(ds.class_names[cls]);
        }
    }

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.n_samples(); ++i) {
        if (keep[static_cast<std::size_t>(ds.y[i])]) rows.push_back(i);
    }
    out.X = Matrix(rows.size(), ds.n_features());
    out.y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* src = ds.X.row(rows[i]);
        std::copy(src, src + ds.n_features(), out.X.row(i));
        out.y[i] = new_id[static_cast<std::size_t>(ds.y[rows[i]])];
    }
    return FilterResult{std::move(out), false};
}

/// Per-column mean and population standard deviation.
struct StandardizerParams {
    std::vector<double> means;
    std::vector<double> stddevs;
    std::vector<std::string> feature_names;

    nlohmann::json to_json() const {
        return {{"means", means}, {"stddevs", stddevs}, {"feature_names", feature_names}};
    }

    static StandardizerParams from_json(const nlohmann::json& j) {
        StandardizerParams p;
        p.means = j.at("means").get<std::vector<double>>();
        p.stddevs = j.at("stddevs").get<std::vector<double>>();
        p.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        return p;
    }
};

inline StandardizerParams fit_standardizer(const Dataset& ds) {
    if (ds.n_samples() == 0) throw DataError("cannot fit a standardizer on an empty dataset");
    const std::size_t n = ds.n_samples();
    StandardizerParams p;
    p.feature_names = ds.feature_names;
    p.means.resize(ds.n_features());
    p.stddevs.resize(ds.n_features());
    for (std::size_t j = 0; j < ds.n_features(); ++j) {
        double lo = ds.X.at(0, j), hi = ds.X.at(0, j), sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = ds.X.at(i, j);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        if (lo == hi) {
            // Constant column: pin the mean to the constant so centering is exact.
            p.means[j] = lo;
            p.stddevs[j] = 0.0;
            continue;
        }
        const double mean = sum / static_cast<double>(n);
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = ds.X.at(i, j) - mean;
            sq += d * d;
        }
        p.means[j] = mean;
        p.stddevs[j] = std::sqrt(sq / static_cast<double>(n));
    }
    return p;
}

/// Transform each column to (x - mean) / stddev; columns with stddev 0 are
/// centered only.
inline Dataset standardize(const Dataset& ds, const StandardizerParams& p) {
    if (p.feature_names != ds.feature_names)
        throw ConfigError("standardizer feature names do not match the dataset");
    Dataset out = ds;
    for (std::size_t j = 0; j < ds.n_features(); ++j) {
        const double mean = p.means[j];
        const double div = p.stddevs[j] == 0.0 ? 1.0 : p.stddevs[j];
        for (std::size_t i = 0; i < ds.n_samples(); ++i) {
            out.X.at(i, j) = (ds.X.at(i, j) - mean) / div;
        }
    }
    return out;
}

enum class SplitMode { kHoldout, kKFold };

inline std::string to_string(SplitMode m) {
    return m == SplitMode::kHoldout ? "holdout" : "kfold";
}

/// Per-sample partition assignment. Holdout: 0 = train, 1 = test.
/// K-fold: the fold index of each sample.
struct SplitPlan {
    SplitMode mode = SplitMode::kHoldout;
    double train_fraction = 0.8;
    int k = 5;
    std::vector<int> assignments;
    std::uint64_t seed = 0;

    std::vector<std::size_t> train_indices(int held_out_fold = 0) const {
        return collect(held_out_fold, false);
    }
    std::vector<std::size_t> test_indices(int held_out_fold = 0) const {
        return collect(held_out_fold, true);
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"mode", xai::to_string(mode)},
                         {"assignments", assignments},
                         {"seed", seed}};
        if (mode == SplitMode::kHoldout) {
            j["train_fraction"] = train_fraction;
        } else {
            j["k"] = k;
        }
        return j;
    }

    static SplitPlan from_json(const nlohmann::json& j) {
        SplitPlan p;
        const std::string mode = j.at("mode").get<std::string>();
        if (mode == "holdout") {
            p.mode = SplitMode::kHoldout;
            p.train_fraction = j.at("train_fraction").get<double>();
        } else if (mode == "kfold") {
            p.mode = SplitMode::kKFold;
            p.k = j.at("k").get<int>();
        } else {
            throw ConfigError("unknown split mode '" + mode + "'");
        }
        p.assignments = j.at("assignments").get<std::vector<int>>();
        p.seed = j.at("seed").get<std::uint64_t>();
        return p;
    }

private:
    std::vector<std::size_t> collect(int fold, bool want_test) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignments.size(); ++i) {
            const bool is_test = mode == SplitMode::kHoldout ? assignments[i] == 1
                                                             : assignments[i] == fold;
            if (is_test == want_test) out.push_back(i);
        }
        return out;
    }
};

namespace detail {

inline std::vector<std::vector<std::size_t>> members_by_class(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> members(ds.n_classes());
    for (std::size_t i = 0; i < ds.n_samples(); ++i) {
        members[static_cast<std::size_t>(ds.y[i])].push_back(i);
    }
    return members;
}

}  // namespace detail

/// Class-stratified train/test partition. Each class contributes
/// round(count * train_fraction) training samples, clamped so both sides
/// stay non-empty.
inline SplitPlan stratified_holdout(const Dataset& ds, double train_fraction,
                                    std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train fraction must lie in (0, 1)");
    SplitPlan plan;
    plan.mode = SplitMode::kHoldout;
    plan.train_fraction = train_fraction;
    plan.seed = seed;
    plan.assignments.assign(ds.n_samples(), 1);

    auto rng = make_rng(seed);
    const auto members = detail::members_by_class(ds);
    for (std::size_t cls = 0; cls < members.size(); ++cls) {
        auto idx = members[cls];
        if (idx.size() < 2)
            throw DataError("stratification error: class '" + ds.class_names[cls] +
                            "' has fewer than 2 members");
        std::shuffle(idx.begin(), idx.end(), rng);
        const double target = static_cast<double>(idx.size()) * train_fraction;
        std::size_t n_train = static_cast<std::size_t>(std::floor(target + 0.5));
        n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        for (std::size_t p = 0; p < n_train; ++p) plan.assignments[idx[p]] = 0;
    }
    return plan;
}

/// Class-stratified k-fold assignment; per class, shuffled members are dealt
/// round-robin so fold counts differ by at most one.
inline SplitPlan stratified_kfold(const Dataset& ds, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("fold count must be >= 2");
    SplitPlan plan;
    plan.mode = SplitMode::kKFold;
    plan.k = k;
    plan.seed = seed;
    plan.assignments.assign(ds.n_samples(), 0);

    auto rng = make_rng(seed);
    const auto members = detail::members_by_class(ds);
    for (std::size_t cls = 0; cls < members.size(); ++cls) {
        auto idx = members[cls];
        if (idx.size() < static_cast<std::size_t>(k))
            throw DataError("stratification error: class '" + ds.class_names[cls] + "' has " +
                            std::to_string(idx.size()) + " members but " + std::to_string(k) +
                            " folds were requested");
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t p = 0; p < idx.size(); ++p) {
            plan.assignments[idx[p]] = static_cast<int>(p % static_cast<std::size_t>(k));
        }
    }
    return plan;
}

}  // namespace xai
