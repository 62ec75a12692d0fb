#pragma once

#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "xai/dataset.hpp"

namespace testutil {

inline xai::Dataset make_dataset(std::vector<std::string> feature_names,
                                 const std::vector<std::vector<double>>& rows,
                                 std::vector<int> labels,
                                 std::vector<std::string> class_names) {
    xai::Dataset ds;
    ds.feature_names = std::move(feature_names);
    ds.class_names = std::move(class_names);
    ds.y = std::move(labels);
    ds.X = xai::Matrix(rows.size(), ds.feature_names.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) ds.X.at(i, j) = rows[i][j];
    }
    ds.validate();
    return ds;
}

/// Two Gaussian blobs centered at (-2,-2) and (2,2) with unit noise.
inline xai::Dataset two_blobs(std::size_t n_per_class, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    xai::Dataset ds;
    ds.feature_names = {"f1", "f2"};
    ds.class_names = {"neg", "pos"};
    ds.X = xai::Matrix(2 * n_per_class, 2);
    ds.y.resize(2 * n_per_class);
    for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
        const double center = i < n_per_class ? -2.0 : 2.0;
        ds.X.at(i, 0) = center + noise(rng);
        ds.X.at(i, 1) = center + noise(rng);
        ds.y[i] = i < n_per_class ? 0 : 1;
    }
    return ds;
}

inline std::string write_temp_csv(const std::string& name, const std::string& content) {
    const std::string path = "/tmp/" + name;
    std::ofstream out(path);
    out << content;
    out.close();
    return path;
}

}  // namespace testutil
