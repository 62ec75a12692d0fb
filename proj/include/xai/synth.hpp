#pragma once

#include <cstdint>
#include <string>

#include "xai/dataset.hpp"
#include "xai/prng.hpp"

namespace xai {

/// Gaussian-blob classification benchmark: each class draws a mean vector
/// with N(0, 2) coordinates, samples scatter around it with unit noise, and
/// labels cycle round-robin so classes stay balanced within one sample.
inline Dataset make_synthetic_classification(std::size_t n_samples, std::size_t n_features,
                                             std::size_t n_classes, std::uint64_t seed) {
    if (n_samples == 0 || n_features == 0) throw ConfigError("synthetic shape must be positive");
    if (n_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
    if (n_samples < n_classes) throw ConfigError("need at least one sample per class");

    auto rng = make_rng(derive_seed(seed, "synth"));
    std::normal_distribution<double> mean_draw(0.0, 2.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    Matrix means(n_classes, n_features);
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t j = 0; j < n_features; ++j) means.at(c, j) = mean_draw(rng);
    }

    Dataset ds;
    ds.provenance = "synthetic";
    for (std::size_t j = 0; j < n_features; ++j) {
        ds.feature_names.push_back("f" + std::to_string(j + 1));
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
        ds.class_names.push_back("fam" + std::to_string(c));
    }
    ds.X = Matrix(n_samples, n_features);
    ds.y.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const std::size_t c = i % n_classes;
        ds.y[i] = static_cast<int>(c);
        for (std::size_t j = 0; j < n_features; ++j) {
            ds.X.at(i, j) = means.at(c, j) + noise(rng);
        }
    }
    return ds;
}

}  // namespace xai
