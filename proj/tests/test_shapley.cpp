#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <thread>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "xai/linear_model.hpp"
#include "xai/model_zoo.hpp"
#include "xai/shapley.hpp"
#include "xai/synth.hpp"

using namespace xai;

namespace {

CustomValueFunction::Game table_game(const std::vector<double>& table) {
    return [table](Coalition s, const std::vector<double>&) {
        return table.at(static_cast<std::size_t>(s));
    };
}

std::vector<double> random_table(std::size_t n, std::uint64_t seed) {
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    std::vector<double> table(std::size_t{1} << n);
    for (double& v : table) v = dist(rng);
    return table;
}

double exact_all(const ValueFunction& vf, const std::vector<double>& x,
                 std::vector<double>* phis) {
    double total = 0.0;
    for (std::size_t i = 0; i < vf.n(); ++i) {
        const double phi = shapley_exact_subsets(vf, x, i);
        if (phis != nullptr) phis->push_back(phi);
        total += phi;
    }
    return total;
}

}  // namespace

TEST_CASE("single feature reduces to one value difference", "[shapley]") {
    CustomValueFunction vf(1, [](Coalition s, const std::vector<double>&) {
        return s == 0 ? 0.25 : 1.75;
    });
    const std::vector<double> x = {0.0};
    REQUIRE(shapley_exact_subsets(vf, x, 0) == Catch::Approx(1.5).margin(1e-15));
    REQUIRE(shapley_exact_permutations(vf, x, 0) == Catch::Approx(1.5).margin(1e-15));
}

TEST_CASE("four feature expansion for the third feature", "[shapley]") {
    auto game = [](Coalition s, const std::vector<double>& x) {
        double v = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            if (s & (Coalition{1} << j)) v += (static_cast<double>(j) + 1.0) * x[j];
        }
        if ((s & 1) && (s & 4)) v += 0.5;
        return v;
    };
    CustomValueFunction vf(4, game);
    const std::vector<double> x = {0.7, -1.2, 0.4, 2.0};

    const Coalition i_bit = 4;
    const std::vector<std::pair<Coalition, double>> terms = {
        {0b0000, 1.0},       {0b0001, 1.0 / 3.0}, {0b0010, 1.0 / 3.0},
        {0b1000, 1.0 / 3.0}, {0b0011, 1.0 / 3.0}, {0b1001, 1.0 / 3.0},
        {0b1010, 1.0 / 3.0}, {0b1011, 1.0},
    };
    double expected = 0.0;
    for (const auto& [s, w] : terms) {
        expected += w * (game(s | i_bit, x) - game(s, x));
    }
    expected /= 4.0;

    REQUIRE(shapley_exact_subsets(vf, x, 2) == Catch::Approx(expected).margin(1e-12));
    REQUIRE(shapley_exact_permutations(vf, x, 2) ==
            Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("subset form queries each of the eight coalitions", "[shapley]") {
    std::map<Coalition, int> seen;
    CustomValueFunction vf(4, [&seen](Coalition s, const std::vector<double>&) {
        ++seen[s];
        return static_cast<double>(s);
    });
    seen.clear();
    shapley_exact_subsets(vf, std::vector<double>(4, 0.0), 2);
    REQUIRE(seen.size() == 16);
    std::size_t without_i = 0;
    for (const auto& [s, count] : seen) {
        REQUIRE(count == 1);
        if ((s & 4) == 0) ++without_i;
    }
    REQUIRE(without_i == 8);
}

TEST_CASE("permutation form averages over all orderings", "[shapley]") {
    int calls = 0;
    CustomValueFunction vf(4, [&calls](Coalition s, const std::vector<double>&) {
        ++calls;
        return static_cast<double>(s * s);
    });
    calls = 0;
    shapley_exact_permutations(vf, std::vector<double>(4, 0.0), 1);
    REQUIRE(calls == 48);
}

TEST_CASE("subset and permutation forms agree on random games", "[shapley]") {
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + trial % 5;
        CustomValueFunction vf(n, table_game(random_table(n, 1000 + trial)));
        const std::vector<double> x(n, 0.0);
        const std::size_t i = trial % n;
        const double a = shapley_exact_subsets(vf, x, i);
        const double b = shapley_exact_permutations(vf, x, i);
        REQUIRE(a == Catch::Approx(b).margin(1e-9));
    }
}

TEST_CASE("efficiency over random games", "[shapley]") {
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + trial % 5;
        const auto table = random_table(n, 2000 + trial);
        CustomValueFunction vf(n, table_game(table));
        const std::vector<double> x(n, 0.0);
        const double total = exact_all(vf, x, nullptr);
        const double span = table[table.size() - 1] - table[0];
        REQUIRE(total == Catch::Approx(span).margin(1e-9));
    }
}

TEST_CASE("null feature gets exactly zero", "[shapley]") {
    CustomValueFunction vf(4, [](Coalition s, const std::vector<double>&) {
        const Coalition without = s & ~Coalition{2};
        return std::sin(static_cast<double>(without)) * 3.0;
    });
    const std::vector<double> x(4, 1.0);
    REQUIRE(shapley_exact_subsets(vf, x, 1) == 0.0);
    REQUIRE(shapley_exact_permutations(vf, x, 1) == 0.0);
}

TEST_CASE("symmetric features get equal credit", "[shapley]") {
    auto symmetric = [](Coalition s, const std::vector<double>&) {
        const int count = ((s & 1) != 0 ? 1 : 0) + ((s & 2) != 0 ? 1 : 0);
        const double rest = (s & 4) != 0 ? 0.8 : 0.0;
        return static_cast<double>(count * count) + rest + 0.3 * count * rest;
    };
    CustomValueFunction vf(3, symmetric);
    const std::vector<double> x(3, 0.0);
    REQUIRE(shapley_exact_subsets(vf, x, 0) ==
            Catch::Approx(shapley_exact_subsets(vf, x, 1)).margin(1e-12));
}

TEST_CASE("additivity over game sums", "[shapley]") {
    const std::size_t n = 4;
    const auto t1 = random_table(n, 31);
    const auto t2 = random_table(n, 32);
    auto sum_table = t1;
    for (std::size_t s = 0; s < t2.size(); ++s) sum_table[s] += t2[s];
    CustomValueFunction g1(n, table_game(t1));
    CustomValueFunction g2(n, table_game(t2));
    CustomValueFunction g12(n, table_game(sum_table));
    const std::vector<double> x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(shapley_exact_subsets(g12, x, i) ==
                Catch::Approx(shapley_exact_subsets(g1, x, i) +
                              shapley_exact_subsets(g2, x, i))
                    .margin(1e-9));
    }
}

TEST_CASE("linear game attributes w_i times x_i", "[shapley]") {
    const std::vector<double> w = {2.0, -1.5, 0.0, 4.0};
    CustomValueFunction vf(4, [w](Coalition s, const std::vector<double>& x) {
        double v = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (s & (Coalition{1} << j)) v += w[j] * x[j];
        }
        return v;
    });
    const std::vector<double> x = {1.0, 2.0, 3.0, -0.5};
    for (std::size_t i = 0; i < 4; ++i) {
        REQUIRE(shapley_exact_subsets(vf, x, i) ==
                Catch::Approx(w[i] * x[i]).margin(1e-12));
    }
}

TEST_CASE("retrain mode prices the empty coalition at zero", "[shapley]") {
    const Dataset ds = testutil::two_blobs(30, 5);
    RetrainValueFunction vf(
        [](const Dataset& sub) {
            ModelSpec spec;
            spec.kind = ModelKind::kLinear;
            spec.seed = 7;
            return train_model(spec, sub);
        },
        ds, TargetSelector::for_class(1));
    REQUIRE(vf.base_value() == 0.0);
    REQUIRE(vf.value(0, {0.0, 0.0}) == 0.0);
    REQUIRE(vf.trained_coalitions() == 0);
}

TEST_CASE("retrain mode trains each coalition at most once", "[shapley]") {
    const Dataset ds = testutil::two_blobs(25, 11);
    std::atomic<int> trainings{0};
    RetrainValueFunction vf(
        [&trainings](const Dataset& sub) {
            ++trainings;
            ModelSpec spec;
            spec.kind = ModelKind::kLinear;
            spec.seed = 3;
            return train_model(spec, sub);
        },
        ds, TargetSelector::for_class(1));

    const std::vector<double> x = {1.5, -2.0};
    shapley_exact_subsets(vf, x, 0);
    shapley_exact_subsets(vf, x, 1);
    REQUIRE(trainings.load() == 3);
    REQUIRE(vf.trained_coalitions() == 3);

    shapley_exact_subsets(vf, {0.3, 0.4}, 0);
    REQUIRE(trainings.load() == 3);
}

TEST_CASE("retrain cache deduplicates concurrent requests", "[shapley]") {
    Dataset ds = make_synthetic_classification(90, 3, 2, 77);
    std::atomic<int> trainings{0};
    RetrainValueFunction vf(
        [&trainings](const Dataset& sub) {
            ++trainings;
            ModelSpec spec;
            spec.kind = ModelKind::kLinear;
            spec.seed = 5;
            spec.linear_epochs = 10;
            return train_model(spec, sub);
        },
        ds, TargetSelector::for_class(0));

    std::vector<std::thread> workers;
    for (int t = 0; t < 4; ++t) {
        workers.emplace_back([&vf, t] {
            const std::vector<double> x = {0.1 * t, -0.2 * t, 0.3};
            for (std::size_t i = 0; i < 3; ++i) shapley_exact_subsets(vf, x, i);
        });
    }
    for (auto& th : workers) th.join();
    REQUIRE(trainings.load() == 7);
    REQUIRE(vf.trained_coalitions() == 7);
}

TEST_CASE("retrain mode refuses too many features", "[shapley]") {
    Dataset ds = make_synthetic_classification(50, 21, 2, 9);
    REQUIRE_THROWS_AS(RetrainValueFunction(
                          [](const Dataset& sub) {
                              ModelSpec spec;
                              spec.kind = ModelKind::kLinear;
                              return train_model(spec, sub);
                          },
                          ds, TargetSelector::for_class(0)),
                      FeasibilityError);
}

TEST_CASE("marginal mode is exact at the extremes", "[shapley]") {
    Dataset ds = make_synthetic_classification(120, 4, 3, 13);
    ModelSpec spec;
    spec.kind = ModelKind::kForest;
    spec.n_trees = 15;
    spec.seed = 21;
    std::shared_ptr<const Model> model = train_model(spec, ds);
    const TargetSelector sel = TargetSelector::for_class(1);
    MarginalValueFunction vf(model, ds.X, sel);

    const std::vector<double> x = ds.X.row_vec(0);
    REQUIRE(vf.value(0b1111, x) ==
            Catch::Approx(sel.select(model->predict_proba(x))).margin(1e-15));

    double mean = 0.0;
    for (std::size_t r = 0; r < ds.X.rows(); ++r) {
        mean += sel.select(model->predict_proba(ds.X.row_vec(r)));
    }
    mean /= static_cast<double>(ds.X.rows());
    REQUIRE(vf.value(0, x) == Catch::Approx(mean).margin(1e-12));
    REQUIRE(vf.base_value() == Catch::Approx(mean).margin(1e-12));
}

TEST_CASE("marginal background is capped", "[shapley]") {
    Dataset ds = make_synthetic_classification(300, 3, 2, 4);
    ModelSpec spec;
    spec.kind = ModelKind::kKnn;
    spec.knn_k = 5;
    std::shared_ptr<const Model> model = train_model(spec, ds);
    MarginalValueFunction vf(model, ds.X, TargetSelector::predicted());
    REQUIRE(vf.background().rows() == 256);
    for (std::size_t r = 0; r < 256; ++r) {
        REQUIRE(vf.background().row_vec(r) == ds.X.row_vec(r));
    }
}

TEST_CASE("marginal mode rejects an empty background", "[shapley]") {
    Dataset ds = testutil::two_blobs(10, 2);
    ModelSpec spec;
    spec.kind = ModelKind::kLinear;
    std::shared_ptr<const Model> model = train_model(spec, ds);
    REQUIRE_THROWS_AS(
        MarginalValueFunction(model, Matrix(0, 2), TargetSelector::predicted()),
        ConfigError);
}

TEST_CASE("marginal single-row draw equals the exact difference", "[shapley]") {
    Dataset ds = testutil::two_blobs(20, 3);
    ModelSpec spec;
    spec.kind = ModelKind::kLinear;
    spec.seed = 2;
    std::shared_ptr<const Model> model = train_model(spec, ds);
    Matrix background(1, 2);
    background.at(0, 0) = 0.5;
    background.at(0, 1) = -0.25;
    MarginalValueFunction vf(model, background, TargetSelector::for_class(1));
    auto rng = make_rng(99);
    const std::vector<double> x = {2.0, -2.0};
    const double drawn = vf.draw_marginal(0, 0, x, rng);
    const double exact = vf.value(1, x) - vf.value(0, x);
    REQUIRE(drawn == Catch::Approx(exact).margin(1e-15));
}

TEST_CASE("feasibility caps name the escape hatch", "[shapley]") {
    CustomValueFunction wide(21, [](Coalition, const std::vector<double>&) { return 0.0; });
    const std::vector<double> x21(21, 0.0);
    REQUIRE_THROWS_AS(shapley_exact_subsets(wide, x21, 0), FeasibilityError);
    REQUIRE_THROWS_WITH(shapley_exact_subsets(wide, x21, 0),
                        Catch::Matchers::ContainsSubstring("montecarlo"));

    CustomValueFunction eleven(11,
                               [](Coalition, const std::vector<double>&) { return 0.0; });
    const std::vector<double> x11(11, 0.0);
    REQUIRE_THROWS_AS(shapley_exact_permutations(eleven, x11, 0), FeasibilityError);
    REQUIRE(shapley_exact_subsets(eleven, x11, 0) == 0.0);

    CustomValueFunction huge(40, [](Coalition s, const std::vector<double>&) {
        return static_cast<double>(__builtin_popcountll(s));
    });
    const std::vector<double> x40(40, 0.0);
    const McEstimate est = shapley_montecarlo(huge, x40, 5, 50, 1);
    REQUIRE(est.estimate == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("feature index bounds are enforced", "[shapley]") {
    CustomValueFunction vf(3, [](Coalition, const std::vector<double>&) { return 0.0; });
    const std::vector<double> x(3, 0.0);
    REQUIRE_THROWS_AS(shapley_exact_subsets(vf, x, 3), ContractError);
    REQUIRE_THROWS_AS(shapley_exact_permutations(vf, x, 5), ContractError);
    REQUIRE_THROWS_AS(shapley_montecarlo(vf, x, 9, 10, 0), ContractError);
    REQUIRE_THROWS_AS(vf.value(0b1000, x), ContractError);
    REQUIRE_THROWS_AS(vf.value(0, {1.0}), ContractError);
}

TEST_CASE("monte carlo needs at least two draws", "[shapley]") {
    CustomValueFunction vf(2, [](Coalition, const std::vector<double>&) { return 0.0; });
    const std::vector<double> x(2, 0.0);
    REQUIRE_THROWS_AS(shapley_montecarlo(vf, x, 0, 1, 0), ConfigError);
    REQUIRE_THROWS_AS(shapley_montecarlo(vf, x, 0, 0, 0), ConfigError);
}

TEST_CASE("monte carlo is deterministic per seed", "[shapley]") {
    CustomValueFunction vf(6, table_game(random_table(6, 555)));
    const std::vector<double> x(6, 0.0);
    const McEstimate a = shapley_montecarlo(vf, x, 2, 400, 42);
    const McEstimate b = shapley_montecarlo(vf, x, 2, 400, 42);
    const McEstimate c = shapley_montecarlo(vf, x, 2, 400, 43);
    REQUIRE(a.estimate == b.estimate);
    REQUIRE(a.std_error == b.std_error);
    REQUIRE(a.draws == 400);
    REQUIRE(a.estimate != c.estimate);
}

TEST_CASE("monte carlo brackets the exact value", "[shapley]") {
    int hits = 0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        CustomValueFunction vf(6, table_game(random_table(6, 7000 + trial)));
        const std::vector<double> x(6, 0.0);
        const std::size_t i = trial % 6;
        const double exact = shapley_exact_subsets(vf, x, i);
        const McEstimate est = shapley_montecarlo(vf, x, i, 2000, 100 + trial);
        REQUIRE(est.std_error >= 0.0);
        if (std::abs(est.estimate - exact) <= 4.0 * est.std_error + 1e-12) ++hits;
    }
    REQUIRE(hits >= 17);
}

TEST_CASE("monte carlo standard error shrinks with more draws", "[shapley]") {
    CustomValueFunction vf(6, table_game(random_table(6, 321)));
    const std::vector<double> x(6, 0.0);
    const McEstimate small = shapley_montecarlo(vf, x, 1, 100, 5);
    const McEstimate big = shapley_montecarlo(vf, x, 1, 10000, 5);
    REQUIRE(big.std_error < small.std_error);
    REQUIRE(big.std_error > 0.0);
}

TEST_CASE("matrix rows satisfy efficiency against the model", "[shapley]") {
    Dataset ds = make_synthetic_classification(150, 4, 3, 17);
    ModelSpec spec;
    spec.kind = ModelKind::kForest;
    spec.n_trees = 10;
    spec.seed = 6;
    std::shared_ptr<const Model> model = train_model(spec, ds);
    const TargetSelector sel = TargetSelector::for_class(0);
    MarginalValueFunction vf(model, ds.X, sel);

    Matrix samples(3, 4);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 4; ++c) samples.at(r, c) = ds.X.at(r + 10, c);
    }
    ShapleyParams params;
    params.method = ShapleyMethod::kExactSubsets;
    const ShapleyMatrix m = shapley_matrix(vf, samples, ds.feature_names, params);
    REQUIRE(m.phi.rows() == 3);
    REQUIRE(m.phi.cols() == 4);
    REQUIRE(m.mode == "MARGINAL");
    REQUIRE(m.method == "subsets");
    for (std::size_t r = 0; r < 3; ++r) {
        double total = m.base_value;
        for (std::size_t c = 0; c < 4; ++c) total += m.phi.at(r, c);
        const double fx = sel.select(model->predict_proba(samples.row_vec(r)));
        REQUIRE(total == Catch::Approx(fx).margin(1e-9));
    }
}

TEST_CASE("matrix in retrain mode reports its own base", "[shapley]") {
    const Dataset ds = testutil::two_blobs(20, 19);
    RetrainValueFunction vf(
        [](const Dataset& sub) {
            ModelSpec spec;
            spec.kind = ModelKind::kLinear;
            spec.seed = 4;
            spec.linear_epochs = 15;
            return train_model(spec, sub);
        },
        ds, TargetSelector::for_class(1));
    Matrix samples(1, 2);
    samples.at(0, 0) = 1.0;
    samples.at(0, 1) = -1.0;
    ShapleyParams params;
    const ShapleyMatrix m = shapley_matrix(vf, samples, ds.feature_names, params);
    REQUIRE(m.base_value == 0.0);
    REQUIRE(m.mode == "RETRAIN");
    const double full = vf.value(0b11, samples.row_vec(0));
    REQUIRE(m.phi.at(0, 0) + m.phi.at(0, 1) == Catch::Approx(full).margin(1e-9));
}

TEST_CASE("matrix monte carlo entries are reproducible", "[shapley]") {
    CustomValueFunction vf(5, table_game(random_table(5, 88)));
    Matrix samples(2, 5);
    ShapleyParams params;
    params.method = ShapleyMethod::kMonteCarlo;
    params.mc_draws = 200;
    params.seed = 9;
    const std::vector<std::string> names = {"a", "b", "c", "d", "e"};
    const ShapleyMatrix m1 = shapley_matrix(vf, samples, names, params);
    const ShapleyMatrix m2 = shapley_matrix(vf, samples, names, params);
    REQUIRE(m1.phi == m2.phi);
    REQUIRE(m1.method == "montecarlo");
    REQUIRE(m1.seed == 9);

    params.seed = 10;
    const ShapleyMatrix m3 = shapley_matrix(vf, samples, names, params);
    REQUIRE_FALSE(m1.phi == m3.phi);
}

TEST_CASE("matrix serializes the pinned schema", "[shapley]") {
    CustomValueFunction vf(2, table_game({0.0, 1.0, 2.0, 5.0}));
    Matrix samples(2, 2);
    samples.at(1, 0) = 3.0;
    ShapleyParams params;
    const ShapleyMatrix m = shapley_matrix(vf, samples, {"x1", "x2"}, params);
    const nlohmann::json j = m.to_json();
    REQUIRE(j.size() == 6);
    REQUIRE(j.contains("base_value"));
    REQUIRE(j.contains("feature_names"));
    REQUIRE(j.contains("phi"));
    REQUIRE(j.contains("mode"));
    REQUIRE(j.contains("method"));
    REQUIRE(j.contains("seed"));
    REQUIRE(j["mode"] == "CUSTOM");
    REQUIRE(j["phi"].size() == 2);
    REQUIRE(j["phi"][0].size() == 2);

    const ShapleyMatrix back = ShapleyMatrix::from_json(j);
    REQUIRE(back.phi == m.phi);
    REQUIRE(back.base_value == m.base_value);
    REQUIRE(back.feature_names == m.feature_names);
    REQUIRE(back.mode == m.mode);
    REQUIRE(back.method == m.method);
    REQUIRE(back.seed == m.seed);
}

TEST_CASE("matrix validates its inputs", "[shapley]") {
    CustomValueFunction vf(3, [](Coalition, const std::vector<double>&) { return 0.0; });
    ShapleyParams params;
    REQUIRE_THROWS_AS(shapley_matrix(vf, Matrix(1, 2), {"a", "b", "c"}, params),
                      ContractError);
    REQUIRE_THROWS_AS(shapley_matrix(vf, Matrix(1, 3), {"a", "b"}, params),
                      ContractError);
}

TEST_CASE("forest combine averages element-wise", "[shapley]") {
    const std::vector<std::vector<double>> per_tree = {{1.0, 2.0, -3.0}, {3.0, 4.0, 5.0}};
    const std::vector<double> combined = forest_combine(per_tree);
    REQUIRE(combined == std::vector<double>{2.0, 3.0, 1.0});
    REQUIRE_THROWS_AS(forest_combine({}), ContractError);
    REQUIRE_THROWS_AS(forest_combine({{1.0}, {1.0, 2.0}}), ContractError);
}

TEST_CASE("forest combine matches the mean game's values", "[shapley]") {
    const std::size_t n = 5;
    const auto t1 = random_table(n, 61);
    const auto t2 = random_table(n, 62);
    auto mean_table = t1;
    for (std::size_t s = 0; s < t2.size(); ++s) {
        mean_table[s] = (t1[s] + t2[s]) / 2.0;
    }
    CustomValueFunction g1(n, table_game(t1));
    CustomValueFunction g2(n, table_game(t2));
    CustomValueFunction mean_game(n, table_game(mean_table));
    const std::vector<double> x(n, 0.0);

    std::vector<double> phi1, phi2, phi_mean;
    exact_all(g1, x, &phi1);
    exact_all(g2, x, &phi2);
    exact_all(mean_game, x, &phi_mean);
    const std::vector<double> combined = forest_combine({phi1, phi2});
    for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(combined[i] == Catch::Approx(phi_mean[i]).margin(1e-9));
    }
}

TEST_CASE("method names round trip", "[shapley]") {
    REQUIRE(to_string(ShapleyMethod::kExactSubsets) == "subsets");
    REQUIRE(to_string(ShapleyMethod::kExactPermutations) == "permutations");
    REQUIRE(to_string(ShapleyMethod::kMonteCarlo) == "montecarlo");
    REQUIRE(shapley_method_from_string("subsets") == ShapleyMethod::kExactSubsets);
    REQUIRE(shapley_method_from_string("permutations") ==
            ShapleyMethod::kExactPermutations);
    REQUIRE(shapley_method_from_string("montecarlo") == ShapleyMethod::kMonteCarlo);
    REQUIRE_THROWS_AS(shapley_method_from_string("magic"), ConfigError);
    REQUIRE(to_string(VfMode::kRetrain) == "RETRAIN");
    REQUIRE(to_string(VfMode::kMarginal) == "MARGINAL");
}

TEST_CASE("retrain shapley separates the informative feature", "[shapley]") {
    auto rng = make_rng(404);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t n = 80;
    Matrix X(n, 3);
    std::vector<int> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        const int label = static_cast<int>(r % 2);
        X.at(r, 0) = (label == 0 ? -3.0 : 3.0) + 0.3 * noise(rng);
        X.at(r, 1) = noise(rng);
        X.at(r, 2) = noise(rng);
        y[r] = label;
    }
    Dataset ds;
    ds.feature_names = {"signal", "noise1", "noise2"};
    ds.X = X;
    ds.y = y;
    ds.class_names = {"neg", "pos"};
    ds.validate();

    RetrainValueFunction vf(
        [](const Dataset& sub) {
            ModelSpec spec;
            spec.kind = ModelKind::kLinear;
            spec.seed = 12;
            return train_model(spec, sub);
        },
        ds, TargetSelector::for_class(1));
    const std::vector<double> x = {3.0, 0.1, -0.2};
    const double phi_signal = shapley_exact_subsets(vf, x, 0);
    const double phi_n1 = shapley_exact_subsets(vf, x, 1);
    const double phi_n2 = shapley_exact_subsets(vf, x, 2);
    REQUIRE(phi_signal > 2.5 * std::max(std::abs(phi_n1), std::abs(phi_n2)));
    const double full = vf.value(0b111, x);
    REQUIRE(phi_signal + phi_n1 + phi_n2 == Catch::Approx(full).margin(1e-9));
}
