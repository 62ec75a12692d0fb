#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "xai/errors.hpp"

namespace xai {

enum class Averaging { kMacro, kWeighted };

inline std::string to_string(Averaging a) {
    return a == Averaging::kMacro ? "macro" : "weighted";
}

inline Averaging averaging_from_string(const std::string& s) {
    if (s == "macro") return Averaging::kMacro;
    if (s == "weighted") return Averaging::kWeighted;
    throw ConfigError("unknown averaging mode '" + s + "' (expected macro or weighted)");
}

struct PerClassMetrics {
    std::string class_name;
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long support = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Averaging averaging = Averaging::kWeighted;
    std::vector<PerClassMetrics> per_class;

    nlohmann::json to_json() const {
        nlohmann::json pc = nlohmann::json::array();
        for (const auto& c : per_class) {
            pc.push_back({{"class", c.class_name},
                          {"tp", c.tp},
                          {"fp", c.fp},
                          {"fn", c.fn},
                          {"support", c.support},
                          {"precision", c.precision},
                          {"recall", c.recall},
                          {"f1", c.f1}});
        }
        return {{"accuracy", accuracy},
                {"precision", precision},
                {"recall", recall},
                {"f1", f1},
                {"averaging", to_string(averaging)},
                {"per_class", pc}};
    }
};

/// One-vs-rest tallies per class; zero-denominator precision/recall/F1 are 0.
inline Metrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                               const std::vector<std::string>& class_names,
                               Averaging averaging) {
    if (y_true.size() != y_pred.size())
        throw ContractError("prediction count does not match label count");
    if (y_true.empty()) throw ContractError("cannot compute metrics on zero samples");

    Metrics m;
    m.averaging = averaging;
    m.per_class.resize(class_names.size());

    long correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        if (t < 0 || static_cast<std::size_t>(t) >= class_names.size() || p < 0 ||
            static_cast<std::size_t>(p) >= class_names.size()) {
            throw ContractError("label outside the class range");
        }
        m.per_class[static_cast<std::size_t>(t)].support++;
        if (t == p) {
            correct++;
            m.per_class[static_cast<std::size_t>(t)].tp++;
        } else {
            m.per_class[static_cast<std::size_t>(t)].fn++;
            m.per_class[static_cast<std::size_t>(p)].fp++;
        }
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(y_true.size());

    double sum_p = 0.0, sum_r = 0.0, sum_f = 0.0, weight_total = 0.0;
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        auto& pc = m.per_class[c];
        pc.class_name = class_names[c];
        const double denom_p = static_cast<double>(pc.tp + pc.fp);
        const double denom_r = static_cast<double>(pc.tp + pc.fn);
        pc.precision = denom_p == 0.0 ? 0.0 : static_cast<double>(pc.tp) / denom_p;
        pc.recall = denom_r == 0.0 ? 0.0 : static_cast<double>(pc.tp) / denom_r;
        const double pr = pc.precision + pc.recall;
        pc.f1 = pr == 0.0 ? 0.0 : 2.0 * pc.precision * pc.recall / pr;

        const double w = averaging == Averaging::kMacro
                             ? 1.0
                             : static_cast<double>(pc.support);
        sum_p += w * pc.precision;
        sum_r += w * pc.recall;
        sum_f += w * pc.f1;
        weight_total += w;
    }
    if (weight_total > 0.0) {
        m.precision = sum_p / weight_total;
        m.recall = sum_r / weight_total;
        m.f1 = sum_f / weight_total;
    }
    return m;
}

}  // namespace xai
