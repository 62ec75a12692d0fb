#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "xai/convnet.hpp"
#include "xai/errors.hpp"
#include "xai/matrix.hpp"

namespace xai {

struct HeatCell {
    std::size_t row = 0;
    std::size_t col = 0;
    std::string feature;
    double value = 0.0;
};

struct Heatmap {
    /// Input-sized map, nearest-neighbor upsampled, cells in [0, 1].
    Matrix grid;
    /// Conv-sized map after ReLU and max normalization.
    Matrix raw;
    int class_index = 0;
    std::string image_id;
    std::vector<double> channel_weights;
    std::vector<HeatCell> top_cells;

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < grid.rows(); ++r) rows.push_back(grid.row_vec(r));
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : top_cells) {
            cells.push_back({{"row", c.row},
                             {"col", c.col},
                             {"feature", c.feature},
                             {"value", c.value}});
        }
        return {{"grid", std::move(rows)},
                {"class", class_index},
                {"top_cells", std::move(cells)}};
    }

    static Heatmap from_json(const nlohmann::json& j) {
        Heatmap h;
        const auto& rows = j.at("grid");
        if (rows.empty()) throw DataError("heatmap grid is empty");
        h.grid = Matrix(rows.size(), rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto row = rows[r].get<std::vector<double>>();
            if (row.size() != h.grid.cols())
                throw DataError("heatmap grid rows have uneven widths");
            std::copy(row.begin(), row.end(), h.grid.row(r));
        }
        h.class_index = j.at("class").get<int>();
        for (const auto& c : j.at("top_cells")) {
            h.top_cells.push_back({c.at("row").get<std::size_t>(),
                                   c.at("col").get<std::size_t>(),
                                   c.at("feature").get<std::string>(),
                                   c.at("value").get<double>()});
        }
        return h;
    }
};

/// Canonical Grad-CAM over the single conv layer: channel weights are the
/// spatial means of the class-score gradients, the raw map is the ReLU of
/// the weighted activation sum normalized by its max, and the input-sized
/// grid is a nearest-neighbor upsample.
inline Heatmap gradcam_heatmap(const ConvNet& model, const ImageSample& img,
                               int class_index, std::size_t top_cells = 10,
                               const std::string& image_id = "") {
    const ForwardTrace trace = model.forward_trace(img);
    const std::vector<Matrix> grads = model.grad_wrt_conv(trace, class_index);

    Heatmap hm;
    hm.class_index = class_index;
    hm.image_id = image_id;

    const std::size_t ch = model.conv_h();
    const std::size_t cw = model.conv_w();
    hm.raw = Matrix(ch, cw);
    for (std::size_t f = 0; f < grads.size(); ++f) {
        double alpha = 0.0;
        for (std::size_t r = 0; r < ch; ++r) {
            for (std::size_t c = 0; c < cw; ++c) alpha += grads[f].at(r, c);
        }
        alpha /= static_cast<double>(ch * cw);
        hm.channel_weights.push_back(alpha);
        for (std::size_t r = 0; r < ch; ++r) {
            for (std::size_t c = 0; c < cw; ++c) {
                hm.raw.at(r, c) += alpha * trace.conv_post[f].at(r, c);
            }
        }
    }
    double peak = 0.0;
    for (double& v : hm.raw.data()) {
        v = std::max(0.0, v);
        peak = std::max(peak, v);
    }
    if (peak > 0.0) {
        for (double& v : hm.raw.data()) v /= peak;
    }

    const std::size_t ih = img.pixels.rows();
    const std::size_t iw = img.pixels.cols();
    hm.grid = Matrix(ih, iw);
    for (std::size_t r = 0; r < ih; ++r) {
        const std::size_t sr = std::min(ch - 1, r * ch / ih);
        for (std::size_t c = 0; c < iw; ++c) {
            const std::size_t sc = std::min(cw - 1, c * cw / iw);
            hm.grid.at(r, c) = hm.raw.at(sr, sc);
        }
    }

    std::vector<HeatCell> cells;
    for (std::size_t r = 0; r < ih; ++r) {
        for (std::size_t c = 0; c < iw; ++c) {
            const std::size_t flat = r * iw + c;
            if (flat >= img.source_feature_order.size()) continue;
            cells.push_back({r, c, img.source_feature_order[flat], hm.grid.at(r, c)});
        }
    }
    std::stable_sort(cells.begin(), cells.end(), [](const HeatCell& a, const HeatCell& b) {
        return a.value > b.value;
    });
    if (cells.size() > top_cells) cells.resize(top_cells);
    hm.top_cells = std::move(cells);
    return hm;
}

}  // namespace xai
