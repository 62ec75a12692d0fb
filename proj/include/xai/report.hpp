#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xai/errors.hpp"
#include "xai/io.hpp"
#include "xai/version.hpp"

namespace xai {

enum class PlotKind { kBar, kBeeswarmScatter, kPdpScatter, kForce, kHeatmap };

inline std::string to_string(PlotKind k) {
    switch (k) {
        case PlotKind::kBar: return "bar";
        case PlotKind::kBeeswarmScatter: return "beeswarm_scatter";
        case PlotKind::kPdpScatter: return "pdp_scatter";
        case PlotKind::kForce: return "force";
        case PlotKind::kHeatmap: return "heatmap";
    }
    throw ContractError("invalid plot kind");
}

struct PlotSpec {
    PlotKind kind = PlotKind::kBar;
    std::string title;
    std::string x_label;
    std::string y_label;
    int width = 640;
    int height = 400;
    nlohmann::json payload;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string fmt(double v) {
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

/// Blue-to-red interpolation for scatter colors: rgb(255t, 0, 255(1-t)).
inline std::string blue_red(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(255.0 * t));
    const int b = static_cast<int>(std::lround(255.0 * (1.0 - t)));
    return "rgb(" + std::to_string(r) + ",0," + std::to_string(b) + ")";
}

/// 64-step quantized ramp for heatmap cells: step i = round(63v), color
/// rgb(round(255 i/63), 0, round(255 (1 - i/63))).
inline std::string heat_ramp(double v) {
    v = std::clamp(v, 0.0, 1.0);
    const int i = static_cast<int>(std::lround(63.0 * v));
    const double t = static_cast<double>(i) / 63.0;
    return blue_red(t);
}

inline void require_field(const nlohmann::json& payload, const std::string& field) {
    if (!payload.contains(field))
        throw DataError("plot payload is missing field '" + field + "'");
}

inline void check_payload(const PlotSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0)
        throw ConfigError("plot dimensions must be positive");
    if (spec.kind == PlotKind::kHeatmap) {
        require_field(spec.payload, "grid");
        require_field(spec.payload, "class");
        require_field(spec.payload, "top_cells");
        return;
    }
    require_field(spec.payload, "kind");
    const std::string got = spec.payload.at("kind").get<std::string>();
    const bool ok =
        (spec.kind == PlotKind::kBar && (got == "perm_importance" || got == "summary")) ||
        (spec.kind == PlotKind::kBeeswarmScatter && got == "beeswarm") ||
        (spec.kind == PlotKind::kPdpScatter && got == "pdp") ||
        (spec.kind == PlotKind::kForce && got == "force");
    if (!ok)
        throw DataError("plot payload field 'kind': '" + got +
                        "' does not match plot kind '" + to_string(spec.kind) + "'");
    if (spec.kind == PlotKind::kBar)
        require_field(spec.payload, got == "summary" ? "entries" : "rows");
    if (spec.kind == PlotKind::kBeeswarmScatter) require_field(spec.payload, "features");
    if (spec.kind == PlotKind::kPdpScatter) {
        require_field(spec.payload, "grid");
        require_field(spec.payload, "mean_response");
    }
    if (spec.kind == PlotKind::kForce) {
        require_field(spec.payload, "base_value");
        require_field(spec.payload, "model_output");
        require_field(spec.payload, "contributions");
    }
}

struct Frame {
    double x0, y0, w, h;
};

inline void open_svg(std::ostringstream& out, const PlotSpec& spec) {
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\""
        << spec.width << "\" height=\"" << spec.height << "\" viewBox=\"0 0 "
        << spec.width << " " << spec.height << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << spec.width << "\" height=\""
        << spec.height << "\" fill=\"white\"/>\n";
    if (!spec.title.empty()) {
        out << "<text x=\"" << spec.width / 2
            << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
            << xml_escape(spec.title) << "</text>\n";
    }
}

inline void axis_labels(std::ostringstream& out, const PlotSpec& spec,
                        const Frame& frame) {
    if (!spec.x_label.empty()) {
        out << "<text x=\"" << fmt(frame.x0 + frame.w / 2) << "\" y=\""
            << spec.height - 8 << "\" text-anchor=\"middle\" font-size=\"11\">"
            << xml_escape(spec.x_label) << "</text>\n";
    }
    if (!spec.y_label.empty()) {
        out << "<text x=\"14\" y=\"" << fmt(frame.y0 + frame.h / 2)
            << "\" text-anchor=\"middle\" font-size=\"11\" transform=\"rotate(-90 14 "
            << fmt(frame.y0 + frame.h / 2) << ")\">" << xml_escape(spec.y_label)
            << "</text>\n";
    }
}

inline void render_bar(std::ostringstream& out, const PlotSpec& spec,
                       const Frame& frame) {
    struct Item {
        std::string name;
        double value;
    };
    std::vector<Item> items;
    if (spec.payload.at("kind") == "summary") {
        for (const auto& e : spec.payload.at("entries")) {
            items.push_back({e.at("feature").get<std::string>(),
                             e.at("mean_abs_phi").get<double>()});
        }
    } else {
        for (const auto& r : spec.payload.at("rows")) {
            items.push_back(
                {r.at("feature").get<std::string>(), r.at("mean_drop").get<double>()});
        }
    }
    double peak = 0.0;
    for (const auto& item : items) peak = std::max(peak, std::abs(item.value));
    if (peak == 0.0) peak = 1.0;
    const double band = frame.w / std::max<std::size_t>(items.size(), 1);
    const double baseline = frame.y0 + frame.h;
    out << "<line x1=\"" << fmt(frame.x0) << "\" y1=\"" << fmt(baseline) << "\" x2=\""
        << fmt(frame.x0 + frame.w) << "\" y2=\"" << fmt(baseline)
        << "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        const double h = std::abs(items[i].value) / peak * frame.h;
        const double x = frame.x0 + band * static_cast<double>(i) + band * 0.15;
        const std::string fill = items[i].value >= 0.0 ? "rgb(200,30,30)" : "rgb(30,30,200)";
        out << "<rect class=\"bar\" x=\"" << fmt(x) << "\" y=\"" << fmt(baseline - h)
            << "\" width=\"" << fmt(band * 0.7) << "\" height=\"" << fmt(h)
            << "\" fill=\"" << fill << "\"/>\n";
        out << "<text x=\"" << fmt(x + band * 0.35) << "\" y=\"" << fmt(baseline + 12)
            << "\" text-anchor=\"middle\" font-size=\"9\">" << xml_escape(items[i].name)
            << "</text>\n";
    }
}

inline void render_beeswarm(std::ostringstream& out, const PlotSpec& spec,
                            const Frame& frame) {
    const auto& features = spec.payload.at("features");
    double lo = 0.0, hi = 0.0;
    for (const auto& f : features) {
        for (const auto& v : f.at("phi")) {
            lo = std::min(lo, v.get<double>());
            hi = std::max(hi, v.get<double>());
        }
    }
    if (hi == lo) hi = lo + 1.0;
    const double band = frame.h / std::max<std::size_t>(features.size(), 1);
    const double zero_x = frame.x0 + (0.0 - lo) / (hi - lo) * frame.w;
    out << "<line x1=\"" << fmt(zero_x) << "\" y1=\"" << fmt(frame.y0) << "\" x2=\""
        << fmt(zero_x) << "\" y2=\"" << fmt(frame.y0 + frame.h)
        << "\" stroke=\"rgb(180,180,180)\"/>\n";
    std::size_t idx = 0;
    for (const auto& f : features) {
        const double cy = frame.y0 + band * (static_cast<double>(idx) + 0.5);
        out << "<text x=\"" << fmt(frame.x0 - 6) << "\" y=\"" << fmt(cy + 3)
            << "\" text-anchor=\"end\" font-size=\"9\">"
            << xml_escape(f.at("feature").get<std::string>()) << "</text>\n";
        const auto& phi = f.at("phi");
        const auto& color = f.at("color");
        for (std::size_t k = 0; k < phi.size(); ++k) {
            const double x =
                frame.x0 + (phi[k].get<double>() - lo) / (hi - lo) * frame.w;
            const double jitter =
                (static_cast<double>(k % 7) - 3.0) * (band * 0.08);
            out << "<circle class=\"pt\" cx=\"" << fmt(x) << "\" cy=\""
                << fmt(cy + jitter) << "\" r=\"2.5\" fill=\""
                << blue_red(color[k].get<double>()) << "\"/>\n";
        }
        ++idx;
    }
}

inline void render_pdp(std::ostringstream& out, const PlotSpec& spec,
                       const Frame& frame) {
    const auto grid = spec.payload.at("grid").get<std::vector<double>>();
    const auto resp = spec.payload.at("mean_response").get<std::vector<double>>();
    if (grid.size() != resp.size())
        throw DataError("plot payload field 'mean_response': length differs from 'grid'");
    if (grid.empty()) throw DataError("plot payload field 'grid': empty");
    double gx0 = grid.front(), gx1 = grid.back();
    if (gx1 == gx0) gx1 = gx0 + 1.0;
    double lo = resp[0], hi = resp[0];
    for (double v : resp) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) hi = lo + 1.0;
    auto px = [&](double g) { return frame.x0 + (g - gx0) / (gx1 - gx0) * frame.w; };
    auto py = [&](double v) {
        return frame.y0 + frame.h - (v - lo) / (hi - lo) * frame.h;
    };
    std::ostringstream pts;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        pts << fmt(px(grid[i])) << "," << fmt(py(resp[i])) << " ";
    }
    out << "<polyline points=\"" << pts.str()
        << "\" fill=\"none\" stroke=\"rgb(30,30,200)\" stroke-width=\"1.5\"/>\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out << "<circle class=\"pt\" cx=\"" << fmt(px(grid[i])) << "\" cy=\""
            << fmt(py(resp[i])) << "\" r=\"3\" fill=\"rgb(200,30,30)\"/>\n";
    }
}

inline void render_force(std::ostringstream& out, const PlotSpec& spec,
                         const Frame& frame) {
    const double base = spec.payload.at("base_value").get<double>();
    const double output = spec.payload.at("model_output").get<double>();
    std::vector<std::pair<std::string, double>> pos, neg;
    for (const auto& c : spec.payload.at("contributions")) {
        const double phi = c.at("phi").get<double>();
        if (phi > 0.0) pos.emplace_back(c.at("feature").get<std::string>(), phi);
        if (phi < 0.0) neg.emplace_back(c.at("feature").get<std::string>(), phi);
    }
    auto by_mag = [](const auto& a, const auto& b) {
        return std::abs(a.second) > std::abs(b.second);
    };
    std::stable_sort(pos.begin(), pos.end(), by_mag);
    std::stable_sort(neg.begin(), neg.end(), by_mag);

    double sum_pos = 0.0;
    for (const auto& [name, v] : pos) sum_pos += v;
    double lo = std::min({base, output, base + sum_pos});
    double hi = std::max({base, output, base + sum_pos});
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = (hi - lo) * 0.05;
    lo -= pad;
    hi += pad;
    auto px = [&](double v) { return frame.x0 + (v - lo) / (hi - lo) * frame.w; };
    const double cy = frame.y0 + frame.h / 2;

    out << "<line x1=\"" << fmt(frame.x0) << "\" y1=\"" << fmt(cy) << "\" x2=\""
        << fmt(frame.x0 + frame.w) << "\" y2=\"" << fmt(cy)
        << "\" stroke=\"rgb(180,180,180)\"/>\n";
    double cursor = base;
    for (const auto& [name, v] : pos) {
        out << "<rect class=\"seg\" x=\"" << fmt(px(cursor)) << "\" y=\"" << fmt(cy - 12)
            << "\" width=\"" << fmt(px(cursor + v) - px(cursor))
            << "\" height=\"24\" fill=\"rgb(220,60,60)\"><title>" << xml_escape(name)
            << "</title></rect>\n";
        cursor += v;
    }
    for (const auto& [name, v] : neg) {
        out << "<rect class=\"seg\" x=\"" << fmt(px(cursor + v)) << "\" y=\""
            << fmt(cy - 12) << "\" width=\"" << fmt(px(cursor) - px(cursor + v))
            << "\" height=\"24\" fill=\"rgb(60,60,220)\"><title>" << xml_escape(name)
            << "</title></rect>\n";
        cursor += v;
    }
    out << "<line class=\"base\" x1=\"" << fmt(px(base)) << "\" y1=\"" << fmt(cy - 20)
        << "\" x2=\"" << fmt(px(base)) << "\" y2=\"" << fmt(cy + 20)
        << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    out << "<text x=\"" << fmt(px(base)) << "\" y=\"" << fmt(cy - 26)
        << "\" text-anchor=\"middle\" font-size=\"10\">base " << fmt(base)
        << "</text>\n";
    out << "<line class=\"out\" x1=\"" << fmt(px(output)) << "\" y1=\"" << fmt(cy - 16)
        << "\" x2=\"" << fmt(px(output)) << "\" y2=\"" << fmt(cy + 16)
        << "\" stroke=\"rgb(90,90,90)\" stroke-dasharray=\"3 2\"/>\n";
    out << "<text x=\"" << fmt(px(output)) << "\" y=\"" << fmt(cy + 32)
        << "\" text-anchor=\"middle\" font-size=\"10\">output " << fmt(output)
        << "</text>\n";
}

inline void render_heatmap(std::ostringstream& out, const PlotSpec& spec,
                           const Frame& frame) {
    const auto& rows = spec.payload.at("grid");
    if (rows.empty()) throw DataError("plot payload field 'grid': empty");
    const std::size_t h = rows.size();
    const std::size_t w = rows[0].size();
    const double cell = std::min(frame.w / static_cast<double>(w),
                                 frame.h / static_cast<double>(h));
    for (std::size_t r = 0; r < h; ++r) {
        const auto row = rows[r].get<std::vector<double>>();
        if (row.size() != w)
            throw DataError("plot payload field 'grid': rows have uneven widths");
        for (std::size_t c = 0; c < w; ++c) {
            out << "<rect class=\"cell\" x=\""
                << fmt(frame.x0 + cell * static_cast<double>(c)) << "\" y=\""
                << fmt(frame.y0 + cell * static_cast<double>(r)) << "\" width=\""
                << fmt(cell) << "\" height=\"" << fmt(cell) << "\" fill=\""
                << heat_ramp(row[c]) << "\"/>\n";
        }
    }
}

}  // namespace detail

/// Renders one plot as a standalone SVG 1.1 document. Pure function of the
/// spec; no timestamps or environment data in the output.
inline std::string render_svg(const PlotSpec& spec) {
    detail::check_payload(spec);
    std::ostringstream out;
    detail::open_svg(out, spec);
    const detail::Frame frame{60.0, 40.0, static_cast<double>(spec.width) - 80.0,
                              static_cast<double>(spec.height) - 100.0};
    switch (spec.kind) {
        case PlotKind::kBar: detail::render_bar(out, spec, frame); break;
        case PlotKind::kBeeswarmScatter: detail::render_beeswarm(out, spec, frame); break;
        case PlotKind::kPdpScatter: detail::render_pdp(out, spec, frame); break;
        case PlotKind::kForce: detail::render_force(out, spec, frame); break;
        case PlotKind::kHeatmap: detail::render_heatmap(out, spec, frame); break;
    }
    detail::axis_labels(out, spec, frame);
    out << "</svg>\n";
    return out.str();
}

struct ReportItem {
    std::string name;
    PlotSpec spec;
};

inline nlohmann::json make_manifest(const std::vector<std::string>& files,
                                    const std::map<std::string, std::uint64_t>& seeds) {
    nlohmann::json seed_obj = nlohmann::json::object();
    for (const auto& [k, v] : seeds) seed_obj[k] = v;
    return {{"version", kVersion}, {"files", files}, {"seeds", std::move(seed_obj)}};
}

/// Writes each report's JSON payload and rendered SVG plus a manifest
/// naming every file (itself included). Deterministic and idempotent.
inline nlohmann::json emit_bundle(const std::vector<ReportItem>& items,
                                  const std::string& out_dir,
                                  const std::map<std::string, std::uint64_t>& seeds) {
    ensure_directory(out_dir);
    std::vector<std::string> files;
    for (const auto& item : items) {
        if (item.name.empty() || item.name.find('/') != std::string::npos)
            throw ConfigError("report name '" + item.name + "' is not a plain file stem");
        for (const auto& seen : files) {
            if (seen == item.name + ".json")
                throw ConfigError("duplicate report name '" + item.name + "'");
        }
        const std::string svg = render_svg(item.spec);
        const std::string json_path = out_dir + "/" + item.name + ".json";
        const std::string svg_path = out_dir + "/" + item.name + ".svg";
        write_file_atomic(json_path, item.spec.payload.dump(2) + "\n");
        write_file_atomic(svg_path, svg);
        files.push_back(item.name + ".json");
        files.push_back(item.name + ".svg");
    }
    files.push_back("manifest.json");
    const nlohmann::json manifest = make_manifest(files, seeds);
    write_file_atomic(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

}  // namespace xai
