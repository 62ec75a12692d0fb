#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xai/errors.hpp"
#include "xai/matrix.hpp"
#include "xai/models.hpp"
#include "xai/prng.hpp"

namespace xai {

/// Square grayscale image built from an ordered feature vector; trailing
/// cells beyond the feature count are zero padding.
struct ImageSample {
    Matrix pixels;
    std::vector<std::string> source_feature_order;
    int label = -1;

    std::size_t side() const { return pixels.rows(); }
};

/// Places x's values row-major in descending importance order on a
/// ceil(sqrt(n)) square grid, zero-padding the tail.
inline ImageSample pack_image(const std::vector<double>& x,
                              const std::vector<std::string>& feature_names,
                              const std::vector<std::string>& importance_order) {
    if (x.size() != feature_names.size())
        throw ContractError("feature vector and name list differ in length");
    if (importance_order.size() != feature_names.size())
        throw ContractError("importance order must be a permutation of the feature names");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < feature_names.size(); ++j) index[feature_names[j]] = j;
    if (index.size() != feature_names.size())
        throw ContractError("feature names are not unique");

    const std::size_t n = x.size();
    const auto side =
        static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    ImageSample img;
    img.pixels = Matrix(side, side, 0.0);
    img.source_feature_order = importance_order;
    std::vector<bool> used(n, false);
    for (std::size_t k = 0; k < importance_order.size(); ++k) {
        const auto it = index.find(importance_order[k]);
        if (it == index.end())
            throw ContractError("importance order names unknown feature '" +
                                importance_order[k] + "'");
        if (used[it->second])
            throw ContractError("importance order repeats feature '" + importance_order[k] +
                                "'");
        used[it->second] = true;
        img.pixels.at(k / side, k % side) = x[it->second];
    }
    return img;
}

/// Inverse of pack_image: reads the first n cells back into feature order.
inline std::vector<double> unpack_image(const ImageSample& img,
                                        const std::vector<std::string>& feature_names) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < feature_names.size(); ++j) index[feature_names[j]] = j;
    if (img.source_feature_order.size() != feature_names.size() ||
        index.size() != feature_names.size()) {
        throw ContractError("feature names do not match the packed image");
    }
    const std::size_t side = img.side();
    std::vector<double> x(feature_names.size());
    for (std::size_t k = 0; k < img.source_feature_order.size(); ++k) {
        const auto it = index.find(img.source_feature_order[k]);
        if (it == index.end())
            throw ContractError("packed image names unknown feature '" +
                                img.source_feature_order[k] + "'");
        x[it->second] = img.pixels.at(k / side, k % side);
    }
    return x;
}

/// Greyscale PGM (P2) rendering with the value range mapped onto 0..255.
inline std::string image_to_pgm(const ImageSample& img) {
    double lo = 0.0, hi = 0.0;
    if (!img.pixels.empty()) {
        lo = hi = img.pixels.at(0, 0);
        for (double v : img.pixels.data()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double span = hi - lo;
    std::ostringstream out;
    out << "P2\n" << img.pixels.cols() << ' ' << img.pixels.rows() << "\n255\n";
    for (std::size_t r = 0; r < img.pixels.rows(); ++r) {
        for (std::size_t c = 0; c < img.pixels.cols(); ++c) {
            const double t = span == 0.0 ? 0.0 : (img.pixels.at(r, c) - lo) / span;
            out << static_cast<int>(std::lround(t * 255.0));
            out << (c + 1 == img.pixels.cols() ? '\n' : ' ');
        }
    }
    return out.str();
}

struct ConvNetConfig {
    int filters = 32;
    int kernel_size = 2;
    double dropout = 0.25;
    int epochs = 10;
    double learning_rate = 0.01;
    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const {
        if (filters < 1) throw ConfigError("filter count must be >= 1");
        if (kernel_size < 1) throw ConfigError("kernel size must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw ConfigError("dropout rate must lie in [0, 1)");
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
        if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    }

    nlohmann::json to_json() const {
        return {{"filters", filters},       {"kernel_size", kernel_size},
                {"dropout", dropout},       {"epochs", epochs},
                {"learning_rate", learning_rate}, {"batch_size", batch_size},
                {"seed", seed}};
    }

    static ConvNetConfig from_json(const nlohmann::json& j) {
        ConvNetConfig c;
        c.filters = j.value("filters", c.filters);
        c.kernel_size = j.value("kernel_size", c.kernel_size);
        c.dropout = j.value("dropout", c.dropout);
        c.epochs = j.value("epochs", c.epochs);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", std::uint64_t{0});
        c.validate();
        return c;
    }
};

/// Activation cache from one inference pass: pre- and post-ReLU conv maps,
/// the pooled vector with its argmax routing, and the class scores.
struct ForwardTrace {
    std::vector<Matrix> conv_pre;
    std::vector<Matrix> conv_post;
    std::vector<double> pooled;
    // Flat (row * conv_w + col) argmax source per pooled cell, per filter.
    std::vector<std::vector<std::size_t>> pool_argmax;
    std::vector<double> scores;
};

/// One 2x2-style conv layer (valid padding, stride 1) -> rectified linear ->
/// 2x2 max pool (floor division, ties to the first cell in row-major order)
/// -> dropout (training only, inverted scaling) -> dense softmax.
class ConvNet {
public:
    ConvNet(const std::vector<ImageSample>& images, const std::vector<int>& labels,
            const ConvNetConfig& cfg)
        : cfg_(cfg) {
        cfg_.validate();
        if (images.empty()) throw DataError("cannot train on zero images");
        if (images.size() != labels.size())
            throw DataError("image count does not match label count");
        input_h_ = images[0].pixels.rows();
        input_w_ = images[0].pixels.cols();
        for (const auto& img : images) {
            if (img.pixels.rows() != input_h_ || img.pixels.cols() != input_w_)
                throw DataError("inconsistent image sizes in the training set");
        }
        int max_label = 0;
        for (int l : labels) {
            if (l < 0) throw DataError("negative class label");
            max_label = std::max(max_label, l);
        }
        n_classes_ = static_cast<std::size_t>(max_label) + 1;
        std::vector<int> counts(n_classes_, 0);
        for (int l : labels) counts[static_cast<std::size_t>(l)]++;
        int distinct = 0;
        for (int c : counts) distinct += c > 0 ? 1 : 0;
        if (distinct < 2) throw DataError("training requires at least 2 classes");
        const auto k = static_cast<std::size_t>(cfg_.kernel_size);
        if (input_h_ < k + 1 || input_w_ < k + 1)
            throw DataError("image side must be at least kernel_size + 1 so the pooled map "
                            "is non-empty");

        init_shapes();
        auto rng = make_rng(derive_seed(cfg_.seed, "convnet"));
        init_params(rng);

        const std::size_t n = images.size();
        const auto batch = static_cast<std::size_t>(cfg_.batch_size);
        Params grads;
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            const std::vector<std::size_t> order = shuffled_indices(n, rng);
            for (std::size_t start = 0; start < n; start += batch) {
                const std::size_t stop = std::min(n, start + batch);
                std::vector<const Matrix*> bx;
                std::vector<int> by;
                for (std::size_t i = start; i < stop; ++i) {
                    bx.push_back(&images[order[i]].pixels);
                    by.push_back(labels[order[i]]);
                }
                loss_and_gradients(bx, by, &grads, &rng);
                apply(grads, cfg_.learning_rate);
            }
        }
    }

    ConvNet(ConvNetConfig cfg, std::size_t input_h, std::size_t input_w,
            std::size_t n_classes, std::vector<Matrix> kernels, std::vector<double> kernel_bias,
            Matrix dense_w, std::vector<double> dense_b)
        : cfg_(std::move(cfg)),
          input_h_(input_h),
          input_w_(input_w),
          n_classes_(n_classes) {
        cfg_.validate();
        init_shapes();
        params_.kernels = std::move(kernels);
        params_.kernel_bias = std::move(kernel_bias);
        params_.dense_w = std::move(dense_w);
        params_.dense_b = std::move(dense_b);
        check_param_shapes();
    }

    const ConvNetConfig& config() const { return cfg_; }
    std::size_t input_h() const { return input_h_; }
    std::size_t input_w() const { return input_w_; }
    std::size_t conv_h() const { return conv_h_; }
    std::size_t conv_w() const { return conv_w_; }
    std::size_t pool_h() const { return pool_h_; }
    std::size_t pool_w() const { return pool_w_; }
    std::size_t class_count() const { return n_classes_; }

    std::vector<Matrix>& kernels() { return params_.kernels; }
    const std::vector<Matrix>& kernels() const { return params_.kernels; }
    std::vector<double>& kernel_bias() { return params_.kernel_bias; }
    Matrix& dense_w() { return params_.dense_w; }
    const Matrix& dense_w() const { return params_.dense_w; }
    std::vector<double>& dense_b() { return params_.dense_b; }

    ForwardTrace forward_trace(const ImageSample& img) const {
        if (img.pixels.rows() != input_h_ || img.pixels.cols() != input_w_)
            throw ContractError("image is " + std::to_string(img.pixels.rows()) + "x" +
                                std::to_string(img.pixels.cols()) + ", network expects " +
                                std::to_string(input_h_) + "x" + std::to_string(input_w_));
        ForwardTrace tr;
        convolve(img.pixels, tr.conv_pre, tr.conv_post);
        pool(tr.conv_post, tr.pooled, tr.pool_argmax);
        tr.scores = dense(tr.pooled);
        return tr;
    }

    /// Recomputes class scores from (possibly perturbed) post-ReLU conv maps.
    std::vector<double> replay_scores(const std::vector<Matrix>& conv_post) const {
        std::vector<double> pooled;
        std::vector<std::vector<std::size_t>> argmax;
        pool(conv_post, pooled, argmax);
        return dense(pooled);
    }

    std::vector<double> predict_proba(const ImageSample& img) const {
        std::vector<double> z = forward_trace(img).scores;
        detail::softmax_inplace(z);
        return z;
    }

    /// d(score for class_index) / d(post-ReLU conv activation), back through
    /// the dense and pooling layers only.
    std::vector<Matrix> grad_wrt_conv(const ForwardTrace& trace, int class_index) const {
        if (class_index < 0 || static_cast<std::size_t>(class_index) >= n_classes_)
            throw ContractError("class index " + std::to_string(class_index) +
                                " is out of range for " + std::to_string(n_classes_) +
                                " classes");
        std::vector<Matrix> grads(params_.kernels.size(), Matrix(conv_h_, conv_w_, 0.0));
        const std::size_t plane = pool_h_ * pool_w_;
        for (std::size_t f = 0; f < grads.size(); ++f) {
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t src = trace.pool_argmax[f][p];
                grads[f].at(src / conv_w_, src % conv_w_) +=
                    params_.dense_w.at(static_cast<std::size_t>(class_index), f * plane + p);
            }
        }
        return grads;
    }

    struct Params {
        std::vector<Matrix> kernels;
        std::vector<double> kernel_bias;
        Matrix dense_w;
        std::vector<double> dense_b;
    };

    /// Mean cross-entropy over the batch; gradients land in *grads when
    /// non-null. Dropout masks are drawn from *dropout_rng; passing nullptr
    /// runs inference mode (no dropout), which training never does but
    /// gradient checks may.
    double loss_and_gradients(const std::vector<const Matrix*>& images,
                              const std::vector<int>& labels, Params* grads,
                              std::mt19937_64* dropout_rng) const {
        if (grads != nullptr) zero_like(*grads);
        const double inv_n = 1.0 / static_cast<double>(images.size());
        double total = 0.0;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double keep = 1.0 - cfg_.dropout;
        std::vector<Matrix> conv_pre, conv_post;
        std::vector<double> pooled, mask;
        std::vector<std::vector<std::size_t>> argmax;
        for (std::size_t i = 0; i < images.size(); ++i) {
            convolve(*images[i], conv_pre, conv_post);
            pool(conv_post, pooled, argmax);
            mask.assign(pooled.size(), 1.0);
            if (dropout_rng != nullptr && cfg_.dropout > 0.0) {
                for (double& m : mask) {
                    m = unit(*dropout_rng) < cfg_.dropout ? 0.0 : 1.0 / keep;
                }
                for (std::size_t p = 0; p < pooled.size(); ++p) pooled[p] *= mask[p];
            }
            const std::vector<double> z = dense(pooled);

            double hi = z[0];
            for (double v : z) hi = std::max(hi, v);
            double sum_exp = 0.0;
            for (double v : z) sum_exp += std::exp(v - hi);
            const auto label = static_cast<std::size_t>(labels[i]);
            total += (hi + std::log(sum_exp) - z[label]) * inv_n;
            if (grads == nullptr) continue;

            std::vector<double> delta(z.size());
            for (std::size_t c = 0; c < z.size(); ++c) {
                delta[c] = std::exp(z[c] - hi) / sum_exp * inv_n;
            }
            delta[label] -= inv_n;

            std::vector<double> d_pooled(pooled.size(), 0.0);
            for (std::size_t c = 0; c < z.size(); ++c) {
                grads->dense_b[c] += delta[c];
                double* gw = grads->dense_w.row(c);
                const double* w = params_.dense_w.row(c);
                for (std::size_t p = 0; p < pooled.size(); ++p) {
                    gw[p] += delta[c] * pooled[p];
                    d_pooled[p] += w[p] * delta[c];
                }
            }
            for (std::size_t p = 0; p < d_pooled.size(); ++p) d_pooled[p] *= mask[p];

            const std::size_t plane = pool_h_ * pool_w_;
            const auto k = static_cast<std::size_t>(cfg_.kernel_size);
            for (std::size_t f = 0; f < params_.kernels.size(); ++f) {
                Matrix d_pre(conv_h_, conv_w_, 0.0);
                for (std::size_t p = 0; p < plane; ++p) {
                    const std::size_t src = argmax[f][p];
                    const std::size_t r = src / conv_w_, c = src % conv_w_;
                    if (conv_pre[f].at(r, c) > 0.0) {
                        d_pre.at(r, c) += d_pooled[f * plane + p];
                    }
                }
                for (std::size_t r = 0; r < conv_h_; ++r) {
                    for (std::size_t c = 0; c < conv_w_; ++c) {
                        const double g = d_pre.at(r, c);
                        if (g == 0.0) continue;
                        grads->kernel_bias[f] += g;
                        for (std::size_t u = 0; u < k; ++u) {
                            for (std::size_t v = 0; v < k; ++v) {
                                grads->kernels[f].at(u, v) +=
                                    g * images[i]->at(r + u, c + v);
                            }
                        }
                    }
                }
            }
        }
        return total;
    }

    void apply(const Params& grads, double lr) {
        for (std::size_t f = 0; f < params_.kernels.size(); ++f) {
            for (std::size_t i = 0; i < params_.kernels[f].data().size(); ++i) {
                params_.kernels[f].data()[i] -= lr * grads.kernels[f].data()[i];
            }
            params_.kernel_bias[f] -= lr * grads.kernel_bias[f];
        }
        for (std::size_t i = 0; i < params_.dense_w.data().size(); ++i) {
            params_.dense_w.data()[i] -= lr * grads.dense_w.data()[i];
        }
        for (std::size_t c = 0; c < params_.dense_b.size(); ++c) {
            params_.dense_b[c] -= lr * grads.dense_b[c];
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json kernels = nlohmann::json::array();
        for (const auto& kmat : params_.kernels) kernels.push_back(kmat.data());
        nlohmann::json dense_rows = nlohmann::json::array();
        for (std::size_t r = 0; r < params_.dense_w.rows(); ++r) {
            dense_rows.push_back(params_.dense_w.row_vec(r));
        }
        return {{"version", 1},
                {"config", cfg_.to_json()},
                {"input_h", input_h_},
                {"input_w", input_w_},
                {"classes", n_classes_},
                {"params",
                 {{"kernels", std::move(kernels)},
                  {"kernel_bias", params_.kernel_bias},
                  {"dense_w", std::move(dense_rows)},
                  {"dense_b", params_.dense_b}}}};
    }

    static ConvNet from_json(const nlohmann::json& j) {
        const int version = j.value("version", 0);
        if (version != 1)
            throw DataError("unsupported network document version " +
                            std::to_string(version));
        const ConvNetConfig cfg = ConvNetConfig::from_json(j.at("config"));
        const auto k = static_cast<std::size_t>(cfg.kernel_size);
        std::vector<Matrix> kernels;
        for (const auto& flat : j.at("params").at("kernels")) {
            Matrix m(k, k);
            const auto vals = flat.get<std::vector<double>>();
            if (vals.size() != k * k) throw DataError("kernel has the wrong element count");
            std::copy(vals.begin(), vals.end(), m.data().begin());
            kernels.push_back(std::move(m));
        }
        const auto& dw = j.at("params").at("dense_w");
        Matrix dense_w(dw.size(), dw.empty() ? 0 : dw[0].size());
        for (std::size_t r = 0; r < dw.size(); ++r) {
            const auto row = dw[r].get<std::vector<double>>();
            std::copy(row.begin(), row.end(), dense_w.row(r));
        }
        return ConvNet(cfg, j.at("input_h").get<std::size_t>(),
                       j.at("input_w").get<std::size_t>(), j.at("classes").get<std::size_t>(),
                       std::move(kernels),
                       j.at("params").at("kernel_bias").get<std::vector<double>>(),
                       std::move(dense_w),
                       j.at("params").at("dense_b").get<std::vector<double>>());
    }

private:
    void init_shapes() {
        const auto k = static_cast<std::size_t>(cfg_.kernel_size);
        if (input_h_ < k || input_w_ < k)
            throw DataError("image smaller than the convolution kernel");
        conv_h_ = input_h_ - k + 1;
        conv_w_ = input_w_ - k + 1;
        pool_h_ = conv_h_ / 2;
        pool_w_ = conv_w_ / 2;
        if (pool_h_ == 0 || pool_w_ == 0)
            throw DataError("pooled map is empty; the input image is too small");
    }

    void init_params(std::mt19937_64& rng) {
        const auto k = static_cast<std::size_t>(cfg_.kernel_size);
        const auto filters = static_cast<std::size_t>(cfg_.filters);
        std::normal_distribution<double> conv_init(0.0,
                                                   std::sqrt(2.0 / static_cast<double>(k * k)));
        params_.kernels.assign(filters, Matrix(k, k));
        params_.kernel_bias.assign(filters, 0.0);
        for (auto& kmat : params_.kernels) {
            for (double& v : kmat.data()) v = conv_init(rng);
        }
        const std::size_t dense_in = filters * pool_h_ * pool_w_;
        std::normal_distribution<double> dense_init(
            0.0, std::sqrt(2.0 / static_cast<double>(dense_in)));
        params_.dense_w = Matrix(n_classes_, dense_in);
        params_.dense_b.assign(n_classes_, 0.0);
        for (double& v : params_.dense_w.data()) v = dense_init(rng);
    }

    void check_param_shapes() const {
        const auto k = static_cast<std::size_t>(cfg_.kernel_size);
        const std::size_t dense_in =
            static_cast<std::size_t>(cfg_.filters) * pool_h_ * pool_w_;
        if (params_.kernels.size() != static_cast<std::size_t>(cfg_.filters) ||
            params_.kernel_bias.size() != params_.kernels.size() ||
            params_.dense_w.rows() != n_classes_ || params_.dense_w.cols() != dense_in ||
            params_.dense_b.size() != n_classes_) {
            throw DataError("network parameter shapes are inconsistent");
        }
        for (const auto& kmat : params_.kernels) {
            if (kmat.rows() != k || kmat.cols() != k)
                throw DataError("kernel shape does not match the configured size");
        }
    }

    void zero_like(Params& g) const {
        const auto k = static_cast<std::size_t>(cfg_.kernel_size);
        g.kernels.assign(params_.kernels.size(), Matrix(k, k, 0.0));
        g.kernel_bias.assign(params_.kernel_bias.size(), 0.0);
        g.dense_w = Matrix(params_.dense_w.rows(), params_.dense_w.cols(), 0.0);
        g.dense_b.assign(params_.dense_b.size(), 0.0);
    }

    void convolve(const Matrix& img, std::vector<Matrix>& pre,
                  std::vector<Matrix>& post) const {
        const auto k = static_cast<std::size_t>(cfg_.kernel_size);
        pre.assign(params_.kernels.size(), Matrix(conv_h_, conv_w_));
        post.assign(params_.kernels.size(), Matrix(conv_h_, conv_w_));
        for (std::size_t f = 0; f < params_.kernels.size(); ++f) {
            const Matrix& kmat = params_.kernels[f];
            for (std::size_t r = 0; r < conv_h_; ++r) {
                for (std::size_t c = 0; c < conv_w_; ++c) {
                    double z = params_.kernel_bias[f];
                    for (std::size_t u = 0; u < k; ++u) {
                        for (std::size_t v = 0; v < k; ++v) {
                            z += kmat.at(u, v) * img.at(r + u, c + v);
                        }
                    }
                    pre[f].at(r, c) = z;
                    post[f].at(r, c) = std::max(0.0, z);
                }
            }
        }
    }

    void pool(const std::vector<Matrix>& maps, std::vector<double>& pooled,
              std::vector<std::vector<std::size_t>>& argmax) const {
        const std::size_t plane = pool_h_ * pool_w_;
        pooled.assign(maps.size() * plane, 0.0);
        argmax.assign(maps.size(), std::vector<std::size_t>(plane, 0));
        for (std::size_t f = 0; f < maps.size(); ++f) {
            const Matrix& m = maps[f];
            if (m.rows() != conv_h_ || m.cols() != conv_w_)
                throw ContractError("activation map shape does not match the network");
            for (std::size_t pr = 0; pr < pool_h_; ++pr) {
                for (std::size_t pc = 0; pc < pool_w_; ++pc) {
                    double best = m.at(2 * pr, 2 * pc);
                    std::size_t best_src = (2 * pr) * conv_w_ + 2 * pc;
                    for (std::size_t dr = 0; dr < 2; ++dr) {
                        for (std::size_t dc = 0; dc < 2; ++dc) {
                            const double v = m.at(2 * pr + dr, 2 * pc + dc);
                            if (v > best) {
                                best = v;
                                best_src = (2 * pr + dr) * conv_w_ + 2 * pc + dc;
                            }
                        }
                    }
                    pooled[f * plane + pr * pool_w_ + pc] = best;
                    argmax[f][pr * pool_w_ + pc] = best_src;
                }
            }
        }
    }

    std::vector<double> dense(const std::vector<double>& pooled) const {
        std::vector<double> z(n_classes_);
        for (std::size_t c = 0; c < n_classes_; ++c) {
            const double* w = params_.dense_w.row(c);
            double s = params_.dense_b[c];
            for (std::size_t p = 0; p < pooled.size(); ++p) s += w[p] * pooled[p];
            z[c] = s;
        }
        return z;
    }

    ConvNetConfig cfg_;
    std::size_t input_h_ = 0, input_w_ = 0;
    std::size_t conv_h_ = 0, conv_w_ = 0;
    std::size_t pool_h_ = 0, pool_w_ = 0;
    std::size_t n_classes_ = 0;
    Params params_;
};

inline ConvNet train_cnn(const std::vector<ImageSample>& images,
                         const std::vector<int>& labels, const ConvNetConfig& cfg) {
    return ConvNet(images, labels, cfg);
}

inline ForwardTrace forward_trace(const ConvNet& net, const ImageSample& img) {
    return net.forward_trace(img);
}

inline std::vector<Matrix> grad_wrt_conv(const ConvNet& net, const ForwardTrace& trace,
                                         int class_index) {
    return net.grad_wrt_conv(trace, class_index);
}

}  // namespace xai
