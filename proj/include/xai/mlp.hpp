#pragma once

#include <cmath>
#include <vector>

#include "xai/models.hpp"
#include "xai/prng.hpp"

namespace xai {

/// Fully connected network: rectified-linear hidden layers, softmax output,
/// cross-entropy loss. Exposed separately from the Model wrapper so gradient
/// checks can drive loss_and_gradients directly.
class MlpNetwork {
public:
    struct Layer {
        Matrix W;  // out x in
        std::vector<double> b;
    };

    MlpNetwork() = default;

    MlpNetwork(const std::vector<std::size_t>& sizes, std::mt19937_64& rng) {
        layers_.resize(sizes.size() - 1);
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            const std::size_t fan_in = sizes[l], fan_out = sizes[l + 1];
            std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
            layers_[l].W = Matrix(fan_out, fan_in);
            layers_[l].b.assign(fan_out, 0.0);
            for (std::size_t r = 0; r < fan_out; ++r) {
                for (std::size_t c = 0; c < fan_in; ++c) layers_[l].W.at(r, c) = he(rng);
            }
        }
    }

    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::size_t input_size() const { return layers_.front().W.cols(); }
    std::size_t output_size() const { return layers_.back().W.rows(); }

    std::vector<double> predict_proba(const double* x) const {
        std::vector<std::vector<double>> acts;
        forward(x, acts);
        std::vector<double> out = acts.back();
        detail::softmax_inplace(out);
        return out;
    }

    /// Mean cross-entropy over the batch; when grads is non-null, accumulates
    /// the mean-loss gradients into a layer-shaped structure.
    double loss_and_gradients(const Matrix& X, const std::vector<int>& y,
                              std::vector<Layer>* grads) const {
        if (grads != nullptr) {
            grads->resize(layers_.size());
            for (std::size_t l = 0; l < layers_.size(); ++l) {
                (*grads)[l].W = Matrix(layers_[l].W.rows(), layers_[l].W.cols());
                (*grads)[l].b.assign(layers_[l].b.size(), 0.0);
            }
        }
        const double inv_n = 1.0 / static_cast<double>(X.rows());
        double total = 0.0;
        std::vector<std::vector<double>> acts;
        for (std::size_t i = 0; i < X.rows(); ++i) {
            forward(X.row(i), acts);
            const std::vector<double>& z = acts.back();
            double hi = z[0];
            for (double v : z) hi = std::max(hi, v);
            double sum_exp = 0.0;
            for (double v : z) sum_exp += std::exp(v - hi);
            const auto label = static_cast<std::size_t>(y[i]);
            total += (hi + std::log(sum_exp) - z[label]) * inv_n;

            if (grads == nullptr) continue;
            std::vector<double> delta(z.size());
            for (std::size_t c = 0; c < z.size(); ++c) {
                delta[c] = std::exp(z[c] - hi) / sum_exp;
            }
            delta[label] -= 1.0;
            for (double& d : delta) d *= inv_n;
            backward(X.row(i), acts, delta, *grads);
        }
        return total;
    }

    void apply_gradients(const std::vector<Layer>& grads, double lr) {
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            double* w = layers_[l].W.data().data();
            const double* g = grads[l].W.data().data();
            for (std::size_t k = 0; k < layers_[l].W.data().size(); ++k) w[k] -= lr * g[k];
            for (std::size_t k = 0; k < layers_[l].b.size(); ++k) {
                layers_[l].b[k] -= lr * grads[l].b[k];
            }
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& layer : layers_) {
            nlohmann::json w_rows = nlohmann::json::array();
            for (std::size_t r = 0; r < layer.W.rows(); ++r) w_rows.push_back(layer.W.row_vec(r));
            arr.push_back({{"W", std::move(w_rows)}, {"b", layer.b}});
        }
        return arr;
    }

    static MlpNetwork from_json(const nlohmann::json& arr) {
        MlpNetwork net;
        for (const auto& j : arr) {
            Layer layer;
            const auto& w_rows = j.at("W");
            layer.W = Matrix(w_rows.size(), w_rows.empty() ? 0 : w_rows[0].size());
            for (std::size_t r = 0; r < w_rows.size(); ++r) {
                const auto row = w_rows[r].get<std::vector<double>>();
                std::copy(row.begin(), row.end(), layer.W.row(r));
            }
            layer.b = j.at("b").get<std::vector<double>>();
            net.layers_.push_back(std::move(layer));
        }
        return net;
    }

private:
    // acts[l] holds layer l's pre-softmax outputs; hidden entries are post-ReLU.
    void forward(const double* x, std::vector<std::vector<double>>& acts) const {
        acts.resize(layers_.size());
        const double* input = x;
        std::size_t in_size = input_size();
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& layer = layers_[l];
            acts[l].assign(layer.W.rows(), 0.0);
            for (std::size_t r = 0; r < layer.W.rows(); ++r) {
                const double* w = layer.W.row(r);
                double z = layer.b[r];
                for (std::size_t c = 0; c < in_size; ++c) z += w[c] * input[c];
                acts[l][r] = l + 1 < layers_.size() ? std::max(0.0, z) : z;
            }
            input = acts[l].data();
            in_size = acts[l].size();
        }
    }

    void backward(const double* x, const std::vector<std::vector<double>>& acts,
                  std::vector<double> delta, std::vector<Layer>& grads) const {
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const double* input = l == 0 ? x : acts[l - 1].data();
            const std::size_t in_size = layers_[l].W.cols();
            for (std::size_t r = 0; r < layers_[l].W.rows(); ++r) {
                grads[l].b[r] += delta[r];
                double* gw = grads[l].W.row(r);
                for (std::size_t c = 0; c < in_size; ++c) gw[c] += delta[r] * input[c];
            }
            if (l == 0) break;
            std::vector<double> prev(in_size, 0.0);
            for (std::size_t c = 0; c < in_size; ++c) {
                if (acts[l - 1][c] <= 0.0) continue;  // ReLU gate
                double sum = 0.0;
                for (std::size_t r = 0; r < layers_[l].W.rows(); ++r) {
                    sum += layers_[l].W.at(r, c) * delta[r];
                }
                prev[c] = sum;
            }
            delta = std::move(prev);
        }
    }

    std::vector<Layer> layers_;
};

/// Multilayer perceptron trained by minibatch stochastic gradient descent.
class MlpModel : public Model {
public:
    MlpModel(const ModelSpec& spec, const Dataset& train_ds)
        : Model(spec, train_ds.feature_names, train_ds.class_names) {
        spec_.validate();
        check_trainable(train_ds);
        auto rng = make_rng(derive_seed(spec.seed, "mlp"));
        std::vector<std::size_t> sizes{train_ds.n_features()};
        for (int h : spec.hidden) sizes.push_back(static_cast<std::size_t>(h));
        sizes.push_back(train_ds.n_classes());
        net_ = MlpNetwork(sizes, rng);

        const std::size_t n = train_ds.n_samples();
        const auto batch = static_cast<std::size_t>(spec.batch_size);
        std::vector<MlpNetwork::Layer> grads;
        for (int epoch = 0; epoch < spec.mlp_epochs; ++epoch) {
            const std::vector<std::size_t> order = shuffled_indices(n, rng);
            for (std::size_t start = 0; start < n; start += batch) {
                const std::size_t stop = std::min(n, start + batch);
                Matrix bx(stop - start, train_ds.n_features());
                std::vector<int> by(stop - start);
                for (std::size_t i = start; i < stop; ++i) {
                    const double* src = train_ds.X.row(order[i]);
                    std::copy(src, src + train_ds.n_features(), bx.row(i - start));
                    by[i - start] = train_ds.y[order[i]];
                }
                net_.loss_and_gradients(bx, by, &grads);
                net_.apply_gradients(grads, spec.mlp_learning_rate);
            }
        }
    }

    MlpModel(ModelSpec spec, std::vector<std::string> feature_names,
             std::vector<std::string> class_names, MlpNetwork net)
        : Model(std::move(spec), std::move(feature_names), std::move(class_names)),
          net_(std::move(net)) {}

    const MlpNetwork& network() const { return net_; }

    nlohmann::json to_json() const override {
        return {{"version", 1},
                {"spec", spec_.to_json()},
                {"feature_names", feature_names_},
                {"class_names", class_names_},
                {"params", {{"layers", net_.to_json()}}}};
    }

protected:
    std::vector<double> proba(const double* x) const override {
        return net_.predict_proba(x);
    }

private:
    MlpNetwork net_;
};

}  // namespace xai
