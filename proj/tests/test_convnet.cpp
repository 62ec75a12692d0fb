#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "xai/convnet.hpp"

using namespace xai;

namespace {

std::vector<std::string> numbered_features(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < n; ++j) names.push_back("g" + std::to_string(j + 1));
    return names;
}

ConvNet zero_net(int filters, std::size_t h, std::size_t w, std::size_t classes) {
    ConvNetConfig cfg;
    cfg.filters = filters;
    const std::size_t conv_h = h - 1, conv_w = w - 1;
    const std::size_t dense_in =
        static_cast<std::size_t>(filters) * (conv_h / 2) * (conv_w / 2);
    return ConvNet(cfg, h, w, classes,
                   std::vector<Matrix>(static_cast<std::size_t>(filters), Matrix(2, 2, 0.0)),
                   std::vector<double>(static_cast<std::size_t>(filters), 0.0),
                   Matrix(classes, dense_in, 0.0), std::vector<double>(classes, 0.0));
}

ImageSample image_from(const std::vector<std::vector<double>>& rows) {
    ImageSample img;
    img.pixels = Matrix(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) img.pixels.at(r, c) = rows[r][c];
    }
    return img;
}

/// Class 1 when the mean pixel is positive; blob offset +-0.5.
void mean_sign_images(std::size_t n, std::size_t side, std::uint64_t seed,
                      std::vector<ImageSample>& images, std::vector<int>& labels) {
    auto rng = make_rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i % 2 == 0 ? 1 : 0;
        ImageSample img;
        img.pixels = Matrix(side, side);
        const double shift = label == 1 ? 0.5 : -0.5;
        for (double& v : img.pixels.data()) v = shift + noise(rng);
        img.label = label;
        images.push_back(std::move(img));
        labels.push_back(label);
    }
}

}  // namespace

TEST_CASE("packing 468 features makes a 22x22 grid with 16 zero cells", "[convnet]") {
    const std::size_t n = 468;
    const auto names = numbered_features(n);
    std::vector<double> x(n);
    for (std::size_t k = 0; k < n; ++k) x[k] = static_cast<double>(k + 1);
    const ImageSample img = pack_image(x, names, names);
    REQUIRE(img.side() == 22);
    for (std::size_t k = 0; k < n; ++k) {
        REQUIRE(img.pixels.at(k / 22, k % 22) == static_cast<double>(k + 1));
    }
    std::size_t zero_tail = 0;
    for (std::size_t k = n; k < 22 * 22; ++k) {
        if (img.pixels.at(k / 22, k % 22) == 0.0) ++zero_tail;
    }
    REQUIRE(zero_tail == 16);
}

TEST_CASE("packing respects the importance order", "[convnet]") {
    const std::vector<std::string> names{"a", "b", "c", "d"};
    const std::vector<double> x{10.0, 20.0, 30.0, 40.0};
    const ImageSample img = pack_image(x, names, {"d", "b", "a", "c"});
    REQUIRE(img.side() == 2);
    REQUIRE(img.pixels.at(0, 0) == 40.0);
    REQUIRE(img.pixels.at(0, 1) == 20.0);
    REQUIRE(img.pixels.at(1, 0) == 10.0);
    REQUIRE(img.pixels.at(1, 1) == 30.0);
    const std::vector<double> back = unpack_image(img, names);
    REQUIRE(back == x);
}

TEST_CASE("packing an all-zero vector yields an all-zero image", "[convnet]") {
    const auto names = numbered_features(5);
    const ImageSample img = pack_image(std::vector<double>(5, 0.0), names, names);
    for (double v : img.pixels.data()) REQUIRE(v == 0.0);
}

TEST_CASE("packing rejects non-permutations", "[convnet]") {
    const std::vector<std::string> names{"a", "b"};
    REQUIRE_THROWS_AS(pack_image({1.0, 2.0}, names, {"a", "a"}), ContractError);
    REQUIRE_THROWS_AS(pack_image({1.0, 2.0}, names, {"a"}), ContractError);
    REQUIRE_THROWS_AS(pack_image({1.0, 2.0}, names, {"a", "zzz"}), ContractError);
}

TEST_CASE("pack and unpack round-trip random vectors", "[convnet]") {
    auto rng = make_rng(77);
    std::normal_distribution<double> noise(0.0, 2.0);
    const auto names = numbered_features(11);
    std::vector<double> x(11);
    for (double& v : x) v = noise(rng);
    auto order = names;
    std::shuffle(order.begin(), order.end(), rng);
    REQUIRE(unpack_image(pack_image(x, names, order), names) == x);
}

TEST_CASE("cnn learns the mean-sign image task", "[convnet][slow]") {
    std::vector<ImageSample> images;
    std::vector<int> labels;
    mean_sign_images(200, 6, 41, images, labels);
    std::vector<ImageSample> train(images.begin(), images.begin() + 160);
    std::vector<int> train_y(labels.begin(), labels.begin() + 160);
    ConvNetConfig cfg;
    cfg.filters = 8;
    cfg.epochs = 50;
    cfg.learning_rate = 0.05;
    cfg.seed = 41;
    const ConvNet net = train_cnn(train, train_y, cfg);
    int correct = 0;
    for (std::size_t i = 160; i < images.size(); ++i) {
        const auto p = net.predict_proba(images[i]);
        const int pred = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        correct += pred == labels[i] ? 1 : 0;
    }
    REQUIRE(static_cast<double>(correct) / 40.0 >= 0.95);
}

TEST_CASE("an untrained cnn still emits valid probabilities", "[convnet]") {
    std::vector<ImageSample> images;
    std::vector<int> labels;
    mean_sign_images(10, 5, 3, images, labels);
    ConvNetConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 9;
    const ConvNet net = train_cnn(images, labels, cfg);
    const auto p = net.predict_proba(images[0]);
    REQUIRE(p.size() == 2);
    double sum = 0.0;
    for (double v : p) {
        REQUIRE(v >= 0.0);
        sum += v;
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
    const ConvNet again = train_cnn(images, labels, cfg);
    REQUIRE(again.predict_proba(images[0]) == p);
}

TEST_CASE("cnn config rejects dropout of 1 and other bad values", "[convnet]") {
    std::vector<ImageSample> images;
    std::vector<int> labels;
    mean_sign_images(4, 5, 3, images, labels);
    ConvNetConfig cfg;
    cfg.dropout = 1.0;
    REQUIRE_THROWS_AS(train_cnn(images, labels, cfg), ConfigError);
    cfg.dropout = -0.1;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg.dropout = 0.25;
    cfg.learning_rate = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("cnn training rejects inconsistent image sizes", "[convnet]") {
    std::vector<ImageSample> images;
    std::vector<int> labels;
    mean_sign_images(4, 5, 3, images, labels);
    images[2].pixels = Matrix(6, 6, 0.0);
    REQUIRE_THROWS_AS(train_cnn(images, labels, ConvNetConfig{}), DataError);
}

TEST_CASE("zero network maps any image to all-zero activations", "[convnet]") {
    const ConvNet net = zero_net(4, 5, 5, 2);
    ImageSample img;
    img.pixels = Matrix(5, 5, 3.7);
    const ForwardTrace tr = net.forward_trace(img);
    for (const auto& m : tr.conv_pre) {
        for (double v : m.data()) REQUIRE(v == 0.0);
    }
    for (const auto& m : tr.conv_post) {
        for (double v : m.data()) REQUIRE(v == 0.0);
    }
}

TEST_CASE("trace replay reproduces the scores bit for bit", "[convnet]") {
    std::vector<ImageSample> images;
    std::vector<int> labels;
    mean_sign_images(20, 6, 13, images, labels);
    ConvNetConfig cfg;
    cfg.filters = 3;
    cfg.epochs = 2;
    cfg.seed = 13;
    const ConvNet net = train_cnn(images, labels, cfg);
    const ForwardTrace tr = net.forward_trace(images[0]);
    REQUIRE(net.replay_scores(tr.conv_post) == tr.scores);
    const ForwardTrace again = net.forward_trace(images[0]);
    REQUIRE(again.scores == tr.scores);
}

TEST_CASE("bias-free convolution is homogeneous in the input", "[convnet]") {
    auto rng = make_rng(19);
    std::normal_distribution<double> noise(0.0, 1.0);
    ConvNet net = zero_net(2, 4, 4, 2);
    for (auto& k : net.kernels()) {
        for (double& v : k.data()) v = noise(rng);
    }
    ImageSample img;
    img.pixels = Matrix(4, 4);
    for (double& v : img.pixels.data()) v = noise(rng);
    ImageSample doubled;
    doubled.pixels = img.pixels;
    for (double& v : doubled.pixels.data()) v *= 2.0;

    const ForwardTrace a = net.forward_trace(img);
    const ForwardTrace b = net.forward_trace(doubled);
    for (std::size_t f = 0; f < a.conv_pre.size(); ++f) {
        for (std::size_t i = 0; i < a.conv_pre[f].data().size(); ++i) {
            REQUIRE(b.conv_pre[f].data()[i] ==
                    Catch::Approx(2.0 * a.conv_pre[f].data()[i]).margin(1e-12));
        }
    }
}

TEST_CASE("activation gradients match finite differences", "[convnet]") {
    auto rng = make_rng(23);
    std::normal_distribution<double> noise(0.0, 1.0);
    ConvNet net = zero_net(1, 4, 4, 3);
    for (auto& k : net.kernels()) {
        for (double& v : k.data()) v = noise(rng);
    }
    for (double& v : net.dense_w().data()) v = noise(rng);
    for (double& v : net.dense_b()) v = noise(rng);
    ImageSample img;
    img.pixels = Matrix(4, 4);
    for (double& v : img.pixels.data()) v = noise(rng);

    const ForwardTrace tr = net.forward_trace(img);
    for (int cls = 0; cls < 3; ++cls) {
        const auto grads = net.grad_wrt_conv(tr, cls);
        const double h = 1e-4;
        for (std::size_t f = 0; f < grads.size(); ++f) {
            for (std::size_t i = 0; i < grads[f].data().size(); ++i) {
                auto maps = tr.conv_post;
                maps[f].data()[i] += h;
                const double up = net.replay_scores(maps)[static_cast<std::size_t>(cls)];
                maps[f].data()[i] -= 2.0 * h;
                const double down = net.replay_scores(maps)[static_cast<std::size_t>(cls)];
                const double fd = (up - down) / (2.0 * h);
                const double analytic = grads[f].data()[i];
                const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-8});
                REQUIRE(std::abs(fd - analytic) / scale <= 1e-3);
            }
        }
    }
    REQUIRE_THROWS_AS(net.grad_wrt_conv(tr, 3), ContractError);
    REQUIRE_THROWS_AS(net.grad_wrt_conv(tr, -1), ContractError);
}

TEST_CASE("a channel with zero dense weights gets a zero gradient map", "[convnet]") {
    auto rng = make_rng(29);
    std::normal_distribution<double> noise(0.0, 1.0);
    ConvNet net = zero_net(2, 6, 6, 2);
    for (auto& k : net.kernels()) {
        for (double& v : k.data()) v = noise(rng);
    }
    // Wire class scores to channel 0 only; channel 1's block stays zero.
    const std::size_t plane = net.pool_h() * net.pool_w();
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t p = 0; p < plane; ++p) net.dense_w().at(c, p) = noise(rng);
    }
    ImageSample img;
    img.pixels = Matrix(6, 6);
    for (double& v : img.pixels.data()) v = noise(rng);
    const ForwardTrace tr = net.forward_trace(img);
    const auto grads = net.grad_wrt_conv(tr, 0);
    bool channel0_nonzero = false;
    for (double v : grads[0].data()) channel0_nonzero = channel0_nonzero || v != 0.0;
    REQUIRE(channel0_nonzero);
    for (double v : grads[1].data()) REQUIRE(v == 0.0);
}

TEST_CASE("pool gradients land only on argmax cells", "[convnet]") {
    ConvNet net = zero_net(1, 5, 5, 2);
    net.dense_w() = Matrix(2, net.pool_h() * net.pool_w(), 1.0);
    ImageSample img;
    img.pixels = Matrix(5, 5);
    // Distinct values so each 2x2 window has a unique maximum.
    for (std::size_t i = 0; i < img.pixels.data().size(); ++i) {
        img.pixels.data()[i] = static_cast<double>((i * 7) % 25);
    }
    net.kernels()[0].at(0, 0) = 1.0;  // identity-ish conv reading one pixel
    const ForwardTrace tr = net.forward_trace(img);
    const auto grads = net.grad_wrt_conv(tr, 0);
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < grads[0].data().size(); ++i) {
        if (grads[0].data()[i] != 0.0) {
            ++nonzero;
            bool is_argmax = false;
            for (std::size_t p = 0; p < tr.pool_argmax[0].size(); ++p) {
                is_argmax = is_argmax || tr.pool_argmax[0][p] == i;
            }
            REQUIRE(is_argmax);
        }
    }
    REQUIRE(nonzero == net.pool_h() * net.pool_w());
}

TEST_CASE("every cnn parameter gradient matches finite differences", "[convnet][slow]") {
    auto rng = make_rng(31);
    std::normal_distribution<double> noise(0.0, 1.0);
    ConvNetConfig cfg;
    cfg.filters = 2;
    cfg.dropout = 0.0;
    cfg.epochs = 0;
    cfg.seed = 31;
    std::vector<ImageSample> images;
    std::vector<int> labels;
    mean_sign_images(6, 5, 31, images, labels);
    ConvNet net = train_cnn(images, labels, cfg);

    std::vector<const Matrix*> bx;
    for (const auto& img : images) bx.push_back(&img.pixels);
    ConvNet::Params grads;
    net.loss_and_gradients(bx, labels, &grads, nullptr);

    const double h = 1e-5;
    auto check = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double up = net.loss_and_gradients(bx, labels, nullptr, nullptr);
        param = saved - h;
        const double down = net.loss_and_gradients(bx, labels, nullptr, nullptr);
        param = saved;
        const double fd = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-8});
        REQUIRE(std::abs(fd - analytic) / scale <= 1e-3);
    };
    for (std::size_t f = 0; f < net.kernels().size(); ++f) {
        for (std::size_t i = 0; i < net.kernels()[f].data().size(); ++i) {
            check(net.kernels()[f].data()[i], grads.kernels[f].data()[i]);
        }
        check(net.kernel_bias()[f], grads.kernel_bias[f]);
    }
    for (std::size_t i = 0; i < net.dense_w().data().size(); ++i) {
        check(net.dense_w().data()[i], grads.dense_w.data()[i]);
    }
    for (std::size_t c = 0; c < net.dense_b().size(); ++c) {
        check(net.dense_b()[c], grads.dense_b[c]);
    }
}

TEST_CASE("cnn json round trip preserves predictions", "[convnet]") {
    std::vector<ImageSample> images;
    std::vector<int> labels;
    mean_sign_images(20, 6, 47, images, labels);
    ConvNetConfig cfg;
    cfg.filters = 3;
    cfg.epochs = 3;
    cfg.seed = 47;
    const ConvNet net = train_cnn(images, labels, cfg);
    const ConvNet back = ConvNet::from_json(net.to_json());
    for (const auto& img : images) {
        REQUIRE(back.predict_proba(img) == net.predict_proba(img));
    }
}

TEST_CASE("pgm export maps the value range onto 0..255", "[convnet]") {
    const ImageSample img = image_from({{0.0, 1.0}, {2.0, 4.0}});
    const std::string pgm = image_to_pgm(img);
    std::istringstream in(pgm);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    REQUIRE(magic == "P2");
    REQUIRE(w == 2);
    REQUIRE(h == 2);
    REQUIRE(maxval == 255);
    std::vector<int> values(4);
    for (int& v : values) in >> v;
    REQUIRE(values[0] == 0);
    REQUIRE(values[3] == 255);
    REQUIRE(values[1] == 64);
    REQUIRE(values[2] == 128);
}

TEST_CASE("images too small for the pipeline are rejected", "[convnet]") {
    std::vector<ImageSample> images(4);
    std::vector<int> labels{0, 1, 0, 1};
    for (auto& img : images) img.pixels = Matrix(2, 2, 1.0);
    REQUIRE_THROWS_AS(train_cnn(images, labels, ConvNetConfig{}), DataError);
}
