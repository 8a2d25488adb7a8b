#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "flockrl/errors.hpp"
#include "flockrl/nn.hpp"
#include "test_helpers.hpp"

using namespace flockrl;
using namespace flockrl::testing;

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool bitwise_equal(const Mlp& a, const Mlp& b) {
    if (a.layer_sizes != b.layer_sizes || a.output_activation != b.output_activation) return false;
    for (std::size_t k = 0; k < a.weights.size(); ++k)
        if (!bitwise_equal(a.weights[k], b.weights[k]) || !bitwise_equal(a.biases[k], b.biases[k]))
            return false;
    return true;
}

Mlp scalar_net(double w, double b, OutputActivation act) {
    Mlp net = mlp_init({1, 1}, 0, act);
    net.weights[0][0] = w;
    net.biases[0][0] = b;
    return net;
}

}  // namespace

TEST_CASE("mlp_init is deterministic and respects the fan-in bound") {
    const Mlp a = mlp_init({15, 64, 64, 64, 2}, 7, OutputActivation::Tanh);
    const Mlp b = mlp_init({15, 64, 64, 64, 2}, 7, OutputActivation::Tanh);
    CHECK(bitwise_equal(a, b));
    // (15*64+64) + (64*64+64) + (64*64+64) + (64*2+2)
    CHECK(a.parameter_count() == 9474);

    const Mlp tiny = mlp_init({2, 2}, 123);
    const double bound = 1.0 / std::sqrt(2.0);
    for (double w : tiny.weights[0]) CHECK(std::abs(w) <= bound);
    for (double bias : tiny.biases[0]) CHECK(bias == 0.0);

    CHECK_THROWS_AS(mlp_init({}, 0), ConfigError);
    CHECK_THROWS_AS(mlp_init({5}, 0), ConfigError);
    CHECK_THROWS_AS(mlp_init({5, 0, 2}, 0), ConfigError);
}

TEST_CASE("mlp_forward known values") {
    Mlp zero = mlp_init({3, 4, 2}, 1, OutputActivation::Tanh);
    for (auto& w : zero.weights) std::fill(w.begin(), w.end(), 0.0);
    for (double y : mlp_forward(zero, {0.3, -0.7, 2.0})) CHECK(y == 0.0);

    CHECK(mlp_forward(scalar_net(1.0, 0.0, OutputActivation::Tanh), {0.0})[0] == 0.0);

    Mlp chain = mlp_init({1, 1, 1}, 2, OutputActivation::Identity);
    chain.weights[0][0] = 1.0;
    chain.weights[1][0] = 1.0;
    chain.biases[0][0] = 0.0;
    chain.biases[1][0] = 0.0;
    CHECK(mlp_forward(chain, {1.0})[0] == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));

    CHECK_THROWS_AS(mlp_forward(chain, {1.0, 2.0}), DimensionError);
}

TEST_CASE("mlp_forward is a pure function of (net, input)") {
    const Mlp net = mlp_init({5, 8, 3}, 9, OutputActivation::Tanh);
    Rng rng(4);
    const std::vector<double> in = random_vector(5, rng);
    CHECK(bitwise_equal(mlp_forward(net, in), mlp_forward(net, in)));
}

TEST_CASE("mlp_backward hand-checked linear case") {
    const Mlp net = scalar_net(2.0, 0.0, OutputActivation::Identity);
    MlpWorkspace ws = make_workspace(net);
    mlp_forward(net, {3.0}, ws);
    MlpGrad grad = make_grad(net);
    std::vector<double> input_grad;
    mlp_backward(net, ws, {1.0}, grad, &input_grad);
    CHECK(grad.weights[0][0] == doctest::Approx(3.0));
    CHECK(grad.biases[0][0] == doctest::Approx(1.0));
    CHECK(input_grad[0] == doctest::Approx(2.0));
}

TEST_CASE("mlp_backward zero upstream gives zero gradients") {
    Mlp net = mlp_init({3, 5, 2}, 11, OutputActivation::Tanh);
    MlpWorkspace ws = make_workspace(net);
    Rng rng(5);
    mlp_forward(net, random_vector(3, rng), ws);
    MlpGrad grad = make_grad(net);
    std::vector<double> input_grad;
    mlp_backward(net, ws, {0.0, 0.0}, grad, &input_grad);
    for (const auto& w : grad.weights)
        for (double g : w) CHECK(g == 0.0);
    for (double g : input_grad) CHECK(g == 0.0);
}

TEST_CASE("mlp_backward matches finite differences on every architecture in use") {
    struct Arch {
        std::vector<int> sizes;
        OutputActivation act;
    };
    // 3-5-2 toy, the actor shape, and the n=3 critic shape
    const Arch archs[] = {{{3, 5, 2}, OutputActivation::Tanh},
                          {{15, 64, 64, 64, 2}, OutputActivation::Tanh},
                          {{51, 64, 64, 64, 1}, OutputActivation::Identity}};
    for (const Arch& arch : archs) {
        Mlp net = mlp_init(arch.sizes, 77, arch.act);
        Rng rng(13);
        const std::vector<double> input = random_vector(static_cast<std::size_t>(arch.sizes.front()), rng);
        const std::vector<double> upstream =
            random_vector(static_cast<std::size_t>(arch.sizes.back()), rng);

        MlpWorkspace ws = make_workspace(net);
        mlp_forward(net, input, ws);
        MlpGrad grad = make_grad(net);
        std::vector<double> input_grad;
        mlp_backward(net, ws, upstream, grad, &input_grad);

        auto loss = [&]() {
            const std::vector<double> out = mlp_forward(net, input);
            double acc = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) acc += upstream[i] * out[i];
            return acc;
        };
        const MlpGrad fd = fd_param_gradient(net, loss);
        CHECK(max_grad_mismatch(grad, fd) <= 1.0);

        // input gradient against finite differences
        std::vector<double> in_copy = input;
        for (std::size_t i = 0; i < in_copy.size(); ++i) {
            const double saved = in_copy[i];
            in_copy[i] = saved + 1e-5;
            const std::vector<double> up = mlp_forward(net, in_copy);
            in_copy[i] = saved - 1e-5;
            const std::vector<double> down = mlp_forward(net, in_copy);
            in_copy[i] = saved;
            double fd_i = 0.0;
            for (std::size_t o = 0; o < up.size(); ++o)
                fd_i += upstream[o] * (up[o] - down[o]) / (2e-5);
            CHECK(close_rel(input_grad[i], fd_i));
        }
    }
}

TEST_CASE("adam_step known first step and zero-gradient identity") {
    Mlp net = scalar_net(0.0, 0.0, OutputActivation::Identity);
    AdamState adam = make_adam(net, 0.001);
    MlpGrad grad = make_grad(net);

    SUBCASE("zero gradient leaves parameters unchanged") {
        const Mlp before = net;
        adam_step(adam, net, grad);
        CHECK(bitwise_equal(before, net));
        CHECK(adam.step == 1);
    }

    SUBCASE("hand-evaluated bias-corrected first step") {
        grad.weights[0][0] = 1.0;
        adam_step(adam, net, grad);
        CHECK(net.weights[0][0] == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
        CHECK(net.biases[0][0] == 0.0);
    }

    SUBCASE("non-finite gradient aborts without touching parameters") {
        grad.weights[0][0] = std::numeric_limits<double>::quiet_NaN();
        const Mlp before = net;
        CHECK_THROWS_AS(adam_step(adam, net, grad), NumericError);
        CHECK(bitwise_equal(before, net));
        CHECK(adam.step == 0);
    }
}

TEST_CASE("adam_step tracks an independently coded reference for 100 steps") {
    // reference Adam over a 2-parameter quadratic loss f(p) = p0^2 + p1^2
    double ref_p[2] = {1.5, -0.8};
    double m[2] = {0.0, 0.0}, v[2] = {0.0, 0.0};
    const double lr = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    Mlp net = scalar_net(1.5, -0.8, OutputActivation::Identity);
    AdamState adam = make_adam(net, lr);
    MlpGrad grad = make_grad(net);

    for (int t = 1; t <= 100; ++t) {
        const double g[2] = {2.0 * ref_p[0], 2.0 * ref_p[1]};
        for (int i = 0; i < 2; ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mhat = m[i] / (1.0 - std::pow(b1, t));
            const double vhat = v[i] / (1.0 - std::pow(b2, t));
            ref_p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        grad.weights[0][0] = 2.0 * net.weights[0][0];
        grad.biases[0][0] = 2.0 * net.biases[0][0];
        adam_step(adam, net, grad);
    }
    CHECK(net.weights[0][0] == doctest::Approx(ref_p[0]).epsilon(1e-12));
    CHECK(net.biases[0][0] == doctest::Approx(ref_p[1]).epsilon(1e-12));
}

TEST_CASE("adam_step is deterministic") {
    Mlp net1 = mlp_init({4, 6, 2}, 3, OutputActivation::Tanh);
    Mlp net2 = net1;
    AdamState a1 = make_adam(net1), a2 = make_adam(net2);
    MlpGrad g = make_grad(net1);
    Rng rng(8);
    for (auto& w : g.weights)
        for (double& x : w) x = rng.uniform(-1, 1);
    adam_step(a1, net1, g);
    adam_step(a2, net2, g);
    CHECK(bitwise_equal(net1, net2));
}

TEST_CASE("soft_update endpoints, hand value, and closed form") {
    Mlp source = scalar_net(1.0, 1.0, OutputActivation::Identity);
    Mlp target = scalar_net(0.0, 0.0, OutputActivation::Identity);

    SUBCASE("tau=1 copies the source") {
        soft_update(target, source, 1.0);
        CHECK(bitwise_equal(target, source));
    }
    SUBCASE("tau=0 leaves the target alone") {
        Mlp before = target;
        soft_update(target, source, 0.0);
        CHECK(bitwise_equal(target, before));
    }
    SUBCASE("single application at the paper rate") {
        soft_update(target, source, 0.0004);
        CHECK(target.weights[0][0] == doctest::Approx(0.0004).epsilon(1e-15));
    }
    SUBCASE("k applications match 1-(1-tau)^k") {
        const double tau = 0.0004;
        const int k = 1000;
        for (int i = 0; i < k; ++i) soft_update(target, source, tau);
        const double closed = 1.0 - std::pow(1.0 - tau, k);
        CHECK(target.weights[0][0] == doctest::Approx(closed).epsilon(1e-12));
    }
    SUBCASE("tau outside [0,1] is rejected") {
        CHECK_THROWS_AS(soft_update(target, source, 1.5), ConfigError);
        CHECK_THROWS_AS(soft_update(target, source, -0.1), ConfigError);
    }
}

TEST_CASE("l2_param_norm values and homogeneity") {
    Mlp zero = scalar_net(0.0, 0.0, OutputActivation::Identity);
    CHECK(l2_param_norm(zero) == 0.0);

    Mlp net = scalar_net(3.0, 4.0, OutputActivation::Identity);
    CHECK(l2_param_norm(net) == doctest::Approx(5.0).epsilon(1e-15));

    Mlp big = mlp_init({6, 9, 3}, 21, OutputActivation::Tanh);
    const double norm = l2_param_norm(big);
    scale_params(big, 2.5);
    CHECK(l2_param_norm(big) == doctest::Approx(2.5 * norm).epsilon(1e-12));
}

TEST_CASE("add_l2_norm_gradient subgradient behavior") {
    Mlp net = scalar_net(3.0, 4.0, OutputActivation::Identity);
    MlpGrad grad = make_grad(net);
    add_l2_norm_gradient(net, 1.0, grad);
    CHECK(grad.weights[0][0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(grad.biases[0][0] == doctest::Approx(0.8).epsilon(1e-15));

    Mlp zero = scalar_net(0.0, 0.0, OutputActivation::Identity);
    MlpGrad zg = make_grad(zero);
    add_l2_norm_gradient(zero, 1.0, zg);
    CHECK(zg.weights[0][0] == 0.0);
    CHECK(zg.biases[0][0] == 0.0);
}

TEST_CASE("checkpoint round-trip is bitwise and rejects corruption") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "flockrl_nn_test";
    fs::create_directories(dir);

    Mlp net = mlp_init({15, 64, 64, 2}, 42, OutputActivation::Tanh);
    AdamState adam = make_adam(net, 0.001);
    // push some state through Adam so the moments are non-trivial
    MlpGrad g = make_grad(net);
    Rng rng(6);
    for (auto& w : g.weights)
        for (double& x : w) x = rng.uniform(-1, 1);
    for (auto& b : g.biases)
        for (double& x : b) x = rng.uniform(-1, 1);
    adam_step(adam, net, g);

    const std::string path = (dir / "net.flrl").string();
    save_params(net, adam, path);

    Mlp loaded;
    AdamState loaded_adam;
    load_params(loaded, loaded_adam, path);
    CHECK(bitwise_equal(net, loaded));
    CHECK(loaded_adam.step == adam.step);
    CHECK(bitwise_equal(loaded_adam.m.weights[0], adam.m.weights[0]));
    CHECK(bitwise_equal(loaded_adam.v.biases[2], adam.v.biases[2]));

    for (int trial = 0; trial < 100; ++trial) {
        const std::vector<double> in = random_vector(15, rng);
        CHECK(bitwise_equal(mlp_forward(net, in), mlp_forward(loaded, in)));
    }

    SUBCASE("truncated file") {
        std::ifstream src(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(src)), std::istreambuf_iterator<char>());
        const std::string trunc_path = (dir / "trunc.flrl").string();
        std::ofstream out(trunc_path, std::ios::binary);
        out.write(bytes.data(), static_cast<long>(bytes.size() / 2));
        out.close();
        Mlp m2;
        AdamState a2;
        CHECK_THROWS_AS(load_params(m2, a2, trunc_path), CorruptCheckpointError);
    }

    SUBCASE("header that disagrees with the body") {
        // header of a [15,64,2] net stitched onto the body of a [15,64,64,2] net
        Mlp small = mlp_init({15, 64, 2}, 1, OutputActivation::Tanh);
        const std::string small_path = (dir / "small.flrl").string();
        save_params(small, make_adam(small), small_path);

        auto read_all = [](const std::string& p) {
            std::ifstream in(p, std::ios::binary);
            return std::string((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
        };
        const std::string small_bytes = read_all(small_path);
        const std::string big_bytes = read_all(path);
        const std::size_t small_header = 4 + 4 + 4 + 4 + 3 * 4;
        const std::size_t big_header = 4 + 4 + 4 + 4 + 4 * 4;
        const std::string mixed_path = (dir / "mixed.flrl").string();
        std::ofstream out(mixed_path, std::ios::binary);
        out.write(small_bytes.data(), static_cast<long>(small_header));
        out.write(big_bytes.data() + big_header,
                  static_cast<long>(big_bytes.size() - big_header));
        out.close();
        Mlp m2;
        AdamState a2;
        CHECK_THROWS_AS(load_params(m2, a2, mixed_path), CorruptCheckpointError);
    }

    SUBCASE("bad magic") {
        const std::string bad_path = (dir / "bad.flrl").string();
        std::ofstream out(bad_path, std::ios::binary);
        out << "NOPEERROR";
        out.close();
        Mlp m2;
        AdamState a2;
        CHECK_THROWS_AS(load_params(m2, a2, bad_path), CorruptCheckpointError);
    }
}
