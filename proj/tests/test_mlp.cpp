#include <cmath>
#include <random>

#include "doctest.h"
#include "mgrl/errors.hpp"
#include "mgrl/mlp.hpp"

using namespace mgrl;
using doctest::Approx;
using Net = Mlp<double>;

namespace {

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
}

} // namespace

TEST_CASE("init is seeded and Glorot-bounded") {
    const auto a = Net::init({4, 16, 3}, 7);
    const auto b = Net::init({4, 16, 3}, 7);
    for (std::size_t l = 0; l < a.num_layers(); ++l) {
        CHECK(a.params().weights[l] == b.params().weights[l]);
        CHECK(a.params().biases[l].isZero());
    }
    CHECK(Net::init({4, 16, 3}, 8).params().weights[0] != a.params().weights[0]);
    CHECK(a.params().weights[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 20.0));
    CHECK(a.params().weights[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 19.0));

    const auto single = Net::init({1, 1}, 3);
    CHECK(std::abs(single.params().weights[0](0, 0)) <= std::sqrt(3.0));

    CHECK_THROWS_AS(Net::init({4}, 1), ContractViolation);
    CHECK_THROWS_AS(Net::init({4, 0, 2}, 1), ContractViolation);
}

TEST_CASE("forward pass") {
    const Net zero({3, 5, 2});
    CHECK(zero.forward(Eigen::Vector3d(1, -2, 3)).isZero());

    Net identity({1, 1});
    identity.params().weights[0](0, 0) = 1.0;
    CHECK(identity.forward(Eigen::VectorXd::Constant(1, 2.5))[0] == 2.5);

    Net ones({2, 2, 1});
    for (auto& w : ones.params().weights) w.setOnes();
    CHECK(ones.forward(Eigen::Vector2d(1, 1))[0] == Approx(4.0));
    // hidden ReLU clamps negatives
    CHECK(ones.forward(Eigen::Vector2d(-1, -1))[0] == 0.0);

    CHECK_THROWS_AS(ones.forward(Eigen::Vector3d(1, 1, 1)), ContractViolation);
    CHECK_THROWS_AS(ones.forward(Eigen::Vector2d(1, std::nan(""))), ContractViolation);
}

TEST_CASE("forward is pure and batched forward matches per-sample forward") {
    std::mt19937_64 rng(5);
    const auto net = Net::init({4, 8, 8, 3}, 21);
    Eigen::MatrixXd batch(4, 6);
    for (int c = 0; c < 6; ++c) batch.col(c) = random_vector(4, rng);
    const Eigen::MatrixXd out = net.forward_batch(batch);
    for (int c = 0; c < 6; ++c) {
        const Eigen::VectorXd one = net.forward(batch.col(c));
        CHECK(one == net.forward(batch.col(c)));
        CHECK((one - out.col(c)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("backward pass") {
    Net scalar({1, 1});
    scalar.params().weights[0](0, 0) = 3.0;
    const auto g = scalar.backward(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 1.0));
    CHECK(g.weights[0](0, 0) == Approx(2.0));
    CHECK(g.biases[0][0] == Approx(1.0));

    const auto net = Net::init({4, 8, 3}, 2);
    const auto zero = net.backward(Eigen::Vector4d(0.1, 0.2, 0.3, 0.4), Eigen::Vector3d::Zero());
    CHECK(zero.max_abs() == 0.0);

    CHECK_THROWS_AS(net.backward(Eigen::Vector4d::Ones(), Eigen::Vector2d::Ones()), ContractViolation);
}

TEST_CASE("batched backward sums per-sample gradients") {
    std::mt19937_64 rng(8);
    const auto net = Net::init({3, 6, 2}, 4);
    Eigen::MatrixXd x(3, 4), g(2, 4);
    for (int c = 0; c < 4; ++c) {
        x.col(c) = random_vector(3, rng);
        g.col(c) = random_vector(2, rng);
    }
    const auto total = net.backward_batch(x, g);
    auto sum = net.params().zeros_like();
    for (int c = 0; c < 4; ++c) {
        const auto one = net.backward(x.col(c), g.col(c));
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            sum.weights[l] += one.weights[l];
            sum.biases[l] += one.biases[l];
        }
    }
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        CHECK((total.weights[l] - sum.weights[l]).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((total.biases[l] - sum.biases[l]).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("property: backward matches central differences") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const auto net = Net::init({4, 8, 3}, rng());
        const auto x = random_vector(4, rng);
        const auto g = random_vector(3, rng);
        CHECK(grad_check(net, x, g) < 1e-4);
        CHECK(grad_check(net, x) < 1e-4);
    }
    const Net zero({4, 8, 3});
    CHECK(grad_check(zero, Eigen::Vector4d(0.3, -0.2, 0.1, 0.5)) < 1e-12);
    CHECK_THROWS_AS(grad_check(zero, Eigen::Vector4d::Ones(), 0.0), ContractViolation);
}

TEST_CASE("Adam step") {
    SUBCASE("zero gradient is a fixed point") {
        auto net = Net::init({3, 4, 2}, 1);
        const auto before = net.params();
        auto opt = AdamState<double>::for_network(net, 0.01);
        optimizer_step(net, net.params().zeros_like(), opt);
        for (std::size_t l = 0; l < net.num_layers(); ++l) CHECK(net.params().weights[l] == before.weights[l]);
        CHECK(opt.step == 1);
    }
    SUBCASE("first step moves by the learning rate against the gradient sign") {
        Net scalar({1, 1});
        scalar.params().weights[0](0, 0) = 0.5;
        auto opt = AdamState<double>::for_network(scalar, 0.1);
        auto grads = scalar.params().zeros_like();
        grads.weights[0](0, 0) = 3.7;
        grads.biases[0][0] = -0.2;
        optimizer_step(scalar, grads, opt);
        CHECK(scalar.params().weights[0](0, 0) == Approx(0.4).epsilon(1e-6));
        CHECK(scalar.params().biases[0][0] == Approx(0.1).epsilon(1e-6));
    }
    SUBCASE("identical inputs give identical trajectories") {
        auto a = Net::init({2, 3, 1}, 9), b = Net::init({2, 3, 1}, 9);
        auto oa = AdamState<double>::for_network(a, 0.01), ob = AdamState<double>::for_network(b, 0.01);
        for (int i = 0; i < 20; ++i) {
            const Eigen::Vector2d x(0.1 * i, -0.3);
            optimizer_step(a, a.backward(x, Eigen::VectorXd::Ones(1)), oa);
            optimizer_step(b, b.backward(x, Eigen::VectorXd::Ones(1)), ob);
        }
        CHECK(a.params().weights[0] == b.params().weights[0]);
        CHECK(a.params().weights[1] == b.params().weights[1]);
    }
    SUBCASE("shape and value checks") {
        auto net = Net::init({2, 3, 1}, 1);
        auto other = Net::init({2, 4, 1}, 1);
        auto opt = AdamState<double>::for_network(net, 0.01);
        CHECK_THROWS_AS(optimizer_step(net, other.params(), opt), ContractViolation);
        auto bad = net.params().zeros_like();
        bad.biases[0][0] = std::nan("");
        CHECK_THROWS_AS(optimizer_step(net, bad, opt), ContractViolation);
        CHECK_THROWS_AS(AdamState<double>::for_network(net, 0.0), ContractViolation);
    }
}

TEST_CASE("Huber loss") {
    CHECK(huber(0.5) == Approx(0.125));
    CHECK(huber(-3.0) == Approx(2.5));
    CHECK(huber_grad(0.5) == 0.5);
    CHECK(huber_grad(-3.0) == -1.0);
}

TEST_CASE("float networks") {
    const auto net = Mlp<float>::init({3, 5, 2}, 4);
    const Eigen::Vector3f x(0.1f, 0.2f, -0.3f);
    CHECK(net.forward(x).size() == 2);
    CHECK(grad_check(net, x, Eigen::Vector2f::Ones().eval(), 1e-2f) < 1e-2f);
}
