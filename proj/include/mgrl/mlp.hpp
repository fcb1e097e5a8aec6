#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mgrl/errors.hpp"

namespace mgrl {

// Weights and biases of a fully connected network, also used for gradients and Adam moments.
template <typename Scalar>
struct MlpParams {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    std::vector<Matrix> weights;  // layer l: sizes[l+1] x sizes[l]
    std::vector<Vector> biases;

    MlpParams zeros_like() const {
        MlpParams z;
        for (const auto& w : weights) z.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
        for (const auto& b : biases) z.biases.push_back(Vector::Zero(b.size()));
        return z;
    }

    bool same_shape(const MlpParams& o) const {
        if (weights.size() != o.weights.size() || biases.size() != o.biases.size()) return false;
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols() ||
                biases[l].size() != o.biases[l].size())
                return false;
        return true;
    }

    bool all_finite() const {
        for (const auto& w : weights)
            if (!w.allFinite()) return false;
        for (const auto& b : biases)
            if (!b.allFinite()) return false;
        return true;
    }

    Eigen::Index count() const {
        Eigen::Index n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
        return n;
    }

    // Flat index into layer order, weights (column-major) before biases.
    Scalar& at(Eigen::Index i) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (i < weights[l].size()) return weights[l].data()[i];
            i -= weights[l].size();
            if (i < biases[l].size()) return biases[l][i];
            i -= biases[l].size();
        }
        throw ContractViolation("parameter index out of range");
    }
    Scalar at(Eigen::Index i) const { return const_cast<MlpParams&>(*this).at(i); }

    Scalar max_abs() const {
        Scalar m = 0;
        for (const auto& w : weights) m = std::max(m, w.size() ? w.cwiseAbs().maxCoeff() : Scalar(0));
        for (const auto& b : biases) m = std::max(m, b.size() ? b.cwiseAbs().maxCoeff() : Scalar(0));
        return m;
    }
};

// Feedforward network with ReLU hidden layers and a linear output layer.
template <typename Scalar = double>
class Mlp {
public:
    using Params = MlpParams<Scalar>;
    using Matrix = typename Params::Matrix;
    using Vector = typename Params::Vector;

    // All-zero network.
    explicit Mlp(std::vector<Eigen::Index> layer_sizes, std::uint64_t seed = 0)
        : sizes_(std::move(layer_sizes)), seed_(seed) {
        if (sizes_.size() < 2) throw ContractViolation("an MLP needs at least an input and an output layer");
        for (auto s : sizes_)
            if (s < 1) throw ContractViolation("layer sizes must be >= 1");
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            params_.weights.push_back(Matrix::Zero(sizes_[l + 1], sizes_[l]));
            params_.biases.push_back(Vector::Zero(sizes_[l + 1]));
        }
    }

    // Glorot-uniform weights, zero biases.
    static Mlp init(std::vector<Eigen::Index> layer_sizes, std::uint64_t seed) {
        Mlp net(std::move(layer_sizes), seed);
        std::mt19937_64 rng(seed);
        for (auto& w : net.params_.weights) {
            const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
        }
        return net;
    }

    const std::vector<Eigen::Index>& layer_sizes() const { return sizes_; }
    Eigen::Index input_size() const { return sizes_.front(); }
    Eigen::Index output_size() const { return sizes_.back(); }
    std::size_t num_layers() const { return params_.weights.size(); }
    std::uint64_t seed() const { return seed_; }

    const Params& params() const { return params_; }
    Params& params() { return params_; }

    Vector forward(const Eigen::Ref<const Vector>& input) const {
        return forward_batch(input);
    }

    // Columns are samples.
    Matrix forward_batch(const Eigen::Ref<const Matrix>& inputs) const {
        check_input(inputs);
        Matrix a = inputs;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            Matrix z = params_.weights[l] * a;
            z.colwise() += params_.biases[l];
            a = (l + 1 < num_layers()) ? Matrix(z.cwiseMax(Scalar(0))) : std::move(z);
        }
        return a;
    }

    // Gradient of sum_s output_grad(:,s) . f(input(:,s)) with respect to every parameter.
    Params backward_batch(const Eigen::Ref<const Matrix>& inputs, const Eigen::Ref<const Matrix>& output_grad) const {
        check_input(inputs);
        if (output_grad.rows() != output_size() || output_grad.cols() != inputs.cols())
            throw ContractViolation("output gradient shape mismatch");
        if (!output_grad.allFinite()) throw ContractViolation("non-finite output gradient");

        const auto n = num_layers();
        std::vector<Matrix> acts(n + 1);  // post-activation per layer
        acts[0] = inputs;
        for (std::size_t l = 0; l < n; ++l) {
            Matrix z = params_.weights[l] * acts[l];
            z.colwise() += params_.biases[l];
            acts[l + 1] = (l + 1 < n) ? Matrix(z.cwiseMax(Scalar(0))) : std::move(z);
        }

        Params grads;
        grads.weights.resize(n);
        grads.biases.resize(n);
        Matrix delta = output_grad;
        for (std::size_t l = n; l-- > 0;) {
            grads.weights[l].noalias() = delta * acts[l].transpose();
            grads.biases[l] = delta.rowwise().sum();
            if (l > 0) {
                Matrix back = params_.weights[l].transpose() * delta;
                // ReLU subgradient at 0 is 0
                delta = back.cwiseProduct((acts[l].array() > Scalar(0)).matrix().template cast<Scalar>());
            }
        }
        return grads;
    }

    Params backward(const Eigen::Ref<const Vector>& input, const Eigen::Ref<const Vector>& output_grad) const {
        return backward_batch(input, output_grad);
    }

private:
    void check_input(const Eigen::Ref<const Matrix>& inputs) const {
        if (inputs.rows() != input_size())
            throw ContractViolation("input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                                    std::to_string(input_size()));
        if (!inputs.allFinite()) throw ContractViolation("non-finite network input");
    }

    std::vector<Eigen::Index> sizes_;
    Params params_;
    std::uint64_t seed_ = 0;
};

// Max relative error between backward() and central differences of output . output_grad.
template <typename Scalar>
Scalar grad_check(const Mlp<Scalar>& net, const Eigen::Ref<const typename Mlp<Scalar>::Vector>& input,
                  const Eigen::Ref<const typename Mlp<Scalar>::Vector>& output_grad, Scalar h = Scalar(1e-5)) {
    if (!(h > Scalar(0))) throw ContractViolation("finite-difference step must be > 0");
    const auto analytic = net.backward(input, output_grad);

    Mlp<Scalar> probe = net;
    Scalar worst = 0;
    for (Eigen::Index i = 0; i < analytic.count(); ++i) {
        Scalar& p = probe.params().at(i);
        const Scalar saved = p;
        p = saved + h;
        const Scalar up = probe.forward(input).dot(output_grad);
        p = saved - h;
        const Scalar down = probe.forward(input).dot(output_grad);
        p = saved;

        const Scalar numeric = (up - down) / (Scalar(2) * h);
        const Scalar a = analytic.at(i);
        const Scalar denom = std::max({std::abs(a), std::abs(numeric), Scalar(1e-8)});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

template <typename Scalar>
Scalar grad_check(const Mlp<Scalar>& net, const Eigen::Ref<const typename Mlp<Scalar>::Vector>& input,
                  Scalar h = Scalar(1e-5)) {
    return grad_check(net, input, Mlp<Scalar>::Vector::Ones(net.output_size()).eval(), h);
}

struct GradCheckSummary {
    double max_error = 0.0;
    std::vector<std::vector<Eigen::Index>> shapes;
};

// Gradient check over `count` seeded networks: the first has the full [8, 64, 64, 6] shape, the rest draw
// 1-8 inputs, up to two hidden layers of 1-64 units and 1-6 outputs. Inputs and output weights are N(0, 1).
inline GradCheckSummary grad_check_random_nets(int count, std::uint64_t seed) {
    if (count < 1) throw ContractViolation("gradient check needs at least one network");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> in(1, 8), hidden(1, 64), out(1, 6);
    std::uniform_int_distribution<int> depth(0, 2);
    std::normal_distribution<double> normal(0.0, 1.0);

    GradCheckSummary summary;
    for (int k = 0; k < count; ++k) {
        std::vector<Eigen::Index> sizes{8, 64, 64, 6};
        if (k > 0) {
            sizes = {in(rng)};
            for (int d = depth(rng); d > 0; --d) sizes.push_back(hidden(rng));
            sizes.push_back(out(rng));
        }
        auto net = Mlp<double>::init(sizes, rng());
        // non-zero biases so no unit sits exactly on the ReLU kink
        for (auto& b : net.params().biases)
            for (auto& v : b) v = 0.1 * normal(rng);
        Eigen::VectorXd x(sizes.front()), g(sizes.back());
        for (auto& v : x) v = normal(rng);
        for (auto& v : g) v = normal(rng);
        summary.max_error = std::max(summary.max_error, grad_check(net, x, g));
        summary.shapes.push_back(std::move(sizes));
    }
    return summary;
}

// Adam with decay rates 0.9 / 0.999 and epsilon 1e-8.
template <typename Scalar>
struct AdamState {
    Scalar learning_rate = Scalar(1e-3);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar epsilon = Scalar(1e-8);
    MlpParams<Scalar> m;
    MlpParams<Scalar> v;
    std::uint64_t step = 0;

    static AdamState for_network(const Mlp<Scalar>& net, Scalar learning_rate) {
        if (!(learning_rate > Scalar(0))) throw ContractViolation("learning rate must be > 0");
        AdamState s;
        s.learning_rate = learning_rate;
        s.m = net.params().zeros_like();
        s.v = net.params().zeros_like();
        return s;
    }
};

template <typename Scalar>
void optimizer_step(Mlp<Scalar>& net, const MlpParams<Scalar>& grads, AdamState<Scalar>& state) {
    auto& p = net.params();
    if (!grads.same_shape(p) || !state.m.same_shape(p) || !state.v.same_shape(p))
        throw ContractViolation("optimizer shape mismatch");
    if (!grads.all_finite()) throw ContractViolation("non-finite gradient");

    ++state.step;
    const Scalar t = static_cast<Scalar>(state.step);
    const Scalar c1 = Scalar(1) - std::pow(state.beta1, t);
    const Scalar c2 = Scalar(1) - std::pow(state.beta2, t);

    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = state.beta1 * m + (Scalar(1) - state.beta1) * g;
        v = state.beta2 * v + (Scalar(1) - state.beta2) * g.cwiseAbs2();
        param.array() -= state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
    };
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        update(p.weights[l], grads.weights[l], state.m.weights[l], state.v.weights[l]);
        update(p.biases[l], grads.biases[l], state.m.biases[l], state.v.biases[l]);
    }
}

template <typename Scalar>
Scalar huber(Scalar x, Scalar delta = Scalar(1)) {
    const Scalar a = std::abs(x);
    return a <= delta ? Scalar(0.5) * x * x : delta * (a - Scalar(0.5) * delta);
}

template <typename Scalar>
Scalar huber_grad(Scalar x, Scalar delta = Scalar(1)) {
    return std::clamp(x, -delta, delta);
}

} // namespace mgrl
