#pragma once

/**
 * Small fully connected networks: tanh hidden layers, linear output, Adam.
 * Samples are matrix columns (features x batch).
 */

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "curekit/error.hpp"
#include "curekit/random.hpp"

namespace curekit::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Gradients {
    std::vector<Matrix> dW;
    std::vector<Vector> db;
};

class Mlp {
public:
    Mlp() = default;

    /// widths = {inputs, hidden..., outputs}; Glorot-uniform weights, zero biases.
    Mlp(const std::vector<int>& widths, Rng& rng) {
        if (widths.size() < 2) throw domain_error("mlp: need at least input and output widths");
        for (int w : widths) {
            if (w < 1) throw domain_error("mlp: layer widths must be positive");
        }
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const int in = widths[l], out = widths[l + 1];
            const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
            Matrix W(out, in);
            for (Eigen::Index j = 0; j < W.cols(); ++j) {
                for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-limit, limit);
            }
            weights_.push_back(std::move(W));
            biases_.push_back(Vector::Zero(out));
        }
    }

    std::size_t layers() const { return weights_.size(); }
    Eigen::Index inputs() const { return weights_.front().cols(); }
    Eigen::Index outputs() const { return weights_.back().rows(); }

    std::vector<int> widths() const {
        std::vector<int> w{static_cast<int>(inputs())};
        for (const auto& W : weights_) w.push_back(static_cast<int>(W.rows()));
        return w;
    }

    std::vector<Matrix>& weights() { return weights_; }
    std::vector<Vector>& biases() { return biases_; }
    const std::vector<Matrix>& weights() const { return weights_; }
    const std::vector<Vector>& biases() const { return biases_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < layers(); ++l) n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
        return n;
    }

    Matrix forward(const Matrix& X) const {
        check_input(X);
        Matrix a = X;
        for (std::size_t l = 0; l < layers(); ++l) {
            Matrix z = weights_[l] * a;
            z.colwise() += biases_[l];
            if (l + 1 < layers()) z = z.array().tanh().matrix();
            a = std::move(z);
        }
        return a;
    }

    /// Forward pass keeping every layer's activation for backward().
    Matrix forward(const Matrix& X, std::vector<Matrix>& tape) const {
        check_input(X);
        tape.clear();
        tape.push_back(X);
        for (std::size_t l = 0; l < layers(); ++l) {
            Matrix z = weights_[l] * tape.back();
            z.colwise() += biases_[l];
            if (l + 1 < layers()) z = z.array().tanh().matrix();
            tape.push_back(std::move(z));
        }
        return tape.back();
    }

    /// Gradients of a loss whose derivative w.r.t. the output is dY.
    Gradients backward(const std::vector<Matrix>& tape, const Matrix& dY) const {
        Gradients g;
        g.dW.resize(layers());
        g.db.resize(layers());
        Matrix delta = dY;
        for (std::size_t l = layers(); l-- > 0;) {
            g.dW[l].noalias() = delta * tape[l].transpose();
            g.db[l] = delta.rowwise().sum();
            if (l == 0) break;
            Matrix back = weights_[l].transpose() * delta;
            delta = back.array() * (1.0 - tape[l].array().square());
        }
        return g;
    }

    bool operator==(const Mlp& o) const {
        if (layers() != o.layers()) return false;
        for (std::size_t l = 0; l < layers(); ++l) {
            if (weights_[l].rows() != o.weights_[l].rows() || weights_[l].cols() != o.weights_[l].cols()) return false;
            if (weights_[l] != o.weights_[l] || biases_[l] != o.biases_[l]) return false;
        }
        return true;
    }

private:
    void check_input(const Matrix& X) const {
        if (weights_.empty()) throw domain_error("mlp: network has no layers");
        if (X.rows() != inputs()) {
            throw domain_error("mlp: expected " + std::to_string(inputs()) + " input features, got " +
                               std::to_string(X.rows()));
        }
    }

    std::vector<Matrix> weights_;
    std::vector<Vector> biases_;
};

struct Loss {
    double value = 0.0;
    Matrix grad;  ///< d(value)/d(output)
};

/// Mean over samples of the summed squared error per sample.
inline Loss mse(const Matrix& Y, const Matrix& T) {
    const double n = static_cast<double>(Y.cols());
    Matrix diff = Y - T;
    return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

inline Matrix softmax(const Matrix& logits) {
    Matrix p = logits;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const double m = p.col(j).maxCoeff();
        p.col(j) = (p.col(j).array() - m).exp().matrix();
        p.col(j) /= p.col(j).sum();
    }
    return p;
}

/// Mean softmax cross-entropy; `labels[j]` is the class index of column j.
inline Loss softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.cols()) throw domain_error("cross entropy: label count");
    const double n = static_cast<double>(logits.cols());
    Matrix p = softmax(logits);
    double value = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        value -= std::log(std::max(p(labels[static_cast<std::size_t>(j)], j), 1e-300));
        p(labels[static_cast<std::size_t>(j)], j) -= 1.0;
    }
    return {value / n, p / n};
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    Adam(const Mlp& net, AdamConfig config) : config_(config) {
        for (std::size_t l = 0; l < net.layers(); ++l) {
            mW_.push_back(Matrix::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
            vW_.push_back(mW_.back());
            mb_.push_back(Vector::Zero(net.biases()[l].size()));
            vb_.push_back(mb_.back());
        }
    }

    void step(Mlp& net, const Gradients& g, double learning_rate) {
        ++t_;
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        const double a = learning_rate * std::sqrt(c2) / c1;
        for (std::size_t l = 0; l < net.layers(); ++l) {
            update(net.weights()[l], g.dW[l], mW_[l], vW_[l], a);
            update(net.biases()[l], g.db[l], mb_[l], vb_[l], a);
        }
    }

    void step(Mlp& net, const Gradients& g) { step(net, g, config_.learning_rate); }

private:
    template <class P, class G>
    void update(P& p, const G& g, P& m, P& v, double a) const {
        m = config_.beta1 * m + (1.0 - config_.beta1) * g;
        v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g);
        p.array() -= a * m.array() / (v.array().sqrt() + config_.epsilon);
    }

    AdamConfig config_;
    std::vector<Matrix> mW_, vW_;
    std::vector<Vector> mb_, vb_;
    long t_ = 0;
};

/// Analytic vs central finite-difference gradients of `loss(net.forward(X))`.
struct GradientCheck {
    /// Worst ||analytic - numeric|| / max(||analytic||, ||numeric||) over the
    /// parameter blocks (each layer's weights, each layer's biases).
    double block_relative = 0.0;
    /// Worst per-parameter |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    /// Dominated by difference roundoff once a component is near zero.
    double component_relative = 0.0;
};

template <class LossFn>
GradientCheck gradient_check(Mlp net, const Matrix& X, LossFn&& loss, double step = 1e-5) {
    std::vector<Matrix> tape;
    const Matrix Y = net.forward(X, tape);
    const Gradients g = net.backward(tape, loss(Y).grad);
    GradientCheck out;
    double diff2 = 0.0, analytic2 = 0.0, numeric2 = 0.0;
    auto probe = [&](double& p, double analytic) {
        const double saved = p;
        p = saved + step;
        const double up = loss(net.forward(X)).value;
        p = saved - step;
        const double down = loss(net.forward(X)).value;
        p = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        out.component_relative = std::max(out.component_relative, std::abs(analytic - numeric) / scale);
        diff2 += (analytic - numeric) * (analytic - numeric);
        analytic2 += analytic * analytic;
        numeric2 += numeric * numeric;
    };
    auto close_block = [&] {
        const double scale = std::max({std::sqrt(analytic2), std::sqrt(numeric2), 1e-300});
        out.block_relative = std::max(out.block_relative, std::sqrt(diff2) / scale);
        diff2 = analytic2 = numeric2 = 0.0;
    };
    for (std::size_t l = 0; l < net.layers(); ++l) {
        auto& W = net.weights()[l];
        for (Eigen::Index j = 0; j < W.cols(); ++j) {
            for (Eigen::Index i = 0; i < W.rows(); ++i) probe(W(i, j), g.dW[l](i, j));
        }
        close_block();
        auto& b = net.biases()[l];
        for (Eigen::Index i = 0; i < b.size(); ++i) probe(b(i), g.db[l](i));
        close_block();
    }
    return out;
}

}  // namespace curekit::nn
