#pragma once

// Fully connected autoencoder scored by mean squared reconstruction error.
// Hidden layers use the configured activation, the output layer is linear.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cyberspec/errors.hpp"
#include "cyberspec/matrix.hpp"
#include "cyberspec/rng.hpp"

namespace cyberspec {

enum class Activation { relu, linear };

struct AutoencoderOptions {
    std::size_t hidden_layers = 1;
    std::size_t neurons = 40;
    std::size_t epochs = 200;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    Activation activation = Activation::relu;
    bool adam = true;  ///< false: plain mini-batch gradient descent
    std::uint64_t seed = 0;
};

struct DenseLayer {
    std::size_t in = 0, out = 0;
    std::vector<double> weights;  ///< out x in, row-major
    std::vector<double> bias;     ///< out
};

class Autoencoder {
public:
    Autoencoder() = default;
    Autoencoder(std::vector<DenseLayer> layers, Activation activation)
        : layers_(std::move(layers)), activation_(activation) {}

    /// Randomly initialised network with layer widths inputs, neurons x hidden_layers, inputs.
    static Autoencoder initialise(std::size_t inputs, const AutoencoderOptions& o) {
        if (o.neurons == 0 || o.hidden_layers == 0) throw ConfigError("autoencoder needs at least one hidden unit");
        std::vector<std::size_t> widths{inputs};
        for (std::size_t l = 0; l < o.hidden_layers; ++l) widths.push_back(o.neurons);
        widths.push_back(inputs);
        Rng rng(o.seed);
        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            DenseLayer d{widths[l], widths[l + 1], {}, std::vector<double>(widths[l + 1], 0.0)};
            const bool hidden = l + 2 < widths.size();
            // He initialisation into rectifiers, Glorot elsewhere.
            const double limit = hidden && o.activation == Activation::relu
                                     ? std::sqrt(6.0 / static_cast<double>(d.in))
                                     : std::sqrt(6.0 / static_cast<double>(d.in + d.out));
            d.weights.resize(d.in * d.out);
            for (double& w : d.weights) w = rng.uniform(-limit, limit);
            layers.push_back(std::move(d));
        }
        return Autoencoder(std::move(layers), o.activation);
    }

    std::size_t inputs() const { return layers_.empty() ? 0 : layers_.front().in; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    Activation activation() const noexcept { return activation_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
        return n;
    }

    /// Parameters flattened layer by layer: weights then bias.
    std::vector<double> parameters() const {
        std::vector<double> p;
        p.reserve(parameter_count());
        for (const auto& l : layers_) {
            p.insert(p.end(), l.weights.begin(), l.weights.end());
            p.insert(p.end(), l.bias.begin(), l.bias.end());
        }
        return p;
    }

    void set_parameters(std::span<const double> p) {
        std::size_t k = 0;
        for (auto& l : layers_) {
            for (double& w : l.weights) w = p[k++];
            for (double& b : l.bias) b = p[k++];
        }
    }

    std::vector<double> reconstruct(std::span<const double> x) const {
        std::vector<double> cur(x.begin(), x.end()), next;
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            forward_layer(layers_[li], cur, next, li + 1 < layers_.size());
            cur.swap(next);
        }
        return cur;
    }

    /// Mean squared reconstruction error over features.
    double score(std::span<const double> x) const {
        const auto y = reconstruct(x);
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (y[i] - x[i]) * (y[i] - x[i]);
        return s / static_cast<double>(x.size());
    }

    /// Mean over the given rows of the per-row MSE, and its gradient with
    /// respect to parameters() (same layout).
    double loss_and_gradient(const Matrix& data, std::span<const std::size_t> rows, std::vector<double>& grad) const {
        grad.assign(parameter_count(), 0.0);
        const std::size_t nl = layers_.size();
        std::vector<std::size_t> offset(nl);
        for (std::size_t l = 0, k = 0; l < nl; ++l) {
            offset[l] = k;
            k += layers_[l].weights.size() + layers_[l].bias.size();
        }
        const double norm = 1.0 / (static_cast<double>(rows.size()) * static_cast<double>(inputs()));
        double loss = 0.0;
        std::vector<std::vector<double>> acts(nl + 1);  // post-activation outputs per layer
        std::vector<double> delta, prev_delta;
        for (std::size_t r : rows) {
            auto x = data.row(r);
            acts[0].assign(x.begin(), x.end());
            for (std::size_t l = 0; l < nl; ++l) forward_layer(layers_[l], acts[l], acts[l + 1], l + 1 < nl);
            const auto& y = acts[nl];
            delta.resize(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) {
                const double e = y[i] - x[i];
                loss += e * e * norm;
                delta[i] = 2.0 * e * norm;
            }
            for (std::size_t l = nl; l-- > 0;) {
                const auto& L = layers_[l];
                const auto& in = acts[l];
                double* gw = grad.data() + offset[l];
                double* gb = gw + L.weights.size();
                for (std::size_t o = 0; o < L.out; ++o) {
                    const double d = delta[o];
                    if (d == 0.0) continue;
                    gb[o] += d;
                    double* row = gw + o * L.in;
                    for (std::size_t i = 0; i < L.in; ++i) row[i] += d * in[i];
                }
                if (l == 0) break;
                prev_delta.assign(L.in, 0.0);
                for (std::size_t o = 0; o < L.out; ++o) {
                    const double d = delta[o];
                    if (d == 0.0) continue;
                    const double* w = L.weights.data() + o * L.in;
                    for (std::size_t i = 0; i < L.in; ++i) prev_delta[i] += d * w[i];
                }
                if (activation_ == Activation::relu)
                    for (std::size_t i = 0; i < L.in; ++i)
                        if (in[i] <= 0.0) prev_delta[i] = 0.0;
                delta.swap(prev_delta);
            }
        }
        return loss;
    }

    double loss(const Matrix& data) const {
        double s = 0.0;
        for (std::size_t r = 0; r < data.rows(); ++r) s += score(data.row(r));
        return s / static_cast<double>(data.rows());
    }

private:
    void forward_layer(const DenseLayer& L, const std::vector<double>& in, std::vector<double>& out, bool hidden) const {
        out.resize(L.out);
        for (std::size_t o = 0; o < L.out; ++o) {
            const double* w = L.weights.data() + o * L.in;
            double s = L.bias[o];
            for (std::size_t i = 0; i < L.in; ++i) s += w[i] * in[i];
            out[o] = hidden && activation_ == Activation::relu ? std::max(0.0, s) : s;
        }
    }

    std::vector<DenseLayer> layers_;
    Activation activation_ = Activation::relu;
};

struct AutoencoderTraining {
    Autoencoder model;
    std::vector<double> loss_history;  ///< full-data loss after each epoch
    double initial_loss = 0.0;
};

inline AutoencoderTraining train_autoencoder(const Matrix& train, const AutoencoderOptions& o = {}) {
    if (train.rows() == 0) throw ConfigError("autoencoder needs training rows");
    AutoencoderTraining out{Autoencoder::initialise(train.cols(), o), {}, 0.0};
    Autoencoder& net = out.model;
    out.initial_loss = net.loss(train);

    std::vector<double> params = net.parameters(), grad, m(params.size(), 0.0), v(params.size(), 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::size_t> order(train.rows());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(hash_keys({o.seed, 0x7368756666ULL}));
    const std::size_t bs = std::max<std::size_t>(1, o.batch_size);

    for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            const double loss = net.loss_and_gradient(train, std::span(order).subspan(start, end - start), grad);
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "autoencoder loss became non-finite at epoch " << epoch + 1 << ", batch starting " << start
                    << " (learning_rate=" << o.learning_rate << ")";
                throw TrainingError(msg.str());
            }
            ++step;
            if (o.adam) {
                const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
                for (std::size_t k = 0; k < params.size(); ++k) {
                    m[k] = beta1 * m[k] + (1 - beta1) * grad[k];
                    v[k] = beta2 * v[k] + (1 - beta2) * grad[k] * grad[k];
                    params[k] -= o.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
                }
            } else {
                for (std::size_t k = 0; k < params.size(); ++k) params[k] -= o.learning_rate * grad[k];
            }
            net.set_parameters(params);
        }
        const double epoch_loss = net.loss(train);
        if (!std::isfinite(epoch_loss))
            throw TrainingError("autoencoder loss became non-finite after epoch " + std::to_string(epoch + 1));
        out.loss_history.push_back(epoch_loss);
    }
    return out;
}

}  // namespace cyberspec
