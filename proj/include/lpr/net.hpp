#pragma once

// Fully connected network with bias folded into the weight matrices.
//
// Each layer stores theta of shape (d_in + 1) x d_out whose LAST row is the
// bias. The forward pass augments every layer input with a trailing column of
// ones, so the cached activations already carry the bias coordinate. That
// convention matters downstream: preconditioners built from those cached
// activations act on full rows of theta, bias included.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lpr/errors.hpp"
#include "lpr/matrix.hpp"
#include "lpr/rng.hpp"

namespace lpr {

enum class Activation { relu, identity };

struct Layer {
    Matrix theta;  // (d_in + 1) x d_out, last row = bias
    Activation act = Activation::identity;
    int n_eff = 1;  // per-layer strength divisor used by the preconditioner
};

struct Network {
    std::vector<Layer> layers;

    std::size_t input_dim() const {
        if (layers.empty()) throw input_error("network has no layers");
        return layers.front().theta.rows - 1;
    }
    std::size_t output_dim() const {
        if (layers.empty()) throw input_error("network has no layers");
        return layers.back().theta.cols;
    }
};

// Inputs cached by a forward pass. z[l] is the bias-augmented input to layer
// l, shape batch x (d_l + 1); logits is the final pre-activation.
struct ForwardTrace {
    std::vector<Matrix> z;
    Matrix logits;
};

struct Gradients {
    std::vector<Matrix> g;  // one per layer, same shape as theta
};

inline double total_norm(const Gradients& grads) {
    double sq = 0.0;
    for (const Matrix& g : grads.g) {
        const double f = frobenius_norm(g);
        sq += f * f;
    }
    return std::sqrt(sq);
}

inline Gradients zeros_like(const Network& net) {
    Gradients out;
    out.g.reserve(net.layers.size());
    for (const Layer& l : net.layers) out.g.emplace_back(l.theta.rows, l.theta.cols);
    return out;
}

// widths = {d_in, h_1, ..., h_k, d_out}. Hidden layers use relu, the final
// layer is linear (its outputs are logits). Weights are drawn uniformly from
// [-1/sqrt(fan_in), 1/sqrt(fan_in)) row by row; bias rows start at zero.
inline Network make_network(const std::vector<std::size_t>& widths, SplitMix64& rng) {
    if (widths.size() < 2) throw input_error("make_network: need at least input and output widths");
    for (std::size_t w : widths)
        if (w == 0) throw input_error("make_network: zero layer width");
    Network net;
    net.layers.reserve(widths.size() - 1);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Layer layer;
        layer.theta = Matrix(widths[l] + 1, widths[l + 1]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
        for (std::size_t i = 0; i < widths[l]; ++i)  // weight rows only; bias row stays zero
            for (std::size_t j = 0; j < widths[l + 1]; ++j)
                layer.theta(i, j) = rng.next_uniform(-bound, bound);
        layer.act = (l + 2 == widths.size()) ? Activation::identity : Activation::relu;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

inline Matrix augment_ones(const Matrix& h) {
    Matrix out(h.rows, h.cols + 1);
    for (std::size_t i = 0; i < h.rows; ++i) {
        for (std::size_t j = 0; j < h.cols; ++j) out(i, j) = h(i, j);
        out(i, h.cols) = 1.0;
    }
    return out;
}

inline ForwardTrace forward(const Network& net, const Matrix& x) {
    if (net.layers.empty()) throw input_error("forward: network has no layers");
    if (x.cols != net.input_dim())
        throw shape_error("forward: input has " + std::to_string(x.cols) + " columns, network expects " +
                          std::to_string(net.input_dim()));
    ForwardTrace trace;
    trace.z.reserve(net.layers.size());
    Matrix h = x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        if (h.cols + 1 != layer.theta.rows)
            throw shape_error("forward: layer " + std::to_string(l) + " expects input width " +
                              std::to_string(layer.theta.rows - 1) + ", got " + std::to_string(h.cols));
        trace.z.push_back(augment_ones(h));
        Matrix pre = matmul(trace.z.back(), layer.theta);
        if (layer.act == Activation::relu) {
            for (double& v : pre.data) v = v > 0.0 ? v : 0.0;
        }
        h = std::move(pre);
    }
    trace.logits = std::move(h);
    return trace;
}

struct LossResult {
    double loss = 0.0;
    Matrix dlogits;  // gradient of the mean loss w.r.t. the logits
};

// Mean cross-entropy over the batch with a numerically stable softmax
// (row max subtracted before exponentiation).
inline LossResult softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    if (logits.rows == 0) throw input_error("softmax_cross_entropy: empty batch");
    if (labels.size() != logits.rows)
        throw shape_error("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(logits.rows) + " rows");
    LossResult res;
    res.dlogits = Matrix(logits.rows, logits.cols);
    const double inv_batch = 1.0 / static_cast<double>(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
            throw input_error("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(logits.cols) + ")");
        double row_max = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols; ++j) row_max = std::max(row_max, logits(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) denom += std::exp(logits(i, j) - row_max);
        const double log_denom = std::log(denom);
        res.loss += (log_denom - (logits(i, y) - row_max)) * inv_batch;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            const double p = std::exp(logits(i, j) - row_max) / denom;
            res.dlogits(i, j) = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * inv_batch;
        }
    }
    return res;
}

// Reverse pass. dlogits is the gradient w.r.t. the final pre-activation; the
// result holds d(loss)/d(theta_l) for every layer. Uses only the activations
// cached in the trace, so it can be replayed against a stale trace if needed.
inline Gradients backward(const Network& net, const ForwardTrace& trace, const Matrix& dlogits) {
    if (trace.z.size() != net.layers.size())
        throw shape_error("backward: trace has " + std::to_string(trace.z.size()) + " cached inputs for " +
                          std::to_string(net.layers.size()) + " layers");
    Gradients grads;
    grads.g.resize(net.layers.size());
    Matrix delta = dlogits;  // gradient w.r.t. the current layer's pre-activation
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const Layer& layer = net.layers[l];
        if (delta.rows != trace.z[l].rows || delta.cols != layer.theta.cols)
            throw shape_error("backward: delta shape mismatch at layer " + std::to_string(l));
        grads.g[l] = matmul(transpose(trace.z[l]), delta);
        if (l == 0) break;
        Matrix dz_aug = matmul(delta, transpose(layer.theta));
        // Strip the bias column, then gate through the previous activation.
        Matrix dz(dz_aug.rows, dz_aug.cols - 1);
        for (std::size_t i = 0; i < dz.rows; ++i)
            for (std::size_t j = 0; j < dz.cols; ++j) dz(i, j) = dz_aug(i, j);
        if (net.layers[l - 1].act == Activation::relu) {
            // relu output is positive exactly where its input was positive,
            // so the cached (post-activation) input to this layer gates dz.
            for (std::size_t i = 0; i < dz.rows; ++i)
                for (std::size_t j = 0; j < dz.cols; ++j)
                    if (!(trace.z[l](i, j) > 0.0)) dz(i, j) = 0.0;
        }
        delta = std::move(dz);
    }
    return grads;
}

inline void accumulate(Gradients& acc, const Gradients& inc, double scale) {
    if (acc.g.size() != inc.g.size()) throw shape_error("accumulate: layer count mismatch");
    for (std::size_t l = 0; l < acc.g.size(); ++l) axpy(acc.g[l], scale, inc.g[l]);
}

struct BatchLoss {
    double loss = 0.0;
    Gradients grads;
};

inline BatchLoss loss_and_grad(const Network& net, const Matrix& x, const std::vector<int>& y) {
    const ForwardTrace trace = forward(net, x);
    LossResult lr = softmax_cross_entropy(trace.logits, y);
    BatchLoss out;
    out.loss = lr.loss;
    out.grads = backward(net, trace, lr.dlogits);
    return out;
}

// Streaming objective: loss(new batch) + alpha * loss(replay batch). The two
// components are kept separate so callers can report their gradient norms
// individually. With an empty replay batch this reduces to the plain loss.
struct ReplayLossResult {
    double loss = 0.0;
    double loss_new = 0.0;
    double loss_replay = 0.0;
    Gradients grads;         // combined: grads_new + alpha * grads_replay
    Gradients grads_new;
    Gradients grads_replay;  // unscaled replay component (empty layers if no replay)
    bool has_replay = false;
};

inline ReplayLossResult combined_replay_loss(const Network& net, const Matrix& new_x,
                                             const std::vector<int>& new_y, const Matrix& rep_x,
                                             const std::vector<int>& rep_y, double alpha) {
    ReplayLossResult res;
    BatchLoss fresh = loss_and_grad(net, new_x, new_y);
    res.loss_new = fresh.loss;
    res.grads_new = fresh.grads;
    res.grads = std::move(fresh.grads);
    res.loss = res.loss_new;
    if (rep_x.rows > 0) {
        if (rep_y.size() != rep_x.rows)
            throw shape_error("combined_replay_loss: replay label count mismatch");
        BatchLoss rep = loss_and_grad(net, rep_x, rep_y);
        res.loss_replay = rep.loss;
        res.grads_replay = std::move(rep.grads);
        res.loss += alpha * res.loss_replay;
        accumulate(res.grads, res.grads_replay, alpha);
        res.has_replay = true;
    }
    return res;
}

inline std::vector<int> predict(const Matrix& logits) {
    std::vector<int> out(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

inline double accuracy(const Network& net, const Matrix& x, const std::vector<int>& y) {
    if (x.rows == 0) throw input_error("accuracy: empty evaluation set");
    if (y.size() != x.rows) throw shape_error("accuracy: label count mismatch");
    const ForwardTrace trace = forward(net, x);
    const std::vector<int> pred = predict(trace.logits);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (pred[i] == y[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(y.size());
}

}  // namespace lpr
