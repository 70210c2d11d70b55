#pragma once

// Parameter update rules.
//
// Three families: plain SGD, preconditioned SGD driven by the replay-built
// layer inverses, and an orthogonal-projection baseline that softly removes
// gradient components lying in the span of accumulated past activations.
// A slow numeric proximal solver doubles as an oracle: the preconditioned
// step is the closed-form minimizer of a proximal objective, and the oracle
// recovers the same minimizer by solving the stationarity system with
// conjugate gradients — a deliberately different computational path.
//
// No momentum and no weight decay anywhere: updates depend only on the
// current gradient.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lpr/errors.hpp"
#include "lpr/matrix.hpp"
#include "lpr/net.hpp"
#include "lpr/precond.hpp"

namespace lpr {

inline void check_grad_shapes(const Network& net, const Gradients& grads, const char* who) {
    if (grads.g.size() != net.layers.size())
        throw shape_error(std::string(who) + ": " + std::to_string(grads.g.size()) +
                          " gradient blocks for " + std::to_string(net.layers.size()) + " layers");
    for (std::size_t l = 0; l < grads.g.size(); ++l)
        if (!same_shape(grads.g[l], net.layers[l].theta))
            throw shape_error(std::string(who) + ": gradient block " + std::to_string(l) + " is " +
                              grads.g[l].shape_str() + ", theta is " + net.layers[l].theta.shape_str());
}

inline void sgd_step(Network& net, const Gradients& grads, double eta) {
    if (eta < 0.0) throw input_error("sgd_step: eta must be >= 0");
    check_grad_shapes(net, grads, "sgd_step");
    for (std::size_t l = 0; l < net.layers.size(); ++l) axpy(net.layers[l].theta, -eta, grads.g[l]);
}

inline void lpr_step(Network& net, const Gradients& grads, const PreconditionerState& state, double eta) {
    if (eta < 0.0) throw input_error("lpr_step: eta must be >= 0");
    check_grad_shapes(net, grads, "lpr_step");
    const Gradients pg = apply(state, grads);
    for (std::size_t l = 0; l < net.layers.size(); ++l) axpy(net.layers[l].theta, -eta, pg.g[l]);
}

// Minimize  <grad, T - theta> + (1/2 eta) ||T - theta||^2 + (omega/2 eta) ||z T - z theta||^2
// over T. The stationarity condition is (I + omega z^T z)(T - theta) = -eta grad,
// solved here column by column with conjugate gradients on the matrix-free
// operator w -> w + omega z^T (z w). Shares no code with the Cholesky-based
// inverse, so agreement between the two is a genuine cross-check.
inline Matrix proximal_oracle(const Matrix& theta, const Matrix& grad, const Matrix& z, double eta,
                              double omega) {
    if (!same_shape(theta, grad))
        throw shape_error("proximal_oracle: theta is " + theta.shape_str() + ", grad is " +
                          grad.shape_str());
    if (z.cols != theta.rows)
        throw shape_error("proximal_oracle: z has " + std::to_string(z.cols) + " columns, theta has " +
                          std::to_string(theta.rows) + " rows");
    if (eta < 0.0) throw input_error("proximal_oracle: eta must be >= 0");
    if (omega < 0.0) throw input_error("proximal_oracle: omega must be >= 0");

    const std::size_t d = theta.rows;
    const std::size_t m = z.rows;
    auto apply_op = [&](const std::vector<double>& w, std::vector<double>& out) {
        // out = w + omega z^T (z w)
        out = w;
        if (omega == 0.0 || m == 0) return;
        std::vector<double> zw(m, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += z(r, c) * w[c];
            zw[r] = acc;
        }
        for (std::size_t r = 0; r < m; ++r) {
            const double s = omega * zw[r];
            if (s == 0.0) continue;
            for (std::size_t c = 0; c < d; ++c) out[c] += s * z(r, c);
        }
    };

    Matrix result = theta;
    const std::size_t max_iters = 20 * (d + m) + 100;
    std::vector<double> b(d), x(d), r(d), p(d), op(d);
    for (std::size_t col = 0; col < theta.cols; ++col) {
        double b_norm_sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            b[i] = -eta * grad(i, col);
            b_norm_sq += b[i] * b[i];
        }
        const double b_norm = std::sqrt(b_norm_sq);
        std::fill(x.begin(), x.end(), 0.0);
        if (b_norm == 0.0) continue;  // minimizer at theta for this column
        r = b;
        p = b;
        double rs = b_norm_sq;
        const double target = 1e-13 * std::max(1.0, b_norm);
        std::size_t it = 0;
        for (; it < max_iters && std::sqrt(rs) > target; ++it) {
            apply_op(p, op);
            double p_op = 0.0;
            for (std::size_t i = 0; i < d; ++i) p_op += p[i] * op[i];
            const double alpha = rs / p_op;
            for (std::size_t i = 0; i < d; ++i) {
                x[i] += alpha * p[i];
                r[i] -= alpha * op[i];
            }
            double rs_new = 0.0;
            for (std::size_t i = 0; i < d; ++i) rs_new += r[i] * r[i];
            const double ratio = rs_new / rs;
            rs = rs_new;
            for (std::size_t i = 0; i < d; ++i) p[i] = r[i] + ratio * p[i];
        }
        if (std::sqrt(rs) > 1e-10 * std::max(1.0, b_norm))
            throw numeric_error("proximal_oracle: conjugate gradients stalled at residual " +
                                std::to_string(std::sqrt(rs)) + " after " + std::to_string(it) +
                                " iterations");
        for (std::size_t i = 0; i < d; ++i) result(i, col) += x[i];
    }
    return result;
}

// Soft orthogonal projection baseline. basis[l] holds accumulated activation
// representatives as rows (k x (d_l + 1)); each gradient block is replaced by
//   (I - Phi^T (alpha I_k + Phi Phi^T)^{-1} Phi) g
// before the SGD step. Large alpha leaves gradients almost untouched; small
// alpha approaches a hard projection onto the orthogonal complement of the
// stored activation span. Layers with an empty basis take a plain SGD step.
inline void projection_step(Network& net, const Gradients& grads, const std::vector<Matrix>& basis,
                            double eta, double alpha) {
    if (!(alpha > 0.0)) throw input_error("projection_step: alpha must be > 0");
    if (eta < 0.0) throw input_error("projection_step: eta must be >= 0");
    check_grad_shapes(net, grads, "projection_step");
    if (basis.size() != net.layers.size())
        throw shape_error("projection_step: " + std::to_string(basis.size()) + " basis blocks for " +
                          std::to_string(net.layers.size()) + " layers");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Matrix& phi = basis[l];
        if (phi.rows == 0) {
            axpy(net.layers[l].theta, -eta, grads.g[l]);
            continue;
        }
        if (phi.cols != grads.g[l].rows)
            throw shape_error("projection_step: basis block " + std::to_string(l) + " is " +
                              phi.shape_str() + ", gradient is " + grads.g[l].shape_str());
        Matrix gram = matmul(phi, transpose(phi));
        for (std::size_t i = 0; i < gram.rows; ++i) gram(i, i) += alpha;
        const Matrix k_inv = spd_inverse(gram);
        const Matrix corr = matmul(transpose(phi), matmul(k_inv, matmul(phi, grads.g[l])));
        const Matrix projected = sub(grads.g[l], corr);
        axpy(net.layers[l].theta, -eta, projected);
    }
}

// Constructive check that replay gradients vanish under exact projection
// when the replayed activations lie entirely in the stored span.
//
// phi is d x k (columns span the stored activation space), a is k x m, and
// v is m x d'. The replayed activations are z = (phi a)^T — by construction
// inside the span — so the replay gradient G = z^T v = phi (a v) must be
// annihilated by the projector I - phi (phi^T phi)^{-1} phi^T. Returns the
// Frobenius norm of the projected gradient, which should be ~0.
inline double replay_gradient_annihilation_check(const Matrix& phi, const Matrix& a, const Matrix& v) {
    if (phi.cols != a.rows)
        throw shape_error("replay_gradient_annihilation_check: phi is " + phi.shape_str() + ", a is " +
                          a.shape_str());
    if (a.cols != v.rows)
        throw shape_error("replay_gradient_annihilation_check: a is " + a.shape_str() + ", v is " +
                          v.shape_str());
    const Matrix zt = matmul(phi, a);            // d x m, replayed activations transposed
    const Matrix g = matmul(zt, v);              // d x d' replay gradient
    const Matrix gram_inv = spd_inverse(matmul(transpose(phi), phi));  // throws if phi rank-deficient
    const Matrix projected = sub(g, matmul(phi, matmul(gram_inv, matmul(transpose(phi), g))));
    return frobenius_norm(projected);
}

}  // namespace lpr
