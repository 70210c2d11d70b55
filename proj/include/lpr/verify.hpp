#pragma once

// Self-checking: every algebraic identity and statistical contract the
// library leans on, packaged as named checks that return pass/fail plus a
// diagnostic. The `verify` CLI subcommand runs them all; the deliberate
// fault injection exists so that the failure path itself is testable.

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "lpr/buffer.hpp"
#include "lpr/harness.hpp"
#include "lpr/matrix.hpp"
#include "lpr/metrics.hpp"
#include "lpr/net.hpp"
#include "lpr/optim.hpp"
#include "lpr/precond.hpp"
#include "lpr/rng.hpp"

namespace lpr::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

enum class FaultInjection { none, lambda_symmetry };

inline FaultInjection parse_fault(const std::string& s) {
    if (s.empty() || s == "none") return FaultInjection::none;
    if (s == "lambda-symmetry") return FaultInjection::lambda_symmetry;
    throw input_error("unknown fault injection '" + s + "'");
}

namespace detail {

template <typename Body>
CheckResult timed_check(const std::string& name, Body body) {
    CheckResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(r);
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline Matrix random_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.next_normal();
    return m;
}

inline std::string fmt(double x) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << x;
    return os.str();
}

class ParamRecorder : public StepObserver {
  public:
    std::vector<std::vector<double>> steps;
    void on_step(long, int, const Network& net, const ReplayLossResult&, std::size_t) override {
        std::vector<double> flat;
        for (const Layer& l : net.layers) flat.insert(flat.end(), l.theta.data.begin(), l.theta.data.end());
        steps.push_back(std::move(flat));
    }
};

class ParamComparer : public StepObserver {
  public:
    const std::vector<std::vector<double>>* reference = nullptr;
    std::size_t index = 0;
    double max_divergence = 0.0;
    void on_step(long, int, const Network& net, const ReplayLossResult&, std::size_t) override {
        std::vector<double> flat;
        for (const Layer& l : net.layers) flat.insert(flat.end(), l.theta.data.begin(), l.theta.data.end());
        if (index >= reference->size() || flat.size() != (*reference)[index].size()) {
            max_divergence = std::numeric_limits<double>::infinity();
            return;
        }
        const std::vector<double>& ref = (*reference)[index++];
        for (std::size_t i = 0; i < flat.size(); ++i)
            max_divergence = std::max(max_divergence, std::abs(flat[i] - ref[i]));
    }
};

}  // namespace detail

// At zero preconditioner strength the preconditioned method and plain
// replay must walk the same parameter trajectory, step for step.
inline CheckResult check_zero_strength_pairing() {
    return detail::timed_check("zero_strength_pairing", [](CheckResult& r) {
        RunConfig base;
        base.stream.num_tasks = 2;
        base.stream.classes_per_task = 2;
        base.stream.input_dim = 8;
        base.stream.cluster_separation = 4.0;
        base.stream.batches_per_task = 50;  // 100 batches total
        base.stream.n_tau = 10;
        base.stream.eval_points_per_task = 40;
        base.hidden_widths = {16, 16};
        base.eta = 0.05;
        base.steps_per_batch = 3;
        base.capacity = 100;
        base.refresh_interval = 10;
        base.eval_cadence = 10;
        base.drift_probes = 0;
        base.seed = 42;

        RunConfig er = base;
        er.method = "er";
        RunConfig zero = base;
        zero.method = "lpr";
        zero.omega0 = 0.0;

        detail::ParamRecorder rec;
        run(er, &rec);
        detail::ParamComparer cmp;
        cmp.reference = &rec.steps;
        run(zero, &cmp);

        r.pass = cmp.index == rec.steps.size() && cmp.max_divergence < 1e-12;
        r.detail = "max parameter divergence over " + std::to_string(rec.steps.size()) +
                   " steps = " + detail::fmt(cmp.max_divergence) + " (require < 1e-12)";
    });
}

// The iterative proximal solver and the closed-form preconditioned step must
// produce the same updated parameters.
inline CheckResult check_proximal_oracle_agreement() {
    return detail::timed_check("proximal_oracle_agreement", [](CheckResult& r) {
        SplitMix64 rng(1001);
        const double omegas[] = {0.01, 0.5, 1.0, 4.0, 100.0};
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const std::size_t d = 2 + rng.next_below(15);
            const std::size_t m = 1 + rng.next_below(8);
            const std::size_t cols = 1 + rng.next_below(6);
            const double omega = omegas[i % 5];
            const double eta = 0.01 + 0.19 * rng.next_double();
            const Matrix z = detail::random_matrix(rng, m, d, 1.0);
            const Matrix theta = detail::random_matrix(rng, d, cols, 1.0);
            const Matrix grad = detail::random_matrix(rng, d, cols, 1.0);

            const Matrix lambda = build_lambda(z, omega);
            Matrix closed = theta;
            axpy(closed, -eta, matmul(lambda, grad));
            const Matrix solved = proximal_oracle(theta, grad, z, eta, omega);
            const double rel = max_abs_diff(closed, solved) == 0.0
                                   ? 0.0
                                   : frobenius_norm(sub(closed, solved)) /
                                         std::max(1.0, frobenius_norm(closed));
            worst = std::max(worst, rel);
        }
        r.pass = worst < 1e-6;
        r.detail = "worst relative difference over 100 instances = " + detail::fmt(worst) +
                   " (require < 1e-6)";
    });
}

// The factored small-system inverse must agree with the direct inverse.
inline CheckResult check_factored_inverse_agreement() {
    return detail::timed_check("factored_inverse_agreement", [](CheckResult& r) {
        SplitMix64 rng(2002);
        double worst = 0.0;
        for (double omega : {0.01, 1.0, 100.0}) {
            for (int i = 0; i < 10; ++i) {
                const std::size_t m = 1 + rng.next_below(64);
                const std::size_t d = 1 + rng.next_below(32);
                const Matrix z = detail::random_matrix(rng, m, d, 1.0);
                const Matrix direct = build_lambda(z, omega);
                const Matrix factored = woodbury_lambda(z, omega);
                const double rel = frobenius_norm(sub(direct, factored)) /
                                   std::max(1.0, frobenius_norm(direct));
                worst = std::max(worst, rel);
            }
        }
        r.pass = worst < 1e-8;
        r.detail = "worst relative difference over 30 instances = " + detail::fmt(worst) +
                   " (require < 1e-8)";
    });
}

// The layer operator must be symmetric, never expand a gradient, strictly
// shrink anything the stored activations can see, and leave their null space
// untouched. The optional fault perturbs one off-diagonal entry so the
// symmetry invariant trips.
inline CheckResult check_contraction_and_symmetry(FaultInjection fault = FaultInjection::none) {
    return detail::timed_check("contraction_and_symmetry", [fault](CheckResult& r) {
        SplitMix64 rng(3003);
        double worst_sym = 0.0, worst_null = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const std::size_t m = 1 + rng.next_below(6);
            const std::size_t d = 2 + rng.next_below(9);
            const double omega = std::pow(10.0, -2.0 + 4.0 * rng.next_double());
            const Matrix z = detail::random_matrix(rng, m, d, 1.0);
            Matrix lambda = build_lambda(z, omega);
            if (fault == FaultInjection::lambda_symmetry && i == 0) lambda(0, 1) += 1e-3;

            double sym = 0.0;
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = a + 1; b < d; ++b)
                    sym = std::max(sym, std::abs(lambda(a, b) - lambda(b, a)));
            worst_sym = std::max(worst_sym, sym);
            if (sym > 1e-10) {
                r.pass = false;
                r.detail = "layer operator symmetry violated: max |L - L^T| entry = " +
                           detail::fmt(sym) + " (require <= 1e-10)";
                return;
            }

            const Matrix g = detail::random_matrix(rng, d, 1 + rng.next_below(4), 1.0);
            const double before = frobenius_norm(g);
            const double after = frobenius_norm(matmul(lambda, g));
            if (after > before * (1.0 + 1e-12)) {
                r.pass = false;
                r.detail = "gradient expanded: |Lg| = " + detail::fmt(after) + " > |g| = " +
                           detail::fmt(before);
                return;
            }
            if (frobenius_norm(matmul(z, g)) > 1e-9 * before && !(after < before)) {
                r.pass = false;
                r.detail = "no strict shrink although activations see the gradient";
                return;
            }

            // A vector orthogonal to every stored activation must pass through
            // unchanged. Two projection passes for numerical hygiene.
            Matrix v = detail::random_matrix(rng, d, 1, 1.0);
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t row = 0; row < m; ++row) {
                    double zz = 0.0, zv = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        zz += z(row, c) * z(row, c);
                        zv += z(row, c) * v(c, 0);
                    }
                    if (zz == 0.0) continue;
                    for (std::size_t c = 0; c < d; ++c) v(c, 0) -= (zv / zz) * z(row, c);
                }
            // Gram-Schmidt against non-orthogonal rows is approximate; only
            // score instances it actually annihilated.
            if (frobenius_norm(matmul(z, v)) < 1e-13 * std::max(1.0, frobenius_norm(v))) {
                const Matrix lv = matmul(lambda, v);
                worst_null = std::max(worst_null, max_abs_diff(lv, v));
            }
        }
        r.pass = worst_null <= 1e-12;
        r.detail = "symmetry max " + detail::fmt(worst_sym) + "; null-space deviation max " +
                   detail::fmt(worst_null) + " (require <= 1e-12); contraction held on 1000 instances";
    });
}

// At extreme strength the operator becomes the orthogonal projector away
// from the stored activations, and replay-aligned gradients all but vanish.
inline CheckResult check_high_strength_projection_limit() {
    return detail::timed_check("high_strength_projection_limit", [](CheckResult& r) {
        SplitMix64 rng(4004);
        double worst_dist = 0.0, worst_shrink = 0.0;
        for (int i = 0; i < 20; ++i) {
            const std::size_t m = 1 + rng.next_below(5);
            const std::size_t d = m + 1 + rng.next_below(16 - m);
            const Matrix z = detail::random_matrix(rng, m, d, 1.0);
            const Matrix lambda = woodbury_lambda(z, 1e8);

            // Exact projector: I - Z^T (Z Z^T)^{-1} Z.
            const Matrix gram_inv = spd_inverse(matmul(z, transpose(z)));
            Matrix projector = identity(d);
            axpy(projector, -1.0, matmul(transpose(z), matmul(gram_inv, z)));
            worst_dist = std::max(worst_dist, frobenius_norm(sub(lambda, projector)));

            const Matrix g = matmul(transpose(z), detail::random_matrix(rng, m, 3, 1.0));
            const double shrink = frobenius_norm(matmul(lambda, g)) / frobenius_norm(g);
            worst_shrink = std::max(worst_shrink, shrink);
        }
        r.pass = worst_dist < 1e-4 && worst_shrink < 1e-3;
        r.detail = "projector distance max " + detail::fmt(worst_dist) +
                   " (require < 1e-4); replay-aligned shrink factor max " +
                   detail::fmt(worst_shrink) + " (require < 1e-3)";
    });
}

// Gradients whose activations lie exactly in the stored span are annihilated
// by the exact projector.
inline CheckResult check_replay_gradient_annihilation() {
    return detail::timed_check("replay_gradient_annihilation", [](CheckResult& r) {
        SplitMix64 rng(5005);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const std::size_t d = 2 + rng.next_below(11);
            const std::size_t k = 1 + rng.next_below(d);
            const std::size_t m = 1 + rng.next_below(6);
            const std::size_t cols = 1 + rng.next_below(5);
            const Matrix phi = detail::random_matrix(rng, d, k, 1.0);
            const Matrix a = detail::random_matrix(rng, k, m, 1.0);
            const Matrix v = detail::random_matrix(rng, m, cols, 1.0);
            const double residual = replay_gradient_annihilation_check(phi, a, v);
            const double g_norm = frobenius_norm(matmul(matmul(phi, a), v));
            worst = std::max(worst, residual / std::max(1.0, g_norm));
        }
        r.pass = worst < 1e-8;
        r.detail = "worst scaled residual over 100 constructions = " + detail::fmt(worst) +
                   " (require < 1e-8)";
    });
}

// The per-row weighted operator must collapse to the uniform one when all
// weights agree, and a single unit activation row must be damped by exactly
// 1/(1+w) along itself.
inline CheckResult check_weighted_operator_consistency() {
    return detail::timed_check("weighted_operator_consistency", [](CheckResult& r) {
        SplitMix64 rng(6006);
        double worst_uniform = 0.0, worst_eigen = 0.0;
        for (int i = 0; i < 20; ++i) {
            const std::size_t m = 1 + rng.next_below(6);
            const std::size_t d = 2 + rng.next_below(10);
            const double omega = std::pow(10.0, -1.0 + 2.0 * rng.next_double());
            const Matrix z = detail::random_matrix(rng, m, d, 1.0);
            const std::vector<double> weights(m, omega);
            worst_uniform =
                std::max(worst_uniform, max_abs_diff(weighted_lambda(z, weights), build_lambda(z, omega)));
        }
        for (double omega : {0.25, 1.0, 4.0}) {
            const std::size_t d = 6;
            Matrix unit(1, d);
            double norm = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                unit(0, c) = rng.next_normal();
                norm += unit(0, c) * unit(0, c);
            }
            norm = std::sqrt(norm);
            for (std::size_t c = 0; c < d; ++c) unit(0, c) /= norm;
            const Matrix lambda = weighted_lambda(unit, {omega});
            const Matrix expected = scale(transpose(unit), 1.0 / (1.0 + omega));
            worst_eigen = std::max(worst_eigen, max_abs_diff(matmul(lambda, transpose(unit)), expected));
        }
        r.pass = worst_uniform < 1e-10 && worst_eigen < 1e-10;
        r.detail = "uniform-weight mismatch max " + detail::fmt(worst_uniform) +
                   "; unit-row damping error max " + detail::fmt(worst_eigen) +
                   " (require < 1e-10 each)";
    });
}

// Analytic gradients must match central finite differences of the loss.
inline CheckResult check_backprop_finite_difference() {
    return detail::timed_check("backprop_finite_difference", [](CheckResult& r) {
        SplitMix64 rng(7007);
        Network net;
        Matrix x(4, 3);
        std::vector<int> y = {0, 2, 1, 2};
        // Keep the probe away from activation kinks so the quadratic FD error
        // model holds: resample until every hidden pre-activation has margin.
        double margin = 0.0;
        for (int attempt = 0; attempt < 500; ++attempt) {
            net = make_network({3, 5, 4, 3}, rng);
            for (double& v : x.data) v = rng.next_normal();
            margin = 1e9;
            Matrix h = x;
            for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
                const Matrix pre = matmul(augment_ones(h), net.layers[l].theta);
                for (double v : pre.data) margin = std::min(margin, std::abs(v));
                h = pre;
                for (double& v : h.data) v = std::max(v, 0.0);
            }
            if (margin > 1e-3) break;
        }
        if (margin <= 1e-3) {
            r.pass = false;
            r.detail = "could not find a kink-free probe configuration";
            return;
        }

        const auto loss_at = [&](Network& n) {
            const ForwardTrace t = forward(n, x);
            return softmax_cross_entropy(t.logits, y).loss;
        };
        const BatchLoss bl = loss_and_grad(net, x, y);
        const double h_step = 1e-5;
        double worst = 0.0;
        for (std::size_t l = 0; l < net.layers.size(); ++l)
            for (std::size_t i = 0; i < net.layers[l].theta.data.size(); ++i) {
                const double saved = net.layers[l].theta.data[i];
                net.layers[l].theta.data[i] = saved + h_step;
                const double up = loss_at(net);
                net.layers[l].theta.data[i] = saved - h_step;
                const double down = loss_at(net);
                net.layers[l].theta.data[i] = saved;
                const double fd = (up - down) / (2.0 * h_step);
                const double bp = bl.grads.g[l].data[i];
                worst = std::max(worst, std::abs(fd - bp) / std::max(1.0, std::abs(fd)));
            }
        r.pass = worst < 1e-5;
        r.detail = "worst relative gradient error = " + detail::fmt(worst) + " (require < 1e-5)";
    });
}

namespace detail {

// Straight-line reimplementations of the three headline metrics, used as
// independent oracles against randomized logs.
inline double oracle_aaa(const RunLog& log) {
    double s = 0.0;
    for (const EvalRecord& rec : log.records) {
        double m = 0.0;
        for (double a : rec.per_task_acc) m += a;
        s += m / rec.per_task_acc.size();
    }
    return s / log.records.size();
}

inline double oracle_final(const RunLog& log) {
    double s = 0.0;
    for (double a : log.records.back().per_task_acc) s += a;
    return s / log.records.back().per_task_acc.size();
}

inline double oracle_wc(const RunLog& log) {
    const std::size_t k = log.records.back().per_task_acc.size();
    double s = log.records.back().per_task_acc.back();
    for (std::size_t i = 0; i + 1 < k; ++i) {
        double lo = 2.0;
        for (const EvalRecord& rec : log.records)
            if (rec.tau > log.task_boundaries[i] && rec.per_task_acc.size() > i)
                lo = std::min(lo, rec.per_task_acc[i]);
        s += lo;
    }
    return s / static_cast<double>(k);
}

inline RunLog random_log(SplitMix64& rng) {
    RunLog log;
    const std::size_t k = 1 + rng.next_below(4);
    long tau = 0;
    std::vector<long> lengths;
    for (std::size_t i = 0; i < k; ++i) {
        const long len = 2 + static_cast<long>(rng.next_below(4));
        tau += len;
        log.task_boundaries.push_back(tau);
        lengths.push_back(len);
    }
    std::size_t task = 0;
    for (long t = 1; t <= tau; ++t) {
        if (t > log.task_boundaries[task]) ++task;
        EvalRecord rec;
        rec.tau = t;
        for (std::size_t i = 0; i <= task; ++i) rec.per_task_acc.push_back(rng.next_double());
        log.records.push_back(std::move(rec));
    }
    log.eval_cadence = 1;
    return log;
}

}  // namespace detail

// Hand fixtures with known exact values, then randomized logs scored against
// independently written oracles.
inline CheckResult check_metric_fixtures() {
    return detail::timed_check("metric_fixtures", [](CheckResult& r) {
        const auto rec = [](long tau, std::vector<double> acc) {
            EvalRecord e;
            e.tau = tau;
            e.per_task_acc = std::move(acc);
            return e;
        };
        RunLog nested;
        nested.records.push_back(rec(1, {0.5}));
        nested.records.push_back(rec(2, {0.4, 0.8}));
        const double aaa = average_anytime_acc(nested);
        if (std::abs(aaa - 0.55) > 1e-15) {
            r.pass = false;
            r.detail = "anytime-accuracy fixture: got " + std::to_string(aaa) + ", want 0.55";
            return;
        }
        RunLog two;
        two.records.push_back(rec(1, {0.7}));
        two.records.push_back(rec(2, {0.9}));
        two.records.push_back(rec(3, {0.5, 0.6}));
        two.records.push_back(rec(4, {0.4, 0.8}));
        two.task_boundaries = {2, 4};
        const double wc = worst_case_acc(two);
        if (std::abs(wc - 0.6) > 1e-15) {
            r.pass = false;
            r.detail = "worst-case fixture: got " + std::to_string(wc) + ", want 0.6";
            return;
        }
        const double tv = total_variation({0.2, 0.5, 0.3});
        if (std::abs(tv - 0.5) > 1e-15) {
            r.pass = false;
            r.detail = "total-variation fixture: got " + std::to_string(tv) + ", want 0.5";
            return;
        }

        SplitMix64 rng(8008);
        double worst = 0.0;
        for (int i = 0; i < 25; ++i) {
            const RunLog log = detail::random_log(rng);
            worst = std::max(worst, std::abs(average_anytime_acc(log) - detail::oracle_aaa(log)));
            worst = std::max(worst, std::abs(final_acc(log) - detail::oracle_final(log)));
            worst = std::max(worst, std::abs(worst_case_acc(log) - detail::oracle_wc(log)));
        }
        r.pass = worst < 1e-14;
        r.detail = "fixtures exact; randomized-log oracle deviation max " + detail::fmt(worst) +
                   " (require < 1e-14)";
    });
}

// Uniform reservoir guarantee: after N arrivals each item is resident with
// probability capacity/N, checked against a binomial confidence band.
inline CheckResult check_reservoir_inclusion() {
    return detail::timed_check("reservoir_inclusion", [](CheckResult& r) {
        const std::size_t capacity = 10, n_items = 100, trials = 20000;
        const std::size_t tracked = 17;
        std::size_t hits = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            SplitMix64 rng(derive_seed(90009, t));
            ReplayBuffer buf(capacity);
            Matrix x(1, 2);
            for (std::size_t item = 0; item < n_items; ++item) {
                x(0, 0) = static_cast<double>(item);
                x(0, 1) = 1.0;
                buf.update(x, {0}, rng);
            }
            SplitMix64 probe(1);
            const Matrix all = buf.sample_for_preconditioner(1.0, probe);
            for (std::size_t row = 0; row < all.rows; ++row)
                if (all(row, 0) == static_cast<double>(tracked)) {
                    ++hits;
                    break;
                }
        }
        const double p = static_cast<double>(capacity) / static_cast<double>(n_items);
        const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
        const double observed = static_cast<double>(hits) / static_cast<double>(trials);
        r.pass = std::abs(observed - p) <= 3.0 * sigma;
        r.detail = "inclusion frequency " + std::to_string(observed) + " vs expected " +
                   std::to_string(p) + " +- " + detail::fmt(3.0 * sigma) + " (3 sigma)";
    });
}

inline std::vector<CheckResult> run_all_checks(FaultInjection fault = FaultInjection::none) {
    std::vector<CheckResult> results;
    results.push_back(check_zero_strength_pairing());
    results.push_back(check_proximal_oracle_agreement());
    results.push_back(check_factored_inverse_agreement());
    results.push_back(check_contraction_and_symmetry(fault));
    results.push_back(check_high_strength_projection_limit());
    results.push_back(check_replay_gradient_annihilation());
    results.push_back(check_weighted_operator_consistency());
    results.push_back(check_backprop_finite_difference());
    results.push_back(check_metric_fixtures());
    results.push_back(check_reservoir_inclusion());
    return results;
}

}  // namespace lpr::verify
