#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>

#include "durm/data.hpp"
#include "durm/durm_head.hpp"
#include "durm/instrumentation.hpp"
#include "durm/model.hpp"
#include "durm/numerics.hpp"

using namespace durm;

TEST_CASE("push and pull reconstruct the summed logit gradient")
{
    // Three samples over a 2-class head with one dummy column.
    const std::vector<Vector> probs = {
        {0.7, 0.2, 0.1}, {0.3, 0.5, 0.2}, {0.6, 0.3, 0.1}};
    const std::vector<std::size_t> labels = {0, 1, 0};

    const PushPull k0 = decompose_push_pull(probs, labels, 0);
    CHECK(k0.push == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(k0.pull == doctest::Approx(-0.7).epsilon(1e-15));

    const PushPull k1 = decompose_push_pull(probs, labels, 1);
    CHECK(k1.push == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(k1.pull == doctest::Approx(-0.5).epsilon(1e-15));

    // The dummy column receives push only.
    const PushPull k2 = decompose_push_pull(probs, labels, 2);
    CHECK(k2.push == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(k2.pull == 0.0);

    // push + pull equals the summed loss gradient sum(p_k - y_k).
    for (std::size_t k = 0; k < 3; ++k) {
        double direct = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            direct += probs[i][k] - (labels[i] == k ? 1.0 : 0.0);
        }
        const PushPull pp = decompose_push_pull(probs, labels, k);
        CHECK(pp.push + pp.pull == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("push pull rejects out-of-range classes and ragged input")
{
    const std::vector<Vector> probs = {{0.5, 0.5}};
    const std::vector<std::size_t> labels = {0};
    CHECK_THROWS_AS(decompose_push_pull(probs, labels, 2),
                    std::invalid_argument);
    CHECK_THROWS_AS(decompose_push_pull(probs, {0, 1}, 0),
                    std::invalid_argument);
}

TEST_CASE("epoch gradient records match direct sums and variances")
{
    GradientTrace trace;
    const std::vector<Vector> grads = {
        {0.2, -0.8, 0.6}, {-0.4, 0.1, 0.3}, {0.5, 0.2, -0.7}, {0.0, -0.3, 0.3}};
    record_epoch_gradients(trace, 0, grads);
    REQUIRE(trace.epochs() == 1);

    for (std::size_t k = 0; k < 3; ++k) {
        double sum = 0.0;
        for (const Vector& g : grads) sum += g[k];
        // Records accumulate y - p, the negation of the loss gradient.
        CHECK(trace.grad_sum[0][k] == doctest::Approx(-sum).epsilon(1e-14));
        double mean = 0.0;
        for (const Vector& g : grads) mean += -g[k];
        mean /= double(grads.size());
        double var = 0.0;
        for (const Vector& g : grads) var += (-g[k] - mean) * (-g[k] - mean);
        var /= double(grads.size() - 1);
        CHECK(trace.grad_var[0][k] == doctest::Approx(var).epsilon(1e-14));
    }
}

TEST_CASE("epoch records enforce ordering and sign invariance of variance")
{
    GradientTrace trace;
    const std::vector<Vector> grads = {{0.1, -0.1}, {0.2, 0.0}};
    CHECK_THROWS_AS(record_epoch_gradients(trace, 1, grads),
                    std::invalid_argument);
    record_epoch_gradients(trace, 0, grads);
    CHECK_THROWS_AS(record_epoch_gradients(trace, 0, grads),
                    std::invalid_argument);
    record_epoch_gradients(trace, 1, grads);
    CHECK(trace.epochs() == 2);

    GradientTrace negated;
    std::vector<Vector> flipped = grads;
    for (Vector& g : flipped) {
        for (double& v : g) v = -v;
    }
    record_epoch_gradients(negated, 0, flipped);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(negated.grad_var[0][k] ==
              doctest::Approx(trace.grad_var[0][k]).epsilon(1e-14));
    }
}

TEST_CASE("model distance is the squared euclidean parameter distance")
{
    Mlp a = init_mlp(2, {3}, 2, 1);
    Mlp b = a;
    CHECK(model_distance(a, b) == 0.0);
    b.layers[0].W.data[0] += 3.0;
    b.layers[1].b[1] -= 4.0;
    CHECK(model_distance(a, b) == doctest::Approx(25.0).epsilon(1e-14));

    const Mlp c = init_mlp(2, {4}, 2, 1);
    CHECK_THROWS_AS(model_distance(a, c), std::invalid_argument);
}

TEST_CASE("power iteration recovers the top eigenvalue of a known quadratic")
{
    // Loss 0.5 w^T A w has gradient A w and Hessian A; the finite-difference
    // product is exact up to rounding.
    const std::size_t n = 10;
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::MatrixXd B(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) B(long(i), long(j)) = dist(gen);
        }
        const Eigen::MatrixXd A = B.transpose() * B;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A);
        const double reference = solver.eigenvalues().maxCoeff();

        auto grad_at = [&](const Vector& w) {
            Eigen::VectorXd v(n);
            for (std::size_t i = 0; i < n; ++i) v(long(i)) = w[i];
            const Eigen::VectorXd g = A * v;
            Vector out(n);
            for (std::size_t i = 0; i < n; ++i) out[i] = g(long(i));
            return out;
        };
        const Vector w0(n, 0.1);
        const EigenEstimate est = power_iteration_top_eigenvalue(
            grad_at, w0, 200, 1e-5, 1234 + std::uint64_t(rep));
        CHECK(est.converged);
        CHECK(est.rho == doctest::Approx(reference).epsilon(1e-3));
    }
}

TEST_CASE("power iteration on a zero landscape reports zero")
{
    auto grad_at = [](const Vector& w) { return Vector(w.size(), 0.0); };
    const EigenEstimate est =
        power_iteration_top_eigenvalue(grad_at, Vector(4, 1.0), 50, 1e-4, 3);
    CHECK(est.rho == 0.0);
}

TEST_CASE("hessian estimate on a trained model matches a dense eigensolve")
{
    const Dataset data = gen_blobs(33, 3, 30, 2, 4.0, 1.0);
    const HeadConfig head{3, 1};
    const Mlp model = init_mlp(2, {4}, head.width(), 71);
    const std::size_t n = model.num_params();

    // Dense Hessian via central differences of the analytic mean gradient.
    const Vector w = flatten(model);
    Mlp scratch = model;
    auto grad_flat = [&](const Vector& at) {
        unflatten(at, scratch);
        return dataset_mean_gradient(scratch, data, head);
    };
    const double h = 1e-5;
    const long dim = long(n);
    Eigen::MatrixXd H(dim, dim);
    for (std::size_t i = 0; i < n; ++i) {
        Vector wp = w, wm = w;
        wp[i] += h;
        wm[i] -= h;
        const Vector gp = grad_flat(wp);
        const Vector gm = grad_flat(wm);
        for (std::size_t j = 0; j < n; ++j) {
            H(long(j), long(i)) = (gp[j] - gm[j]) / (2.0 * h);
        }
    }
    const Eigen::MatrixXd sym = 0.5 * (H + H.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    const double reference = solver.eigenvalues().maxCoeff();

    const EigenEstimate est =
        estimate_top_hessian_eigenvalue(model, data, head, 200, 1e-4, 5);
    CHECK(est.rho == doctest::Approx(reference).epsilon(5e-3));
}

TEST_CASE("flatness probe on a quadratic respects the curvature bound")
{
    // Quadratic bowl: epsilon-hat over ||v|| = delta is at most
    // 0.5 * delta^2 * lambda_max, reached along the top eigenvector.
    const std::size_t n = 6;
    Eigen::MatrixXd B(n, n);
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) B(long(i), long(j)) = dist(gen);
    }
    const Eigen::MatrixXd A = B.transpose() * B;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A);
    const double lam = solver.eigenvalues().maxCoeff();

    auto loss_at = [&](const Vector& w) {
        Eigen::VectorXd v(n);
        for (std::size_t i = 0; i < n; ++i) v(long(i)) = w[i];
        return 0.5 * double(v.transpose() * A * v);
    };
    const double delta = 0.05;
    const FlatnessEstimate est =
        estimate_flatness(loss_at, Vector(n, 0.0), delta, 200, 21);
    CHECK(est.delta == delta);
    CHECK(est.epsilon_hat >= 0.0);
    CHECK(est.epsilon_hat <= 0.5 * delta * delta * lam * (1.0 + 1e-3));
    // With 200 isotropic directions the best draw should get close.
    CHECK(est.epsilon_hat >= 0.1 * 0.5 * delta * delta * lam);
    CHECK(est.tau == doctest::Approx(1.0 / est.epsilon_hat).epsilon(1e-12));
}

TEST_CASE("flatness probe at a flat point saturates tau")
{
    auto loss_at = [](const Vector&) { return 1.0; };
    const FlatnessEstimate est =
        estimate_flatness(loss_at, Vector(3, 0.0), 0.1, 20, 4);
    CHECK(est.epsilon_hat == 0.0);
    CHECK(est.tau == doctest::Approx(1e12).epsilon(1e-12));
}

TEST_CASE("flatness probe is deterministic in the seed")
{
    const Dataset data = gen_blobs(3, 2, 20, 2, 4.0, 1.0);
    const HeadConfig head{2, 1};
    const Mlp model = init_mlp(2, {3}, head.width(), 7);
    const FlatnessEstimate a = estimate_flatness(model, data, head, 0.05, 30, 11);
    const FlatnessEstimate b = estimate_flatness(model, data, head, 0.05, 30, 11);
    const FlatnessEstimate c = estimate_flatness(model, data, head, 0.05, 30, 12);
    CHECK(a.epsilon_hat == b.epsilon_hat);
    CHECK((a.epsilon_hat != c.epsilon_hat || a.tau != c.tau));
}

TEST_CASE("dataset mean loss and gradient match direct loops")
{
    const Dataset data = gen_blobs(15, 2, 10, 2, 3.0, 1.0);
    const HeadConfig head{2, 1};
    const Mlp model = init_mlp(2, {3}, head.width(), 41);

    double loss = 0.0;
    Vector grad(model.num_params(), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const ForwardTrace t = forward(model, data.row(i));
        const Vector p = softmax(t.logits);
        const Vector y = pad_label(data.labels[i], head);
        loss += cross_entropy(p, y);
        const MlpGradients g = backward(model, t, grad_logits(p, y));
        Mlp as_model = model;
        for (std::size_t l = 0; l < g.layers.size(); ++l) {
            as_model.layers[l].W = g.layers[l].W;
            as_model.layers[l].b = g.layers[l].b;
        }
        const Vector flat = flatten(as_model);
        for (std::size_t j = 0; j < flat.size(); ++j) grad[j] += flat[j];
    }
    loss /= double(data.size());
    for (double& v : grad) v /= double(data.size());

    CHECK(dataset_mean_loss(model, data, head) ==
          doctest::Approx(loss).epsilon(1e-13));
    const Vector got = dataset_mean_gradient(model, data, head);
    REQUIRE(got.size() == grad.size());
    for (std::size_t j = 0; j < grad.size(); ++j) {
        CHECK(got[j] == doctest::Approx(grad[j]).epsilon(1e-12));
    }
}
