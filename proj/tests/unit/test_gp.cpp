#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "gp_oracle.hpp"
#include "plfgp/errors.hpp"
#include "plfgp/gp.hpp"

using namespace plfgp;
using plfgp::testing::dense_posterior;

namespace {

Kernel se(double sf2, std::initializer_list<double> ls) {
    Kernel k;
    k.signal_variance = sf2;
    k.lengthscales = Eigen::VectorXd(static_cast<Eigen::Index>(ls.size()));
    Eigen::Index i = 0;
    for (double v : ls) k.lengthscales[i++] = v;
    return k;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

struct Instance {
    GPModel model;
    Eigen::MatrixXd probes;
};

// Well-conditioned random model: noise at least 1% of the signal variance.
Instance random_instance(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d, Eigen::Index probes) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Kernel k;
    k.signal_variance = 0.5 + 2 * u(rng);
    k.lengthscales = Eigen::VectorXd(d);
    for (Eigen::Index j = 0; j < d; ++j) k.lengthscales[j] = 0.2 + u(rng);
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) X(i, j) = u(rng);
        y[i] = std::sin(3 * X.row(i).sum()) + 0.1 * u(rng);
    }
    const double noise = k.signal_variance * (0.01 + 0.09 * u(rng));
    Eigen::MatrixXd P(probes, d);
    for (Eigen::Index i = 0; i < probes; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) P(i, j) = 1.4 * u(rng) - 0.2;
    }
    return {GPModel::condition(X, y, k, noise), P};
}

}  // namespace

TEST_CASE("kernel_eval") {
    const Kernel k1 = se(1.0, {1.0});
    CHECK(kernel_eval(k1, vec({0.3}), vec({0.3})) == 1.0);
    CHECK(kernel_eval(k1, vec({0.0}), vec({1.0})) == doctest::Approx(0.606531).epsilon(1e-6));
    const Kernel k2 = se(2.0, {1.0, 2.0});
    CHECK(kernel_eval(k2, vec({1.0, 2.0}), vec({0.0, 0.0})) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-15));
    CHECK(kernel_eval(k2, vec({0.2, -1.0}), vec({0.7, 3.0})) == kernel_eval(k2, vec({0.7, 3.0}), vec({0.2, -1.0})));
    CHECK_THROWS_AS(kernel_eval(k2, vec({1.0}), vec({1.0, 2.0})), DimensionMismatch);
    CHECK_THROWS_AS(validate(se(0.0, {1.0})), Error);
    CHECK_THROWS_AS(validate(se(1.0, {-1.0})), Error);
}

TEST_CASE("single training point") {
    const double v = 0.97;
    const double noise = 1e-4;
    const Kernel k = se(1.5, {0.7});
    const GPModel m = GPModel::condition(Eigen::MatrixXd::Zero(1, 1), vec({v}), k, noise);
    // Centered output is zero, so the posterior mean is the offset itself.
    CHECK(m.offset() == v);
    CHECK(m.posterior(vec({0.0})).mean == doctest::Approx(0.0 * 1.5 / (1.5 + noise) + v));
    const double var = 1.5 - 1.5 * 1.5 / (1.5 + noise + m.jitter());
    CHECK(m.posterior(vec({0.0})).std == doctest::Approx(std::sqrt(var)).epsilon(1e-9));
}

TEST_CASE("three-point 1-D model matches the dense-inverse oracle") {
    Eigen::MatrixXd X(3, 1);
    X << 0.0, 0.4, 1.0;
    const GPModel m = GPModel::condition(X, vec({1.0, 0.98, 1.01}), se(0.01, {0.3}), 1e-6);
    for (double p : {-0.5, 0.1, 0.4, 0.77, 2.0}) {
        const auto o = dense_posterior(m, vec({p}));
        const Prediction pr = m.posterior(vec({p}));
        CHECK(rel(pr.mean, o.mean) <= 1e-10);
        CHECK(rel(pr.std * pr.std, o.variance) <= 1e-9);
    }
}

TEST_CASE("randomized models match the oracle") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Instance inst = random_instance(rng, 5, 1 + trial % 3, 20);
        for (Eigen::Index i = 0; i < inst.probes.rows(); ++i) {
            const Eigen::VectorXd x = inst.probes.row(i).transpose();
            const auto o = dense_posterior(inst.model, x);
            const Prediction p = inst.model.posterior(x);
            CHECK(rel(p.mean, o.mean) <= 1e-10);
            CHECK(rel(p.std * p.std, o.variance) <= 1e-10);
        }
    }
}

TEST_CASE("duplicate rows are merged") {
    Eigen::MatrixXd X(3, 2);
    X << 0.0, 1.0, 0.5, 0.5, 0.0, 1.0;
    const GPModel m = GPModel::condition(X, vec({1.0, 2.0, 3.0}), se(1.0, {1.0, 1.0}), 1e-8);
    CHECK(m.size() == 2);
    CHECK(m.y_centered()[0] + m.offset() == doctest::Approx(2.0));
    CHECK(m.offset() == doctest::Approx(2.0));
}

TEST_CASE("interpolation and prior reversion limits") {
    Eigen::MatrixXd X(4, 1);
    X << 0.0, 0.3, 0.6, 1.0;
    const Eigen::VectorXd y = vec({0.99, 1.0, 0.995, 0.98});
    const GPModel m = GPModel::condition(X, y, se(1e-4, {0.5}), 1e-16);
    for (Eigen::Index i = 0; i < 4; ++i) {
        const Prediction p = m.posterior(X.row(i).transpose());
        CHECK(std::abs(p.mean - y[i]) < 1e-9);
        CHECK(p.std < 2e-6);
    }
    const Prediction far = m.posterior(vec({6.0}));  // > 10 lengthscales away
    CHECK(std::abs(far.mean - m.offset()) < 1e-12);
    CHECK(std::abs(far.std - 1e-2) < 1e-12);
}

TEST_CASE("prior-only model") {
    const GPModel m = GPModel::prior(se(0.04, {1.0, 1.0}), 1e-10, 1.0);
    const Prediction p = m.posterior(vec({0.2, 0.3}));
    CHECK(p.mean == 1.0);
    CHECK(p.std == doctest::Approx(0.2));
    CHECK(m.size() == 0);
}

TEST_CASE("posterior_batch") {
    std::mt19937_64 rng(11);
    const Instance inst = random_instance(rng, 8, 2, 3000);
    const BatchPrediction b = inst.model.posterior_batch(inst.probes);
    const BatchPrediction b4 = inst.model.posterior_batch(inst.probes, 4);
    CHECK(b.mean == b4.mean);
    CHECK(b.std == b4.std);
    for (Eigen::Index i = 0; i < inst.probes.rows(); ++i) {
        const Prediction p = inst.model.posterior(inst.probes.row(i).transpose());
        CHECK(std::abs(p.mean - b.mean[i]) <= 1e-12);
        CHECK(std::abs(p.std - b.std[i]) <= 1e-12);
    }
    const BatchPrediction one = inst.model.posterior_batch(inst.probes.topRows(1));
    const Prediction p0 = inst.model.posterior(inst.probes.row(0).transpose());
    CHECK(one.mean[0] == p0.mean);
    CHECK(one.std[0] == p0.std);
    const BatchPrediction empty = inst.model.posterior_batch(Eigen::MatrixXd(0, 2));
    CHECK(empty.mean.size() == 0);
    CHECK_THROWS_AS(inst.model.posterior_batch(Eigen::MatrixXd::Zero(3, 5)), DimensionMismatch);
    CHECK_THROWS_AS(inst.model.posterior(vec({1.0})), DimensionMismatch);
}

TEST_CASE("50000-point batch on a small model is fast") {
    std::mt19937_64 rng(3);
    Instance inst = random_instance(rng, 10, 1, 50000);
    const auto t0 = std::chrono::steady_clock::now();
    const BatchPrediction b = inst.model.posterior_batch(inst.probes);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(b.mean.size() == 50000);
    CHECK(secs < 1.0);
}

TEST_CASE("posterior std never exceeds the noise floor at training inputs") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const Eigen::Index n = 2 + trial % 12;
        Eigen::MatrixXd X(n, 2);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            X(i, 0) = u(rng);
            X(i, 1) = u(rng);
            y[i] = 1.0 - 0.05 * X(i, 0) * X(i, 1);
        }
        const GPModel m = fit(X, y);
        for (Eigen::Index i = 0; i < n; ++i) {
            CHECK(m.posterior(X.row(i).transpose()).std <= std::sqrt(m.noise_variance()) + 1e-8);
        }
    }
}

TEST_CASE("adding a training point never increases posterior variance") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Kernel k = se(0.5 + u(rng) * 0.4, {0.3 + 0.25 * (u(rng) + 1)});
        const double noise = 1e-6;
        Eigen::MatrixXd X(0, 1);
        Eigen::VectorXd y(0);
        std::vector<double> probes;
        for (int p = 0; p < 25; ++p) probes.push_back(2 * u(rng));
        std::vector<double> previous(probes.size(), k.signal_variance);
        for (int add = 0; add < 8; ++add) {
            X.conservativeResize(X.rows() + 1, 1);
            y.conservativeResize(y.size() + 1);
            X(X.rows() - 1, 0) = 2 * u(rng);
            y[y.size() - 1] = std::cos(X(X.rows() - 1, 0));
            const GPModel m = GPModel::condition(X, y, k, noise);
            for (std::size_t p = 0; p < probes.size(); ++p) {
                const double s = m.posterior(vec({probes[p]})).std;
                CHECK(s * s <= previous[p] + 1e-12);
                previous[p] = s * s;
            }
        }
    }
}

TEST_CASE("log marginal likelihood gradient matches finite differences") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd X(7, 2);
    Eigen::VectorXd y(7);
    for (Eigen::Index i = 0; i < 7; ++i) {
        X(i, 0) = u(rng);
        X(i, 1) = u(rng);
        y[i] = std::sin(4 * X(i, 0)) - X(i, 1);
    }
    y.array() -= y.mean();
    const Kernel k = se(0.8, {0.4, 0.9});
    Eigen::VectorXd grad;
    log_marginal_likelihood(X, y, k, 1e-3, &grad);
    const double h = 1e-6;
    auto at = [&](int idx, double delta) {
        Kernel kk = k;
        if (idx == 0) kk.signal_variance *= std::exp(2 * delta);
        else kk.lengthscales[idx - 1] *= std::exp(delta);
        return log_marginal_likelihood(X, y, kk, 1e-3);
    };
    for (int idx = 0; idx < 3; ++idx) {
        const double fd = (at(idx, h) - at(idx, -h)) / (2 * h);
        CHECK(grad[idx] == doctest::Approx(fd).epsilon(1e-5));
    }
    CHECK(log_marginal_likelihood(X, y, k, 1e-3) ==
          doctest::Approx(GPModel::from_centered(X, y, 0.0, k, 1e-3).log_marginal_likelihood()).epsilon(1e-9));
}

TEST_CASE("hyperparameter selection stays in bounds and improves the likelihood") {
    Eigen::MatrixXd X(9, 1);
    Eigen::VectorXd y(9);
    for (Eigen::Index i = 0; i < 9; ++i) {
        X(i, 0) = 0.55 * static_cast<double>(i) / 8.0;
        y[i] = 0.99 + 0.001 * std::sin(8 * X(i, 0));
    }
    HyperparameterSearch search = HyperparameterSearch::for_box(vec({0.55}));
    const GPModel m = fit(X, y, 1e-10, search);
    const Kernel& k = m.kernel();
    CHECK(k.lengthscales[0] >= search.lengthscale_lower[0]);
    CHECK(k.lengthscales[0] <= search.lengthscale_upper[0]);
    CHECK(std::sqrt(k.signal_variance) >= search.signal_std_lower);
    CHECK(std::sqrt(k.signal_variance) <= search.signal_std_upper);
    const Kernel naive = se(1.0, {0.55});
    CHECK(m.log_marginal_likelihood() >=
          log_marginal_likelihood(m.X(), m.y_centered(), naive, 1e-10));
    // Held-out accuracy on the smooth target.
    for (double p = 0.0; p <= 0.55; p += 0.01) {
        CHECK(std::abs(m.posterior(vec({p})).mean - (0.99 + 0.001 * std::sin(8 * p))) < 1e-5);
    }
}

TEST_CASE("non-finite inputs fail factorization") {
    Eigen::MatrixXd X(2, 1);
    X << 0.0, std::nan("");
    CHECK_THROWS_AS(GPModel::condition(X, vec({1.0, 2.0}), se(1.0, {1.0}), 1e-10), FactorizationFailure);
}

TEST_CASE("model JSON round-trip reproduces predictions exactly") {
    std::mt19937_64 rng(13);
    const Instance inst = random_instance(rng, 6, 2, 10);
    const GPModel back = model_from_json(nlohmann::json::parse(model_to_json(inst.model).dump()));
    CHECK(back.X() == inst.model.X());
    CHECK(back.kernel().lengthscales == inst.model.kernel().lengthscales);
    const BatchPrediction a = inst.model.posterior_batch(inst.probes);
    const BatchPrediction b = back.posterior_batch(inst.probes);
    CHECK(a.mean == b.mean);
    CHECK(a.std == b.std);
}

TEST_CASE("cached factor reconstructs the covariance") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const Instance inst = random_instance(rng, 12, 2, 1);
        const GPModel& m = inst.model;
        Eigen::MatrixXd K(m.size(), m.size());
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            for (Eigen::Index j = 0; j < m.size(); ++j) {
                K(i, j) = kernel_eval(m.kernel(), m.X().row(i).transpose(), m.X().row(j).transpose());
            }
        }
        K.diagonal().array() += m.noise_variance() + m.jitter();
        const Eigen::MatrixXd& L = m.cholesky_factor();
        CHECK((L * L.transpose() - K).norm() / K.norm() <= 1e-10);
        CHECK((K * m.alpha() - m.y_centered()).norm() <= 1e-9 * (1 + m.y_centered().norm()));
    }
}
