#include "plfgp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>

#include "plfgp/errors.hpp"

namespace plfgp {

namespace {

constexpr Eigen::Index kBlockRows = 1024;
constexpr int kJitterSteps = 7;  // 1e-12 ... 1e-6

Eigen::MatrixXd scaled(const Eigen::MatrixXd& X, const Eigen::VectorXd& lengthscales) {
    return X * lengthscales.cwiseInverse().asDiagonal();
}

// Signal part of the covariance between the rows of A and B (already scaled).
Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                 double signal_variance) {
    Eigen::MatrixXd K(A.rows(), B.rows());
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            K(i, j) = signal_variance * std::exp(-0.5 * (A.row(i) - B.row(j)).squaredNorm());
        }
    }
    return K;
}

struct Factor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;
};

// Adds noise plus escalating jitter to the diagonal until Cholesky succeeds.
bool factor_with_jitter(const Eigen::MatrixXd& Kf, double noise_variance, Factor& out) {
    // Jitter sequence 0, 1e-12, 1e-11, ..., 1e-6.
    double jitter = 0.0;
    for (int step = 0; step <= kJitterSteps; ++step, jitter = jitter == 0.0 ? 1e-12 : jitter * 10.0) {
        Eigen::MatrixXd K = Kf;
        K.diagonal().array() += noise_variance + jitter;
        out.llt.compute(K);
        if (out.llt.info() != Eigen::Success) continue;
        const auto d = out.llt.matrixLLT().diagonal();
        if (!d.allFinite() || (d.array() <= 0.0).any()) continue;
        out.jitter = jitter;
        return true;
    }
    return false;
}

double mean_of(const Eigen::VectorXd& y) { return y.size() == 0 ? 0.0 : y.mean(); }

}  // namespace

void validate(const Kernel& kernel) {
    if (!(kernel.signal_variance > 0.0) || !std::isfinite(kernel.signal_variance)) {
        throw Error("kernel signal variance must be positive");
    }
    if (kernel.lengthscales.size() == 0) throw Error("kernel needs at least one lengthscale");
    for (Eigen::Index d = 0; d < kernel.lengthscales.size(); ++d) {
        if (!(kernel.lengthscales[d] > 0.0) || !std::isfinite(kernel.lengthscales[d])) {
            throw Error("kernel lengthscales must be positive");
        }
    }
}

double kernel_eval(const Kernel& kernel, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != kernel.dim() || b.size() != kernel.dim()) {
        throw DimensionMismatch("kernel has " + std::to_string(kernel.dim()) +
                                " lengthscales, points have " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()) + " entries");
    }
    const double r2 = (a - b).cwiseQuotient(kernel.lengthscales).squaredNorm();
    return kernel.signal_variance * std::exp(-0.5 * r2);
}

HyperparameterSearch HyperparameterSearch::for_box(const Eigen::VectorXd& width) {
    HyperparameterSearch s;
    s.lengthscale_lower = 0.01 * width;
    s.lengthscale_upper = 100.0 * width;
    return s;
}

void merge_duplicates(Eigen::MatrixXd& X, Eigen::VectorXd& y, double tol) {
    if (X.rows() != y.size()) {
        throw DimensionMismatch("X has " + std::to_string(X.rows()) + " rows, y has " +
                                std::to_string(y.size()) + " entries");
    }
    std::vector<Eigen::Index> keep;
    std::vector<double> sum;
    std::vector<int> count;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        bool merged = false;
        for (std::size_t k = 0; k < keep.size(); ++k) {
            if ((X.row(i) - X.row(keep[k])).norm() < tol) {
                sum[k] += y[i];
                ++count[k];
                merged = true;
                break;
            }
        }
        if (!merged) {
            keep.push_back(i);
            sum.push_back(y[i]);
            count.push_back(1);
        }
    }
    if (keep.size() == static_cast<std::size_t>(X.rows())) return;
    Eigen::MatrixXd Xm(static_cast<Eigen::Index>(keep.size()), X.cols());
    Eigen::VectorXd ym(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        Xm.row(r) = X.row(keep[k]);
        ym[r] = sum[k] / count[k];
    }
    X = std::move(Xm);
    y = std::move(ym);
}

GPModel GPModel::prior(Kernel kernel, double noise_variance, double offset) {
    validate(kernel);
    GPModel m;
    m.X_.resize(0, kernel.dim());
    m.y_.resize(0);
    m.offset_ = offset;
    m.kernel_ = std::move(kernel);
    m.noise_variance_ = noise_variance;
    m.factorize();
    return m;
}

GPModel GPModel::condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Kernel kernel,
                           double noise_variance) {
    Eigen::MatrixXd Xm = X;
    Eigen::VectorXd ym = y;
    merge_duplicates(Xm, ym);
    const double offset = mean_of(ym);
    ym.array() -= offset;
    return from_centered(std::move(Xm), std::move(ym), offset, std::move(kernel), noise_variance);
}

GPModel GPModel::from_centered(Eigen::MatrixXd X, Eigen::VectorXd y_centered, double offset,
                               Kernel kernel, double noise_variance) {
    validate(kernel);
    if (X.cols() != kernel.dim()) {
        throw DimensionMismatch("training inputs have " + std::to_string(X.cols()) +
                                " columns, kernel has " + std::to_string(kernel.dim()));
    }
    if (X.rows() != y_centered.size()) {
        throw DimensionMismatch("X has " + std::to_string(X.rows()) + " rows, y has " +
                                std::to_string(y_centered.size()) + " entries");
    }
    if (!(noise_variance >= 0.0)) throw Error("noise variance must be non-negative");
    GPModel m;
    m.X_ = std::move(X);
    m.y_ = std::move(y_centered);
    m.offset_ = offset;
    m.kernel_ = std::move(kernel);
    m.noise_variance_ = noise_variance;
    m.factorize();
    return m;
}

void GPModel::factorize() {
    const Eigen::Index n = X_.rows();
    X_scaled_ = scaled(X_, kernel_.lengthscales);
    if (n == 0) {
        chol_.resize(0, 0);
        alpha_.resize(0);
        jitter_ = 0.0;
        return;
    }
    Factor f;
    if (!factor_with_jitter(cross_covariance(X_scaled_, X_scaled_, kernel_.signal_variance),
                            noise_variance_, f)) {
        throw FactorizationFailure("covariance matrix is not positive definite after jitter up to 1e-6");
    }
    jitter_ = f.jitter;
    chol_ = f.llt.matrixL();
    alpha_ = f.llt.solve(y_);
}

void GPModel::predict_block(const Eigen::MatrixXd& Xs, Eigen::Index first, Eigen::Index count,
                            Eigen::VectorXd& mean, Eigen::VectorXd& std) const {
    const double sf2 = kernel_.signal_variance;
    if (X_.rows() == 0) {
        mean.segment(first, count).setConstant(offset_);
        std.segment(first, count).setConstant(std::sqrt(sf2));
        return;
    }
    const Eigen::MatrixXd Ks = cross_covariance(Xs.middleRows(first, count), X_scaled_, sf2);
    const Eigen::MatrixXd V = chol_.triangularView<Eigen::Lower>().solve(Ks.transpose());
    for (Eigen::Index r = 0; r < count; ++r) {
        mean[first + r] = Ks.row(r).dot(alpha_) + offset_;
        const double var = sf2 - V.col(r).squaredNorm();
        std[first + r] = var > 0.0 ? std::sqrt(var) : 0.0;
    }
}

Prediction GPModel::posterior(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) {
        throw DimensionMismatch("query has " + std::to_string(x.size()) + " entries, model has " +
                                std::to_string(dim()) + " inputs");
    }
    const Eigen::MatrixXd Xs = scaled(x.transpose(), kernel_.lengthscales);
    Eigen::VectorXd mean(1);
    Eigen::VectorXd std(1);
    predict_block(Xs, 0, 1, mean, std);
    return {mean[0], std[0]};
}

BatchPrediction GPModel::posterior_batch(const Eigen::MatrixXd& X, int jobs) const {
    if (X.cols() != dim() && X.rows() > 0) {
        throw DimensionMismatch("queries have " + std::to_string(X.cols()) + " columns, model has " +
                                std::to_string(dim()) + " inputs");
    }
    BatchPrediction out{Eigen::VectorXd(X.rows()), Eigen::VectorXd(X.rows())};
    if (X.rows() == 0) return out;
    const Eigen::MatrixXd Xs = scaled(X, kernel_.lengthscales);
    const Eigen::Index blocks = (X.rows() + kBlockRows - 1) / kBlockRows;
    auto run = [&](Eigen::Index b) {
        const Eigen::Index first = b * kBlockRows;
        predict_block(Xs, first, std::min(kBlockRows, X.rows() - first), out.mean, out.std);
    };
    const auto workers = static_cast<Eigen::Index>(std::clamp<Eigen::Index>(jobs, 1, blocks));
    if (workers == 1) {
        for (Eigen::Index b = 0; b < blocks; ++b) run(b);
        return out;
    }
    std::vector<std::thread> pool;
    for (Eigen::Index w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (Eigen::Index b = w; b < blocks; b += workers) run(b);
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

double GPModel::log_marginal_likelihood() const {
    const Eigen::Index n = X_.rows();
    if (n == 0) return 0.0;
    return -0.5 * y_.dot(alpha_) - chol_.diagonal().array().log().sum() -
           0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_centered,
                               const Kernel& kernel, double noise_variance, Eigen::VectorXd* grad) {
    const Eigen::Index n = X.rows();
    const Eigen::Index dim = kernel.dim();
    if (grad) grad->setZero(dim + 1);
    if (n == 0) return 0.0;
    const Eigen::MatrixXd Xs = scaled(X, kernel.lengthscales);
    const Eigen::MatrixXd Kf = cross_covariance(Xs, Xs, kernel.signal_variance);
    Factor f;
    if (!factor_with_jitter(Kf, noise_variance, f)) return -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd alpha = f.llt.solve(y_centered);
    const double lml = -0.5 * y_centered.dot(alpha) -
                       Eigen::MatrixXd(f.llt.matrixL()).diagonal().array().log().sum() -
                       0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    if (grad) {
        const Eigen::MatrixXd W =
            alpha * alpha.transpose() - f.llt.solve(Eigen::MatrixXd::Identity(n, n));
        const Eigen::MatrixXd WK = W.cwiseProduct(Kf);
        (*grad)[0] = WK.sum();
        for (Eigen::Index d = 0; d < dim; ++d) {
            double g = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double diff = Xs(i, d) - Xs(j, d);
                    g += WK(i, j) * diff * diff;
                }
            }
            (*grad)[d + 1] = 0.5 * g;
        }
    }
    return lml;
}

Kernel select_hyperparameters(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_centered,
                              double noise_variance, const HyperparameterSearch& search) {
    const Eigen::Index dim = X.cols();
    if (search.lengthscale_lower.size() != dim || search.lengthscale_upper.size() != dim) {
        throw DimensionMismatch("hyperparameter bounds do not match the input dimension");
    }
    Eigen::VectorXd lo(dim + 1);
    Eigen::VectorXd hi(dim + 1);
    lo[0] = std::log(search.signal_std_lower);
    hi[0] = std::log(search.signal_std_upper);
    for (Eigen::Index d = 0; d < dim; ++d) {
        lo[d + 1] = std::log(search.lengthscale_lower[d]);
        hi[d + 1] = std::log(search.lengthscale_upper[d]);
    }
    if (!((hi - lo).array() >= 0.0).all() || !lo.allFinite() || !hi.allFinite()) {
        throw Error("invalid hyperparameter bounds");
    }

    auto kernel_at = [&](const Eigen::VectorXd& theta) {
        Kernel k;
        k.signal_variance = std::exp(2.0 * theta[0]);
        k.lengthscales = theta.tail(dim).array().exp();
        return k;
    };
    auto clamp = [&](Eigen::VectorXd theta) { return theta.cwiseMax(lo).cwiseMin(hi).eval(); };

    const double y_std = X.rows() > 1 ? std::sqrt(y_centered.squaredNorm() / static_cast<double>(X.rows())) : 0.0;
    const double start_sf = std::log(std::clamp(y_std > 0.0 ? y_std : search.signal_std_lower,
                                                search.signal_std_lower, search.signal_std_upper));

    Eigen::VectorXd best_theta = clamp(Eigen::VectorXd((lo + hi) / 2));
    double best = -std::numeric_limits<double>::infinity();
    const int starts = std::max(1, search.starts);
    for (int s = 0; s < starts; ++s) {
        const double frac = starts == 1 ? 0.5 : static_cast<double>(s) / (starts - 1);
        Eigen::VectorXd theta(dim + 1);
        theta[0] = start_sf;
        theta.tail(dim) = lo.tail(dim) + frac * (hi.tail(dim) - lo.tail(dim));
        theta = clamp(theta);

        Eigen::VectorXd g;
        double f = log_marginal_likelihood(X, y_centered, kernel_at(theta), noise_variance, &g);
        if (!std::isfinite(f)) continue;
        double step = 0.1;
        for (int it = 0; it < search.max_iterations && step > 1e-6; ++it) {
            const double gmax = g.lpNorm<Eigen::Infinity>();
            if (!(gmax > 0.0)) break;
            const Eigen::VectorXd cand = clamp(theta + step * g / gmax);
            if ((cand - theta).lpNorm<Eigen::Infinity>() < 1e-12) break;
            Eigen::VectorXd gc;
            const double fc = log_marginal_likelihood(X, y_centered, kernel_at(cand), noise_variance, &gc);
            if (std::isfinite(fc) && fc > f) {
                theta = cand;
                f = fc;
                g = gc;
                step = std::min(2.0 * step, 2.0);
            } else {
                step *= 0.5;
            }
        }
        if (f > best) {
            best = f;
            best_theta = theta;
        }
    }
    if (!std::isfinite(best) && X.rows() > 0) {
        throw FactorizationFailure("no hyperparameter start produced a positive definite covariance");
    }
    return kernel_at(best_theta);
}

GPModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double noise_variance,
            const HyperparameterSearch& search) {
    Eigen::MatrixXd Xm = X;
    Eigen::VectorXd ym = y;
    merge_duplicates(Xm, ym);
    const double offset = mean_of(ym);
    ym.array() -= offset;
    Kernel k = select_hyperparameters(Xm, ym, noise_variance, search);
    return GPModel::from_centered(std::move(Xm), std::move(ym), offset, std::move(k), noise_variance);
}

GPModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double noise_variance) {
    if (X.rows() == 0) throw Error("fit needs at least one training point");
    Eigen::VectorXd width = X.colwise().maxCoeff() - X.colwise().minCoeff();
    for (Eigen::Index d = 0; d < width.size(); ++d) {
        if (!(width[d] > 0.0)) width[d] = 1.0;
    }
    return fit(X, y, noise_variance, HyperparameterSearch::for_box(width));
}

nlohmann::json model_to_json(const GPModel& model) {
    nlohmann::json X = nlohmann::json::array();
    for (Eigen::Index i = 0; i < model.X().rows(); ++i) {
        X.push_back(std::vector<double>(model.X().row(i).begin(), model.X().row(i).end()));
    }
    const auto& ls = model.kernel().lengthscales;
    return {{"X", X},
            {"y", std::vector<double>(model.y_centered().begin(), model.y_centered().end())},
            {"offset", model.offset()},
            {"kernel",
             {{"variant", "SquaredExponential"},
              {"signal_variance", model.kernel().signal_variance},
              {"lengthscales", std::vector<double>(ls.begin(), ls.end())}}},
            {"noise_variance", model.noise_variance()}};
}

GPModel model_from_json(const nlohmann::json& j) {
    try {
        const auto& kj = j.at("kernel");
        if (kj.value("variant", "SquaredExponential") != "SquaredExponential") {
            throw SyntaxError("unsupported kernel variant");
        }
        Kernel k;
        k.signal_variance = kj.at("signal_variance").get<double>();
        const auto ls = kj.at("lengthscales").get<std::vector<double>>();
        k.lengthscales = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
        const auto rows = j.at("X").get<std::vector<std::vector<double>>>();
        const auto y = j.at("y").get<std::vector<double>>();
        Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), k.dim());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (static_cast<Eigen::Index>(rows[i].size()) != k.dim()) {
                throw DimensionMismatch("model JSON row width does not match the kernel");
            }
            for (std::size_t d = 0; d < rows[i].size(); ++d) {
                X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = rows[i][d];
            }
        }
        Eigen::VectorXd yc = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
        return GPModel::from_centered(std::move(X), std::move(yc), j.at("offset").get<double>(),
                                      std::move(k), j.at("noise_variance").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw SyntaxError(std::string("model JSON: ") + e.what());
    }
}

}  // namespace plfgp
