#pragma once

#include <Eigen/Core>
#include <json.hpp>

namespace plfgp {

/// Noise variance used for power-flow targets: the Newton-Raphson oracle is
/// deterministic up to round-off and its convergence tolerance.
inline constexpr double kDefaultNoiseVariance = 1e-10;

/// Squared-exponential kernel
///   k(x, x') = signal_variance * exp(-1/2 * sum_d ((x_d - x'_d) / lengthscale_d)^2).
struct Kernel {
    double signal_variance = 1.0;
    Eigen::VectorXd lengthscales;

    Eigen::Index dim() const noexcept { return lengthscales.size(); }
};

/// Throws Error unless signal_variance > 0 and every lengthscale is positive.
void validate(const Kernel& kernel);

/// Throws DimensionMismatch when the point sizes differ from the kernel's.
double kernel_eval(const Kernel& kernel, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct Prediction {
    double mean = 0.0;
    double std = 0.0;
};

struct BatchPrediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
};

/// Box-bounded maximum-likelihood search over (signal std, lengthscales).
struct HyperparameterSearch {
    Eigen::VectorXd lengthscale_lower;
    Eigen::VectorXd lengthscale_upper;
    double signal_std_lower = 1e-6;
    double signal_std_upper = 10.0;
    int starts = 8;
    int max_iterations = 200;

    /// Lengthscales bounded to [0.01, 100] times the per-dimension box width.
    static HyperparameterSearch for_box(const Eigen::VectorXd& width);
};

/// Exact GP regression model with a cached Cholesky factorization of
/// K = k(X, X) + (noise_variance + jitter) I. Outputs are centered on their
/// mean; the mean is kept as `offset` and added back in predictions.
/// Immutable once built; concurrent queries are safe.
class GPModel {
public:
    /// Placeholder with no kernel; assign a real model before querying.
    GPModel() = default;

    /// Model with no training data: mean `offset`, std sqrt(signal_variance).
    static GPModel prior(Kernel kernel, double noise_variance, double offset = 0.0);

    /// Conditions on (X, y) with fixed hyperparameters. Rows of X closer than
    /// 1e-12 are merged and their outputs averaged. Throws
    /// FactorizationFailure when K stays indefinite after jitter escalation.
    static GPModel condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Kernel kernel,
                             double noise_variance);

    /// Rebuilds a model from already-centered outputs and a stored offset.
    static GPModel from_centered(Eigen::MatrixXd X, Eigen::VectorXd y_centered, double offset,
                                 Kernel kernel, double noise_variance);

    Eigen::Index size() const noexcept { return X_.rows(); }
    Eigen::Index dim() const noexcept { return kernel_.dim(); }
    const Eigen::MatrixXd& X() const noexcept { return X_; }
    const Eigen::VectorXd& y_centered() const noexcept { return y_; }
    double offset() const noexcept { return offset_; }
    const Kernel& kernel() const noexcept { return kernel_; }
    double noise_variance() const noexcept { return noise_variance_; }
    double jitter() const noexcept { return jitter_; }
    const Eigen::MatrixXd& cholesky_factor() const noexcept { return chol_; }
    const Eigen::VectorXd& alpha() const noexcept { return alpha_; }

    Prediction posterior(const Eigen::VectorXd& x) const;

    /// Row-wise posterior. Rows are processed in fixed-size blocks, so the
    /// result does not depend on `jobs`.
    BatchPrediction posterior_batch(const Eigen::MatrixXd& X, int jobs = 1) const;

    double log_marginal_likelihood() const;

private:
    void factorize();
    void predict_block(const Eigen::MatrixXd& Xs, Eigen::Index first, Eigen::Index count,
                       Eigen::VectorXd& mean, Eigen::VectorXd& std) const;

    Eigen::MatrixXd X_;
    Eigen::MatrixXd X_scaled_;  // X_ divided by the lengthscales
    Eigen::VectorXd y_;
    double offset_ = 0.0;
    Kernel kernel_;
    double noise_variance_ = kDefaultNoiseVariance;
    double jitter_ = 0.0;
    Eigen::MatrixXd chol_;
    Eigen::VectorXd alpha_;
};

/// Merges rows of X closer than `tol` (Euclidean), averaging their outputs.
void merge_duplicates(Eigen::MatrixXd& X, Eigen::VectorXd& y, double tol = 1e-12);

/// Log marginal likelihood of centered outputs under `kernel`; when `grad`
/// is given it receives d/d(log signal std, log lengthscale_1..D).
double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_centered,
                               const Kernel& kernel, double noise_variance,
                               Eigen::VectorXd* grad = nullptr);

/// Multi-start projected gradient ascent on the log marginal likelihood.
Kernel select_hyperparameters(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_centered,
                              double noise_variance, const HyperparameterSearch& search);

/// Selects hyperparameters by maximum likelihood, then conditions.
GPModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double noise_variance,
            const HyperparameterSearch& search);
/// As above with the search box taken from the span of X (unit width for
/// degenerate dimensions).
GPModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
            double noise_variance = kDefaultNoiseVariance);

nlohmann::json model_to_json(const GPModel& model);
/// Factorizations are recomputed on load.
GPModel model_from_json(const nlohmann::json& j);

}  // namespace plfgp
