#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "plfgp/active_learn.hpp"
#include "plfgp/acpf.hpp"
#include "plfgp/case_model.hpp"

namespace plfgp {

enum class DistributionKind { Uniform, Normal, Gamma, Empirical };

/// Input uncertainty in per-unit injection coordinates. Gamma draws are
/// offset + Gamma(shape, scale) per dimension, dimensions independent.
struct InputDistribution {
    DistributionKind kind = DistributionKind::Uniform;
    Eigen::VectorXd lower, upper;              // Uniform
    Eigen::VectorXd mean, std;                 // Normal
    Eigen::VectorXd shape, scale, offset;      // Gamma
    Eigen::MatrixXd rows;                      // Empirical, drawn with replacement
    // Draws outside [clip_lower, clip_upper] are rejected and redrawn.
    bool truncate = false;
    Eigen::VectorXd clip_lower, clip_upper;

    static InputDistribution uniform(Eigen::VectorXd lower, Eigen::VectorXd upper);
    static InputDistribution normal(Eigen::VectorXd mean, Eigen::VectorXd std);
    static InputDistribution gamma(Eigen::VectorXd shape, Eigen::VectorXd scale, Eigen::VectorXd offset);
    static InputDistribution empirical(Eigen::MatrixXd rows);

    /// Enables truncation to the box.
    InputDistribution& clip_to(const UncertainBox& box);

    Eigen::Index dim() const;
};

/// Throws SemanticError or DimensionMismatch.
void validate(const InputDistribution& dist);

inline constexpr std::size_t kSampleBlock = 1024;

/// Rows come in fixed blocks of kSampleBlock; block b is drawn from its own
/// stream derive_seed(seed, b), so the matrix does not depend on `jobs`.
/// Throws RejectionStall when truncation accepts fewer than 1% of draws.
Eigen::MatrixXd sample(const InputDistribution& dist, std::size_t n, std::uint64_t seed, int jobs = 1);

struct Histogram {
    std::vector<double> edges;  // per-unit, size = counts.size() + 1
    std::vector<std::size_t> counts;
};

/// Freedman-Diaconis bin width unless `bins` > 0; the last bin is closed.
Histogram make_histogram(const Eigen::VectorXd& values, int bins = 0);

inline constexpr std::array<double, 5> kQuantileLevels = {0.01, 0.05, 0.50, 0.95, 0.99};

/// Linear interpolation between order statistics.
double quantile(std::vector<double> sorted_values, double level);

/// Statistics are over per-unit voltages; every kV figure is the per-unit
/// figure times base_kv.
struct TestReport {
    std::string method;  // "gp" or "mcs"
    int target_bus = 0;
    double base_kv = 0.0;
    std::size_t n_samples = 0;  // values summarized
    std::size_t failures = 0;   // excluded oracle failures (mcs)
    double mean = 0.0;
    double std = 0.0;  // population
    std::array<double, 5> quantiles{};
    Histogram histogram;
    double xi_max = 0.0;  // inherited PLB, 0 for mcs
    double elapsed = 0.0;
    // Posterior std over the test samples, when requested.
    std::optional<double> predictive_std_mean;
    std::optional<double> predictive_std_max;

    double kv(double pu) const { return pu * base_kv; }
};

struct TestOptions {
    int bins = 0;
    int jobs = 1;
    bool predictive_std = false;
    PowerFlowOptions power_flow;
};

TestReport summarize(const Eigen::VectorXd& values, std::string method, int target_bus, double base_kv,
                     int bins = 0);

/// Surrogate means at the rows of `samples`.
Eigen::VectorXd surrogate_values(const LearnResult& result, const Eigen::MatrixXd& samples, int jobs = 1);

struct OracleValues {
    Eigen::VectorXd values;  // NaN where the power flow failed
    std::size_t failures = 0;
};

/// One Newton-Raphson solve per row; deterministic for any `jobs`.
OracleValues oracle_values(const NetworkCase& net, int target_bus, const DimensionMap& dims,
                           const Eigen::MatrixXd& samples, int jobs = 1, const PowerFlowOptions& pf = {});

struct OracleMatrix {
    Eigen::MatrixXd values;  // samples x targets, NaN rows where the power flow failed
    std::size_t failures = 0;
};

/// One solve per row shared by all targets.
OracleMatrix oracle_values(const NetworkCase& net, const std::vector<int>& targets, const DimensionMap& dims,
                           const Eigen::MatrixXd& samples, int jobs = 1, const PowerFlowOptions& pf = {});

/// Throws ExcessiveFailures when more than 1% of `total` failed.
void check_failures(std::size_t failures, std::size_t total);

/// Throws DimensionMismatch when the distribution does not match the box.
TestReport test(const LearnResult& result, const InputDistribution& dist, std::size_t n, std::uint64_t seed,
                const TestOptions& options = {});

/// Failed samples are excluded and counted. Throws ExcessiveFailures.
TestReport mcs(const NetworkCase& net, int target_bus, const DimensionMap& dims, const InputDistribution& dist,
               std::size_t n, std::uint64_t seed, const TestOptions& options = {});

struct ErrorIndex {
    double eps_v_percent = 0.0;
    std::size_t n_samples = 0;
    std::size_t failures = 0;
};

/// mean(|(v_true - v_model) / v_true|) * 100 over pairs where v_true is finite.
ErrorIndex eps_v(const Eigen::VectorXd& v_true, const Eigen::VectorXd& v_model);

/// Pairs each row of `samples` through the oracle and the surrogate.
/// Throws ExcessiveFailures.
ErrorIndex error_index(const Eigen::MatrixXd& samples, const LearnResult& result, const NetworkCase& net,
                       int target_bus, int jobs = 1, const PowerFlowOptions& pf = {});

nlohmann::json distribution_to_json(const InputDistribution& dist);
InputDistribution distribution_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const TestReport& report);
TestReport report_from_json(const nlohmann::json& j);
nlohmann::json error_index_to_json(const ErrorIndex& e);
ErrorIndex error_index_from_json(const nlohmann::json& j);

/// lower_pu,upper_pu,lower_kv,upper_kv,count
std::string histogram_csv(const TestReport& report);
/// Parses histogram_csv output back into per-unit edges and counts.
Histogram histogram_from_csv(const std::string& csv);

}  // namespace plfgp
