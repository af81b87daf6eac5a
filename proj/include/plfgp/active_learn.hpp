#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "plfgp/acpf.hpp"
#include "plfgp/case_model.hpp"
#include "plfgp/gp.hpp"

namespace plfgp {

/// Rectangular uncertainty region in per-unit injection coordinates.
struct UncertainBox {
    DimensionMap dims;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Eigen::Index dim() const noexcept { return lower.size(); }
    Eigen::VectorXd width() const { return upper - lower; }
    bool contains(const Eigen::VectorXd& x) const;
};

/// Throws DimensionMismatch or SemanticError; also runs validate_dimensions.
void validate(const NetworkCase& net, const UncertainBox& box);

enum class BetaMode { TheoreticalRKHS, FiniteCandidate, Fixed };

struct BetaSchedule {
    BetaMode mode = BetaMode::FiniteCandidate;
    double delta = 0.01;
    double rkhs_norm_bound = 1.0;
    double gamma_N = 1.0;
    double fixed_value = 4.0;

    /// beta_i for iteration i >= 1 over a pool of `candidates` points.
    double operator()(int i, std::size_t candidates) const;
};

void validate(const BetaSchedule& schedule);

struct LearnOptions {
    double xi_tol = 0.01;  // per-unit
    BetaSchedule schedule;
    int budget = 50;  // oracle evaluations, failures included
    std::uint64_t seed = 0;
    double noise_variance = kDefaultNoiseVariance;
    // Hyperparameters are re-estimated when the training set first reaches
    // `min_fit_points`, then after every `refit_every` further points.
    int min_fit_points = 5;
    int refit_every = 5;
    double prior_signal_std = 0.05;  // per-unit, used before the first fit
    int candidates_per_dim = 512;
    int grid_per_dim = 200;
    PowerFlowOptions power_flow;
};

void validate(const LearnOptions& options);

struct TraceEntry {
    int iteration = 0;
    Eigen::VectorXd x;
    double y = 0.0;     // NaN when the oracle failed
    double plb = 0.0;   // after incorporating this entry
    double beta = 0.0;  // beta used for plb
    bool ok = true;
    bool random_fallback = false;
};

struct LearnResult {
    GPModel model;
    int target_bus = 0;
    double base_kv = 0.0;  // of the target bus
    UncertainBox box;
    double delta = 0.01;
    double xi_tol = 0.0;
    double beta_final = 0.0;
    double xi_max = 0.0;
    int n_train = 0;  // successful oracle evaluations
    int failures = 0;
    bool converged = false;
    std::vector<TraceEntry> trace;
    double elapsed = 0.0;  // seconds, excluded from serialization comparisons
};

/// Sobol points (Cranley-Patterson shifted by `shift`, modulo 1) mapped into
/// the box, followed by the 2^D box corners.
Eigen::MatrixXd sobol_points(const UncertainBox& box, std::size_t count,
                             const Eigen::VectorXd& shift);
Eigen::MatrixXd box_corners(const UncertainBox& box);

struct Acquisition {
    Eigen::VectorXd x;
    Eigen::Index index = -1;  // -1 for a random fallback
    bool random_fallback = false;
};

/// argmax over candidate rows of mu + sqrt(beta) sigma, lowest index on
/// ties. When the winner coincides with a training input a uniform random
/// point of the box is returned instead. Throws EmptyCandidateSet.
Acquisition acquire_next(const GPModel& model, const UncertainBox& box, double beta,
                         const Eigen::MatrixXd& candidates, std::mt19937_64& rng);

/// max over grid rows of sqrt(beta) sigma. Throws EmptyCandidateSet.
double compute_plb(const GPModel& model, double beta, const Eigen::MatrixXd& grid);

/// Fixed PLB grid used by learn(): grid_per_dim * D Sobol points plus corners.
Eigen::MatrixXd plb_grid(const UncertainBox& box, int grid_per_dim);

/// Throws for invalid inputs; oracle failures are logged in the trace.
LearnResult learn(const NetworkCase& net, int target_bus, const UncertainBox& box,
                  const LearnOptions& options);

/// Seed used for target k by learn_many.
std::uint64_t derive_seed(std::uint64_t seed, std::size_t k);

struct LearnOutcome {
    std::optional<LearnResult> result;
    std::string error;  // set when learn threw
};

/// learn() with exceptions captured in the outcome.
LearnOutcome learn_one(const NetworkCase& net, int target_bus, const UncertainBox& box,
                       const LearnOptions& options);
/// learn_one per target, target k seeded with derive_seed(options.seed, k).
/// Outcomes are in target order and independent of `jobs`.
std::vector<LearnOutcome> learn_many(const NetworkCase& net, const std::vector<int>& targets,
                                     const UncertainBox& box, const LearnOptions& options,
                                     int jobs = 1);

nlohmann::json box_to_json(const UncertainBox& box);
UncertainBox box_from_json(const nlohmann::json& j);
nlohmann::json result_to_json(const LearnResult& result);
LearnResult result_from_json(const nlohmann::json& j);

/// iteration, x_<label>..., y, plb, beta, ok, random_fallback
std::string trace_csv(const LearnResult& result);

}  // namespace plfgp
