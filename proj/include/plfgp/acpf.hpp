#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "plfgp/case_model.hpp"

namespace plfgp {

enum class Quantity { P, Q };
enum class Source { Generation, Demand };

/// One coordinate of an injection vector. The coordinate's value replaces
/// the case's total generation (or demand) of `quantity` at `bus`, in
/// per-unit on the system base; the net injection is generation minus demand.
struct InjectionDim {
    int bus = 0;
    Quantity quantity = Quantity::P;
    Source source = Source::Generation;

    bool operator==(const InjectionDim&) const = default;
};

using DimensionMap = std::vector<InjectionDim>;

/// Throws UnknownBus, DimensionMismatch or SemanticError when `dims` cannot
/// parameterize `net` (duplicates, slack real power, PV/slack reactive
/// generation, more than 2n entries).
void validate_dimensions(const NetworkCase& net, const DimensionMap& dims);

/// Value of each coordinate at the case's base operating point (per-unit).
Eigen::VectorXd base_injection(const NetworkCase& net, const DimensionMap& dims);

/// "Pg27", "Qd30", ...
std::string label(const InjectionDim& dim);

struct PowerFlowOptions {
    double tolerance = 1e-8;
    int max_iterations = 30;
    bool flat_start = false;  // otherwise start from the case-file voltages
};

struct PowerFlowSolution {
    std::vector<int> bus_ids;
    Eigen::VectorXd Vm;
    Eigen::VectorXd Va;  // radians
    int iterations = 0;
    double max_mismatch = 0.0;
    bool converged = false;
};

/// Net complex injection per bus (per-unit) with `x` applied over the base case.
Eigen::VectorXcd specified_injections(const NetworkCase& net, const DimensionMap& dims,
                                      const Eigen::VectorXd& x);

/// S = V .* conj(Ybus V) for the given polar voltages.
Eigen::VectorXcd computed_injections(const NetworkCase& net, const Eigen::VectorXd& Vm,
                                     const Eigen::VectorXd& Va);

/// Polar Newton-Raphson. Generator reactive limits are not enforced.
/// Throws NonConvergence or SingularJacobian; a returned solution is always
/// converged.
PowerFlowSolution solve_nrlf(const NetworkCase& net, const DimensionMap& dims,
                             const Eigen::VectorXd& x, const PowerFlowOptions& opts = {});
PowerFlowSolution solve_nrlf(const NetworkCase& net, const PowerFlowOptions& opts = {});

/// Voltage magnitude (per-unit) at bus `bus`.
double read_voltage(const PowerFlowSolution& sol, int bus);

nlohmann::json solution_to_json(const PowerFlowSolution& sol);
PowerFlowSolution solution_from_json(const nlohmann::json& j);

}  // namespace plfgp
