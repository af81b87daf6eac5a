#include "plfgp/acpf.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/SparseLU>

#include "plfgp/errors.hpp"

namespace plfgp {

namespace {

using cd = std::complex<double>;

bool has_generator(const NetworkCase& net, int bus) {
    for (const Generator& g : net.gens()) {
        if (g.status && g.bus == bus) return true;
    }
    return false;
}

// Effective bus types: a PV bus without an in-service generator is solved as PQ.
std::vector<BusKind> effective_kinds(const NetworkCase& net) {
    std::vector<BusKind> kinds;
    kinds.reserve(net.bus_count());
    for (const Bus& b : net.buses()) {
        BusKind k = b.kind;
        if (k == BusKind::PV && !has_generator(net, b.id)) k = BusKind::PQ;
        kinds.push_back(k);
    }
    return kinds;
}

// Case-file voltages with generator setpoints on voltage-controlled buses.
// A flat start puts every magnitude at 1 pu and every angle at the slack angle.
void initial_voltage(const NetworkCase& net, bool flat, Eigen::VectorXd& vm, Eigen::VectorXd& va) {
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    vm.resize(n);
    va.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Bus& b = net.buses()[static_cast<std::size_t>(i)];
        vm[i] = flat ? 1.0 : b.Vm;
        va[i] = b.Va * std::numbers::pi / 180.0;
    }
    if (flat) {
        for (std::size_t i = 0; i < net.buses().size(); ++i) {
            if (net.buses()[i].kind == BusKind::Slack) {
                va.setConstant(va[static_cast<Eigen::Index>(i)]);
                break;
            }
        }
    }
    for (const Generator& g : net.gens()) {
        if (!g.status) continue;
        const auto i = static_cast<Eigen::Index>(net.index_of(g.bus));
        if (net.buses()[static_cast<std::size_t>(i)].kind != BusKind::PQ) vm[i] = g.Vset;
    }
}

}  // namespace

std::string label(const InjectionDim& dim) {
    std::string s(1, dim.quantity == Quantity::P ? 'P' : 'Q');
    s += dim.source == Source::Generation ? 'g' : 'd';
    return s + std::to_string(dim.bus);
}

void validate_dimensions(const NetworkCase& net, const DimensionMap& dims) {
    if (dims.size() > 2 * net.bus_count()) {
        throw DimensionMismatch("injection map has more than 2n entries");
    }
    const auto kinds = effective_kinds(net);
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const InjectionDim& d = dims[i];
        const std::size_t idx = net.index_of(d.bus);
        for (std::size_t j = 0; j < i; ++j) {
            if (dims[j] == d) throw SemanticError("duplicate injection coordinate " + label(d));
        }
        if (kinds[idx] == BusKind::Slack && d.quantity == Quantity::P &&
            d.source == Source::Generation) {
            throw SemanticError(label(d) + ": slack real generation is not an input");
        }
        if (kinds[idx] != BusKind::PQ && d.quantity == Quantity::Q &&
            d.source == Source::Generation) {
            throw SemanticError(label(d) + ": reactive generation at a voltage-controlled bus "
                                           "is not an input");
        }
    }
}

Eigen::VectorXd base_injection(const NetworkCase& net, const DimensionMap& dims) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(dims.size()));
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const InjectionDim& d = dims[i];
        double value = 0.0;
        if (d.source == Source::Generation) {
            for (const Generator& g : net.gens()) {
                if (g.status && g.bus == d.bus) value += d.quantity == Quantity::P ? g.Pg : g.Qg;
            }
        } else {
            const Bus& b = net.bus(d.bus);
            value = d.quantity == Quantity::P ? b.Pd : b.Qd;
        }
        x[static_cast<Eigen::Index>(i)] = value / net.base_mva();
    }
    return x;
}

Eigen::VectorXcd specified_injections(const NetworkCase& net, const DimensionMap& dims,
                                      const Eigen::VectorXd& x) {
    if (static_cast<std::size_t>(x.size()) != dims.size()) {
        throw DimensionMismatch("injection vector has " + std::to_string(x.size()) +
                                " entries, map has " + std::to_string(dims.size()));
    }
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    Eigen::VectorXcd gen = Eigen::VectorXcd::Zero(n);
    Eigen::VectorXcd load = Eigen::VectorXcd::Zero(n);
    for (const Generator& g : net.gens()) {
        if (g.status) gen[static_cast<Eigen::Index>(net.index_of(g.bus))] += cd(g.Pg, g.Qg);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const Bus& b = net.buses()[static_cast<std::size_t>(i)];
        load[i] = cd(b.Pd, b.Qd);
    }
    gen /= net.base_mva();
    load /= net.base_mva();

    for (std::size_t k = 0; k < dims.size(); ++k) {
        const InjectionDim& d = dims[k];
        const auto i = static_cast<Eigen::Index>(net.index_of(d.bus));
        cd& target = d.source == Source::Generation ? gen[i] : load[i];
        const double value = x[static_cast<Eigen::Index>(k)];
        target = d.quantity == Quantity::P ? cd(value, target.imag()) : cd(target.real(), value);
    }
    return gen - load;
}

Eigen::VectorXcd computed_injections(const NetworkCase& net, const Eigen::VectorXd& Vm,
                                     const Eigen::VectorXd& Va) {
    Eigen::VectorXcd v(Vm.size());
    for (Eigen::Index i = 0; i < Vm.size(); ++i) v[i] = std::polar(Vm[i], Va[i]);
    const Eigen::VectorXcd current = net.ybus() * v;
    return v.cwiseProduct(current.conjugate());
}

PowerFlowSolution solve_nrlf(const NetworkCase& net, const DimensionMap& dims,
                             const Eigen::VectorXd& x, const PowerFlowOptions& opts) {
    const Eigen::VectorXcd sbus = specified_injections(net, dims, x);
    const AdmittanceMatrix& ybus = net.ybus();
    const auto kinds = effective_kinds(net);
    const auto n = static_cast<Eigen::Index>(net.bus_count());

    // Unknown layout: angles of PV and PQ buses, then magnitudes of PQ buses.
    std::vector<Eigen::Index> angle_pos(static_cast<std::size_t>(n), -1);
    std::vector<Eigen::Index> mag_pos(static_cast<std::size_t>(n), -1);
    std::vector<Eigen::Index> pvpq;
    std::vector<Eigen::Index> pq;
    for (Eigen::Index i = 0; i < n; ++i) {
        const BusKind k = kinds[static_cast<std::size_t>(i)];
        if (k != BusKind::Slack) pvpq.push_back(i);
        if (k == BusKind::PQ) pq.push_back(i);
    }
    const auto n_angle = static_cast<Eigen::Index>(pvpq.size());
    const auto n_unknown = n_angle + static_cast<Eigen::Index>(pq.size());
    for (std::size_t j = 0; j < pvpq.size(); ++j) {
        angle_pos[static_cast<std::size_t>(pvpq[j])] = static_cast<Eigen::Index>(j);
    }
    for (std::size_t j = 0; j < pq.size(); ++j) {
        mag_pos[static_cast<std::size_t>(pq[j])] = n_angle + static_cast<Eigen::Index>(j);
    }

    Eigen::VectorXd vm;
    Eigen::VectorXd va;
    initial_voltage(net, opts.flat_start, vm, va);
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);

    Eigen::VectorXcd current(n);
    Eigen::VectorXd f(n_unknown);
    auto evaluate = [&] {
        current = ybus * v;
        for (Eigen::Index i = 0; i < n; ++i) {
            const cd mis = v[i] * std::conj(current[i]) - sbus[i];
            const auto a = angle_pos[static_cast<std::size_t>(i)];
            const auto m = mag_pos[static_cast<std::size_t>(i)];
            if (a >= 0) f[a] = mis.real();
            if (m >= 0) f[m] = mis.imag();
        }
        return n_unknown == 0 ? 0.0 : f.lpNorm<Eigen::Infinity>();
    };

    PowerFlowSolution sol;
    sol.bus_ids.reserve(static_cast<std::size_t>(n));
    for (const Bus& b : net.buses()) sol.bus_ids.push_back(b.id);

    double mismatch = evaluate();
    double best = mismatch;
    int iter = 0;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    bool pattern_ready = false;
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::SparseMatrix<double> jac(n_unknown, n_unknown);

    while (!(mismatch <= opts.tolerance)) {
        if (iter >= opts.max_iterations || !std::isfinite(mismatch)) {
            throw NonConvergence(iter, best);
        }
        triplets.clear();
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto row_p = angle_pos[static_cast<std::size_t>(i)];
            const auto row_q = mag_pos[static_cast<std::size_t>(i)];
            if (row_p < 0 && row_q < 0) continue;
            const cd vn_i = v[i] / vm[i];
            for (AdmittanceMatrix::InnerIterator it(ybus, i); it; ++it) {
                const Eigen::Index k = it.col();
                const cd yik = it.value();
                const cd vn_k = v[k] / vm[k];
                cd ds_dvm = v[i] * std::conj(yik * vn_k);
                cd ds_dva = cd(0.0, 1.0) * v[i] * -std::conj(yik * v[k]);
                if (k == i) {
                    ds_dvm += std::conj(current[i]) * vn_i;
                    ds_dva += cd(0.0, 1.0) * v[i] * std::conj(current[i]);
                }
                const auto col_a = angle_pos[static_cast<std::size_t>(k)];
                const auto col_m = mag_pos[static_cast<std::size_t>(k)];
                if (row_p >= 0) {
                    if (col_a >= 0) triplets.emplace_back(row_p, col_a, ds_dva.real());
                    if (col_m >= 0) triplets.emplace_back(row_p, col_m, ds_dvm.real());
                }
                if (row_q >= 0) {
                    if (col_a >= 0) triplets.emplace_back(row_q, col_a, ds_dva.imag());
                    if (col_m >= 0) triplets.emplace_back(row_q, col_m, ds_dvm.imag());
                }
            }
        }
        jac.setFromTriplets(triplets.begin(), triplets.end());
        if (!pattern_ready) {
            lu.analyzePattern(jac);
            pattern_ready = true;
        }
        lu.factorize(jac);
        if (lu.info() != Eigen::Success) {
            throw SingularJacobian("Jacobian factorization failed at iteration " +
                                   std::to_string(iter + 1));
        }
        const Eigen::VectorXd dx = lu.solve(f);
        if (lu.info() != Eigen::Success || !dx.allFinite()) {
            throw SingularJacobian("Jacobian solve failed at iteration " + std::to_string(iter + 1));
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto a = angle_pos[static_cast<std::size_t>(i)];
            const auto m = mag_pos[static_cast<std::size_t>(i)];
            if (a >= 0) va[i] -= dx[a];
            if (m >= 0) vm[i] -= dx[m];
            v[i] = std::polar(vm[i], va[i]);
        }
        ++iter;
        mismatch = evaluate();
        if (mismatch < best) best = mismatch;
    }

    sol.Vm = vm;
    sol.Va = va;
    sol.iterations = iter;
    sol.max_mismatch = mismatch;
    sol.converged = true;
    return sol;
}

PowerFlowSolution solve_nrlf(const NetworkCase& net, const PowerFlowOptions& opts) {
    return solve_nrlf(net, {}, Eigen::VectorXd(0), opts);
}

double read_voltage(const PowerFlowSolution& sol, int bus) {
    if (!sol.converged) throw Error("read_voltage on a non-converged solution");
    for (std::size_t i = 0; i < sol.bus_ids.size(); ++i) {
        if (sol.bus_ids[i] == bus) return sol.Vm[static_cast<Eigen::Index>(i)];
    }
    throw UnknownBus(bus);
}

nlohmann::json solution_to_json(const PowerFlowSolution& sol) {
    nlohmann::json buses = nlohmann::json::array();
    for (std::size_t i = 0; i < sol.bus_ids.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        buses.push_back({{"id", sol.bus_ids[i]}, {"Vm", sol.Vm[k]}, {"Va", sol.Va[k]}});
    }
    return {{"buses", buses},
            {"iterations", sol.iterations},
            {"max_mismatch", sol.max_mismatch},
            {"converged", sol.converged}};
}

PowerFlowSolution solution_from_json(const nlohmann::json& j) {
    try {
        PowerFlowSolution sol;
        const auto& buses = j.at("buses");
        const auto n = static_cast<Eigen::Index>(buses.size());
        sol.Vm.resize(n);
        sol.Va.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& b = buses[static_cast<std::size_t>(i)];
            sol.bus_ids.push_back(b.at("id").get<int>());
            sol.Vm[i] = b.at("Vm").get<double>();
            sol.Va[i] = b.at("Va").get<double>();
        }
        sol.iterations = j.value("iterations", 0);
        sol.max_mismatch = j.value("max_mismatch", 0.0);
        sol.converged = j.value("converged", true);
        return sol;
    } catch (const nlohmann::json::exception& e) {
        throw SyntaxError(std::string("solution JSON: ") + e.what());
    }
}

}  // namespace plfgp
