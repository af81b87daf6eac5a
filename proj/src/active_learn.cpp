#include "plfgp/active_learn.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include <boost/random/sobol.hpp>

#include "plfgp/errors.hpp"

namespace plfgp {

namespace {

// Uniform double in [0, 1) from the top 53 bits; identical across standard libraries.
double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Eigen::VectorXd uniform_in(const UncertainBox& box, std::mt19937_64& rng) {
    Eigen::VectorXd x(box.dim());
    for (Eigen::Index d = 0; d < box.dim(); ++d) {
        x[d] = box.lower[d] + unit_draw(rng) * (box.upper[d] - box.lower[d]);
    }
    return x;
}

bool is_training_input(const GPModel& model, const Eigen::VectorXd& x) {
    for (Eigen::Index i = 0; i < model.X().rows(); ++i) {
        if ((model.X().row(i).transpose() - x).norm() < 1e-12) return true;
    }
    return false;
}

std::string quantity_name(Quantity q) { return q == Quantity::P ? "P" : "Q"; }
std::string source_name(Source s) { return s == Source::Generation ? "generation" : "demand"; }

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.begin(), v.end()}; }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

bool UncertainBox::contains(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) return false;
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

void validate(const NetworkCase& net, const UncertainBox& box) {
    if (box.dims.empty()) throw SemanticError("uncertainty box has no dimensions");
    const auto d = static_cast<Eigen::Index>(box.dims.size());
    if (box.lower.size() != d || box.upper.size() != d) {
        throw DimensionMismatch("box bounds do not match the dimension map");
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        if (!std::isfinite(box.lower[i]) || !std::isfinite(box.upper[i]) ||
            !(box.lower[i] < box.upper[i])) {
            throw SemanticError("box bounds for " + label(box.dims[static_cast<std::size_t>(i)]) +
                                " must be finite with lower < upper");
        }
    }
    validate_dimensions(net, box.dims);
}

double BetaSchedule::operator()(int i, std::size_t candidates) const {
    switch (mode) {
        case BetaMode::Fixed:
            return fixed_value;
        case BetaMode::FiniteCandidate: {
            const double ii = static_cast<double>(i);
            return 2.0 * std::log(static_cast<double>(candidates) * ii * ii * std::numbers::pi *
                                  std::numbers::pi / (6.0 * delta));
        }
        case BetaMode::TheoreticalRKHS: {
            const double l = std::log(static_cast<double>(i) / delta);
            return 2.0 * rkhs_norm_bound * rkhs_norm_bound + 300.0 * gamma_N * l * l * l;
        }
    }
    return fixed_value;
}

void validate(const BetaSchedule& s) {
    if (!(s.delta > 0.0 && s.delta < 1.0)) throw SemanticError("delta must lie in (0, 1)");
    if (s.mode == BetaMode::Fixed && !(s.fixed_value > 0.0)) {
        throw SemanticError("fixed beta must be positive");
    }
    if (s.mode == BetaMode::TheoreticalRKHS && !(s.rkhs_norm_bound > 0.0 && s.gamma_N > 0.0)) {
        throw SemanticError("RKHS norm bound and gamma_N must be positive");
    }
}

void validate(const LearnOptions& o) {
    validate(o.schedule);
    if (!(o.xi_tol > 0.0)) throw SemanticError("xi_tol must be positive");
    if (o.budget < 0) throw SemanticError("budget must be non-negative");
    if (!(o.noise_variance >= 0.0)) throw SemanticError("noise variance must be non-negative");
    if (o.min_fit_points < 1 || o.refit_every < 1) throw SemanticError("refit cadence must be positive");
    if (!(o.prior_signal_std > 0.0)) throw SemanticError("prior signal std must be positive");
    if (o.candidates_per_dim < 1 || o.grid_per_dim < 1) throw SemanticError("point counts must be positive");
}

Eigen::MatrixXd sobol_points(const UncertainBox& box, std::size_t count, const Eigen::VectorXd& shift) {
    const Eigen::Index dim = box.dim();
    if (shift.size() != dim) throw DimensionMismatch("Sobol shift does not match the box");
    boost::random::sobol engine(static_cast<std::size_t>(dim));
    const double scale = 1.0 / (static_cast<double>(engine.max() - engine.min()) + 1.0);
    const Eigen::MatrixXd corners = box_corners(box);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(count) + corners.rows(), dim);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(count); ++i) {
        for (Eigen::Index d = 0; d < dim; ++d) {
            double u = static_cast<double>(engine() - engine.min()) * scale + shift[d];
            u -= std::floor(u);
            out(i, d) = box.lower[d] + u * (box.upper[d] - box.lower[d]);
        }
    }
    out.bottomRows(corners.rows()) = corners;
    return out;
}

Eigen::MatrixXd box_corners(const UncertainBox& box) {
    const Eigen::Index dim = box.dim();
    const Eigen::Index n = Eigen::Index{1} << dim;
    Eigen::MatrixXd out(n, dim);
    for (Eigen::Index c = 0; c < n; ++c) {
        for (Eigen::Index d = 0; d < dim; ++d) out(c, d) = (c >> d) & 1 ? box.upper[d] : box.lower[d];
    }
    return out;
}

Eigen::MatrixXd plb_grid(const UncertainBox& box, int grid_per_dim) {
    return sobol_points(box, static_cast<std::size_t>(grid_per_dim) * static_cast<std::size_t>(box.dim()),
                        Eigen::VectorXd::Zero(box.dim()));
}

Acquisition acquire_next(const GPModel& model, const UncertainBox& box, double beta,
                         const Eigen::MatrixXd& candidates, std::mt19937_64& rng) {
    if (candidates.rows() == 0) throw EmptyCandidateSet();
    const BatchPrediction p = model.posterior_batch(candidates);
    const double root = std::sqrt(beta);
    Eigen::Index best = -1;
    double best_value = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < candidates.rows(); ++i) {
        const double ucb = p.mean[i] + root * p.std[i];
        if (ucb > best_value) {
            best_value = ucb;
            best = i;
        }
    }
    if (best < 0) throw EmptyCandidateSet();
    Acquisition a;
    a.x = candidates.row(best).transpose();
    a.index = best;
    if (is_training_input(model, a.x)) {
        a.x = uniform_in(box, rng);
        a.index = -1;
        a.random_fallback = true;
    }
    return a;
}

double compute_plb(const GPModel& model, double beta, const Eigen::MatrixXd& grid) {
    if (grid.rows() == 0) throw EmptyCandidateSet();
    return std::sqrt(beta) * model.posterior_batch(grid).std.maxCoeff();
}

LearnResult learn(const NetworkCase& net, int target_bus, const UncertainBox& box,
                  const LearnOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    validate(net, box);
    validate(options);
    net.index_of(target_bus);

    std::mt19937_64 rng(options.seed);
    const Eigen::Index dim = box.dim();
    const Eigen::MatrixXd grid = plb_grid(box, options.grid_per_dim);
    const std::size_t pool_rows = static_cast<std::size_t>(options.candidates_per_dim) * static_cast<std::size_t>(dim);
    const std::size_t pool_size = pool_rows + (std::size_t{1} << dim);
    const HyperparameterSearch search = HyperparameterSearch::for_box(box.width());

    Kernel kernel;
    kernel.signal_variance = options.prior_signal_std * options.prior_signal_std;
    kernel.lengthscales = box.width();

    LearnResult r;
    r.target_bus = target_bus;
    r.base_kv = net.bus(target_bus).baseKV;
    r.box = box;
    r.delta = options.schedule.delta;
    r.xi_tol = options.xi_tol;
    r.model = GPModel::prior(kernel, options.noise_variance, 0.0);
    r.beta_final = options.schedule(1, pool_size);
    r.xi_max = compute_plb(r.model, r.beta_final, grid);

    Eigen::MatrixXd X(0, dim);
    Eigen::VectorXd y(0);
    int fitted_at = 0;
    Eigen::VectorXd x;
    bool fallback = false;
    if (options.budget > 0) x = uniform_in(box, rng);

    for (int evals = 1; evals <= options.budget; ++evals) {
        TraceEntry e;
        e.iteration = evals;
        e.x = x;
        e.random_fallback = fallback;
        try {
            e.y = read_voltage(solve_nrlf(net, box.dims, x, options.power_flow), target_bus);
        } catch (const NonConvergence&) {
            e.ok = false;
        } catch (const SingularJacobian&) {
            e.ok = false;
        }
        if (e.ok) {
            X.conservativeResize(X.rows() + 1, dim);
            X.row(X.rows() - 1) = x.transpose();
            y.conservativeResize(y.size() + 1);
            y[y.size() - 1] = e.y;
            ++r.n_train;
            const int n = r.n_train;
            if (n >= options.min_fit_points && (fitted_at == 0 || n - fitted_at >= options.refit_every)) {
                r.model = fit(X, y, options.noise_variance, search);
                kernel = r.model.kernel();
                fitted_at = n;
            } else {
                r.model = GPModel::condition(X, y, kernel, options.noise_variance);
            }
        } else {
            e.y = std::numeric_limits<double>::quiet_NaN();
            ++r.failures;
        }
        r.beta_final = options.schedule(r.n_train + 1, pool_size);
        r.xi_max = compute_plb(r.model, r.beta_final, grid);
        e.beta = r.beta_final;
        e.plb = r.xi_max;
        r.trace.push_back(e);
        if (r.n_train >= 1 && r.xi_max <= options.xi_tol) {
            r.converged = true;
            break;
        }
        if (evals == options.budget) break;

        Eigen::VectorXd shift(dim);
        for (Eigen::Index d = 0; d < dim; ++d) shift[d] = unit_draw(rng);
        const Acquisition a = acquire_next(r.model, box, r.beta_final,
                                           sobol_points(box, pool_rows, shift), rng);
        x = a.x;
        fallback = a.random_fallback;
    }
    r.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::uint64_t derive_seed(std::uint64_t seed, std::size_t k) {
    // splitmix64 finalizer over the target index.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(k) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

LearnOutcome learn_one(const NetworkCase& net, int target_bus, const UncertainBox& box,
                       const LearnOptions& options) {
    LearnOutcome out;
    try {
        out.result = learn(net, target_bus, box, options);
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

std::vector<LearnOutcome> learn_many(const NetworkCase& net, const std::vector<int>& targets,
                                     const UncertainBox& box, const LearnOptions& options, int jobs) {
    std::vector<LearnOutcome> out(targets.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < targets.size(); k = next++) {
            LearnOptions o = options;
            o.seed = derive_seed(options.seed, k);
            out[k] = learn_one(net, targets[k], box, o);
        }
    };
    const auto n = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(std::max<std::size_t>(targets.size(), 1))));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return out;
}

nlohmann::json box_to_json(const UncertainBox& box) {
    nlohmann::json dims = nlohmann::json::array();
    for (const InjectionDim& d : box.dims) {
        dims.push_back({{"bus", d.bus}, {"quantity", quantity_name(d.quantity)}, {"source", source_name(d.source)}});
    }
    return {{"dims", dims}, {"lower", to_vector(box.lower)}, {"upper", to_vector(box.upper)}};
}

UncertainBox box_from_json(const nlohmann::json& j) {
    try {
        UncertainBox box;
        for (const auto& d : j.at("dims")) {
            InjectionDim dim;
            dim.bus = d.at("bus").get<int>();
            const auto q = d.at("quantity").get<std::string>();
            const auto s = d.at("source").get<std::string>();
            if ((q != "P" && q != "Q") || (s != "generation" && s != "demand")) {
                throw SyntaxError("unknown injection quantity or source");
            }
            dim.quantity = q == "P" ? Quantity::P : Quantity::Q;
            dim.source = s == "generation" ? Source::Generation : Source::Demand;
            box.dims.push_back(dim);
        }
        box.lower = from_vector(j.at("lower").get<std::vector<double>>());
        box.upper = from_vector(j.at("upper").get<std::vector<double>>());
        return box;
    } catch (const nlohmann::json::exception& e) {
        throw SyntaxError(std::string("box JSON: ") + e.what());
    }
}

nlohmann::json result_to_json(const LearnResult& r) {
    nlohmann::json trace = nlohmann::json::array();
    for (const TraceEntry& e : r.trace) {
        trace.push_back({{"iteration", e.iteration},
                         {"x", to_vector(e.x)},
                         {"y", e.ok ? nlohmann::json(e.y) : nlohmann::json(nullptr)},
                         {"plb", e.plb},
                         {"beta", e.beta},
                         {"ok", e.ok},
                         {"random_fallback", e.random_fallback}});
    }
    return {{"target_bus", r.target_bus},
            {"base_kv", r.base_kv},
            {"box", box_to_json(r.box)},
            {"delta", r.delta},
            {"xi_tol", r.xi_tol},
            {"beta_final", r.beta_final},
            {"xi_max", r.xi_max},
            {"n_train", r.n_train},
            {"failures", r.failures},
            {"converged", r.converged},
            {"elapsed", r.elapsed},
            {"model", model_to_json(r.model)},
            {"trace", trace}};
}

LearnResult result_from_json(const nlohmann::json& j) {
    try {
        LearnResult r;
        r.target_bus = j.at("target_bus").get<int>();
        r.base_kv = j.at("base_kv").get<double>();
        r.box = box_from_json(j.at("box"));
        r.delta = j.at("delta").get<double>();
        r.xi_tol = j.at("xi_tol").get<double>();
        r.beta_final = j.at("beta_final").get<double>();
        r.xi_max = j.at("xi_max").get<double>();
        r.n_train = j.at("n_train").get<int>();
        r.failures = j.at("failures").get<int>();
        r.converged = j.at("converged").get<bool>();
        r.elapsed = j.value("elapsed", 0.0);
        r.model = model_from_json(j.at("model"));
        for (const auto& t : j.at("trace")) {
            TraceEntry e;
            e.iteration = t.at("iteration").get<int>();
            e.x = from_vector(t.at("x").get<std::vector<double>>());
            e.ok = t.at("ok").get<bool>();
            e.y = e.ok ? t.at("y").get<double>() : std::numeric_limits<double>::quiet_NaN();
            e.plb = t.at("plb").get<double>();
            e.beta = t.at("beta").get<double>();
            e.random_fallback = t.at("random_fallback").get<bool>();
            r.trace.push_back(std::move(e));
        }
        if (r.model.dim() != r.box.dim()) throw DimensionMismatch("learn result model and box disagree");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw SyntaxError(std::string("learn result JSON: ") + e.what());
    }
}

std::string trace_csv(const LearnResult& r) {
    std::ostringstream out;
    out.precision(17);
    out << "iteration";
    for (const InjectionDim& d : r.box.dims) out << ",x_" << label(d);
    out << ",y,plb,beta,ok,random_fallback\n";
    for (const TraceEntry& e : r.trace) {
        out << e.iteration;
        for (Eigen::Index d = 0; d < e.x.size(); ++d) out << ',' << e.x[d];
        out << ',';
        if (e.ok) out << e.y;
        out << ',' << e.plb << ',' << e.beta << ',' << (e.ok ? 1 : 0) << ',' << (e.random_fallback ? 1 : 0)
            << '\n';
    }
    return out.str();
}

}  // namespace plfgp
