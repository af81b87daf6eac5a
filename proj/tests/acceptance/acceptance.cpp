// Acceptance suite: one PASS/FAIL line per criterion, indented detail lines
// below it. Arguments select criteria by number; none runs all seven.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gp_oracle.hpp"
#include "plfgp/acpf.hpp"
#include "plfgp/active_learn.hpp"
#include "plfgp/errors.hpp"
#include "plfgp/gp.hpp"
#include "plfgp/plf_testing.hpp"
#include "plfgp/study.hpp"
#include "support.hpp"

using namespace plfgp;
namespace fs = std::filesystem;
using plfgp::testing::config_dir;
using plfgp::testing::read_file;

namespace {

// Pinned tolerances.
constexpr double kOracleRelTol = 1e-10;
constexpr double kOracleSeconds = 10.0;
constexpr double kTwoBusTol = 1e-10;
constexpr double kGoldenTol = 1e-6;
constexpr int kFlatStartIterations = 6;
constexpr double kEpsVLimitPercent = 0.05;
constexpr double kNFactor = 3.0;
constexpr double kRowSeconds = 300.0;
constexpr double kCoverage = 0.99;
constexpr int kCoverageGrid = 500;
constexpr std::size_t kMomentSamples = 50000;
constexpr double kPeakKvTol = 0.01;  // on the pu x 100 scale used for the published peak
constexpr double kSpeedup = 100.0;
constexpr double kPropertySeconds = 60.0;

int failed = 0;
std::vector<std::string> pending;  // detail lines, printed under the next verdict

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

void verdict(int id, const std::string& name, bool pass, const std::string& summary) {
    if (!pass) ++failed;
    std::cout << (pass ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << summary << '\n';
    for (const std::string& line : pending) std::cout << "        " << line << '\n';
    std::cout << std::flush;
    pending.clear();
}

void detail(const std::string& line) { pending.push_back(line); }

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// ---------------------------------------------------------------- 1

void oracle_equivalence() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_mean = 0.0;
    double worst_var = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 50);
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 4);
        Kernel k;
        k.signal_variance = 0.5 + 2.0 * u(rng);
        k.lengthscales = Eigen::VectorXd(d);
        for (Eigen::Index j = 0; j < d; ++j) k.lengthscales[j] = 0.2 + u(rng);
        Eigen::MatrixXd X(n, d);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) X(i, j) = u(rng);
            y[i] = 1.0 + 0.05 * std::sin(3.0 * X.row(i).sum());
        }
        // Noise between 0.1% and 10% of the signal variance, log-uniform.
        const double noise = k.signal_variance * std::pow(10.0, -3.0 + 2.0 * u(rng));
        const GPModel m = GPModel::condition(X, y, k, noise);
        for (int p = 0; p < 20; ++p) {
            Eigen::VectorXd x(d);
            for (Eigen::Index j = 0; j < d; ++j) x[j] = 1.4 * u(rng) - 0.2;
            const auto o = plfgp::testing::dense_posterior(m, x);
            const Prediction q = m.posterior(x);
            worst_mean = std::max(worst_mean, std::abs(q.mean - o.mean) / std::abs(o.mean));
            worst_var = std::max(worst_var, std::abs(q.std * q.std - o.variance) / o.variance);
        }
    }
    const double t = since(t0);
    const bool pass = worst_mean <= kOracleRelTol && worst_var <= kOracleRelTol && t < kOracleSeconds;
    verdict(1, "GP oracle equivalence", pass,
            "worst relative error mean " + fmt(worst_mean) + ", variance " + fmt(worst_var) + " (limit " +
                fmt(kOracleRelTol) + ") over 100 instances N<=50 D<=4 x 20 probes, " + fmt(t) + " s (limit " +
                fmt(kOracleSeconds) + " s)");
}

// ---------------------------------------------------------------- 2

void power_flow() {
    bool pass = true;
    // Lossless line X = 0.1 from a 1 pu source: upper root of
    // V^4 + V^2 (2QX - 1) + X^2 (P^2 + Q^2) = 0.
    const NetworkCase& two = plfgp::testing::two_bus();
    const DimensionMap dims = {{2, Quantity::P, Source::Demand}, {2, Quantity::Q, Source::Demand}};
    // The closed form is compared at a 1e-12 pu mismatch; at the default
    // 1e-8 the voltage error tracks the residual mismatch instead.
    PowerFlowOptions tight;
    tight.tolerance = 1e-12;
    double worst2 = 0.0;
    double worst_default = 0.0;
    for (double p : {0.0, 0.3, 0.8, 1.5, 2.5, 4.0}) {
        for (double q : {-0.5, 0.0, 0.4, 1.0}) {
            const double b = 2 * q * 0.1 - 1.0;
            const double c = 0.01 * (p * p + q * q);
            if (b * b - 4 * c < 0.0) continue;
            const double v = std::sqrt((-b + std::sqrt(b * b - 4 * c)) / 2);
            Eigen::VectorXd x(2);
            x << p, q;
            worst2 = std::max(worst2, std::abs(read_voltage(solve_nrlf(two, dims, x, tight), 2) - v));
            worst_default = std::max(worst_default, std::abs(read_voltage(solve_nrlf(two, dims, x), 2) - v));
        }
    }
    pass = pass && worst2 <= kTwoBusTol;
    detail("2-bus sweep, 23 load points: worst " + fmt(worst2) + " pu at 1e-12 mismatch, " + fmt(worst_default) +
           " pu at the default 1e-8");
    for (const char* name : {"case30", "case118"}) {
        const NetworkCase& net = std::string(name) == "case30" ? plfgp::testing::case30() : plfgp::testing::case118();
        const auto golden = plfgp::testing::golden(name);
        for (bool flat : {false, true}) {
            PowerFlowOptions o;
            o.flat_start = flat;
            const PowerFlowSolution sol = solve_nrlf(net, o);
            double worst = 0.0;
            for (const auto& b : golden.at("buses")) {
                const auto i = static_cast<Eigen::Index>(net.index_of(b.at("id").get<int>()));
                worst = std::max(worst, std::abs(sol.Vm[i] - b.at("Vm").get<double>()));
                worst = std::max(worst, std::abs(sol.Va[i] - b.at("Va").get<double>()));
            }
            pass = pass && sol.converged && worst <= kGoldenTol;
            if (flat) pass = pass && sol.iterations <= kFlatStartIterations;
            detail(std::string(name) + (flat ? " flat start" : " case start") + ": " + std::to_string(sol.iterations) +
                   " iterations, worst |dV|,|dtheta| vs reference " + fmt(worst));
        }
    }
    verdict(2, "power flow correctness", pass,
            "2-bus closed form worst " + fmt(worst2) + " pu at 1e-12 mismatch (limit " + fmt(kTwoBusTol) + "); case30/case118 within " +
                fmt(kGoldenTol) + " pu of reference, flat start <= " + std::to_string(kFlatStartIterations) +
                " iterations");
}

// ---------------------------------------------------------------- 3, 4 shared runs

struct PublishedRow {
    const char* config;
    int target;
    double eps_v;
    int n;
};

// Published rows: uncertain generator, target, error index (%), training points.
const PublishedRow kGeneratorRows[] = {
    {"case30_pg22", 21, 0.0014, 8}, {"case30_pg22", 24, 0.0001, 7}, {"case30_pg27", 25, 0.0082, 7},
    {"case30_pg27", 28, 0.0055, 8}, {"case30_pg13", 15, 0.0006, 13}, {"case30_pg13", 24, 0.0049, 7},
};
// Published load-variation rows: target and training points.
const std::pair<int, int> kLoadRows[] = {{30, 10}, {29, 15}, {28, 8}, {26, 8}};

struct StudyRun {
    Study study;
    fs::path out;
    int exit_code = 1;
    double seconds = 0.0;
};

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / ("plfgp_acceptance_" + std::to_string(std::random_device{}()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

const StudyRun& study_run(const std::string& config) {
    static std::map<std::string, StudyRun> runs;
    auto it = runs.find(config);
    if (it != runs.end()) return it->second;
    StudyRun r{load_study(config_dir() / (config + ".toml")), work_dir() / config};
    RunOptions run;
    run.out = r.out;
    run.jobs = jobs();
    std::ostringstream log;
    const auto t0 = Clock::now();
    r.exit_code = cmd_compare(r.study, run, log);
    r.seconds = since(t0);
    return runs.emplace(config, std::move(r)).first->second;
}

std::string source_label_of(const Study& s) {
    std::string out;
    for (const InjectionDim& d : s.config.box.dims) out += (out.empty() ? "" : "+") + label(d);
    return out;
}

LearnResult learned(const StudyRun& r, int target) {
    return result_from_json(nlohmann::json::parse(read_file(r.out / learn_result_path(target))));
}

void table_i() {
    bool pass = true;
    for (const PublishedRow& row : kGeneratorRows) {
        const StudyRun& r = study_run(row.config);
        const CsvTable table = parse_csv(read_file(r.out / "compare" / "table.csv"));
        const LearnResult lr = learned(r, row.target);
        double eps = NAN;
        for (const auto& cells : table.rows) {
            if (cells[table.column("variable")] == "V" + std::to_string(row.target)) {
                eps = std::stod(cells[table.column("eps_v_percent")]);
            }
        }
        const ErrorIndex e = error_index_from_json(
            nlohmann::json::parse(read_file(r.out / "compare" / ("V" + std::to_string(row.target) + "_error.json"))));
        const bool ok = r.exit_code == 0 && lr.converged && lr.xi_max <= 0.01 && e.n_samples >= 10000 &&
                        eps <= kEpsVLimitPercent && lr.n_train <= kNFactor * row.n && r.seconds <= kRowSeconds;
        pass = pass && ok;
        detail(std::string(ok ? "ok   " : "FAIL ") + source_label_of(r.study) + " -> V" + std::to_string(row.target) +
               ": eps_v " + fmt(eps) + "% (published " + fmt(row.eps_v) + "%, limit " + fmt(kEpsVLimitPercent) +
               "%), N " + std::to_string(lr.n_train) + " (published " + std::to_string(row.n) + ", limit " +
               fmt(kNFactor * row.n) + "), xi_max " + fmt(lr.xi_max) + " pu, " + std::to_string(e.n_samples) +
               " paired samples, study wall time " + fmt(r.seconds) + " s");
    }
    verdict(3, "single-injection reproduction band", pass,
            "eps_v <= " + fmt(kEpsVLimitPercent) + "% on paired power flow samples and N <= " + fmt(kNFactor) +
                "x published N at xi_max <= 1%, delta = 0.01, <= " + fmt(kRowSeconds) + " s per study");
}

// ---------------------------------------------------------------- 4

void coverage() {
    bool pass = true;
    std::vector<std::pair<std::string, int>> cases;
    for (const char* c : {"case30_pg22", "case30_pg27", "case30_pg13"}) {
        for (int t : study_run(c).study.config.targets) cases.emplace_back(c, t);
    }
    for (const auto& [t, n] : kLoadRows) cases.emplace_back("case30_pd30", t);
    double lowest = 1.0;
    for (const auto& [config, target] : cases) {
        const StudyRun& r = study_run(config);
        const LearnResult lr = learned(r, target);
        const UncertainBox& box = lr.box;
        Eigen::MatrixXd grid(kCoverageGrid, 1);
        for (int i = 0; i < kCoverageGrid; ++i) {
            grid(i, 0) = box.lower[0] + (box.upper[0] - box.lower[0]) * i / (kCoverageGrid - 1.0);
        }
        const OracleValues truth = oracle_values(r.study.net, target, box.dims, grid, jobs());
        const Eigen::VectorXd mu = surrogate_values(lr, grid);
        int inside = 0;
        int solved = 0;
        double worst = 0.0;
        for (int i = 0; i < kCoverageGrid; ++i) {
            if (std::isnan(truth.values[i])) continue;
            ++solved;
            const double err = std::abs(truth.values[i] - mu[i]);
            worst = std::max(worst, err);
            inside += err <= lr.xi_max;
        }
        const double frac = static_cast<double>(inside) / kCoverageGrid;
        lowest = std::min(lowest, frac);
        const bool ok = lr.converged && frac >= kCoverage;
        pass = pass && ok;
        detail(std::string(ok ? "ok   " : "FAIL ") + source_label_of(r.study) + " -> V" + std::to_string(target) +
               ": " + std::to_string(inside) + "/" + std::to_string(kCoverageGrid) + " within xi_max " +
               fmt(lr.xi_max) + " pu (" + std::to_string(solved) + " solved), worst |V - mu| " + fmt(worst) +
               " pu, N " + std::to_string(lr.n_train));
    }
    for (const auto& [t, n] : kLoadRows) {
        detail("load at bus 30 -> V" + std::to_string(t) + ": N " +
               std::to_string(learned(study_run("case30_pd30"), t).n_train) + " (published " + std::to_string(n) +
               ", informational)");
    }
    verdict(4, "learning bound coverage", pass,
            "lowest coverage " + fmt(lowest, 4) + " (limit " + fmt(kCoverage) + ") on " +
                std::to_string(kCoverageGrid) + "-point fresh power flow grids for " + std::to_string(cases.size()) +
                " converged single-injection targets");
}

// ---------------------------------------------------------------- 5

void distribution_agnostic() {
    const StudyRun& r = study_run("case30_pg27");
    bool pass = true;
    for (const NamedDistribution& d : r.study.config.tests) {
        if (d.name != "normal" && d.name != "gamma") continue;
        const Eigen::MatrixXd x = sample(d.dist, kMomentSamples, derive_seed(77, d.name.size()), jobs());
        const OracleMatrix truth = oracle_values(r.study.net, r.study.config.targets, r.study.config.box.dims, x, jobs());
        for (std::size_t j = 0; j < r.study.config.targets.size(); ++j) {
            const int target = r.study.config.targets[j];
            const LearnResult lr = learned(r, target);
            const TestReport gp = summarize(surrogate_values(lr, x, jobs()), "gp", target, lr.base_kv);
            std::vector<double> finite;
            for (Eigen::Index i = 0; i < truth.values.rows(); ++i) {
                const double v = truth.values(i, static_cast<Eigen::Index>(j));
                if (!std::isnan(v)) finite.push_back(v);
            }
            const TestReport mc = summarize(Eigen::Map<const Eigen::VectorXd>(finite.data(), static_cast<Eigen::Index>(finite.size())),
                                            "mcs", target, lr.base_kv);
            const double dmean = std::abs(gp.mean - mc.mean);
            const double dstd = std::abs(gp.std - mc.std);
            bool ok = truth.failures * 100 <= kMomentSamples && dmean <= lr.xi_max && dstd <= 2 * lr.xi_max;
            std::string shape;
            if (d.name == "normal" && target == 25) {
                // One-sided pile-up: the top bin is the mode and sits at the published peak.
                for (const TestReport* rep : {&gp, &mc}) {
                    const auto& c = rep->histogram.counts;
                    const bool top_mode = std::max_element(c.begin(), c.end()) == c.end() - 1;
                    const double peak = rep->histogram.edges.back() * 100.0;
                    const bool at_peak = std::abs(peak - 99.02) <= kPeakKvTol;
                    ok = ok && top_mode && at_peak;
                    shape += std::string(", ") + rep->method + " top bin " + (top_mode ? "is" : "is NOT") +
                             " the mode (" + std::to_string(c.back()) + " of " + std::to_string(rep->n_samples) +
                             " in " + std::to_string(c.size()) + " bins), upper edge " + fmt(peak, 6) +
                             " on the pu x 100 scale";
                }
            }
            pass = pass && ok;
            detail(std::string(ok ? "ok   " : "FAIL ") + d.name + " -> V" + std::to_string(target) + ": |dmean| " +
                   fmt(dmean) + " pu, |dstd| " + fmt(dstd) + " pu, xi_max " + fmt(lr.xi_max) + " pu" + shape);
        }
    }
    verdict(5, "distribution-agnostic testing", pass,
            "Normal(28, 7) MW and Gamma(8, 3) MW on the Pg27 surrogates, " + std::to_string(kMomentSamples) +
                " paired samples: means within xi_max, stds within 2 xi_max, Normal |V25| piles up in the top bin");
}

// ---------------------------------------------------------------- 6

void speed() {
    const StudyRun& r = study_run("case30_pg27");
    const LearnResult lr = learned(r, 25);
    const InputDistribution box = InputDistribution::uniform(lr.box.lower, lr.box.upper);
    TestOptions o;
    o.jobs = 1;
    const TestReport gp = test(lr, box, kMomentSamples, 5, o);
    const TestReport mc = mcs(r.study.net, 25, lr.box.dims, box, kMomentSamples, 5, o);
    const double ratio = mc.elapsed / gp.elapsed;
    verdict(6, "speed ordering", ratio >= kSpeedup,
            "50000-point surrogate test " + fmt(gp.elapsed) + " s vs 50000 power flow solves " + fmt(mc.elapsed) +
                " s on one thread: " + fmt(ratio, 4) + "x (limit " + fmt(kSpeedup) + "x)");
}

// ---------------------------------------------------------------- 7

std::string strip_elapsed(nlohmann::json j) {
    j.erase("elapsed");
    return j.dump();
}

void properties() {
    const auto t0 = Clock::now();
    std::vector<std::pair<std::string, bool>> checks;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    {  // Information monotonicity on random 1-D instances.
        bool ok = true;
        for (int trial = 0; trial < 50; ++trial) {
            Kernel k;
            k.signal_variance = 0.5 + u(rng);
            k.lengthscales = Eigen::VectorXd::Constant(1, 0.05 + 0.5 * u(rng));
            const int n = 2 + static_cast<int>(rng() % 15);
            Eigen::MatrixXd X(n, 1);
            Eigen::VectorXd y(n);
            for (int i = 0; i < n; ++i) {
                X(i, 0) = u(rng);
                y[i] = 1.0 + 0.02 * std::cos(5 * X(i, 0));
            }
            Eigen::MatrixXd probes(25, 1);
            for (int p = 0; p < 25; ++p) probes(p, 0) = 1.2 * u(rng) - 0.1;
            Eigen::VectorXd prev = GPModel::prior(k, kDefaultNoiseVariance).posterior_batch(probes).std;
            for (int m = 1; m <= n; ++m) {
                const Eigen::VectorXd cur =
                    GPModel::condition(X.topRows(m), y.head(m), k, kDefaultNoiseVariance).posterior_batch(probes).std;
                ok = ok && (cur.array().square() <= prev.array().square() + 1e-12 * k.signal_variance).all();
                prev = cur;
            }
        }
        checks.emplace_back("information monotonicity (50 random 1-D instances)", ok);
    }
    {  // Noise floor at training inputs of maximum-likelihood fits.
        bool ok = true;
        for (int trial = 0; trial < 20; ++trial) {
            const Eigen::Index d = 1 + trial % 2;
            const int n = 5 + static_cast<int>(rng() % 10);
            Eigen::MatrixXd X(n, d);
            Eigen::VectorXd y(n);
            for (int i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < d; ++j) X(i, j) = 0.5 * u(rng);
                y[i] = 0.98 + 0.01 * std::sin(4 * X.row(i).sum());
            }
            const GPModel m = fit(X, y);
            const double floor = std::sqrt(m.noise_variance()) + 1e-8;
            ok = ok && (m.posterior_batch(X).std.array() <= floor).all();
        }
        checks.emplace_back("posterior std noise floor (20 fitted models)", ok);
    }
    const NetworkCase& net = plfgp::testing::case30();
    UncertainBox box;
    box.dims = {{27, Quantity::P, Source::Generation}};
    box.lower = Eigen::VectorXd::Zero(1);
    box.upper = Eigen::VectorXd::Constant(1, 0.55);
    LearnOptions lo;
    lo.seed = 123;
    lo.xi_tol = 2e-4;
    const LearnResult a = learn(net, 25, box, lo);
    {  // Acquisition determinism and trace containment.
        const LearnResult b = learn(net, 25, box, lo);
        bool inside = true;
        for (const TraceEntry& e : a.trace) inside = inside && box.contains(e.x);
        checks.emplace_back("acquisition determinism and x in box",
                            strip_elapsed(result_to_json(a)) == strip_elapsed(result_to_json(b)) &&
                                trace_csv(a) == trace_csv(b) && inside);
    }
    {  // Pairing discipline.
        const Eigen::MatrixXd x = sample(InputDistribution::uniform(box.lower, box.upper), 400, 8);
        const ErrorIndex paired = error_index(x, a, net, 25);
        const Eigen::MatrixXd reversed = x.colwise().reverse();
        const OracleValues truth = oracle_values(net, 25, box.dims, x);
        const ErrorIndex shuffled = eps_v(truth.values, surrogate_values(a, reversed));
        checks.emplace_back("pairing discipline (reversed pairing " + fmt(shuffled.eps_v_percent) + "% > paired " +
                                fmt(paired.eps_v_percent) + "%)",
                            shuffled.eps_v_percent > paired.eps_v_percent);
    }
    {  // kV values are per-unit times base kV, exactly.
        const TestReport rep = test(a, InputDistribution::uniform(box.lower, box.upper), 5000, 3);
        const auto j = report_to_json(rep);
        const double kv = net.bus(25).baseKV;
        bool ok = j.at("mean_kv").get<double>() == j.at("mean_pu").get<double>() * kv &&
                  j.at("std_kv").get<double>() == j.at("std_pu").get<double>() * kv &&
                  j.at("xi_max_kv").get<double>() == j.at("xi_max_pu").get<double>() * kv;
        for (std::size_t i = 0; i < rep.quantiles.size(); ++i) {
            ok = ok && j.at("quantiles_kv")[i].get<double>() == j.at("quantiles_pu")[i].get<double>() * kv;
        }
        const auto& h = j.at("histogram");
        for (std::size_t i = 0; i < h.at("edges_pu").size(); ++i) {
            ok = ok && h.at("edges_kv")[i].get<double>() == h.at("edges_pu")[i].get<double>() * kv;
        }
        checks.emplace_back("kV equals per-unit x base kV exactly", ok);
    }
    {  // Parse/serialize round-trips.
        bool ok = true;
        for (const NetworkCase* c : {&net, &plfgp::testing::case118()}) {
            const auto j = case_to_json(*c);
            ok = ok && case_to_json(case_from_json(j)) == j;
        }
        const PowerFlowSolution sol = solve_nrlf(net);
        ok = ok && solution_to_json(solution_from_json(solution_to_json(sol))) == solution_to_json(sol);
        const auto mj = model_to_json(a.model);
        ok = ok && model_to_json(model_from_json(mj)) == mj;
        const GPModel back = model_from_json(mj);
        for (double p : {0.0, 0.13, 0.4, 0.55}) {
            ok = ok && back.posterior(Eigen::VectorXd::Constant(1, p)).mean ==
                           a.model.posterior(Eigen::VectorXd::Constant(1, p)).mean;
        }
        const auto rj = result_to_json(a);
        ok = ok && result_to_json(result_from_json(rj)) == rj;
        const TestReport rep = test(a, InputDistribution::normal(Eigen::VectorXd::Constant(1, 0.28),
                                                                 Eigen::VectorXd::Constant(1, 0.07))
                                           .clip_to(box),
                                    5000, 4);
        ok = ok && report_to_json(report_from_json(report_to_json(rep))) == report_to_json(rep);
        const Histogram h = histogram_from_csv(histogram_csv(rep));
        ok = ok && h.edges == rep.histogram.edges && h.counts == rep.histogram.counts;
        const auto dj = distribution_to_json(InputDistribution::gamma(
            Eigen::VectorXd::Constant(1, 8.0), Eigen::VectorXd::Constant(1, 0.03), Eigen::VectorXd::Zero(1)));
        ok = ok && distribution_to_json(distribution_from_json(dj)) == dj;
        const std::string trace = trace_csv(a);
        ok = ok && parse_csv(trace).to_string() == trace;
        checks.emplace_back("parse/serialize round-trips (case, solution, model, result, report, histogram, trace)", ok);
    }
    const double t = since(t0);
    bool pass = t < kPropertySeconds;
    for (const auto& [name, ok] : checks) {
        pass = pass && ok;
        detail(std::string(ok ? "ok   " : "FAIL ") + name);
    }
    verdict(7, "property suite", pass,
            std::to_string(checks.size()) + " property groups in " + fmt(t) + " s (limit " + fmt(kPropertySeconds) +
                " s)");
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    const std::vector<std::function<void()>> criteria = {oracle_equivalence, power_flow, table_i, coverage,
                                                         distribution_agnostic, speed, properties};
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.contains(id)) continue;
        try {
            criteria[i]();
        } catch (const std::exception& e) {
            verdict(id, "criterion " + std::to_string(id), false, std::string("raised: ") + e.what());
        }
    }
    std::error_code ec;
    fs::remove_all(work_dir(), ec);
    std::cout << (failed ? "FAILED " : "ALL PASSED ") << "(" << failed << " failing)" << std::endl;
    return failed ? 1 : 0;
}
