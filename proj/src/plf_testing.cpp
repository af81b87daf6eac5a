#include "plfgp/plf_testing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include "plfgp/errors.hpp"

namespace plfgp {

namespace {

constexpr std::size_t kPilotDraws = 2000;
constexpr std::size_t kMaxDrawsPerRow = 100000;

// Runs body(i) for i in [0, n) on `jobs` threads, strided; rethrows the first error.
template <class Body>
void parallel_rows(std::size_t n, int jobs, Body body) {
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1,
                                                        std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr error;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) body(i);
            } catch (...) {
                std::lock_guard lock(m);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

void draw(const InputDistribution& d, std::mt19937_64& rng, Eigen::Ref<Eigen::VectorXd> out) {
    switch (d.kind) {
        case DistributionKind::Uniform:
            for (Eigen::Index k = 0; k < out.size(); ++k) {
                out[k] = d.lower[k] + boost::random::uniform_01<double>()(rng) * (d.upper[k] - d.lower[k]);
            }
            return;
        case DistributionKind::Normal:
            for (Eigen::Index k = 0; k < out.size(); ++k) {
                out[k] = boost::random::normal_distribution<double>(d.mean[k], d.std[k])(rng);
            }
            return;
        case DistributionKind::Gamma:
            for (Eigen::Index k = 0; k < out.size(); ++k) {
                out[k] = d.offset[k] + boost::random::gamma_distribution<double>(d.shape[k], d.scale[k])(rng);
            }
            return;
        case DistributionKind::Empirical: {
            boost::random::uniform_int_distribution<Eigen::Index> pick(0, d.rows.rows() - 1);
            out = d.rows.row(pick(rng)).transpose();
            return;
        }
    }
}

bool accepted(const InputDistribution& d, const Eigen::VectorXd& x) {
    if (!d.truncate) return true;
    return (x.array() >= d.clip_lower.array()).all() && (x.array() <= d.clip_upper.array()).all();
}

std::string kind_name(DistributionKind k) {
    switch (k) {
        case DistributionKind::Uniform: return "uniform";
        case DistributionKind::Normal: return "normal";
        case DistributionKind::Gamma: return "gamma";
        case DistributionKind::Empirical: return "empirical";
    }
    return "uniform";
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.begin(), v.end()}; }

Eigen::VectorXd vec_at(const nlohmann::json& j, const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

InputDistribution InputDistribution::uniform(Eigen::VectorXd lower, Eigen::VectorXd upper) {
    InputDistribution d;
    d.kind = DistributionKind::Uniform;
    d.lower = std::move(lower);
    d.upper = std::move(upper);
    return d;
}

InputDistribution InputDistribution::normal(Eigen::VectorXd mean, Eigen::VectorXd std) {
    InputDistribution d;
    d.kind = DistributionKind::Normal;
    d.mean = std::move(mean);
    d.std = std::move(std);
    return d;
}

InputDistribution InputDistribution::gamma(Eigen::VectorXd shape, Eigen::VectorXd scale, Eigen::VectorXd offset) {
    InputDistribution d;
    d.kind = DistributionKind::Gamma;
    d.shape = std::move(shape);
    d.scale = std::move(scale);
    d.offset = std::move(offset);
    return d;
}

InputDistribution InputDistribution::empirical(Eigen::MatrixXd rows) {
    InputDistribution d;
    d.kind = DistributionKind::Empirical;
    d.rows = std::move(rows);
    return d;
}

InputDistribution& InputDistribution::clip_to(const UncertainBox& box) {
    truncate = true;
    clip_lower = box.lower;
    clip_upper = box.upper;
    return *this;
}

Eigen::Index InputDistribution::dim() const {
    switch (kind) {
        case DistributionKind::Uniform: return lower.size();
        case DistributionKind::Normal: return mean.size();
        case DistributionKind::Gamma: return shape.size();
        case DistributionKind::Empirical: return rows.cols();
    }
    return 0;
}

void validate(const InputDistribution& d) {
    const Eigen::Index n = d.dim();
    if (n == 0) throw SemanticError("distribution has no dimensions");
    switch (d.kind) {
        case DistributionKind::Uniform:
            if (d.upper.size() != n) throw DimensionMismatch("uniform bounds differ in length");
            if (!(d.lower.array() <= d.upper.array()).all() || !d.lower.allFinite() || !d.upper.allFinite()) {
                throw SemanticError("uniform bounds must be finite with lower <= upper");
            }
            break;
        case DistributionKind::Normal:
            if (d.std.size() != n) throw DimensionMismatch("normal mean and std differ in length");
            if (!(d.std.array() > 0.0).all() || !d.mean.allFinite() || !d.std.allFinite()) {
                throw SemanticError("normal std must be positive");
            }
            break;
        case DistributionKind::Gamma:
            if (d.scale.size() != n || d.offset.size() != n) {
                throw DimensionMismatch("gamma parameters differ in length");
            }
            if (!(d.shape.array() > 0.0).all() || !(d.scale.array() > 0.0).all() || !d.offset.allFinite()) {
                throw SemanticError("gamma shape and scale must be positive");
            }
            break;
        case DistributionKind::Empirical:
            if (d.rows.rows() == 0) throw SemanticError("empirical distribution has no rows");
            if (!d.rows.allFinite()) throw SemanticError("empirical rows must be finite");
            break;
    }
    if (d.truncate) {
        if (d.clip_lower.size() != n || d.clip_upper.size() != n) {
            throw DimensionMismatch("truncation box does not match the distribution");
        }
        if (!(d.clip_lower.array() <= d.clip_upper.array()).all()) {
            throw SemanticError("truncation box must have lower <= upper");
        }
    }
}

Eigen::MatrixXd sample(const InputDistribution& dist, std::size_t n, std::uint64_t seed, int jobs) {
    validate(dist);
    if (n == 0) throw SemanticError("sample count must be at least 1");
    const Eigen::Index dim = dist.dim();
    if (dist.truncate) {
        // Pilot on a stream disjoint from every row stream.
        std::mt19937_64 rng(derive_seed(~seed, 0));
        Eigen::VectorXd x(dim);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < kPilotDraws; ++i) {
            draw(dist, rng, x);
            ok += accepted(dist, x);
        }
        if (ok * 100 < kPilotDraws) {
            throw RejectionStall("truncation accepts " + std::to_string(ok) + " of " +
                                 std::to_string(kPilotDraws) + " pilot draws");
        }
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), dim);
    const std::size_t blocks = (n + kSampleBlock - 1) / kSampleBlock;
    parallel_rows(blocks, jobs, [&](std::size_t b) {
        std::mt19937_64 rng(derive_seed(seed, b));
        Eigen::VectorXd x(dim);
        for (std::size_t i = b * kSampleBlock; i < std::min(n, (b + 1) * kSampleBlock); ++i) {
            for (std::size_t attempt = 0;; ++attempt) {
                if (attempt == kMaxDrawsPerRow) throw RejectionStall("truncation stalled on a sample row");
                draw(dist, rng, x);
                if (accepted(dist, x)) break;
            }
            out.row(static_cast<Eigen::Index>(i)) = x.transpose();
        }
    });
    return out;
}

double quantile(std::vector<double> v, double level) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (!std::is_sorted(v.begin(), v.end())) std::sort(v.begin(), v.end());
    const double pos = std::clamp(level, 0.0, 1.0) * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Histogram make_histogram(const Eigen::VectorXd& values, int bins) {
    Histogram h;
    if (values.size() == 0) return h;
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double lo = v.front();
    const double hi = v.back();
    std::size_t nb = 1;
    if (bins > 0) {
        nb = static_cast<std::size_t>(bins);
    } else if (hi > lo) {
        const double iqr = quantile(v, 0.75) - quantile(v, 0.25);
        const double width = 2.0 * iqr / std::cbrt(static_cast<double>(v.size()));
        if (width > 0.0) nb = static_cast<std::size_t>(std::ceil((hi - lo) / width));
        nb = std::clamp<std::size_t>(nb, 1, 10000);
    }
    h.edges.resize(nb + 1);
    for (std::size_t b = 0; b <= nb; ++b) {
        h.edges[b] = b == nb ? hi : lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(nb);
    }
    h.counts.assign(nb, 0);
    const double w = (hi - lo) / static_cast<double>(nb);
    for (double x : v) {
        std::size_t b = w > 0.0 ? static_cast<std::size_t>((x - lo) / w) : 0;
        ++h.counts[std::min(b, nb - 1)];
    }
    return h;
}

TestReport summarize(const Eigen::VectorXd& values, std::string method, int target_bus, double base_kv, int bins) {
    TestReport r;
    r.method = std::move(method);
    r.target_bus = target_bus;
    r.base_kv = base_kv;
    r.n_samples = static_cast<std::size_t>(values.size());
    if (values.size() == 0) return r;
    r.mean = values.mean();
    r.std = std::sqrt((values.array() - r.mean).square().mean());
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t q = 0; q < kQuantileLevels.size(); ++q) r.quantiles[q] = quantile(sorted, kQuantileLevels[q]);
    r.histogram = make_histogram(values, bins);
    return r;
}

Eigen::VectorXd surrogate_values(const LearnResult& result, const Eigen::MatrixXd& samples, int jobs) {
    return result.model.posterior_batch(samples, jobs).mean;
}

OracleMatrix oracle_values(const NetworkCase& net, const std::vector<int>& targets, const DimensionMap& dims,
                           const Eigen::MatrixXd& samples, int jobs, const PowerFlowOptions& pf) {
    validate_dimensions(net, dims);
    std::vector<Eigen::Index> index;
    for (int t : targets) index.push_back(static_cast<Eigen::Index>(net.index_of(t)));
    if (samples.cols() != static_cast<Eigen::Index>(dims.size()) && samples.rows() > 0) {
        throw DimensionMismatch("sample width does not match the dimension map");
    }
    OracleMatrix out;
    out.values.resize(samples.rows(), static_cast<Eigen::Index>(targets.size()));
    parallel_rows(static_cast<std::size_t>(samples.rows()), jobs, [&](std::size_t i) {
        const auto k = static_cast<Eigen::Index>(i);
        try {
            const PowerFlowSolution sol = solve_nrlf(net, dims, samples.row(k).transpose(), pf);
            for (std::size_t t = 0; t < index.size(); ++t) out.values(k, static_cast<Eigen::Index>(t)) = sol.Vm[index[t]];
        } catch (const NonConvergence&) {
            out.values.row(k).setConstant(std::numeric_limits<double>::quiet_NaN());
        } catch (const SingularJacobian&) {
            out.values.row(k).setConstant(std::numeric_limits<double>::quiet_NaN());
        }
    });
    for (Eigen::Index k = 0; k < out.values.rows(); ++k) {
        out.failures += out.values.cols() > 0 && std::isnan(out.values(k, 0));
    }
    return out;
}

OracleValues oracle_values(const NetworkCase& net, int target_bus, const DimensionMap& dims,
                           const Eigen::MatrixXd& samples, int jobs, const PowerFlowOptions& pf) {
    const OracleMatrix m = oracle_values(net, std::vector<int>{target_bus}, dims, samples, jobs, pf);
    return {m.values.col(0), m.failures};
}

void check_failures(std::size_t failures, std::size_t total) {
    if (failures * 100 > total) throw ExcessiveFailures(failures, total);
}

TestReport test(const LearnResult& result, const InputDistribution& dist, std::size_t n, std::uint64_t seed,
                const TestOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    if (dist.dim() != result.box.dim()) {
        throw DimensionMismatch("distribution has " + std::to_string(dist.dim()) + " dimensions, learned box has " +
                                std::to_string(result.box.dim()));
    }
    const Eigen::MatrixXd x = sample(dist, n, seed, options.jobs);
    const BatchPrediction p = result.model.posterior_batch(x, options.jobs);
    TestReport r = summarize(p.mean, "gp", result.target_bus, result.base_kv, options.bins);
    r.xi_max = result.xi_max;
    if (options.predictive_std) {
        r.predictive_std_mean = p.std.mean();
        r.predictive_std_max = p.std.maxCoeff();
    }
    r.elapsed = since(t0);
    return r;
}

TestReport mcs(const NetworkCase& net, int target_bus, const DimensionMap& dims, const InputDistribution& dist,
               std::size_t n, std::uint64_t seed, const TestOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    if (dist.dim() != static_cast<Eigen::Index>(dims.size())) {
        throw DimensionMismatch("distribution does not match the dimension map");
    }
    const Eigen::MatrixXd x = sample(dist, n, seed, options.jobs);
    const OracleValues v = oracle_values(net, target_bus, dims, x, options.jobs, options.power_flow);
    check_failures(v.failures, n);
    Eigen::VectorXd kept(static_cast<Eigen::Index>(n - v.failures));
    Eigen::Index j = 0;
    for (Eigen::Index k = 0; k < v.values.size(); ++k) {
        if (!std::isnan(v.values[k])) kept[j++] = v.values[k];
    }
    TestReport r = summarize(kept, "mcs", target_bus, net.bus(target_bus).baseKV, options.bins);
    r.failures = v.failures;
    r.elapsed = since(t0);
    return r;
}

ErrorIndex eps_v(const Eigen::VectorXd& v_true, const Eigen::VectorXd& v_model) {
    if (v_true.size() != v_model.size()) throw DimensionMismatch("paired vectors differ in length");
    ErrorIndex e;
    double sum = 0.0;
    for (Eigen::Index k = 0; k < v_true.size(); ++k) {
        if (std::isnan(v_true[k])) {
            ++e.failures;
            continue;
        }
        sum += std::abs((v_true[k] - v_model[k]) / v_true[k]);
        ++e.n_samples;
    }
    e.eps_v_percent = e.n_samples ? sum / static_cast<double>(e.n_samples) * 100.0 : 0.0;
    return e;
}

ErrorIndex error_index(const Eigen::MatrixXd& samples, const LearnResult& result, const NetworkCase& net,
                       int target_bus, int jobs, const PowerFlowOptions& pf) {
    if (target_bus != result.target_bus) {
        throw SemanticError("error index target differs from the learned target");
    }
    const OracleValues v = oracle_values(net, target_bus, result.box.dims, samples, jobs, pf);
    check_failures(v.failures, static_cast<std::size_t>(samples.rows()));
    return eps_v(v.values, surrogate_values(result, samples, jobs));
}

nlohmann::json distribution_to_json(const InputDistribution& d) {
    nlohmann::json j = {{"kind", kind_name(d.kind)}, {"truncate", d.truncate}};
    switch (d.kind) {
        case DistributionKind::Uniform:
            j["lower"] = to_vector(d.lower);
            j["upper"] = to_vector(d.upper);
            break;
        case DistributionKind::Normal:
            j["mean"] = to_vector(d.mean);
            j["std"] = to_vector(d.std);
            break;
        case DistributionKind::Gamma:
            j["shape"] = to_vector(d.shape);
            j["scale"] = to_vector(d.scale);
            j["offset"] = to_vector(d.offset);
            break;
        case DistributionKind::Empirical: {
            nlohmann::json rows = nlohmann::json::array();
            for (Eigen::Index i = 0; i < d.rows.rows(); ++i) rows.push_back(to_vector(d.rows.row(i).transpose()));
            j["rows"] = rows;
            break;
        }
    }
    if (d.truncate) {
        j["clip_lower"] = to_vector(d.clip_lower);
        j["clip_upper"] = to_vector(d.clip_upper);
    }
    return j;
}

InputDistribution distribution_from_json(const nlohmann::json& j) {
    try {
        InputDistribution d;
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "uniform") {
            d = InputDistribution::uniform(vec_at(j, "lower"), vec_at(j, "upper"));
        } else if (kind == "normal") {
            d = InputDistribution::normal(vec_at(j, "mean"), vec_at(j, "std"));
        } else if (kind == "gamma") {
            d = InputDistribution::gamma(vec_at(j, "shape"), vec_at(j, "scale"), vec_at(j, "offset"));
        } else if (kind == "empirical") {
            const auto rows = j.at("rows").get<std::vector<std::vector<double>>>();
            Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (static_cast<Eigen::Index>(rows[i].size()) != m.cols()) throw SyntaxError("ragged empirical rows");
                for (std::size_t c = 0; c < rows[i].size(); ++c) {
                    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
                }
            }
            d = InputDistribution::empirical(std::move(m));
        } else {
            throw SyntaxError("unknown distribution kind '" + kind + "'");
        }
        d.truncate = j.value("truncate", false);
        if (d.truncate) {
            d.clip_lower = vec_at(j, "clip_lower");
            d.clip_upper = vec_at(j, "clip_upper");
        }
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw SyntaxError(std::string("distribution JSON: ") + e.what());
    }
}

nlohmann::json report_to_json(const TestReport& r) {
    std::vector<double> q(r.quantiles.begin(), r.quantiles.end());
    std::vector<double> q_kv;
    for (double v : q) q_kv.push_back(r.kv(v));
    std::vector<double> edges_kv;
    for (double e : r.histogram.edges) edges_kv.push_back(r.kv(e));
    nlohmann::json j = {{"method", r.method},
                        {"target_bus", r.target_bus},
                        {"base_kv", r.base_kv},
                        {"n_samples", r.n_samples},
                        {"failures", r.failures},
                        {"mean_pu", r.mean},
                        {"std_pu", r.std},
                        {"mean_kv", r.kv(r.mean)},
                        {"std_kv", r.kv(r.std)},
                        {"quantile_levels", std::vector<double>(kQuantileLevels.begin(), kQuantileLevels.end())},
                        {"quantiles_pu", q},
                        {"quantiles_kv", q_kv},
                        {"histogram", {{"edges_pu", r.histogram.edges}, {"edges_kv", edges_kv}, {"counts", r.histogram.counts}}},
                        {"xi_max_pu", r.xi_max},
                        {"xi_max_kv", r.kv(r.xi_max)},
                        {"elapsed", r.elapsed}};
    if (r.predictive_std_mean) {
        j["predictive_std_mean_pu"] = *r.predictive_std_mean;
        j["predictive_std_max_pu"] = *r.predictive_std_max;
    }
    return j;
}

TestReport report_from_json(const nlohmann::json& j) {
    try {
        TestReport r;
        r.method = j.at("method").get<std::string>();
        r.target_bus = j.at("target_bus").get<int>();
        r.base_kv = j.at("base_kv").get<double>();
        r.n_samples = j.at("n_samples").get<std::size_t>();
        r.failures = j.at("failures").get<std::size_t>();
        r.mean = j.at("mean_pu").get<double>();
        r.std = j.at("std_pu").get<double>();
        const auto q = j.at("quantiles_pu").get<std::vector<double>>();
        if (q.size() != r.quantiles.size()) throw SyntaxError("report JSON: expected 5 quantiles");
        std::copy(q.begin(), q.end(), r.quantiles.begin());
        r.histogram.edges = j.at("histogram").at("edges_pu").get<std::vector<double>>();
        r.histogram.counts = j.at("histogram").at("counts").get<std::vector<std::size_t>>();
        r.xi_max = j.at("xi_max_pu").get<double>();
        r.elapsed = j.value("elapsed", 0.0);
        if (j.contains("predictive_std_mean_pu")) {
            r.predictive_std_mean = j.at("predictive_std_mean_pu").get<double>();
            r.predictive_std_max = j.at("predictive_std_max_pu").get<double>();
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw SyntaxError(std::string("report JSON: ") + e.what());
    }
}

nlohmann::json error_index_to_json(const ErrorIndex& e) {
    return {{"eps_v_percent", e.eps_v_percent}, {"n_samples", e.n_samples}, {"failures", e.failures}};
}

ErrorIndex error_index_from_json(const nlohmann::json& j) {
    try {
        return {j.at("eps_v_percent").get<double>(), j.at("n_samples").get<std::size_t>(),
                j.at("failures").get<std::size_t>()};
    } catch (const nlohmann::json::exception& e) {
        throw SyntaxError(std::string("error index JSON: ") + e.what());
    }
}

std::string histogram_csv(const TestReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "lower_pu,upper_pu,lower_kv,upper_kv,count\n";
    for (std::size_t b = 0; b < r.histogram.counts.size(); ++b) {
        const double lo = r.histogram.edges[b];
        const double hi = r.histogram.edges[b + 1];
        out << lo << ',' << hi << ',' << r.kv(lo) << ',' << r.kv(hi) << ',' << r.histogram.counts[b] << '\n';
    }
    return out.str();
}

Histogram histogram_from_csv(const std::string& csv) {
    Histogram h;
    std::istringstream in(csv);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 || line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != 5) throw SyntaxError("histogram CSV needs 5 columns", lineno);
        try {
            if (h.edges.empty()) h.edges.push_back(std::stod(cells[0]));
            h.edges.push_back(std::stod(cells[1]));
            h.counts.push_back(static_cast<std::size_t>(std::stoull(cells[4])));
        } catch (const std::exception&) {
            throw SyntaxError("histogram CSV has a malformed number", lineno);
        }
    }
    return h;
}

}  // namespace plfgp
