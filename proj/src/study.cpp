#include "plfgp/study.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <toml.hpp>

#include "plfgp/errors.hpp"

namespace plfgp {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- CSV

std::string format_number(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string CsvTable::to_string() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
}

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SyntaxError("CSV has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (t.header.empty()) {
            t.header = std::move(cells);
        } else {
            if (cells.size() != t.header.size()) {
                throw SyntaxError("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                                      std::to_string(t.header.size()),
                                  lineno);
            }
            t.rows.push_back(std::move(cells));
        }
    }
    if (t.header.empty()) throw SyntaxError("CSV is empty");
    return t;
}

namespace {

// ---------------------------------------------------------------- helpers

nlohmann::json table_to_json(const CsvTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) {
        nlohmann::json obj = nlohmann::json::object();
        for (std::size_t c = 0; c < r.size(); ++c) {
            double v = 0.0;
            const auto res = std::from_chars(r[c].data(), r[c].data() + r[c].size(), v);
            if (res.ec == std::errc() && res.ptr == r[c].data() + r[c].size()) {
                obj[t.header[c]] = v;
            } else {
                obj[t.header[c]] = r[c];
            }
        }
        rows.push_back(obj);
    }
    return {{"columns", t.header}, {"rows", rows}};
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_table(const fs::path& out, const std::string& stem, const CsvTable& t, TableFormat format) {
    if (format == TableFormat::Csv) {
        write_text(out / (stem + ".csv"), t.to_string());
    } else {
        write_text(out / (stem + ".json"), table_to_json(t).dump(2) + "\n");
    }
}

void print_table(std::ostream& log, const CsvTable& t) {
    std::vector<std::size_t> width(t.header.size());
    for (std::size_t c = 0; c < t.header.size(); ++c) width[c] = t.header[c].size();
    for (const auto& r : t.rows) {
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            log << (c ? "  " : "") << std::setw(static_cast<int>(width[c])) << cells[c];
        }
        log << '\n';
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
}

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::string variable(int bus) { return "V" + std::to_string(bus); }

std::string source_label(const UncertainBox& box) {
    std::string s;
    for (const InjectionDim& d : box.dims) s += (s.empty() ? "" : "+") + label(d);
    return s;
}

double since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- TOML

class Reader {
public:
    explicit Reader(fs::path path) : path_(std::move(path)) {}

    [[noreturn]] void fail(const toml::node* node, const std::string& field, const std::string& msg) const {
        std::string where = path_.string();
        if (node) where += ":" + std::to_string(node->source().begin.line);
        throw ConfigError(where + ": " + field + ": " + msg);
    }

    void allow(const toml::table& t, const std::string& scope, std::initializer_list<const char*> keys) const {
        for (const auto& [k, v] : t) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k.str() == a; })) {
                fail(&v, scope.empty() ? std::string(k.str()) : scope + "." + std::string(k.str()), "unknown key");
            }
        }
    }

    const toml::node* find(const toml::table& t, const char* key) const { return t.get(key); }

    double number(const toml::table& t, const std::string& scope, const char* key, std::optional<double> def) const {
        const toml::node* n = find(t, key);
        const std::string field = scope + key;
        if (!n) {
            if (def) return *def;
            fail(&t, field, "missing");
        }
        if (auto v = n->value<double>()) {
            if (!std::isfinite(*v)) fail(n, field, "must be finite");
            return *v;
        }
        fail(n, field, "expected a number");
    }

    std::int64_t integer(const toml::table& t, const std::string& scope, const char* key,
                         std::optional<std::int64_t> def) const {
        const toml::node* n = find(t, key);
        const std::string field = scope + key;
        if (!n) {
            if (def) return *def;
            fail(&t, field, "missing");
        }
        if (!n->is_integer()) fail(n, field, "expected an integer");
        return n->as_integer()->get();
    }

    std::string string(const toml::table& t, const std::string& scope, const char* key,
                       std::optional<std::string> def) const {
        const toml::node* n = find(t, key);
        const std::string field = scope + key;
        if (!n) {
            if (def) return *def;
            fail(&t, field, "missing");
        }
        if (!n->is_string()) fail(n, field, "expected a string");
        return n->as_string()->get();
    }

    bool boolean(const toml::table& t, const std::string& scope, const char* key, bool def) const {
        const toml::node* n = find(t, key);
        if (!n) return def;
        if (!n->is_boolean()) fail(n, scope + key, "expected true or false");
        return n->as_boolean()->get();
    }

    Eigen::VectorXd vector(const toml::table& t, const std::string& scope, const char* key, Eigen::Index dim) const {
        const toml::node* n = find(t, key);
        const std::string field = scope + key;
        if (!n) fail(&t, field, "missing");
        if (auto v = n->value<double>()) {
            if (dim != 1) fail(n, field, "expected an array of " + std::to_string(dim) + " numbers");
            return Eigen::VectorXd::Constant(1, *v);
        }
        const toml::array* a = n->as_array();
        if (!a) fail(n, field, "expected an array of numbers");
        if (static_cast<Eigen::Index>(a->size()) != dim) {
            fail(n, field, "expected " + std::to_string(dim) + " entries, got " + std::to_string(a->size()));
        }
        Eigen::VectorXd out(dim);
        for (std::size_t i = 0; i < a->size(); ++i) {
            const auto v = (*a)[i].value<double>();
            if (!v || !std::isfinite(*v)) fail(&(*a)[i], field, "expected a finite number");
            out[static_cast<Eigen::Index>(i)] = *v;
        }
        return out;
    }

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

const toml::table& subtable(const Reader& r, const toml::table& root, const char* key) {
    const toml::node* n = root.get(key);
    if (!n) r.fail(&root, key, "missing table");
    const toml::table* t = n->as_table();
    if (!t) r.fail(n, key, "expected a table");
    return *t;
}

std::vector<const toml::table*> table_array(const Reader& r, const toml::table& root, const char* key) {
    std::vector<const toml::table*> out;
    const toml::node* n = root.get(key);
    if (!n) return out;
    const toml::array* a = n->as_array();
    if (!a) r.fail(n, key, "expected an array of tables ([[" + std::string(key) + "]])");
    for (const auto& e : *a) {
        if (!e.as_table()) r.fail(&e, key, "expected a table");
        out.push_back(e.as_table());
    }
    return out;
}

Eigen::MatrixXd read_empirical(const Reader& r, const toml::node* node, const std::string& field,
                               const fs::path& file, Eigen::Index dim) {
    CsvTable t;
    try {
        t = parse_csv(read_text(file));
    } catch (const Error& e) {
        r.fail(node, field, e.what());
    }
    if (static_cast<Eigen::Index>(t.header.size()) != dim) {
        r.fail(node, field, file.string() + " has " + std::to_string(t.header.size()) + " columns, expected " +
                                std::to_string(dim));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), dim);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        for (std::size_t c = 0; c < t.rows[i].size(); ++c) {
            double v = 0.0;
            const auto& s = t.rows[i][c];
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
                r.fail(node, field, file.string() + " row " + std::to_string(i + 2) + ": '" + s + "' is not a number");
            }
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
        }
    }
    if (m.rows() == 0) r.fail(node, field, file.string() + " has no rows");
    return m;
}

}  // namespace

// ---------------------------------------------------------------- config

Study load_study(const fs::path& path) {
    const Reader r(path);
    toml::table root;
    try {
        root = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        throw ConfigError(path.string() + ":" + std::to_string(e.source().begin.line) + ": " +
                          std::string(e.description()));
    }
    r.allow(root, "", {"name", "case", "seed", "output_dir", "jobs", "uncertainty", "learn", "test", "mcs"});

    StudyConfig c;
    c.config_path = path;
    c.name = r.string(root, "", "name", path.stem().string());
    const fs::path base = path.parent_path();
    c.case_path = base / r.string(root, "", "case", std::nullopt);
    const std::int64_t seed = r.integer(root, "", "seed", 0);
    if (seed < 0) r.fail(root.get("seed"), "seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    c.output_dir = r.string(root, "", "output_dir", "out/" + c.name);
    const std::int64_t jobs = r.integer(root, "", "jobs", 1);
    if (jobs < 1) r.fail(root.get("jobs"), "jobs", "must be at least 1");
    c.jobs = static_cast<int>(jobs);

    NetworkCase net = [&] {
        try {
            return load_case(c.case_path);
        } catch (const Error& e) {
            r.fail(root.get("case"), "case", e.what());
        }
    }();
    const double mva = net.base_mva();

    // [[uncertainty]]: one table per injection coordinate, MW or MVAr.
    const auto dims = table_array(r, root, "uncertainty");
    if (dims.empty()) r.fail(&root, "uncertainty", "at least one [[uncertainty]] entry is required");
    c.box.lower.resize(static_cast<Eigen::Index>(dims.size()));
    c.box.upper.resize(static_cast<Eigen::Index>(dims.size()));
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const toml::table& t = *dims[i];
        const std::string scope = "uncertainty[" + std::to_string(i) + "].";
        r.allow(t, "uncertainty[" + std::to_string(i) + "]", {"bus", "quantity", "source", "lower", "upper"});
        InjectionDim d;
        d.bus = static_cast<int>(r.integer(t, scope, "bus", std::nullopt));
        if (!net.has_bus(d.bus)) r.fail(t.get("bus"), scope + "bus", "bus " + std::to_string(d.bus) + " does not exist");
        const std::string q = r.string(t, scope, "quantity", "P");
        if (q != "P" && q != "Q") r.fail(t.get("quantity"), scope + "quantity", "expected \"P\" or \"Q\"");
        d.quantity = q == "P" ? Quantity::P : Quantity::Q;
        const std::string s = r.string(t, scope, "source", std::nullopt);
        if (s != "generation" && s != "demand") {
            r.fail(t.get("source"), scope + "source", "expected \"generation\" or \"demand\"");
        }
        d.source = s == "generation" ? Source::Generation : Source::Demand;
        const auto k = static_cast<Eigen::Index>(i);
        c.box.lower[k] = r.number(t, scope, "lower", std::nullopt) / mva;
        c.box.upper[k] = r.number(t, scope, "upper", std::nullopt) / mva;
        if (!(c.box.lower[k] < c.box.upper[k])) r.fail(t.get("upper"), scope + "upper", "must exceed lower");
        c.box.dims.push_back(d);
    }
    try {
        validate(net, c.box);
    } catch (const Error& e) {
        r.fail(root.get("uncertainty"), "uncertainty", e.what());
    }
    const Eigen::Index dim = c.box.dim();

    // [learn]
    const toml::table& learn = subtable(r, root, "learn");
    r.allow(learn, "learn",
            {"targets", "xi_tol", "xi_unit", "delta", "budget", "beta", "rkhs_norm", "gamma_N", "beta_value"});
    const toml::node* targets = learn.get("targets");
    if (!targets || !targets->as_array()) r.fail(targets ? targets : &learn, "learn.targets", "expected an array of bus ids");
    std::set<int> seen;
    for (const auto& e : *targets->as_array()) {
        if (!e.is_integer()) r.fail(&e, "learn.targets", "expected integer bus ids");
        const int bus = static_cast<int>(e.as_integer()->get());
        if (!net.has_bus(bus)) r.fail(&e, "learn.targets", "bus " + std::to_string(bus) + " does not exist");
        if (!seen.insert(bus).second) r.fail(&e, "learn.targets", "bus " + std::to_string(bus) + " listed twice");
        c.targets.push_back(bus);
    }
    if (c.targets.empty()) r.fail(targets, "learn.targets", "needs at least one bus");
    c.xi_tol = r.number(learn, "learn.", "xi_tol", 1.0);
    if (!(c.xi_tol > 0.0)) r.fail(learn.get("xi_tol"), "learn.xi_tol", "must be positive");
    const std::string unit = r.string(learn, "learn.", "xi_unit", "percent");
    if (unit == "percent") {
        c.xi_unit = XiUnit::Percent;
    } else if (unit == "pu") {
        c.xi_unit = XiUnit::PerUnit;
    } else if (unit == "kV") {
        c.xi_unit = XiUnit::KiloVolt;
    } else {
        r.fail(learn.get("xi_unit"), "learn.xi_unit", "expected \"percent\", \"pu\" or \"kV\"");
    }
    c.learn.schedule.delta = r.number(learn, "learn.", "delta", 0.01);
    if (!(c.learn.schedule.delta > 0.0 && c.learn.schedule.delta < 1.0)) {
        r.fail(learn.get("delta"), "learn.delta", "must lie in (0, 1)");
    }
    const std::int64_t budget = r.integer(learn, "learn.", "budget", 50);
    if (budget < 0) r.fail(learn.get("budget"), "learn.budget", "must be non-negative");
    c.learn.budget = static_cast<int>(budget);
    const std::string beta = r.string(learn, "learn.", "beta", "finite");
    if (beta == "finite") {
        c.learn.schedule.mode = BetaMode::FiniteCandidate;
    } else if (beta == "rkhs") {
        c.learn.schedule.mode = BetaMode::TheoreticalRKHS;
        c.learn.schedule.rkhs_norm_bound = r.number(learn, "learn.", "rkhs_norm", std::nullopt);
        c.learn.schedule.gamma_N = r.number(learn, "learn.", "gamma_N", std::nullopt);
        if (!(c.learn.schedule.rkhs_norm_bound > 0.0)) r.fail(learn.get("rkhs_norm"), "learn.rkhs_norm", "must be positive");
        if (!(c.learn.schedule.gamma_N > 0.0)) r.fail(learn.get("gamma_N"), "learn.gamma_N", "must be positive");
    } else if (beta == "fixed") {
        c.learn.schedule.mode = BetaMode::Fixed;
        c.learn.schedule.fixed_value = r.number(learn, "learn.", "beta_value", std::nullopt);
        if (!(c.learn.schedule.fixed_value > 0.0)) r.fail(learn.get("beta_value"), "learn.beta_value", "must be positive");
    } else {
        r.fail(learn.get("beta"), "learn.beta", "expected \"finite\", \"rkhs\" or \"fixed\"");
    }

    // [[test]]: testing-phase distributions, MW / MVAr.
    const auto tests = table_array(r, root, "test");
    std::set<std::string> names = {"box"};
    for (std::size_t i = 0; i < tests.size(); ++i) {
        const toml::table& t = *tests[i];
        const std::string scope = "test[" + std::to_string(i) + "].";
        r.allow(t, "test[" + std::to_string(i) + "]",
                {"name", "kind", "n", "truncate", "lower", "upper", "mean", "std", "shape", "scale", "offset", "file"});
        NamedDistribution nd;
        nd.name = r.string(t, scope, "name", std::nullopt);
        if (nd.name.empty() || nd.name.find_first_of("/\\ ,") != std::string::npos) {
            r.fail(t.get("name"), scope + "name", "must be non-empty without spaces, commas or slashes");
        }
        if (!names.insert(nd.name).second) r.fail(t.get("name"), scope + "name", "duplicate or reserved name");
        const std::int64_t n = r.integer(t, scope, "n", 50000);
        if (n < 1) r.fail(t.get("n"), scope + "n", "must be at least 1");
        nd.n = static_cast<std::size_t>(n);
        const std::string kind = r.string(t, scope, "kind", std::nullopt);
        if (kind == "uniform") {
            const bool has = t.get("lower") || t.get("upper");
            nd.dist = has ? InputDistribution::uniform(r.vector(t, scope, "lower", dim) / mva,
                                                       r.vector(t, scope, "upper", dim) / mva)
                          : InputDistribution::uniform(c.box.lower, c.box.upper);
        } else if (kind == "normal") {
            nd.dist = InputDistribution::normal(r.vector(t, scope, "mean", dim) / mva, r.vector(t, scope, "std", dim) / mva);
        } else if (kind == "gamma") {
            const Eigen::VectorXd offset =
                t.get("offset") ? Eigen::VectorXd(r.vector(t, scope, "offset", dim) / mva) : Eigen::VectorXd::Zero(dim);
            nd.dist = InputDistribution::gamma(r.vector(t, scope, "shape", dim), r.vector(t, scope, "scale", dim) / mva,
                                               offset);
        } else if (kind == "empirical") {
            const fs::path file = base / r.string(t, scope, "file", std::nullopt);
            nd.dist = InputDistribution::empirical(read_empirical(r, t.get("file"), scope + "file", file, dim) / mva);
        } else {
            r.fail(t.get("kind"), scope + "kind", "expected uniform, normal, gamma or empirical");
        }
        if (r.boolean(t, scope, "truncate", false)) nd.dist.clip_to(c.box);
        try {
            validate(nd.dist);
        } catch (const Error& e) {
            r.fail(&t, scope.substr(0, scope.size() - 1), e.what());
        }
        c.tests.push_back(std::move(nd));
    }

    // [mcs]
    if (root.get("mcs")) {
        const toml::table& m = subtable(r, root, "mcs");
        r.allow(m, "mcs", {"n", "distribution"});
        const std::int64_t n = r.integer(m, "mcs.", "n", 10000);
        if (n < 1) r.fail(m.get("n"), "mcs.n", "must be at least 1");
        c.mcs_n = static_cast<std::size_t>(n);
        c.mcs_distribution = r.string(m, "mcs.", "distribution", "box");
        if (!names.contains(c.mcs_distribution)) {
            r.fail(m.get("distribution"), "mcs.distribution", "no [[test]] named '" + c.mcs_distribution + "'");
        }
    }
    return Study{std::move(c), std::move(net)};
}

double xi_tol_pu(const StudyConfig& c, const NetworkCase& net, int target) {
    switch (c.xi_unit) {
        case XiUnit::PerUnit: return c.xi_tol;
        case XiUnit::Percent: return c.xi_tol / 100.0;
        case XiUnit::KiloVolt: return c.xi_tol / net.bus(target).baseKV;
    }
    return c.xi_tol;
}

NamedDistribution mcs_distribution(const StudyConfig& c) {
    if (c.mcs_distribution == "box") {
        return {"box", InputDistribution::uniform(c.box.lower, c.box.upper), c.mcs_n};
    }
    for (const NamedDistribution& d : c.tests) {
        if (d.name == c.mcs_distribution) return {d.name, d.dist, c.mcs_n};
    }
    throw ConfigError("no distribution named '" + c.mcs_distribution + "'");
}

std::uint64_t test_seed(const StudyConfig& c, std::size_t k) { return derive_seed(c.seed, 1000 + k); }
std::uint64_t mcs_seed(const StudyConfig& c) { return derive_seed(c.seed, 2000); }

// ---------------------------------------------------------------- artifacts

fs::path learn_result_path(int t) { return fs::path("learn") / (variable(t) + ".json"); }
fs::path trace_path(int t) { return fs::path("learn") / (variable(t) + "_trace.csv"); }
fs::path surface_path(int t) { return fs::path("learn") / (variable(t) + "_surface.csv"); }
fs::path test_report_path(int t, const std::string& d) { return fs::path("test") / (variable(t) + "_" + d + ".json"); }
fs::path test_hist_path(int t, const std::string& d) { return fs::path("test") / (variable(t) + "_" + d + "_hist.csv"); }
fs::path mcs_report_path(int t, const std::string& d) { return fs::path("mcs") / (variable(t) + "_" + d + ".json"); }
fs::path mcs_hist_path(int t, const std::string& d) { return fs::path("mcs") / (variable(t) + "_" + d + "_hist.csv"); }

CsvTable surface_table(const LearnResult& result, double base_mva) {
    const UncertainBox& box = result.box;
    const Eigen::Index dim = box.dim();
    const Eigen::Index per_axis = dim == 1 ? 200 : dim == 2 ? 50 : 10;
    Eigen::Index rows = 1;
    for (Eigen::Index d = 0; d < dim; ++d) rows *= per_axis;
    Eigen::MatrixXd X(rows, dim);
    for (Eigen::Index i = 0; i < rows; ++i) {
        Eigen::Index rest = i;
        for (Eigen::Index d = dim - 1; d >= 0; --d) {
            const Eigen::Index k = rest % per_axis;
            rest /= per_axis;
            X(i, d) = box.lower[d] + (box.upper[d] - box.lower[d]) * static_cast<double>(k) / static_cast<double>(per_axis - 1);
        }
    }
    const BatchPrediction p = result.model.posterior_batch(X);
    const double root = std::sqrt(result.beta_final);
    CsvTable t;
    for (const InjectionDim& d : box.dims) t.header.push_back(label(d) + (d.quantity == Quantity::P ? "_MW" : "_MVAr"));
    for (const char* h : {"mean_pu", "std_pu", "lower_pu", "upper_pu"}) t.header.push_back(h);
    for (Eigen::Index i = 0; i < rows; ++i) {
        std::vector<std::string> r;
        for (Eigen::Index d = 0; d < dim; ++d) r.push_back(format_number(X(i, d) * base_mva));
        r.push_back(format_number(p.mean[i]));
        r.push_back(format_number(p.std[i]));
        r.push_back(format_number(p.mean[i] - root * p.std[i]));
        r.push_back(format_number(p.mean[i] + root * p.std[i]));
        t.rows.push_back(std::move(r));
    }
    return t;
}

// ---------------------------------------------------------------- commands

namespace {

std::vector<LearnOutcome> learn_targets(const Study& s, int jobs) {
    const StudyConfig& c = s.config;
    std::vector<LearnOutcome> out(c.targets.size());
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, c.targets.size());
    auto run = [&](std::size_t w) {
        for (std::size_t k = w; k < c.targets.size(); k += workers) {
            LearnOptions o = c.learn;
            o.seed = derive_seed(c.seed, k);
            o.xi_tol = xi_tol_pu(c, s.net, c.targets[k]);
            out[k] = learn_one(s.net, c.targets[k], c.box, o);
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run, w);
    run(0);
    for (auto& t : pool) t.join();
    return out;
}

// Writes learn artifacts; returns false when any target failed or did not converge.
bool write_learn(const Study& s, const std::vector<LearnOutcome>& outcomes, const RunOptions& run, std::ostream& log) {
    const StudyConfig& c = s.config;
    CsvTable summary;
    summary.header = {"variable", "xi_max_pu", "xi_max_kv", "N", "converged", "failures", "time_s"};
    bool ok = true;
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
        const int t = c.targets[k];
        if (!outcomes[k].result) {
            log << variable(t) << ": learning failed: " << outcomes[k].error << '\n';
            ok = false;
            continue;
        }
        const LearnResult& r = *outcomes[k].result;
        write_text(run.out / learn_result_path(t), result_to_json(r).dump(1) + "\n");
        write_text(run.out / trace_path(t), trace_csv(r));
        write_text(run.out / surface_path(t), surface_table(r, s.net.base_mva()).to_string());
        summary.rows.push_back({variable(t), format_number(r.xi_max), format_number(r.xi_max * r.base_kv),
                                std::to_string(r.n_train), r.converged ? "1" : "0", std::to_string(r.failures),
                                fixed(r.elapsed, 4)});
        if (!r.converged) {
            log << variable(t) << ": did not reach xi_max <= " << xi_tol_pu(c, s.net, t) << " pu within "
                << c.learn.budget << " evaluations\n";
            ok = false;
        }
    }
    write_table(run.out / "learn", "summary", summary, run.format);
    print_table(log, summary);
    return ok;
}

LearnResult load_learned(const Study& s, const RunOptions& run, int target) {
    const fs::path p = run.out / learn_result_path(target);
    if (!fs::exists(p)) throw Error("missing learn artifact " + p.string() + " (run 'learn' first)");
    LearnResult r = result_from_json(nlohmann::json::parse(read_text(p)));
    if (r.target_bus != target || box_to_json(r.box) != box_to_json(s.config.box)) {
        throw Error(p.string() + " was learned for a different target or uncertainty box");
    }
    return r;
}

Eigen::VectorXd finite_column(const Eigen::MatrixXd& m, Eigen::Index col) {
    std::vector<double> v;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (!std::isnan(m(i, col))) v.push_back(m(i, col));
    }
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

int cmd_parse_check(const Study& s, std::ostream& log) {
    const StudyConfig& c = s.config;
    log << "study " << c.name << ": " << c.case_path.string() << '\n'
        << "  " << s.net.bus_count() << " buses, " << s.net.branches().size() << " branches, " << s.net.gens().size()
        << " generators, base " << s.net.base_mva() << " MVA\n";
    for (Eigen::Index d = 0; d < c.box.dim(); ++d) {
        log << "  " << label(c.box.dims[static_cast<std::size_t>(d)]) << " in [" << c.box.lower[d] << ", "
            << c.box.upper[d] << "] pu\n";
    }
    for (int t : c.targets) {
        log << "  target " << variable(t) << ": base " << s.net.bus(t).baseKV << " kV, xi_tol "
            << xi_tol_pu(c, s.net, t) << " pu\n";
    }
    for (const NamedDistribution& d : c.tests) {
        log << "  test '" << d.name << "': " << distribution_to_json(d.dist).at("kind").get<std::string>() << ", n = "
            << d.n << '\n';
    }
    log << "  mcs: '" << c.mcs_distribution << "', n = " << c.mcs_n << '\n';
    const PowerFlowSolution base = solve_nrlf(s.net);
    log << "  base case converged in " << base.iterations << " iterations\n";
    return 0;
}

int cmd_learn(const Study& s, const RunOptions& run, std::ostream& log) {
    return write_learn(s, learn_targets(s, run.jobs), run, log) ? 0 : 1;
}

int cmd_test(const Study& s, const RunOptions& run, std::ostream& log) {
    const StudyConfig& c = s.config;
    if (c.tests.empty()) throw ConfigError(c.config_path.string() + ": test: no [[test]] distributions configured");
    CsvTable summary;
    summary.header = {"variable", "distribution", "n", "mean_pu", "std_pu", "mean_kv", "std_kv",
                      "q01_pu", "q05_pu", "q50_pu", "q95_pu", "q99_pu", "xi_max_pu", "time_s"};
    TestOptions o;
    o.jobs = run.jobs;
    for (int t : c.targets) {
        const LearnResult r = load_learned(s, run, t);
        for (std::size_t k = 0; k < c.tests.size(); ++k) {
            const NamedDistribution& d = c.tests[k];
            const TestReport rep = test(r, d.dist, d.n, test_seed(c, k), o);
            write_text(run.out / test_report_path(t, d.name), report_to_json(rep).dump(1) + "\n");
            write_text(run.out / test_hist_path(t, d.name), histogram_csv(rep));
            std::vector<std::string> row = {variable(t), d.name, std::to_string(rep.n_samples), format_number(rep.mean),
                                            format_number(rep.std), format_number(rep.kv(rep.mean)),
                                            format_number(rep.kv(rep.std))};
            for (double q : rep.quantiles) row.push_back(format_number(q));
            row.push_back(format_number(rep.xi_max));
            row.push_back(fixed(rep.elapsed, 4));
            summary.rows.push_back(std::move(row));
        }
    }
    write_table(run.out / "test", "summary", summary, run.format);
    print_table(log, summary);
    return 0;
}

int cmd_mcs(const Study& s, const RunOptions& run, std::ostream& log) {
    const StudyConfig& c = s.config;
    std::vector<NamedDistribution> dists = {mcs_distribution(c)};
    for (const NamedDistribution& d : c.tests) {
        if (d.name != dists[0].name) dists.push_back({d.name, d.dist, c.mcs_n});
    }
    CsvTable summary;
    summary.header = {"variable", "distribution", "n", "failures", "mean_pu", "std_pu", "mean_kv", "std_kv", "time_s"};
    for (std::size_t k = 0; k < dists.size(); ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        const Eigen::MatrixXd x = sample(dists[k].dist, c.mcs_n, derive_seed(mcs_seed(c), k), run.jobs);
        const OracleMatrix v = oracle_values(s.net, c.targets, c.box.dims, x, run.jobs, c.learn.power_flow);
        check_failures(v.failures, c.mcs_n);
        const double elapsed = since(t0);
        for (std::size_t j = 0; j < c.targets.size(); ++j) {
            const int t = c.targets[j];
            TestReport rep = summarize(finite_column(v.values, static_cast<Eigen::Index>(j)), "mcs", t,
                                       s.net.bus(t).baseKV);
            rep.failures = v.failures;
            rep.elapsed = elapsed;
            write_text(run.out / mcs_report_path(t, dists[k].name), report_to_json(rep).dump(1) + "\n");
            write_text(run.out / mcs_hist_path(t, dists[k].name), histogram_csv(rep));
            summary.rows.push_back({variable(t), dists[k].name, std::to_string(rep.n_samples),
                                    std::to_string(rep.failures), format_number(rep.mean), format_number(rep.std),
                                    format_number(rep.kv(rep.mean)), format_number(rep.kv(rep.std)),
                                    fixed(elapsed, 4)});
        }
    }
    write_table(run.out / "mcs", "summary", summary, run.format);
    print_table(log, summary);
    return 0;
}

int cmd_compare(const Study& s, const RunOptions& run, std::ostream& log) {
    const StudyConfig& c = s.config;
    const std::vector<LearnOutcome> learned = learn_targets(s, run.jobs);
    bool ok = write_learn(s, learned, run, log);

    const NamedDistribution dist = mcs_distribution(c);
    const Eigen::MatrixXd x = sample(dist.dist, c.mcs_n, mcs_seed(c), run.jobs);
    const auto t0 = std::chrono::steady_clock::now();
    const OracleMatrix truth = oracle_values(s.net, c.targets, c.box.dims, x, run.jobs, c.learn.power_flow);
    const double mcs_s = since(t0);
    check_failures(truth.failures, c.mcs_n);

    CsvTable table;
    table.header = {"source", "variable", "eps_v_percent", "N", "time_s"};
    CsvTable timing;
    timing.header = {"variable", "n_samples", "gp_test_s", "mcs_s", "speedup"};
    for (std::size_t j = 0; j < c.targets.size(); ++j) {
        const int t = c.targets[j];
        if (!learned[j].result) continue;
        const LearnResult& r = *learned[j].result;
        const auto g0 = std::chrono::steady_clock::now();
        const Eigen::VectorXd gp = surrogate_values(r, x, run.jobs);
        const double gp_s = since(g0);
        const auto col = static_cast<Eigen::Index>(j);
        const ErrorIndex e = eps_v(truth.values.col(col), gp);
        write_text(run.out / "compare" / (variable(t) + "_error.json"), error_index_to_json(e).dump(1) + "\n");

        TestReport gp_rep = summarize(gp, "gp", t, r.base_kv);
        gp_rep.xi_max = r.xi_max;
        gp_rep.elapsed = gp_s;
        TestReport mcs_rep = summarize(finite_column(truth.values, col), "mcs", t, r.base_kv);
        mcs_rep.failures = truth.failures;
        mcs_rep.elapsed = mcs_s;
        write_text(run.out / "compare" / (variable(t) + "_gp.json"), report_to_json(gp_rep).dump(1) + "\n");
        write_text(run.out / "compare" / (variable(t) + "_mcs.json"), report_to_json(mcs_rep).dump(1) + "\n");

        table.rows.push_back({source_label(c.box), variable(t), format_number(e.eps_v_percent),
                              std::to_string(r.n_train), fixed(r.elapsed, 4)});
        timing.rows.push_back({variable(t), std::to_string(c.mcs_n), fixed(gp_s, 6), fixed(mcs_s, 4),
                               fixed(mcs_s / std::max(gp_s, 1e-9), 1)});
    }
    write_table(run.out / "compare", "table", table, run.format);
    write_table(run.out / "compare", "timing", timing, run.format);
    print_table(log, table);
    print_table(log, timing);
    return ok ? 0 : 1;
}

}  // namespace plfgp
