#include "plfgp/case_model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <regex>
#include <sstream>

#include "plfgp/errors.hpp"

namespace plfgp {

namespace {

constexpr std::size_t kBusColumns = 13;
constexpr std::size_t kGenColumns = 10;
constexpr std::size_t kBranchColumns = 11;

using Row = std::vector<double>;

struct Matrix {
    std::vector<Row> rows;
    std::vector<std::size_t> lines;  // source line of each row
};

std::size_t line_at(std::string_view text, std::size_t pos) {
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + pos, '\n'));
}

std::string strip_comments(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_comment = false;
    bool in_string = false;
    for (char c : text) {
        if (c == '\n') {
            in_comment = false;
            in_string = false;
            out.push_back(c);
            continue;
        }
        if (in_comment) {
            out.push_back(' ');
            continue;
        }
        if (c == '\'') in_string = !in_string;
        if (c == '%' && !in_string) {
            in_comment = true;
            out.push_back(' ');
            continue;
        }
        out.push_back(c);
    }
    return out;
}

double parse_number(std::string_view token, std::size_t line) {
    if (token == "Inf" || token == "inf") return std::numeric_limits<double>::infinity();
    if (token == "-Inf" || token == "-inf") return -std::numeric_limits<double>::infinity();
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    double value = 0.0;
    const auto* end = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw SyntaxError("invalid number '" + std::string(token) + "'", line);
    }
    return value;
}

// Finds `mpc.<name> = [ ... ];` and splits the body into numeric rows.
std::optional<Matrix> read_matrix(const std::string& text, const std::string& name) {
    const std::regex head("\\bmpc\\." + name + "\\s*=\\s*\\[");
    std::smatch m;
    if (!std::regex_search(text, m, head)) return std::nullopt;
    const std::size_t start = static_cast<std::size_t>(m.position(0) + m.length(0));
    const std::size_t stop = text.find(']', start);
    if (stop == std::string::npos) {
        throw SyntaxError("unterminated matrix mpc." + name, line_at(text, start));
    }

    Matrix out;
    Row row;
    std::size_t row_line = line_at(text, start);
    std::size_t line = row_line;
    auto flush = [&] {
        if (row.empty()) return;
        out.rows.push_back(std::move(row));
        out.lines.push_back(row_line);
        row.clear();
    };
    std::size_t i = start;
    while (i < stop) {
        const char c = text[i];
        if (c == ';' || c == '\n') {
            flush();
            if (c == '\n') ++line;
            ++i;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < stop && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != ',' &&
               text[j] != ';') {
            ++j;
        }
        if (row.empty()) row_line = line;
        row.push_back(parse_number(std::string_view(text).substr(i, j - i), line));
        i = j;
    }
    flush();

    for (std::size_t r = 0; r < out.rows.size(); ++r) {
        if (out.rows[r].size() != out.rows.front().size()) {
            throw SyntaxError("mpc." + name + " row has " + std::to_string(out.rows[r].size()) +
                                  " columns, expected " + std::to_string(out.rows.front().size()),
                              out.lines[r]);
        }
    }
    return out;
}

void require_columns(const Matrix& m, std::size_t needed, const std::string& name) {
    if (!m.rows.empty() && m.rows.front().size() < needed) {
        throw SyntaxError("mpc." + name + " needs at least " + std::to_string(needed) +
                              " columns, found " + std::to_string(m.rows.front().size()),
                          m.lines.front());
    }
}

int as_id(double v, std::size_t line) {
    if (v != std::floor(v)) throw SyntaxError("non-integer id " + std::to_string(v), line);
    return static_cast<int>(v);
}

BusKind kind_from_code(double code, int bus_id) {
    if (code == 1.0) return BusKind::PQ;
    if (code == 2.0) return BusKind::PV;
    if (code == 3.0) return BusKind::Slack;
    throw SemanticError("bus " + std::to_string(bus_id) + " has unsupported type " +
                        std::to_string(code));
}

BusKind kind_from_name(const std::string& name) {
    if (name == "PQ") return BusKind::PQ;
    if (name == "PV") return BusKind::PV;
    if (name == "Slack") return BusKind::Slack;
    throw SyntaxError("unknown bus kind '" + name + "'");
}

}  // namespace

std::string_view to_string(BusKind kind) {
    switch (kind) {
        case BusKind::PQ: return "PQ";
        case BusKind::PV: return "PV";
        case BusKind::Slack: return "Slack";
    }
    return "?";
}

NetworkCase::NetworkCase(double base_mva, std::vector<Bus> buses, std::vector<Branch> branches,
                         std::vector<Generator> gens)
    : base_mva_(base_mva),
      buses_(std::move(buses)),
      branches_(std::move(branches)),
      gens_(std::move(gens)) {
    if (!(base_mva_ > 0.0)) throw SemanticError("baseMVA must be positive");
    if (buses_.empty()) throw SemanticError("case has no buses");

    std::size_t slack_count = 0;
    for (std::size_t i = 0; i < buses_.size(); ++i) {
        const Bus& b = buses_[i];
        if (!index_.emplace(b.id, i).second) {
            throw SemanticError("duplicate bus id " + std::to_string(b.id));
        }
        if (!(b.baseKV > 0.0)) {
            throw SemanticError("bus " + std::to_string(b.id) + " has non-positive baseKV");
        }
        if (b.kind == BusKind::Slack) {
            slack_ = i;
            ++slack_count;
        }
    }
    if (slack_count == 0) throw SemanticError("case has no slack bus");
    if (slack_count > 1) throw SemanticError("case has more than one slack bus");

    for (const Branch& br : branches_) {
        if (!index_.contains(br.from) || !index_.contains(br.to)) {
            throw SemanticError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                                " references an unknown bus");
        }
        if (br.r < 0.0) {
            throw SemanticError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                                " has negative resistance");
        }
        if (!(br.tap > 0.0)) {
            throw SemanticError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                                " has non-positive tap");
        }
    }
    for (const Generator& g : gens_) {
        if (!index_.contains(g.bus)) {
            throw SemanticError("generator references unknown bus " + std::to_string(g.bus));
        }
        if (g.status && (g.Pg < g.Pmin || g.Pg > g.Pmax)) {
            throw SemanticError("generator at bus " + std::to_string(g.bus) +
                                " has Pg outside [Pmin, Pmax]");
        }
    }
    ybus_ = build_ybus(base_mva_, buses_, branches_, index_);
}

std::size_t NetworkCase::index_of(int id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw UnknownBus(id);
    return it->second;
}

bool NetworkCase::operator==(const NetworkCase& other) const {
    return base_mva_ == other.base_mva_ && buses_ == other.buses_ &&
           branches_ == other.branches_ && gens_ == other.gens_;
}

AdmittanceMatrix build_ybus(double base_mva, const std::vector<Bus>& buses,
                            const std::vector<Branch>& branches,
                            const std::unordered_map<int, std::size_t>& index) {
    using cd = std::complex<double>;
    const auto n = static_cast<Eigen::Index>(buses.size());
    std::vector<Eigen::Triplet<cd>> triplets;
    triplets.reserve(buses.size() + 4 * branches.size());

    for (std::size_t i = 0; i < buses.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        triplets.emplace_back(k, k, cd(buses[i].Gs, buses[i].Bs) / base_mva);
    }
    for (const Branch& br : branches) {
        if (!br.status) continue;
        if (br.r == 0.0 && br.x == 0.0) {
            throw SemanticError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                                " has zero impedance");
        }
        const auto f = static_cast<Eigen::Index>(index.at(br.from));
        const auto t = static_cast<Eigen::Index>(index.at(br.to));
        const cd ys = 1.0 / cd(br.r, br.x);
        const cd ytt = ys + cd(0.0, br.b / 2.0);
        triplets.emplace_back(f, f, ytt / (br.tap * br.tap));
        triplets.emplace_back(t, t, ytt);
        triplets.emplace_back(f, t, -ys / br.tap);
        triplets.emplace_back(t, f, -ys / br.tap);
    }
    AdmittanceMatrix y(n, n);
    y.setFromTriplets(triplets.begin(), triplets.end());
    y.makeCompressed();
    return y;
}

AdmittanceMatrix build_ybus(const NetworkCase& net) {
    std::unordered_map<int, std::size_t> index;
    for (std::size_t i = 0; i < net.buses().size(); ++i) index.emplace(net.buses()[i].id, i);
    return build_ybus(net.base_mva(), net.buses(), net.branches(), index);
}

NetworkCase parse_matpower(std::string_view raw) {
    const std::string text = strip_comments(raw);

    static const std::regex base_re("\\bmpc\\.baseMVA\\s*=\\s*([^;\\n]+)");
    std::smatch m;
    if (!std::regex_search(text, m, base_re)) throw SyntaxError("missing mpc.baseMVA");
    std::string base_token = m[1].str();
    base_token.erase(std::remove_if(base_token.begin(), base_token.end(),
                                    [](unsigned char c) { return std::isspace(c); }),
                     base_token.end());
    const double base_mva =
        parse_number(base_token, line_at(text, static_cast<std::size_t>(m.position(1))));

    auto bus_m = read_matrix(text, "bus");
    auto gen_m = read_matrix(text, "gen");
    auto branch_m = read_matrix(text, "branch");
    if (!bus_m) throw SyntaxError("missing mpc.bus");
    if (!gen_m) throw SyntaxError("missing mpc.gen");
    if (!branch_m) throw SyntaxError("missing mpc.branch");
    require_columns(*bus_m, kBusColumns, "bus");
    require_columns(*gen_m, kGenColumns, "gen");
    require_columns(*branch_m, kBranchColumns, "branch");

    std::vector<Bus> buses;
    for (std::size_t r = 0; r < bus_m->rows.size(); ++r) {
        const Row& c = bus_m->rows[r];
        Bus b;
        b.id = as_id(c[0], bus_m->lines[r]);
        b.kind = kind_from_code(c[1], b.id);
        b.Pd = c[2];
        b.Qd = c[3];
        b.Gs = c[4];
        b.Bs = c[5];
        b.Vm = c[7];
        b.Va = c[8];
        b.baseKV = c[9];
        b.Vmax = c[11];
        b.Vmin = c[12];
        buses.push_back(b);
    }

    std::vector<Generator> gens;
    for (std::size_t r = 0; r < gen_m->rows.size(); ++r) {
        const Row& c = gen_m->rows[r];
        Generator g;
        g.bus = as_id(c[0], gen_m->lines[r]);
        g.Pg = c[1];
        g.Qg = c[2];
        g.Qmax = c[3];
        g.Qmin = c[4];
        g.Vset = c[5];
        g.status = c[7] > 0.0;
        g.Pmax = c[8];
        g.Pmin = c[9];
        gens.push_back(g);
    }

    std::vector<Branch> branches;
    for (std::size_t r = 0; r < branch_m->rows.size(); ++r) {
        const Row& c = branch_m->rows[r];
        Branch br;
        br.from = as_id(c[0], branch_m->lines[r]);
        br.to = as_id(c[1], branch_m->lines[r]);
        br.r = c[2];
        br.x = c[3];
        br.b = c[4];
        br.tap = c[8] == 0.0 ? 1.0 : c[8];
        if (c[9] != 0.0) {
            throw SemanticError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                                ": phase-shifting transformers are not supported");
        }
        br.status = c[10] > 0.0;
        branches.push_back(br);
    }

    return NetworkCase(base_mva, std::move(buses), std::move(branches), std::move(gens));
}

nlohmann::json case_to_json(const NetworkCase& net) {
    nlohmann::json j;
    j["baseMVA"] = net.base_mva();
    auto& buses = j["buses"] = nlohmann::json::array();
    for (const Bus& b : net.buses()) {
        buses.push_back({{"id", b.id},
                         {"kind", std::string(to_string(b.kind))},
                         {"Pd", b.Pd},
                         {"Qd", b.Qd},
                         {"Gs", b.Gs},
                         {"Bs", b.Bs},
                         {"Vm", b.Vm},
                         {"Va", b.Va},
                         {"baseKV", b.baseKV},
                         {"Vmin", b.Vmin},
                         {"Vmax", b.Vmax}});
    }
    auto& branches = j["branches"] = nlohmann::json::array();
    for (const Branch& br : net.branches()) {
        branches.push_back({{"from", br.from},
                            {"to", br.to},
                            {"r", br.r},
                            {"x", br.x},
                            {"b", br.b},
                            {"tap", br.tap},
                            {"status", br.status}});
    }
    auto& gens = j["gens"] = nlohmann::json::array();
    for (const Generator& g : net.gens()) {
        gens.push_back({{"bus", g.bus},
                        {"Pg", g.Pg},
                        {"Qg", g.Qg},
                        {"Pmax", g.Pmax},
                        {"Pmin", g.Pmin},
                        {"Qmax", g.Qmax},
                        {"Qmin", g.Qmin},
                        {"Vset", g.Vset},
                        {"status", g.status}});
    }
    return j;
}

NetworkCase case_from_json(const nlohmann::json& j) {
    try {
        std::vector<Bus> buses;
        for (const auto& e : j.at("buses")) {
            Bus b;
            b.id = e.at("id").get<int>();
            b.kind = kind_from_name(e.at("kind").get<std::string>());
            b.Pd = e.at("Pd").get<double>();
            b.Qd = e.at("Qd").get<double>();
            b.Gs = e.value("Gs", 0.0);
            b.Bs = e.value("Bs", 0.0);
            b.Vm = e.at("Vm").get<double>();
            b.Va = e.at("Va").get<double>();
            b.baseKV = e.at("baseKV").get<double>();
            b.Vmin = e.at("Vmin").get<double>();
            b.Vmax = e.at("Vmax").get<double>();
            buses.push_back(b);
        }
        std::vector<Branch> branches;
        for (const auto& e : j.at("branches")) {
            Branch br;
            br.from = e.at("from").get<int>();
            br.to = e.at("to").get<int>();
            br.r = e.at("r").get<double>();
            br.x = e.at("x").get<double>();
            br.b = e.value("b", 0.0);
            br.tap = e.value("tap", 1.0);
            br.status = e.value("status", true);
            branches.push_back(br);
        }
        std::vector<Generator> gens;
        for (const auto& e : j.at("gens")) {
            Generator g;
            g.bus = e.at("bus").get<int>();
            g.Pg = e.at("Pg").get<double>();
            g.Qg = e.value("Qg", 0.0);
            g.Pmax = e.at("Pmax").get<double>();
            g.Pmin = e.at("Pmin").get<double>();
            g.Qmax = e.value("Qmax", 0.0);
            g.Qmin = e.value("Qmin", 0.0);
            g.Vset = e.at("Vset").get<double>();
            g.status = e.value("status", true);
            gens.push_back(g);
        }
        return NetworkCase(j.at("baseMVA").get<double>(), std::move(buses), std::move(branches),
                           std::move(gens));
    } catch (const nlohmann::json::exception& e) {
        throw SyntaxError(std::string("case JSON: ") + e.what());
    }
}

NetworkCase parse_case_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SyntaxError(std::string("case JSON: ") + e.what());
    }
    return case_from_json(j);
}

NetworkCase parse_case(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && text[first] == '{') return parse_case_json(text);
    return parse_matpower(text);
}

NetworkCase load_case(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open case file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_case(ss.str());
}

}  // namespace plfgp
