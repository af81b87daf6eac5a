#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/SparseCore>
#include <json.hpp>

namespace plfgp {

enum class BusKind { PQ = 1, PV = 2, Slack = 3 };

/// Bus record in case-file units (MW, MVAr, per-unit voltage, degrees).
/// Gs/Bs are the fixed shunt admittances in MW/MVAr at 1 pu voltage.
struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double Pd = 0.0;
    double Qd = 0.0;
    double Gs = 0.0;
    double Bs = 0.0;
    double Vm = 1.0;
    double Va = 0.0;
    double baseKV = 1.0;
    double Vmax = 1.1;
    double Vmin = 0.9;

    bool operator==(const Bus&) const = default;
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b = 0.0;
    double tap = 1.0;
    bool status = true;

    bool operator==(const Branch&) const = default;
};

struct Generator {
    int bus = 0;
    double Pg = 0.0;
    double Qg = 0.0;
    double Pmax = 0.0;
    double Pmin = 0.0;
    double Qmax = 0.0;
    double Qmin = 0.0;
    double Vset = 1.0;
    bool status = true;

    bool operator==(const Generator&) const = default;
};

using AdmittanceMatrix = Eigen::SparseMatrix<std::complex<double>, Eigen::RowMajor>;

/// Immutable network model. Construction validates the tables and builds
/// the bus admittance matrix; the object is safe to share across threads.
class NetworkCase {
public:
    NetworkCase(double base_mva, std::vector<Bus> buses, std::vector<Branch> branches,
                std::vector<Generator> gens);

    double base_mva() const noexcept { return base_mva_; }
    const std::vector<Bus>& buses() const noexcept { return buses_; }
    const std::vector<Branch>& branches() const noexcept { return branches_; }
    const std::vector<Generator>& gens() const noexcept { return gens_; }
    const AdmittanceMatrix& ybus() const noexcept { return ybus_; }

    std::size_t bus_count() const noexcept { return buses_.size(); }
    bool has_bus(int id) const { return index_.contains(id); }
    /// Position of bus `id` in buses(); throws UnknownBus.
    std::size_t index_of(int id) const;
    const Bus& bus(int id) const { return buses_[index_of(id)]; }
    std::size_t slack_index() const noexcept { return slack_; }

    bool operator==(const NetworkCase& other) const;

private:
    double base_mva_;
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    std::vector<Generator> gens_;
    std::unordered_map<int, std::size_t> index_;
    std::size_t slack_ = 0;
    AdmittanceMatrix ybus_;
};

/// Builds Ybus in per-unit on the system base. Out-of-service branches
/// contribute nothing. Throws SemanticError on a zero-impedance branch.
AdmittanceMatrix build_ybus(double base_mva, const std::vector<Bus>& buses,
                            const std::vector<Branch>& branches,
                            const std::unordered_map<int, std::size_t>& index);
AdmittanceMatrix build_ybus(const NetworkCase& net);

/// Parses either a MATPOWER case (`mpc.baseMVA`, `mpc.bus`, `mpc.gen`,
/// `mpc.branch`) or the canonical JSON form; the format is sniffed from the
/// first non-blank character.
NetworkCase parse_case(std::string_view text);
NetworkCase parse_matpower(std::string_view text);
NetworkCase parse_case_json(std::string_view text);
NetworkCase load_case(const std::filesystem::path& path);

nlohmann::json case_to_json(const NetworkCase& net);
NetworkCase case_from_json(const nlohmann::json& j);

std::string_view to_string(BusKind kind);

}  // namespace plfgp
