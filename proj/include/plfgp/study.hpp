#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "plfgp/active_learn.hpp"
#include "plfgp/case_model.hpp"
#include "plfgp/plf_testing.hpp"

namespace plfgp {

/// Comma-separated table with a header row. Cells are kept as text so a
/// parse/emit cycle reproduces the input byte for byte.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string to_string() const;
    std::size_t column(const std::string& name) const;  // throws SyntaxError
};

/// Throws SyntaxError (with line) on ragged rows.
CsvTable parse_csv(const std::string& text);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

enum class XiUnit { PerUnit, KiloVolt, Percent };

struct NamedDistribution {
    std::string name;
    InputDistribution dist;  // per-unit
    std::size_t n = 0;
};

/// A declarative study. Every quantity is per-unit after loading; the TOML
/// document uses MW, MVAr and kV.
struct StudyConfig {
    std::filesystem::path config_path;
    std::filesystem::path case_path;
    std::string name;
    UncertainBox box;
    std::vector<int> targets;
    double xi_tol = 1.0;
    XiUnit xi_unit = XiUnit::Percent;
    LearnOptions learn;  // seed, schedule and budget filled from the document
    std::vector<NamedDistribution> tests;
    std::string mcs_distribution = "box";
    std::size_t mcs_n = 10000;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;
    int jobs = 1;
};

struct Study {
    StudyConfig config;
    NetworkCase net;
};

/// Parses and validates a study file, loading the referenced case. Errors
/// are ConfigError messages of the form "path:line: field: problem".
Study load_study(const std::filesystem::path& path);

/// Tolerance for `target` in per-unit.
double xi_tol_pu(const StudyConfig& config, const NetworkCase& net, int target);

/// Distribution used for MCS and the error index: the named test entry,
/// or uniform over the box for "box".
NamedDistribution mcs_distribution(const StudyConfig& config);

std::uint64_t test_seed(const StudyConfig& config, std::size_t k);
std::uint64_t mcs_seed(const StudyConfig& config);

enum class TableFormat { Csv, Json };

struct RunOptions {
    std::filesystem::path out;
    int jobs = 1;
    TableFormat format = TableFormat::Csv;
};

/// Each command writes under `out` and returns the process exit code: 0 on
/// success, 1 when a target failed to converge or a stage raised.
int cmd_parse_check(const Study& study, std::ostream& log);
int cmd_learn(const Study& study, const RunOptions& run, std::ostream& log);
int cmd_test(const Study& study, const RunOptions& run, std::ostream& log);
int cmd_mcs(const Study& study, const RunOptions& run, std::ostream& log);
int cmd_compare(const Study& study, const RunOptions& run, std::ostream& log);

/// Stable artifact names relative to the output directory.
std::filesystem::path learn_result_path(int target);
std::filesystem::path trace_path(int target);
std::filesystem::path surface_path(int target);
std::filesystem::path test_report_path(int target, const std::string& dist);
std::filesystem::path test_hist_path(int target, const std::string& dist);
std::filesystem::path mcs_report_path(int target, const std::string& dist);
std::filesystem::path mcs_hist_path(int target, const std::string& dist);

/// Posterior band on a regular grid over the box (200 points in 1-D,
/// 50 x 50 in 2-D, 10 per axis above): inputs in MW/MVAr, then mean,
/// std, mean -/+ sqrt(beta_final) std in per-unit.
CsvTable surface_table(const LearnResult& result, double base_mva);

}  // namespace plfgp
