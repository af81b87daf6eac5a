// Command-line driver: plfgp <parse-check|learn|test|mcs|compare> --config study.toml
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "plfgp/errors.hpp"
#include "plfgp/study.hpp"

namespace {

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

int parse_jobs(const std::string& text, const char* source) {
    std::size_t used = 0;
    int jobs = 0;
    try {
        jobs = std::stoi(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || jobs < 1) {
        throw plfgp::ConfigError(std::string(source) + ": expected a positive integer, got '" + text + "'");
    }
    return jobs;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic load flow with a GP-UCB voltage surrogate"};
    app.require_subcommand(1);

    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> jobs;
    std::string format = "csv";

    auto common = [&](CLI::App* sub, bool runs) {
        sub->add_option("-c,--config", config, "Study TOML file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Override the study seed");
        if (runs) {
            sub->add_option("-o,--out", out, "Output directory (overrides PLFGP_OUT and output_dir)");
            sub->add_option("-j,--jobs", jobs, "Worker threads (overrides PLFGP_JOBS and jobs)")
                ->check(CLI::PositiveNumber);
            sub->add_option("--format", format, "Summary table format")->check(CLI::IsMember({"csv", "json"}));
        }
    };
    common(app.add_subcommand("parse-check", "Validate the study and solve the base case"), false);
    common(app.add_subcommand("learn", "Train one surrogate per target bus"), true);
    common(app.add_subcommand("test", "Propagate the configured distributions through learned surrogates"), true);
    common(app.add_subcommand("mcs", "Monte Carlo reference with full power flows"), true);
    common(app.add_subcommand("compare", "Learn, then pair surrogate and power flow on shared samples"), true);

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        plfgp::Study study = plfgp::load_study(config);
        if (seed) study.config.seed = *seed;

        if (command == "parse-check") return plfgp::cmd_parse_check(study, std::cout);

        plfgp::RunOptions run;
        if (out) {
            run.out = *out;
        } else if (auto e = env("PLFGP_OUT")) {
            run.out = *e;
        } else {
            run.out = study.config.output_dir;
        }
        if (jobs) {
            run.jobs = *jobs;
        } else if (auto e = env("PLFGP_JOBS")) {
            run.jobs = parse_jobs(*e, "PLFGP_JOBS");
        } else {
            run.jobs = study.config.jobs;
        }
        run.format = format == "json" ? plfgp::TableFormat::Json : plfgp::TableFormat::Csv;

        int code = 0;
        if (command == "learn") code = plfgp::cmd_learn(study, run, std::cout);
        if (command == "test") code = plfgp::cmd_test(study, run, std::cout);
        if (command == "mcs") code = plfgp::cmd_mcs(study, run, std::cout);
        if (command == "compare") code = plfgp::cmd_compare(study, run, std::cout);
        std::cout << "wrote " << run.out.string() << '\n';
        return code;
    } catch (const plfgp::Error& e) {
        std::cerr << "plfgp " << command << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "plfgp " << command << ": unexpected error: " << e.what() << '\n';
        return 1;
    }
}
