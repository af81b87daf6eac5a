#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "plfgp/case_model.hpp"

namespace plfgp::testing {

inline std::filesystem::path data_dir() { return PLFGP_DATA_DIR; }
inline std::filesystem::path test_data_dir() { return PLFGP_TEST_DATA_DIR; }
inline std::filesystem::path config_dir() { return PLFGP_CONFIG_DIR; }

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline const NetworkCase& case30() {
    static const NetworkCase net = load_case(data_dir() / "cases" / "case30.m");
    return net;
}

inline const NetworkCase& case118() {
    static const NetworkCase net = load_case(data_dir() / "cases" / "case118.m");
    return net;
}

inline const NetworkCase& two_bus() {
    static const NetworkCase net = load_case(test_data_dir() / "two_bus.m");
    return net;
}

inline nlohmann::json golden(const std::string& name) {
    return nlohmann::json::parse(read_file(test_data_dir() / (name + "_golden.json")));
}

}  // namespace plfgp::testing
