#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace coarse {

// Common result record for randomized checks.
struct Report {
    std::string check;
    nlohmann::json params = nlohmann::json::object();
    std::size_t n_trials = 0;
    double bound = 0.0;
    double max_observed = 0.0;
    std::vector<nlohmann::json> violations;
    std::uint64_t seed = 0;
    nlohmann::json extra = nlohmann::json::object();

    double margin() const { return bound - max_observed; }
    bool passed() const { return violations.empty(); }
    std::string config_hash() const;
    nlohmann::json to_json() const;
};

// Number of violation witnesses kept per report.
inline constexpr std::size_t kMaxWitnesses = 20;

}  // namespace coarse
