#include "coarse/report.hpp"

#include "coarse/util.hpp"

namespace coarse {

std::string Report::config_hash() const {
    nlohmann::json j{{"check", check}, {"params", params}, {"n_trials", n_trials}, {"seed", seed}};
    return hex64(fnv1a(j.dump()));
}

nlohmann::json Report::to_json() const {
    nlohmann::json j;
    j["check"] = check;
    j["params"] = params;
    j["n_trials"] = n_trials;
    j["bound"] = bound;
    j["max_observed"] = max_observed;
    j["margin"] = margin();
    j["violations"] = violations;
    j["seed"] = seed;
    j["config_hash"] = config_hash();
    for (auto& [k, v] : extra.items()) j[k] = v;
    return j;
}

}  // namespace coarse
