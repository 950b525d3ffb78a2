#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

#include "coarse/boundary.hpp"
#include "coarse/coarse_maps.hpp"
#include "coarse/hyperbolicity.hpp"
#include "coarse/sqm.hpp"

using nlohmann::json;
using namespace coarse;

namespace {

json load_schema(const std::string& name) {
    std::ifstream in(std::string(COARSE_SOURCE_DIR) + "/schemas/" + name);
    REQUIRE(in.good());
    json j;
    in >> j;
    return j;
}

bool type_ok(const json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "integer") return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    if (t == "number") return v.is_number();
    if (t == "null") return v.is_null();
    return false;
}

// Subset of draft 2020-12: type, required, properties, items, enum, minimum, $ref to a sibling file.
void validate(const json& v, const json& s, const std::string& path, std::vector<std::string>& errs) {
    if (s.contains("$ref")) {
        validate(v, load_schema(s["$ref"]), path, errs);
        return;
    }
    if (s.contains("type") && !type_ok(v, s["type"])) {
        errs.push_back(path + ": expected " + s["type"].get<std::string>() + ", got " + v.dump());
        return;
    }
    if (s.contains("enum")) {
        bool hit = false;
        for (auto& e : s["enum"]) hit = hit || e == v;
        if (!hit) errs.push_back(path + ": " + v.dump() + " not in enum");
    }
    if (s.contains("minimum") && v.is_number() && v.get<double>() < s["minimum"].get<double>())
        errs.push_back(path + ": below minimum");
    if (v.is_object()) {
        if (s.contains("required"))
            for (auto& k : s["required"])
                if (!v.contains(k)) errs.push_back(path + ": missing " + k.get<std::string>());
        if (s.contains("properties"))
            for (auto& [k, sub] : s["properties"].items())
                if (v.contains(k)) validate(v[k], sub, path + "." + k, errs);
    }
    if (v.is_array() && s.contains("items"))
        for (std::size_t i = 0; i < v.size(); ++i) validate(v[i], s["items"], path + "[" + std::to_string(i) + "]", errs);
}

void check_valid(const json& v, const std::string& schema) {
    std::vector<std::string> errs;
    validate(v, load_schema(schema), "$", errs);
    for (auto& e : errs) MESSAGE(schema << " " << e);
    CHECK(errs.empty());
}

}  // namespace

TEST_CASE("validator rejects what it should") {
    auto s = load_schema("report.schema.json");
    std::vector<std::string> errs;
    validate(json{{"check", 3}}, s, "$", errs);
    CHECK(errs.size() == s["required"].size());  // one type error plus every other key missing
    errs.clear();
    validate(json::object(), s, "$", errs);
    CHECK(errs.size() == s["required"].size());
    errs.clear();
    validate(json{{"family", "exp"}}, load_schema("sqm_estimate.schema.json")["properties"], "$", errs);
    CHECK(errs.empty());  // "properties" itself is not a schema with type
    errs.clear();
    validate(json("exp"), load_schema("sqm_estimate.schema.json")["properties"]["family"], "$", errs);
    CHECK(errs.size() == 1);
}

TEST_CASE("library outputs match their schemas") {
    HalfPlane H;
    auto c = sample_configuration(H, {6.0}, 30, 3);
    check_valid(c.to_json(), "configuration.schema.json");

    Rng g = make_rng(5, 0);
    check_valid(random_k2_kernel(16, g).to_json(), "kernel_matrix.schema.json");

    check_valid(AdmissibleFunction::power_log(1, 2, 0.5, 1).to_json(), "admissible_function.schema.json");
    check_valid(AdmissibleFunction::constant(3).to_json(), "admissible_function.schema.json");

    auto audit = audit_lemma(H, 1.0, LemmaId::Contraction, 50, 7);
    check_valid(audit.to_json(), "report.schema.json");

    auto tc = tracking_radii(2, 0.7, AdmissibleFunction::power_log(1, 1, 0.5, 0), 36);
    check_valid(tc.to_json(), "tracking_constants.schema.json");

    auto map = identity_map(std::make_shared<HalfPlane>());
    check_valid(estimate_sbe_constants(map, 800, 32, 1).to_json(), "sbe_estimate.schema.json");

    auto Hp = std::make_shared<HalfPlane>();
    BoundaryMetric rho = [Hp](const BoundaryPoint& a, const BoundaryPoint& b) {
        return std::exp(-*Hp->boundary_product_closed_form(a, b));
    };
    BoundaryFn id = [](const BoundaryPoint& x) { return x; };
    auto est = sqm_check(id, rho, rho, clustered_quadruples(ModelTag::HalfPlane, {0.3}, 0.5), 600, 2);
    check_valid(est.to_json(), "sqm_estimate.schema.json");
}

TEST_CASE("config example matches the experiment config schema") {
    json cfg{{"subcommand", "morse"}, {"seed", 4}, {"model", "halfplane"}, {"lambda", 2.0}, {"trials", 100},
             {"corrupt", false}};
    check_valid(cfg, "experiment_config.schema.json");
    std::vector<std::string> errs;
    validate(json{{"format", "xml"}}, load_schema("experiment_config.schema.json"), "$", errs);
    CHECK(errs.size() == 1);
}

TEST_CASE("coarse_lab output matches the output schema") {
    for (std::string sub : {"audit --lemma contraction --trials 200", "frink --kernels 5", "classify --max-dim 8",
                            "sbe-fit --map identity --pairs 400 --r-max 16"}) {
        std::string out = std::string(COARSE_BINARY_DIR) + "/schema_probe.json";
        std::string cmd = std::string(COARSE_LAB_BIN) + " " + sub + " --out " + out;
        REQUIRE(std::system(cmd.c_str()) == 0);
        std::ifstream in(out);
        json j;
        in >> j;
        check_valid(j, "lab_output.schema.json");
        CHECK(j["passed"] == true);
    }
}
