// coarse_lab: seeded experiment runner over the coarse library.
//
// Exit codes: 0 all asserted bounds hold, 2 violations found, 1 usage or
// configuration error. Every option can also come from a JSON config file
// (--config); flags given on the command line win.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coarse/boundary.hpp"
#include "coarse/coarse_maps.hpp"
#include "coarse/heintze.hpp"
#include "coarse/hyperbolicity.hpp"
#include "coarse/sqm.hpp"

using nlohmann::json;
using namespace coarse;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- options

struct Sub {
    std::string name;
    CLI::App* app = nullptr;
    json defaults = json::object();
    std::map<std::string, std::string> raw;
    std::map<std::string, CLI::Option*> opts;
};

std::string key_of(std::string flag) {
    for (auto& c : flag)
        if (c == '-') c = '_';
    return flag;
}

void opt(Sub& s, const std::string& flag, const json& def, const std::string& help) {
    std::string k = key_of(flag);
    s.defaults[k] = def;
    if (def.is_boolean())
        s.opts[k] = s.app->add_flag("--" + flag, help);
    else
        s.opts[k] = s.app->add_option("--" + flag, s.raw[k], help + " [default: " + def.dump() + "]");
}

json convert(const std::string& key, const std::string& text, const json& like) {
    try {
        std::size_t used = 0;
        if (like.is_number_unsigned()) {
            if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
            auto v = std::stoull(text, &used);
            if (used != text.size()) throw std::invalid_argument("trailing");
            return v;
        }
        if (like.is_number_integer()) {
            auto v = std::stoll(text, &used);
            if (used != text.size()) throw std::invalid_argument("trailing");
            return v;
        }
        if (like.is_number()) {
            double v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument("trailing");
            return v;
        }
    } catch (const std::exception&) {
        throw ConfigError("--" + key + ": cannot parse '" + text + "'");
    }
    return text;
}

json effective_config(const Sub& s, const std::string& config_path) {
    json cfg = s.defaults;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config file " + config_path);
        json file;
        try {
            in >> file;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
        for (auto& [k, v] : file.items()) {
            if (k == "subcommand") {
                if (v != s.name) throw ConfigError("config is for subcommand " + v.dump());
                continue;
            }
            if (!cfg.contains(k)) throw ConfigError("unknown config key '" + k + "' for " + s.name);
            const json& like = s.defaults[k];
            bool ok = (like.is_number() && v.is_number()) || (like.is_boolean() && v.is_boolean()) ||
                      (like.is_string() && (v.is_string() || v.is_array() || v.is_object()));
            if (!ok) throw ConfigError("config key '" + k + "' has the wrong type");
            if (like.is_number_unsigned() && !(v.is_number_unsigned()))
                throw ConfigError("config key '" + k + "' must be a nonnegative integer");
            cfg[k] = v;
        }
    }
    for (auto& [k, o] : s.opts) {
        if (o->count() == 0) continue;
        const json& like = s.defaults[k];
        cfg[k] = like.is_boolean() ? json(true) : convert(k, s.raw.at(k), like);
    }
    cfg["subcommand"] = s.name;
    return cfg;
}

// ---------------------------------------------------------------- parsing helpers

std::vector<double> number_list(const json& v) {
    std::vector<double> out;
    if (v.is_array()) {
        for (auto& x : v) out.push_back(x.get<double>());
        return out;
    }
    std::stringstream ss(v.get<std::string>());
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad number '" + tok + "' in list");
        }
    }
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

HeintzeSpec parse_spec(const std::string& s) {
    auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("spec must look like diag:1,2 | jordan:1 | heisenberg:1");
    std::string kind = s.substr(0, colon);
    auto vals = number_list(json(s.substr(colon + 1)));
    HeintzeSpec out;
    if (kind == "diag") out = HeintzeSpec::abelian_diag(vals);
    else if (kind == "jordan") out = HeintzeSpec::abelian({{vals.at(0), 2}});
    else if (kind == "heisenberg") out = HeintzeSpec::heisenberg(int(vals.at(0)));
    else throw ConfigError("unknown spec kind '" + kind + "'");
    return normalize(out);
}

AdmissibleFunction parse_fn(const json& v) {
    if (v.is_object()) return AdmissibleFunction::from_json(v);
    std::string s = v.get<std::string>();
    if (s == "sqrt") return AdmissibleFunction::power_log(1, 1, 0.5, 0);
    if (s == "log") return AdmissibleFunction::power_log(1, 1, 0, 1);
    if (!s.empty() && s[0] == '{') return AdmissibleFunction::from_json(json::parse(s));
    auto colon = s.find(':');
    std::string kind = s.substr(0, colon);
    auto vals = colon == std::string::npos ? std::vector<double>{} : number_list(json(s.substr(colon + 1)));
    if (kind == "const" && vals.size() == 1) return AdmissibleFunction::constant(vals[0]);
    if (kind == "powerlog" && vals.size() == 4) return AdmissibleFunction::power_log(vals[0], vals[1], vals[2], vals[3]);
    throw ConfigError("function must be sqrt | log | const:a | powerlog:a,b,theta,k | JSON");
}

SpacePtr make_space(const json& cfg) {
    std::string m = cfg.at("model");
    if (m == "halfplane") return std::make_shared<HalfPlane>();
    if (m == "hyperboloid") return std::make_shared<Hyperboloid>(int(cfg.value("dim", 2)));
    if (m == "tree") return std::make_shared<RegularTree>(int(cfg.value("valence", 3)));
    if (m == "heintze") return std::make_shared<HeintzeLog>(parse_spec(cfg.value("spec", "diag:1,1")));
    throw ConfigError("unknown model '" + m + "'");
}

// Negative delta means: estimate from a seeded pilot sample of the radius-8 ball.
double resolve_delta(const Space& sp, const json& cfg) {
    double d = cfg.at("delta");
    if (d >= 0) return d;
    if (sp.tag() == ModelTag::RegularTree) return 0.0;
    return delta_four_point(sample_configuration(sp, {8.0}, 200, cfg.at("seed").get<std::uint64_t>())).delta;
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t t) { return seed * 1000003ULL + t; }

// ---------------------------------------------------------------- outcomes

struct Outcome {
    json results = json::object();
    bool passed = true;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::string num(double x) {
    std::ostringstream o;
    o.precision(17);
    o << x;
    return o.str();
}

void report_rows(Outcome& out, const std::vector<Report>& reps) {
    out.header = {"check", "n_trials", "bound", "max_observed", "margin", "violations", "seed", "config_hash"};
    json arr = json::array();
    for (const auto& r : reps) {
        arr.push_back(r.to_json());
        out.rows.push_back({r.check, std::to_string(r.n_trials), num(r.bound), num(r.max_observed), num(r.margin()),
                            std::to_string(r.violations.size()), std::to_string(r.seed), r.config_hash()});
        if (!r.passed()) out.passed = false;
    }
    out.results["reports"] = arr;
}

void shell_rows(Outcome& out, const std::vector<ShellRow>& shells) {
    out.header = {"scale", "count", "upper", "lower"};
    out.rows.clear();
    for (const auto& s : shells) out.rows.push_back({num(s.scale), std::to_string(s.count), num(s.upper), num(s.lower)});
}

// ---------------------------------------------------------------- subcommands

Outcome run_delta(const json& cfg) {
    Outcome out;
    Configuration c;
    std::string input = cfg.at("input");
    if (!input.empty()) {
        std::ifstream in(input);
        if (!in) throw ConfigError("cannot open " + input);
        json j;
        in >> j;
        c = Configuration::from_json(j);
    } else {
        auto sp = make_space(cfg);
        c = sample_configuration(*sp, {cfg.at("radius").get<double>()}, cfg.at("n"), cfg.at("seed"));
    }
    DeltaOptions o;
    o.seed = cfg.at("seed");
    auto est = delta_four_point(c, o);
    Report r;
    r.check = "delta_four_point";
    r.params = {{"model", c.model_name}, {"n", c.n}};
    r.n_trials = est.exhaustive ? c.n : est.samples;
    r.seed = cfg.at("seed");
    r.max_observed = est.delta;
    r.extra = est.to_json();
    // Trees are 0-hyperbolic; the only asserted bound.
    if (cfg.at("model") == "tree" && input.empty()) {
        r.bound = 0;
        if (est.delta != 0) r.violations.push_back({{"delta", est.delta}, {"witness", est.witness}});
    } else {
        r.bound = est.delta;  // informational: nothing to assert
    }
    report_rows(out, {r});
    out.results["delta"] = est.to_json();
    return out;
}

Outcome run_frink(const json& cfg) {
    Outcome out;
    std::size_t n = cfg.at("n"), kernels = cfg.at("kernels");
    std::uint64_t seed = cfg.at("seed");
    Report r;
    r.check = "frink_sandwich";
    r.params = {{"n", n}, {"kernels", kernels}};
    r.n_trials = kernels;
    r.seed = seed;
    r.bound = 4;
    double worst_ratio = 0, worst_excess = -INFINITY, worst_K = 0;
    for (std::size_t k = 0; k < kernels; ++k) {
        Rng g = make_rng(seed, k);
        auto km = random_k2_kernel(n, g);
        auto f = frink_sandwich(km, chain_metric(km));
        worst_ratio = std::max(worst_ratio, f.max_ratio);
        worst_excess = std::max(worst_excess, f.max_lower_excess);
        worst_K = std::max(worst_K, km.K);
        if ((!f.holds || km.K > 2) && r.violations.size() < kMaxWitnesses)
            r.violations.push_back({{"kernel", k}, {"K", km.K}, {"max_ratio", f.max_ratio},
                                    {"max_lower_excess", f.max_lower_excess}});
    }
    r.max_observed = worst_ratio;
    r.extra = {{"max_lower_excess", worst_excess}, {"max_K", worst_K}};
    report_rows(out, {r});
    return out;
}

Outcome run_xratio(const json& cfg) {
    Outcome out;
    auto sw = xratio_gap_sweep(number_list(cfg.at("rs")), cfg.at("per_r"), cfg.at("seed"));
    report_rows(out, {sw.report});
    out.header = {"R", "max_gap"};
    out.rows.clear();
    for (std::size_t i = 0; i < sw.R.size(); ++i) out.rows.push_back({num(sw.R[i]), num(sw.max_gap[i])});
    out.results["slope"] = sw.slope;
    return out;
}

Outcome run_audit(const json& cfg) {
    Outcome out;
    auto clean = make_space(cfg);
    double delta = resolve_delta(*clean, cfg);
    SpacePtr sp = clean;
    AuditOptions o;
    o.radius = cfg.at("radius");
    o.eta = cfg.at("eta");
    if (cfg.at("corrupt").get<bool>()) {
        sp = std::make_shared<CorruptedSpace>(clean, cfg.at("amplitude").get<double>());
        o.check_pilot_delta = false;
    }
    std::vector<LemmaId> ids;
    std::string which = cfg.at("lemma");
    if (which == "all") {
        ids = {LemmaId::Contraction, LemmaId::LinedUpProduct, LemmaId::RightTriangle, LemmaId::ProjectionSup,
               LemmaId::LinearDivergence, LemmaId::Connectedness};
        if (sp->tag() == ModelTag::HalfPlane || sp->tag() == ModelTag::RegularTree)
            ids.push_back(LemmaId::Quadrilateral);
    } else {
        ids = {lemma_from_name(which)};
    }
    std::vector<Report> reps;
    for (auto id : ids) {
        auto a = audit_lemma(*sp, delta, id, cfg.at("trials"), cfg.at("seed"), o);
        auto r = a.to_report();
        r.params["space"] = sp->name();
        reps.push_back(r);
    }
    report_rows(out, reps);
    out.results["delta"] = delta;
    return out;
}

Outcome run_morse(const json& cfg) {
    Outcome out;
    auto clean = make_space(cfg);
    double delta = resolve_delta(*clean, cfg);
    SpacePtr sp = clean;
    if (cfg.at("corrupt").get<bool>()) sp = std::make_shared<CorruptedSpace>(clean, cfg.at("amplitude").get<double>());
    PathSpec ps;
    ps.lambda = cfg.at("lambda");
    double c = cfg.at("c");
    ps.c = c >= 0 ? c : cfg.at("c_factor").get<double>() * ps.lambda * ps.lambda * (delta > 0 ? delta : 1.0);
    std::size_t trials = cfg.at("trials");
    std::uint64_t seed = cfg.at("seed");
    double radius = cfg.at("radius");
    Report agg;
    agg.check = "morse";
    agg.params = {{"lambda", ps.lambda}, {"c", ps.c}, {"delta", delta}, {"space", sp->name()}};
    agg.n_trials = trials;
    agg.seed = seed;
    agg.max_observed = 0;
    double anti = 0;
    std::size_t bad = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        std::uint64_t s = trial_seed(seed, t);
        auto pts = clean->sample({radius}, 2, s);
        auto path = generate_quasigeodesic(*clean, pts[0], pts[1], ps, s);
        auto r = verify_morse(*sp, path, delta);
        agg.bound = r.bound;
        agg.max_observed = std::max(agg.max_observed, r.max_observed);
        anti = std::max(anti, r.extra.value("anti_observed", 0.0));
        if (!r.passed()) {
            ++bad;
            for (auto& w : r.violations)
                if (agg.violations.size() < kMaxWitnesses) {
                    auto x = w;
                    x["trial"] = t;
                    agg.violations.push_back(x);
                }
        }
    }
    agg.extra = {{"anti_observed", anti}, {"failing_trials", bad},
                 {"anti_bound", morse_bounds(ps.lambda, delta, ps.c).anti_bound}};
    report_rows(out, {agg});
    return out;
}

Outcome run_track(const json& cfg) {
    Outcome out;
    std::string m = cfg.at("model");
    ModelTag tag = m == "halfplane" ? ModelTag::HalfPlane
                 : m == "tree"      ? ModelTag::RegularTree
                                    : throw ConfigError("track supports halfplane and tree");
    double delta = cfg.at("delta");
    if (delta < 0) delta = tag == ModelTag::RegularTree ? 0.0 : std::log(1 + std::sqrt(2.0));
    auto v = parse_fn(cfg.at("v"));
    auto tc = tracking_radii(cfg.at("lambda"), delta, v, cfg.at("L"));
    PathSpec ps;
    ps.lambda = cfg.at("lambda");
    ps.v = v;
    ps.step = cfg.at("step");
    std::vector<double> win{1.01 * tc.t_track, 2 * tc.t_track, 4 * tc.t_track};
    std::vector<Report> reps;
    std::size_t rays = cfg.at("rays");
    for (std::size_t i = 0; i < rays; ++i) {
        auto ray = generate_quasiray(tag, ps, win, cfg.at("width"), trial_seed(cfg.at("seed"), i),
                                     int(cfg.at("valence")));
        reps.push_back(verify_ray_tracking(ray, tc));
    }
    report_rows(out, reps);
    out.results["constants"] = tc.to_json();
    return out;
}

CoarseMap build_map(const json& cfg, const std::string& kind) {
    if (kind == "identity") return identity_map(make_space(cfg));
    if (kind == "radial") return make_radial_sbe(make_space(cfg), parse_fn(cfg.at("u")), int(cfg.at("sign")));
    if (kind == "stretch")
        return make_tree_stretch(std::make_shared<RegularTree>(int(cfg.at("valence"))), int(cfg.at("factor")));
    if (kind == "heintze")
        return make_heintze_logmodel_pair(parse_spec(cfg.at("spec")), parse_spec(cfg.at("spec2"))).map;
    throw ConfigError("unknown map '" + kind + "'");
}

Outcome run_sbe_fit(const json& cfg) {
    Outcome out;
    auto map = build_map(cfg, cfg.at("map"));
    auto est = estimate_sbe_constants(map, cfg.at("pairs"), cfg.at("r_max"), cfg.at("seed"),
                                      family_from_name(cfg.at("family")));
    Report r;
    r.check = "sbe_fit:surjectivity";
    r.params = {{"map", cfg.at("map")}, {"pairs", cfg.at("pairs")}, {"r_max", cfg.at("r_max")}};
    r.seed = cfg.at("seed");
    // Sublinear growth of the co-density gap: log-log slope of max(gap, 1) over r >= 8.
    r.bound = cfg.at("surj_slope");
    r.max_observed = 0;
    // Continuous models lose double precision from radius ~30 on; only trees are exact.
    double surj_max = map.target->tag() == ModelTag::RegularTree ? INFINITY : cfg.at("surj_max").get<double>();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, excess = -INFINITY;
    std::size_t m = 0;
    for (auto& [rad, gap] : est.surjectivity_defect) {
        if (rad > surj_max) continue;
        excess = std::max(excess, gap - est.fitted_v(rad));
        if (rad < 8) continue;
        double x = std::log(rad), y = std::log(std::max(gap, 1.0));
        sx += x, sy += y, sxx += x * x, sxy += x * y, ++m;
    }
    r.n_trials = m;
    if (cfg.at("map") == "stretch") {
        r.params["surjectivity"] = "not asserted (embedding)";
    } else if (m >= 2) {
        r.max_observed = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        if (r.max_observed > r.bound) r.violations.push_back({{"slope", r.max_observed}});
    }
    if (std::isfinite(excess)) r.extra = {{"max_gap_minus_fitted_v", excess}};
    report_rows(out, {r});
    out.results["estimate"] = est.to_json();
    shell_rows(out, est.shell_residuals);
    return out;
}

Outcome run_sqm_check(const json& cfg) {
    Outcome out;
    std::string kind = cfg.at("map");
    std::uint64_t seed = cfg.at("seed");
    SqmOptions o;
    o.family = family_from_name(cfg.at("family"));
    BoundaryFn phi;
    BoundaryMetric rho, theta;
    QuadrupleSampler samp;
    CoarseMap map;
    std::size_t n = cfg.at("n");
    if (kind == "heintze") {
        auto s1 = parse_spec(cfg.at("spec")), s2 = parse_spec(cfg.at("spec2"));
        map = make_heintze_logmodel_pair(s1, s2).map;
        rho = [s1](const BoundaryPoint& a, const BoundaryPoint& b) { return homogeneous_quasimetric(s1, a.coords, b.coords); };
        theta = [s2](const BoundaryPoint& a, const BoundaryPoint& b) { return homogeneous_quasimetric(s2, a.coords, b.coords); };
        samp = clustered_quadruples(ModelTag::HeintzeLog, std::vector<double>(std::size_t(s1.dim()), 0.0));
        o.S_max = 30;
        if (n == 0) n = 8000;
        o.source = s1.label();
        o.target = s2.label();
    } else if (kind == "radial" || kind == "identity") {
        auto H = std::make_shared<HalfPlane>();
        json c2 = cfg;
        c2["model"] = "halfplane";
        map = build_map(c2, kind);
        rho = theta = [H](const BoundaryPoint& a, const BoundaryPoint& b) {
            return std::exp(-*H->boundary_product_closed_form(a, b));
        };
        samp = clustered_quadruples(ModelTag::HalfPlane, {0.3}, 0.5);
        o.S_max = 12;
        if (n == 0) n = 4000;
        o.source = o.target = "halfplane";
    } else {
        throw ConfigError("sqm-check maps: radial | identity | heintze");
    }
    phi = [&map](const BoundaryPoint& x) { return boundary_map(map, x); };
    if (cfg.at("s_max").get<double>() > 0) o.S_max = cfg.at("s_max");
    o.nu = cfg.at("nu");
    auto est = sqm_check(phi, rho, theta, samp, n, seed, o);
    out.results["estimate"] = est.to_json();

    std::vector<Report> reps;
    Report r;
    r.check = "sqm:alpha_order";
    r.params = {{"map", kind}, {"n", n}, {"S_max", o.S_max}};
    r.n_trials = n;
    r.seed = seed;
    r.bound = est.alpha_upper;
    r.max_observed = est.alpha_lower;
    if (est.alpha_lower > est.alpha_upper) r.violations.push_back({{"alpha_lower", est.alpha_lower}});
    reps.push_back(r);
    if (cfg.at("compare_sbe").get<bool>()) {
        auto sbe = estimate_sbe_constants(map, cfg.at("pairs"), cfg.at("r_max"), seed);
        double tol = cfg.at("alpha_tol");
        Report c;
        c.check = "sqm:alpha_vs_lambda";
        c.params = {{"map", kind}, {"alpha_tol", tol}};
        c.n_trials = 1;
        c.seed = seed;
        c.bound = sbe.lambda_upper * (1 + tol);
        c.max_observed = est.alpha_upper;
        if (est.alpha_upper > c.bound) c.violations.push_back({{"alpha_upper", est.alpha_upper}, {"bound", c.bound}});
        if (est.alpha_lower < sbe.lambda_lower * (1 - tol))
            c.violations.push_back({{"alpha_lower", est.alpha_lower}, {"bound", sbe.lambda_lower * (1 - tol)}});
        c.extra = {{"lambda_lower", sbe.lambda_lower}, {"lambda_upper", sbe.lambda_upper}};
        reps.push_back(c);
    }
    report_rows(out, reps);
    shell_rows(out, est.residual_table);
    return out;
}

Outcome run_dim_box(const json& cfg) {
    Outcome out;
    auto spec = parse_spec(cfg.at("spec"));
    BoxRegion reg;
    std::string region = cfg.at("region");
    if (region == "cube") reg.kind = BoxRegion::Kind::UnitCube;
    else if (region == "ball") reg.kind = BoxRegion::Kind::UnitQuasiball;
    else throw ConfigError("region must be cube or ball");
    auto res = box_counting_dimension(spec, reg, number_list(cfg.at("scales")), cfg.at("seed"), cfg.at("points"));
    double p = homogeneous_dimension(spec);
    double tol = cfg.at("tol").get<double>() >= 0 ? cfg.at("tol").get<double>() : 0.1 * p;
    Report r;
    r.check = "box_counting";
    r.params = {{"spec", spec.label()}, {"region", region}, {"points", res.n_points}};
    r.n_trials = res.n_points;
    r.seed = cfg.at("seed");
    r.bound = tol;
    r.max_observed = std::abs(res.estimate - p);
    r.extra = {{"estimate", res.estimate}, {"stderr", res.stderr_}, {"expected", p}};
    if (r.max_observed > tol) r.violations.push_back({{"estimate", res.estimate}, {"expected", p}});
    report_rows(out, {r});
    out.header = {"scale", "count"};
    out.rows.clear();
    for (std::size_t i = 0; i < res.scales.size(); ++i) out.rows.push_back({num(res.scales[i]), num(res.counts[i])});
    return out;
}

Outcome run_lines(const json& cfg) {
    Outcome out;
    auto spec = parse_spec(cfg.at("spec"));
    auto res = line_count_scaling(spec, cfg.at("direction"), number_list(cfg.at("radii")), cfg.at("seed"),
                                  cfg.at("samples"));
    Report r;
    r.check = "line_count_scaling";
    r.params = {{"spec", spec.label()}, {"direction", cfg.at("direction")}};
    r.n_trials = cfg.at("samples");
    r.seed = cfg.at("seed");
    r.bound = cfg.at("tol");
    r.max_observed = std::abs(res.exponent - res.expected);
    r.extra = {{"exponent", res.exponent}, {"expected", res.expected}};
    if (r.max_observed > r.bound) r.violations.push_back({{"exponent", res.exponent}, {"expected", res.expected}});
    report_rows(out, {r});
    out.header = {"radius", "transversal_measure", "ball_measure"};
    out.rows.clear();
    for (std::size_t i = 0; i < res.radii.size(); ++i)
        out.rows.push_back({num(res.radii[i]), num(res.transversal_measure[i]), num(res.ball_measure[i])});
    return out;
}

Outcome run_classify(const json& cfg) {
    Outcome out;
    auto ids = symmetric_spaces_up_to(cfg.at("max_dim"));
    json recs = json::array(), pairs = json::array();
    out.header = {"space", "dim_X", "dim_boundary", "p", "dim_Im_K"};
    for (const auto& id : ids) {
        auto r = symmetric_space_invariants(id);
        recs.push_back({{"space", id.label()}, {"dim_X", r.dim_X}, {"dim_boundary", r.dim_boundary}, {"p", r.p},
                        {"dim_Im_K", r.dim_Im_K}});
        out.rows.push_back({id.label(), std::to_string(r.dim_X), std::to_string(r.dim_boundary), std::to_string(r.p),
                            std::to_string(r.dim_Im_K)});
    }
    Report rep;
    rep.check = "classify";
    rep.params = {{"max_dim", cfg.at("max_dim")}};
    rep.seed = 0;
    for (const auto& a : ids)
        for (const auto& b : ids) {
            auto v = sbe_distinguishable(a, b);
            ++rep.n_trials;
            pairs.push_back({a.label(), b.label(), v.str()});
            bool ok = (v.kind == Verdict::Kind::Homothetic) == (a == b) && v.kind != Verdict::Kind::Undistinguished;
            if (!ok && rep.violations.size() < kMaxWitnesses)
                rep.violations.push_back({{"a", a.label()}, {"b", b.label()}, {"verdict", v.str()}});
        }
    out.passed = rep.passed();
    out.results["invariants"] = recs;
    out.results["verdicts"] = pairs;
    out.results["reports"] = json::array({rep.to_json()});
    return out;
}

// ---------------------------------------------------------------- output

void write_output(const json& cfg, const Outcome& o) {
    std::string path = cfg.at("out"), format = cfg.at("format");
    // Where the output goes and how many workers ran do not change results.
    json rec = cfg;
    rec.erase("out");
    rec.erase("threads");
    std::string hash = hex64(fnv1a(rec.dump()));
    std::ostringstream body;
    if (format == "json") {
        json payload{{"subcommand", cfg.at("subcommand")}, {"config", rec}, {"config_hash", hash},
                     {"passed", o.passed}, {"results", o.results}};
        body << payload.dump(2) << "\n";
    } else if (format == "csv") {
        body << "# config " << rec.dump() << "\n# config_hash " << hash << "\n# passed " << (o.passed ? 1 : 0) << "\n";
        for (std::size_t i = 0; i < o.header.size(); ++i) body << (i ? "," : "") << o.header[i];
        body << "\n";
        for (const auto& row : o.rows) {
            for (std::size_t i = 0; i < row.size(); ++i) body << (i ? "," : "") << row[i];
            body << "\n";
        }
    } else {
        throw ConfigError("format must be json or csv");
    }
    if (path.empty() || path == "-") {
        std::cout << body.str();
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path);
    f << body.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coarse_lab: seeded experiments on hyperbolic spaces, their boundaries and coarse maps"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "JSON file with option values; flags override it");

    using Runner = Outcome (*)(const json&);
    std::vector<std::pair<Sub, Runner>> subs;
    auto add = [&](const std::string& name, const std::string& help, Runner run) -> Sub& {
        subs.push_back({Sub{}, run});
        Sub& s = subs.back().first;
        s.name = name;
        s.app = app.add_subcommand(name, help);
        opt(s, "seed", std::uint64_t(1), "random seed");
        opt(s, "out", "", "output file (stdout if empty)");
        opt(s, "format", "json", "json | csv");
        opt(s, "threads", std::uint64_t(0), "worker threads (0: hardware; COARSE_LAB_THREADS wins)");
        return s;
    };
    subs.reserve(16);

    {
        auto& s = add("delta", "four-point hyperbolicity constant of a sample or a distance matrix", run_delta);
        opt(s, "model", "halfplane", "halfplane | hyperboloid | tree | heintze");
        opt(s, "dim", std::uint64_t(2), "hyperboloid dimension");
        opt(s, "valence", std::uint64_t(3), "tree valence");
        opt(s, "spec", "diag:1,1", "log-model spec (diag:.. | jordan:a | heisenberg:m)");
        opt(s, "radius", 8.0, "sampling ball radius");
        opt(s, "n", std::uint64_t(200), "points");
        opt(s, "input", "", "configuration JSON instead of sampling");
    }
    {
        auto& s = add("frink", "chain metric sandwich on random kernels with K <= 2", run_frink);
        opt(s, "n", std::uint64_t(64), "points per kernel");
        opt(s, "kernels", std::uint64_t(100), "number of kernels");
    }
    {
        auto& s = add("xratio", "cross ratio against distance between lines, swept over separation", run_xratio);
        opt(s, "rs", "10,31.6,100,316,1000", "separation scales");
        opt(s, "per-r", std::uint64_t(2000), "quadruples per scale");
    }
    {
        auto& s = add("audit", "randomized audit of the thin-triangle lemmas", run_audit);
        opt(s, "lemma", "all", "lemma name or all");
        opt(s, "model", "halfplane", "halfplane | tree | hyperboloid");
        opt(s, "dim", std::uint64_t(2), "hyperboloid dimension");
        opt(s, "valence", std::uint64_t(3), "tree valence");
        opt(s, "delta", -1.0, "hyperbolicity constant (negative: pilot estimate)");
        opt(s, "trials", std::uint64_t(10000), "trials per lemma");
        opt(s, "radius", 6.0, "sampling ball radius");
        opt(s, "eta", 1.0, "neighbourhood for lined_up_product");
        opt(s, "corrupt", false, "negative control: corrupted metric");
        opt(s, "amplitude", 3.0, "corruption amplitude");
    }
    {
        auto& s = add("morse", "Morse bounds on random quasigeodesics", run_morse);
        opt(s, "model", "halfplane", "halfplane | tree");
        opt(s, "valence", std::uint64_t(3), "tree valence");
        opt(s, "lambda", 1.0, "multiplicative constant");
        opt(s, "c", -1.0, "additive constant (negative: c-factor lambda^2 delta)");
        opt(s, "c-factor", 6.0, "c = c-factor lambda^2 delta (delta taken as 1 on trees)");
        opt(s, "delta", -1.0, "hyperbolicity constant (negative: pilot estimate)");
        opt(s, "trials", std::uint64_t(100), "paths");
        opt(s, "radius", 8.0, "endpoint ball radius");
        opt(s, "corrupt", false, "negative control: corrupted metric");
        opt(s, "amplitude", 3.0, "corruption amplitude");
    }
    {
        auto& s = add("track", "tracking of perturbed rays by geodesic rays", run_track);
        opt(s, "model", "halfplane", "halfplane | tree");
        opt(s, "valence", std::uint64_t(3), "tree valence");
        opt(s, "lambda", 2.0, "multiplicative constant");
        opt(s, "delta", -1.0, "hyperbolicity constant (negative: log(1+sqrt 2), 0 on trees)");
        opt(s, "v", "sqrt", "error function: sqrt | log | const:a | powerlog:a,b,theta,k | JSON");
        opt(s, "L", 36.0, "proximality constant");
        opt(s, "rays", std::uint64_t(10), "rays");
        opt(s, "width", 20.0, "dense window length");
        opt(s, "step", 0.5, "parameter spacing");
    }
    {
        auto& s = add("sbe-fit", "estimate biLipschitz and sublinear constants of a map", run_sbe_fit);
        opt(s, "map", "radial", "identity | radial | stretch | heintze");
        opt(s, "model", "halfplane", "halfplane | hyperboloid | tree");
        opt(s, "dim", std::uint64_t(2), "hyperboloid dimension");
        opt(s, "valence", std::uint64_t(3), "tree valence");
        opt(s, "u", "sqrt", "radial displacement function");
        opt(s, "sign", std::int64_t(1), "radial push direction (+1 | -1)");
        opt(s, "factor", std::uint64_t(2), "letter repetition for stretch");
        opt(s, "spec", "diag:1,1", "source log-model spec");
        opt(s, "spec2", "jordan:1", "target log-model spec");
        opt(s, "pairs", std::uint64_t(4000), "sampled pairs");
        opt(s, "r-max", 256.0, "largest radius");
        opt(s, "surj-max", 16.0, "largest radius for the surjectivity assertion (not applied to trees)");
        opt(s, "surj-slope", 0.9, "largest allowed log-log slope of the surjectivity gap");
        opt(s, "family", "auto", "constant | log | power | auto");
    }
    {
        auto& s = add("sqm-check", "cross-ratio distortion of a boundary map", run_sqm_check);
        opt(s, "map", "heintze", "radial | identity | heintze");
        opt(s, "u", "const:1", "radial displacement function");
        opt(s, "sign", std::int64_t(1), "radial push direction");
        opt(s, "spec", "diag:1,1", "source log-model spec");
        opt(s, "spec2", "jordan:1", "target log-model spec");
        opt(s, "n", std::uint64_t(0), "quadruples (0: 8000 heintze, 4000 otherwise)");
        opt(s, "s-max", -1.0, "largest separation exponent (negative: per-map default)");
        opt(s, "nu", std::exp(1.0), "log base");
        opt(s, "family", "auto", "constant | log | power | auto");
        opt(s, "compare-sbe", true, "also check alpha against the interior lambda");
        opt(s, "alpha-tol", 0.1, "relative tolerance for the alpha / lambda comparison");
        opt(s, "pairs", std::uint64_t(4000), "pairs for the interior estimate");
        opt(s, "r-max", 256.0, "largest radius for the interior estimate");
        // sbe helpers read these
        s.defaults["model"] = "halfplane";
    }
    {
        auto& s = add("dim-box", "box-counting dimension of a homogeneous quasimetric", run_dim_box);
        opt(s, "spec", "diag:1,1", "diag:.. | jordan:a | heisenberg:m");
        opt(s, "region", "cube", "cube | ball");
        opt(s, "scales", "0.25,0.125,0.0625,0.03125,0.015625,0.0078125", "box sizes");
        opt(s, "points", std::uint64_t(1000000), "quasi-random sample size");
        opt(s, "tol", -1.0, "allowed |estimate - p| (negative: 10% of p)");
    }
    {
        auto& s = add("lines", "transversal measure of lines meeting quasiballs", run_lines);
        opt(s, "spec", "diag:1,1", "abelian spec");
        opt(s, "direction", std::uint64_t(0), "coordinate axis (eigenvalue 1)");
        opt(s, "radii", "0.5,1,2,4", "ball radii");
        opt(s, "samples", std::uint64_t(200000), "transversal samples");
        opt(s, "tol", 0.02, "allowed |exponent - (p-1)/p|");
    }
    {
        auto& s = add("classify", "invariants and pairwise verdicts for rank-one symmetric spaces", run_classify);
        opt(s, "max-dim", std::uint64_t(32), "largest dim X");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    for (auto& [s, run] : subs) {
        if (!s.app->parsed()) continue;
        try {
            json cfg = effective_config(s, config_path);
            if (!std::getenv("COARSE_LAB_THREADS") && cfg.at("threads").get<std::uint64_t>() > 0)
                set_thread_count(int(cfg.at("threads").get<std::uint64_t>()));
            Outcome o = run(cfg);
            write_output(cfg, o);
            if (!o.passed) std::cerr << s.name << ": violations found\n";
            return o.passed ? 0 : 2;
        } catch (const ConfigError& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return 1;
        } catch (const Error& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        } catch (const json::exception& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return 1;
        }
    }
    return 1;
}
