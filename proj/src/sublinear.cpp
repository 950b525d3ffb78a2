#include "coarse/sublinear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "coarse/util.hpp"

namespace coarse {

double PowerLogTerm::operator()(double r) const {
    if (b == 0.0) return a;
    double v = b;
    if (theta != 0.0) v *= std::pow(1.0 + r, theta);
    if (k != 0.0) v *= std::pow(std::log(std::exp(1.0) + r), k);
    return a + v;
}

struct AdmissibleFunction::Node {
    Kind kind = Kind::Term;
    PowerLogTerm term;
    double c = 1.0;  // scale factor or shift
    std::vector<AdmissibleFunction> kids;
};

AdmissibleFunction::AdmissibleFunction() : AdmissibleFunction(constant(1.0)) {}

AdmissibleFunction AdmissibleFunction::term(const PowerLogTerm& t) {
    if (t.theta < 0.0 || t.theta >= 1.0 || t.k < 0.0 || t.b < 0.0)
        throw Error(ErrorCode::InvalidArgument, "PowerLog needs b >= 0, theta in [0,1), k >= 0");
    auto n = std::make_shared<Node>();
    n->kind = Kind::Term;
    n->term = t;
    return AdmissibleFunction(n);
}

AdmissibleFunction AdmissibleFunction::constant(double a) { return term({a, 0.0, 0.0, 0.0}); }

AdmissibleFunction AdmissibleFunction::power_log(double a, double b, double theta, double k) {
    return term({a, b, theta, k});
}

double AdmissibleFunction::operator()(double r) const {
    const Node& n = *node_;
    switch (n.kind) {
        case Kind::Term: return n.term(r);
        case Kind::Max: {
            double m = -std::numeric_limits<double>::infinity();
            for (auto& k : n.kids) m = std::max(m, k(r));
            return m;
        }
        case Kind::Sum: {
            double s = 0.0;
            for (auto& k : n.kids) s += k(r);
            return s;
        }
        case Kind::Scale: return n.c * n.kids[0](r);
        case Kind::Shift: return n.kids[0](n.c + r);
    }
    return 0.0;
}

AdmissibleFunction::Kind AdmissibleFunction::kind() const { return node_->kind; }

const PowerLogTerm& AdmissibleFunction::as_term() const {
    if (node_->kind != Kind::Term) throw Error(ErrorCode::InvalidArgument, "not a single family member");
    return node_->term;
}

bool AdmissibleFunction::has_growth() const {
    const Node& n = *node_;
    switch (n.kind) {
        case Kind::Term: return n.term.b > 0.0 && (n.term.theta > 0.0 || n.term.k > 0.0);
        case Kind::Max:
        case Kind::Sum:
            for (auto& k : n.kids)
                if (k.has_growth()) return true;
            return false;
        case Kind::Scale:
        case Kind::Shift: return n.kids[0].has_growth();
    }
    return false;
}

bool AdmissibleFunction::is_constant() const { return !has_growth(); }

std::pair<double, double> AdmissibleFunction::growth() const {
    const Node& n = *node_;
    switch (n.kind) {
        case Kind::Term:
            if (!has_growth()) return {0.0, 0.0};
            return {n.term.theta, n.term.k};
        case Kind::Max:
        case Kind::Sum: {
            std::pair<double, double> g{0.0, 0.0};
            for (auto& k : n.kids)
                if (k.has_growth()) g = std::max(g, k.growth());
            return g;
        }
        case Kind::Scale:
        case Kind::Shift: return n.kids[0].growth();
    }
    return {0.0, 0.0};
}

bool AdmissibleFunction::check_admissible(std::string* why) const {
    auto fail = [&](const std::string& m) {
        if (why) *why = m;
        return false;
    };
    double prev = (*this)(0.0);
    if (prev < 1.0 - 1e-12) return fail("u(0) < 1");
    for (double r = 1e-3; r <= 1e9; r *= 1.3) {
        double v = (*this)(r);
        if (v < 1.0 - 1e-12) return fail("u < 1");
        if (v < prev - 1e-12 * std::abs(prev)) return fail("not nondecreasing");
        if ((*this)(2.0 * r) > 4.0 * v) return fail("doubling ratio above 4");
        prev = v;
    }
    if ((*this)(1e9) / 1e9 > (*this)(1e6) / 1e6) return fail("u(r)/r not decreasing at large r");
    return true;
}

nlohmann::json AdmissibleFunction::to_json() const {
    const Node& n = *node_;
    nlohmann::json j;
    switch (n.kind) {
        case Kind::Term:
            j["family"] = n.term.b == 0.0 ? "constant" : "powerlog";
            j["a"] = n.term.a;
            j["b"] = n.term.b;
            j["theta"] = n.term.theta;
            j["k"] = n.term.k;
            break;
        case Kind::Max:
        case Kind::Sum:
            j["family"] = n.kind == Kind::Max ? "max" : "sum";
            j["terms"] = nlohmann::json::array();
            for (auto& k : n.kids) j["terms"].push_back(k.to_json());
            break;
        case Kind::Scale:
            j["family"] = "scale";
            j["c"] = n.c;
            j["of"] = n.kids[0].to_json();
            break;
        case Kind::Shift:
            j["family"] = "shift";
            j["p"] = n.c;
            j["of"] = n.kids[0].to_json();
            break;
    }
    return j;
}

AdmissibleFunction AdmissibleFunction::from_json(const nlohmann::json& j) {
    std::string fam = j.at("family").get<std::string>();
    if (fam == "constant") return constant(j.at("a").get<double>());
    if (fam == "powerlog")
        return power_log(j.value("a", 0.0), j.value("b", 1.0), j.value("theta", 0.0), j.value("k", 0.0));
    if (fam == "max" || fam == "sum") {
        const auto& t = j.at("terms");
        if (t.empty()) throw Error(ErrorCode::InvalidArgument, "empty term list");
        AdmissibleFunction acc = from_json(t[0]);
        for (std::size_t i = 1; i < t.size(); ++i)
            acc = fam == "max" ? max(acc, from_json(t[i])) : acc + from_json(t[i]);
        return acc;
    }
    if (fam == "scale") return j.at("c").get<double>() * from_json(j.at("of"));
    if (fam == "shift") return advance(from_json(j.at("of")), j.at("p").get<double>());
    throw Error(ErrorCode::InvalidArgument, "unknown family " + fam);
}

std::string AdmissibleFunction::describe() const { return to_json().dump(); }

AdmissibleFunction max(const AdmissibleFunction& x, const AdmissibleFunction& y) {
    auto n = std::make_shared<AdmissibleFunction::Node>();
    n->kind = AdmissibleFunction::Kind::Max;
    n->kids = {x, y};
    return AdmissibleFunction(n);
}

AdmissibleFunction operator+(const AdmissibleFunction& x, const AdmissibleFunction& y) {
    auto n = std::make_shared<AdmissibleFunction::Node>();
    n->kind = AdmissibleFunction::Kind::Sum;
    n->kids = {x, y};
    return AdmissibleFunction(n);
}

AdmissibleFunction operator*(double c, const AdmissibleFunction& x) {
    if (!(c > 0.0)) throw Error(ErrorCode::InvalidArgument, "scale factor must be positive");
    auto n = std::make_shared<AdmissibleFunction::Node>();
    n->kind = AdmissibleFunction::Kind::Scale;
    n->c = c;
    n->kids = {x};
    return AdmissibleFunction(n);
}

AdmissibleFunction advance(const AdmissibleFunction& u, double p) {
    if (p < 0.0) throw Error(ErrorCode::InvalidArgument, "advance needs p >= 0");
    auto n = std::make_shared<AdmissibleFunction::Node>();
    n->kind = AdmissibleFunction::Kind::Shift;
    n->c = p;
    n->kids = {u};
    return AdmissibleFunction(n);
}

double r_epsilon(const AdmissibleFunction& u, double eps) {
    if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "r_epsilon needs eps > 0");
    if (u.is_constant()) return u(0.0) / eps;
    // Upper end: well past the point where u(r) <= eps r / 4.
    double hi = std::max(1.0, 1.0 / eps);
    while (u(hi) > 0.25 * eps * hi) {
        hi *= 2.0;
        if (hi > 1e300) return std::numeric_limits<double>::infinity();
    }
    hi *= 1e3;
    const double f = 1.02;
    double last_in = 0.0;  // u(0) >= 1 > 0, so 0 is always in the set
    for (double r = 1e-9; r <= hi; r *= f)
        if (u(r) > eps * r) last_in = r;
    double lo = last_in, up = last_in == 0.0 ? 1e-9 : last_in * f;
    for (int i = 0; i < 200 && up - lo > 1e-13 * up; ++i) {
        double m = 0.5 * (lo + up);
        if (u(m) > eps * m) lo = m;
        else up = m;
    }
    return lo;
}

double uparrow(const AdmissibleFunction& u, double tau) {
    if (!(tau > 1.0)) throw Error(ErrorCode::InvalidArgument, "uparrow needs tau > 1");
    if (u.is_constant()) return 1.0;
    auto ratio = [&](double r) { return u(tau * r) / u(r); };
    double best = ratio(0.0), best_r = 0.0;
    const double f = 1.01;
    for (double r = 1e-6; r <= 1e7; r *= f) {
        double q = ratio(r);
        if (q > best) {
            best = q;
            best_r = r;
        }
    }
    if (best_r > 0.0) {
        // golden-section refinement around the grid maximum
        double a = best_r / f, b = best_r * f;
        const double g = 0.5 * (std::sqrt(5.0) - 1.0);
        double c = b - g * (b - a), d = a + g * (b - a);
        double fc = ratio(c), fd = ratio(d);
        for (int i = 0; i < 80; ++i) {
            if (fc > fd) {
                b = d; d = c; fd = fc; c = b - g * (b - a); fc = ratio(c);
            } else {
                a = c; c = d; fc = fd; d = a + g * (b - a); fd = ratio(d);
            }
        }
        best = std::max({best, fc, fd});
    }
    double limit = std::pow(tau, u.growth().first);
    return std::max(best, limit);
}

double level_sup(const AdmissibleFunction& u, double c) {
    if (u(0.0) > c) return 0.0;
    if (u.is_constant()) return std::numeric_limits<double>::infinity();
    double hi = 1.0;
    while (u(hi) <= c) {
        hi *= 2.0;
        if (hi > 1e300) return std::numeric_limits<double>::infinity();
    }
    double lo = 0.0;
    for (int i = 0; i < 400 && hi - lo > 1e-14 * hi; ++i) {
        double m = 0.5 * (lo + hi);
        if (u(m) <= c) lo = m;
        else hi = m;
    }
    return lo;
}

}  // namespace coarse
