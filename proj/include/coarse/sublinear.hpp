#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace coarse {

// u(r) = a + b (1+r)^theta log^k(e+r). Constant(a) is b = 0.
struct PowerLogTerm {
    double a = 1.0;
    double b = 0.0;
    double theta = 0.0;
    double k = 0.0;

    double operator()(double r) const;
    bool is_constant() const { return b == 0.0; }
};

// Admissible function: a single family member, or an expression built from
// members by max, sum, positive scaling and advancement u_p(t) = u(p + t).
class AdmissibleFunction {
public:
    enum class Kind { Term, Max, Sum, Scale, Shift };

    AdmissibleFunction();  // Constant(1)
    static AdmissibleFunction constant(double a);
    static AdmissibleFunction power_log(double a, double b, double theta, double k);
    static AdmissibleFunction term(const PowerLogTerm& t);

    double operator()(double r) const;

    Kind kind() const;
    // Valid only for Kind::Term.
    const PowerLogTerm& as_term() const;
    bool is_constant() const;
    bool is_bounded() const { return !has_growth(); }

    // Dominant (theta, k) at infinity; (0, 0) with has_growth() false for constants.
    std::pair<double, double> growth() const;
    bool has_growth() const;

    // Sanity check on a log grid up to 1e9: u >= 1, nondecreasing, u(r)/r -> 0.
    bool check_admissible(std::string* why = nullptr) const;

    nlohmann::json to_json() const;
    static AdmissibleFunction from_json(const nlohmann::json& j);
    std::string describe() const;

    friend AdmissibleFunction max(const AdmissibleFunction& x, const AdmissibleFunction& y);
    friend AdmissibleFunction operator+(const AdmissibleFunction& x, const AdmissibleFunction& y);
    friend AdmissibleFunction operator*(double c, const AdmissibleFunction& x);
    friend AdmissibleFunction advance(const AdmissibleFunction& u, double p);

private:
    struct Node;
    explicit AdmissibleFunction(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
};

AdmissibleFunction max(const AdmissibleFunction& x, const AdmissibleFunction& y);
AdmissibleFunction operator+(const AdmissibleFunction& x, const AdmissibleFunction& y);
AdmissibleFunction operator*(double c, const AdmissibleFunction& x);
AdmissibleFunction advance(const AdmissibleFunction& u, double p);

// sup{ r >= 0 : u(r) > eps r }, 0 if empty.
double r_epsilon(const AdmissibleFunction& u, double eps);

// sup_r u(tau r) / u(r), tau > 1.
double uparrow(const AdmissibleFunction& u, double tau);

// sup{ r >= 0 : u(r) <= c }: 0 if u(0) > c, +inf if u never exceeds c.
double level_sup(const AdmissibleFunction& u, double c);

}  // namespace coarse
