#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace coarse {

enum class ErrorCode {
    ModelMismatch,
    DegenerateEndpoints,
    NonConvergence,
    InvalidRegion,
    HypothesisUnsatisfiable,
    HypothesisViolated,
    DegenerateQuadruple,
    FitFailure,
    UnboundedRequired,
    BudgetViolated,
    IncompatibleSpecs,
    ThresholdExceeded,
    SpaceMismatch,
    NonPositiveEigenvalue,
    NotNormalized,
    InsufficientScales,
    DirectionNotUnitEigenvector,
    InvalidId,
    InvalidSpec,
    InvalidArgument,
};

const char* error_name(ErrorCode c);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// One generator per (seed, stream). Streams are trial or item indices, so
// results do not depend on how work is split across threads.
using Rng = std::mt19937_64;
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

double uniform(Rng& g, double lo = 0.0, double hi = 1.0);
double normal(Rng& g);

// Worker count: COARSE_LAB_THREADS if set, otherwise hardware concurrency.
int thread_count();
void set_thread_count(int n);

// Runs f(i) for i in [0, n). Each index must write only its own output slot.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f);

// 64-bit FNV-1a, used for config hashes in reports.
std::uint64_t fnv1a(const std::string& s);
std::string hex64(std::uint64_t v);

constexpr double kPi = 3.14159265358979323846;

}  // namespace coarse
