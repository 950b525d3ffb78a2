#include "coarse/util.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

namespace coarse {

const char* error_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::ModelMismatch: return "ModelMismatch";
        case ErrorCode::DegenerateEndpoints: return "DegenerateEndpoints";
        case ErrorCode::NonConvergence: return "NonConvergence";
        case ErrorCode::InvalidRegion: return "InvalidRegion";
        case ErrorCode::HypothesisUnsatisfiable: return "HypothesisUnsatisfiable";
        case ErrorCode::HypothesisViolated: return "HypothesisViolated";
        case ErrorCode::DegenerateQuadruple: return "DegenerateQuadruple";
        case ErrorCode::FitFailure: return "FitFailure";
        case ErrorCode::UnboundedRequired: return "UnboundedRequired";
        case ErrorCode::BudgetViolated: return "BudgetViolated";
        case ErrorCode::IncompatibleSpecs: return "IncompatibleSpecs";
        case ErrorCode::ThresholdExceeded: return "ThresholdExceeded";
        case ErrorCode::SpaceMismatch: return "SpaceMismatch";
        case ErrorCode::NonPositiveEigenvalue: return "NonPositiveEigenvalue";
        case ErrorCode::NotNormalized: return "NotNormalized";
        case ErrorCode::InsufficientScales: return "InsufficientScales";
        case ErrorCode::DirectionNotUnitEigenvector: return "DirectionNotUnitEigenvector";
        case ErrorCode::InvalidId: return "InvalidId";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x5eedu};
    return Rng(seq);
}

// Hand-rolled rather than std::uniform_real_distribution so that values are
// identical across standard library implementations.
double uniform(Rng& g, double lo, double hi) {
    double u = static_cast<double>(g() >> 11) * (1.0 / 9007199254740992.0);
    return lo + (hi - lo) * u;
}

double normal(Rng& g) {
    double u1 = uniform(g);
    double u2 = uniform(g);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

namespace {
std::atomic<int> g_threads{0};
}

int thread_count() {
    int n = g_threads.load();
    if (n > 0) return n;
    if (const char* env = std::getenv("COARSE_LAB_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_thread_count(int n) { g_threads.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
    int t = thread_count();
    if (t <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    for (int w = 0; w < t; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n || failed.load()) return;
                try {
                    f(i);
                } catch (...) {
                    if (!failed.exchange(true)) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace coarse
