#ifndef POWERCAST_TESTS_HELPERS_HPP
#define POWERCAST_TESTS_HELPERS_HPP

#include "powercast/rng.hpp"
#include "powercast/swt.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace tests {

inline std::vector<double> random_signal(std::size_t n, std::uint64_t seed,
                                         double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng = powercast::rng::seeded(seed);
    std::vector<double> out(n);
    for (double& v : out) v = powercast::rng::uniform_range(rng, lo, hi);
    return out;
}

/// Periodic cross-correlation with an explicit (already upsampled) filter:
/// out[t] = sum_k filter[k] * x[(t + k) mod n]. Deliberately dumb; tests the
/// strided implementation against a second route.
inline std::vector<double> brute_correlate(const std::vector<double>& x,
                                           const std::vector<double>& filter) {
    const std::size_t n = x.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t k = 0; k < filter.size(); ++k) {
            out[t] += filter[k] * x[(t + k) % n];
        }
    }
    return out;
}

/// Whole decomposition by brute-force correlation with make_filters' zero-
/// padded taps.
inline powercast::swt::SubbandMatrix brute_subbands(const std::vector<double>& signal,
                                                    const powercast::swt::WaveletSpec& spec) {
    powercast::swt::SubbandMatrix out(spec, signal.size());
    std::vector<double> approx = signal;
    for (int level = 1; level <= spec.levels; ++level) {
        const auto filters = powercast::swt::make_filters(spec, level);
        out.detail(level) = brute_correlate(approx, filters.high_pass);
        approx = brute_correlate(approx, filters.low_pass);
        out.approximation(level) = approx;
    }
    return out;
}

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("powercast_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter_++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    static inline int counter_ = 0;
    std::filesystem::path path_;
};

} // namespace tests

#endif
