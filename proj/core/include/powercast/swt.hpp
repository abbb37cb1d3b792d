#ifndef POWERCAST_SWT_HPP
#define POWERCAST_SWT_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace powercast::swt {

enum class WaveletFamily { db1, db2, db3, db4 };

WaveletFamily wavelet_family_from_string(const std::string& name);
std::string to_string(WaveletFamily family);

/// Wavelet family plus decomposition depth. Levels must lie in [1, 5].
struct WaveletSpec {
    WaveletFamily family = WaveletFamily::db1;
    int levels = 3;

    void validate() const;
};

/// Base low-pass/high-pass analysis pair of the chosen Daubechies family.
/// Orthonormal: sum(low) = sqrt(2), sum(low^2) = 1, high[k] = (-1)^k low[taps-1-k].
struct FilterPair {
    std::vector<double> low_pass;
    std::vector<double> high_pass;
};

FilterPair base_filters(WaveletFamily family);

/// Level-j analysis filters with 2^(j-1)-1 zeros inserted between base taps.
FilterPair make_filters(const WaveletSpec& spec, int level);

/// All subbands of an undecimated decomposition. Every subband has exactly
/// source_length entries; channel order is A1..AL then D1..DL (2L channels).
class SubbandMatrix {
public:
    SubbandMatrix() = default;
    SubbandMatrix(WaveletSpec spec, std::size_t source_length);

    const WaveletSpec& spec() const { return spec_; }
    std::size_t source_length() const { return n_; }
    std::size_t channels() const { return 2 * static_cast<std::size_t>(spec_.levels); }

    /// 1-based level accessors.
    std::vector<double>& approximation(int level);
    const std::vector<double>& approximation(int level) const;
    std::vector<double>& detail(int level);
    const std::vector<double>& detail(int level) const;

    /// Channel c in [0, 2L): approximations first, then details.
    std::vector<double>& channel(std::size_t c) { return bands_.at(c); }
    const std::vector<double>& channel(std::size_t c) const { return bands_.at(c); }
    static std::string channel_name(std::size_t c, int levels);

    /// Coefficient vector of one time step, length 2L.
    std::vector<double> row(std::size_t t) const;

    /// Truncate every subband to the first `keep` steps.
    void trim(std::size_t keep);

    void check_well_formed() const;

private:
    WaveletSpec spec_;
    std::size_t n_ = 0;
    std::vector<std::vector<double>> bands_;
};

/// Undecimated (a trous) analysis with circular boundary handling.
/// Requires signal.size() to be a positive multiple of 2^levels and finite.
SubbandMatrix decompose(const std::vector<double>& signal, const WaveletSpec& spec);

/// Inverse transform. Uses only A_L and D_L..D_1, averaging the redundant
/// shift branches at each level; A_1..A_{L-1} are ignored.
std::vector<double> reconstruct(const SubbandMatrix& subbands);

} // namespace powercast::swt

#endif
