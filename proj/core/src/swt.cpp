#include "powercast/swt.hpp"

#include "powercast/errors.hpp"

#include <cmath>
#include <sstream>

namespace powercast::swt {

namespace {

// Orthonormal Daubechies scaling coefficients, normalized so sum = sqrt(2).
// db2/db3 follow the closed forms in (1 +/- sqrt(3)) / (4 sqrt(2)) style;
// db3/db4 digits come from 60-digit spectral factorization of the
// Daubechies polynomial, rounded to double.
const std::vector<double> kDb1{
    0.70710678118654752, 0.70710678118654752};
const std::vector<double> kDb2{
    0.48296291314453414, 0.83651630373780791,
    0.22414386804201338, -0.12940952255126038};
const std::vector<double> kDb3{
    0.33267055295008262, 0.80689150931109258,
    0.45987750211849157, -0.13501102001025459,
    -0.08544127388202666, 0.03522629188570954};
const std::vector<double> kDb4{
    0.23037781330889650, 0.71484657055291565,
    0.63088076792985891, -0.02798376941685985,
    -0.18703481171909308, 0.03084138183556076,
    0.03288301166688520, -0.01059740178506903};

int pow2(int e) { return 1 << e; }

} // namespace

WaveletFamily wavelet_family_from_string(const std::string& name) {
    if (name == "db1" || name == "haar") return WaveletFamily::db1;
    if (name == "db2") return WaveletFamily::db2;
    if (name == "db3") return WaveletFamily::db3;
    if (name == "db4") return WaveletFamily::db4;
    throw ConfigError("unsupported wavelet family: " + name + " (expected db1..db4)");
}

std::string to_string(WaveletFamily family) {
    switch (family) {
        case WaveletFamily::db1: return "db1";
        case WaveletFamily::db2: return "db2";
        case WaveletFamily::db3: return "db3";
        case WaveletFamily::db4: return "db4";
    }
    return "db?";
}

void WaveletSpec::validate() const {
    if (levels < 1 || levels > 5) {
        throw ConfigError("wavelet levels must be in [1, 5], got " + std::to_string(levels));
    }
}

FilterPair base_filters(WaveletFamily family) {
    const std::vector<double>* low = nullptr;
    switch (family) {
        case WaveletFamily::db1: low = &kDb1; break;
        case WaveletFamily::db2: low = &kDb2; break;
        case WaveletFamily::db3: low = &kDb3; break;
        case WaveletFamily::db4: low = &kDb4; break;
    }
    FilterPair pair;
    pair.low_pass = *low;
    const std::size_t taps = low->size();
    pair.high_pass.resize(taps);
    for (std::size_t k = 0; k < taps; ++k) {
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        pair.high_pass[k] = sign * (*low)[taps - 1 - k];
    }
    return pair;
}

FilterPair make_filters(const WaveletSpec& spec, int level) {
    spec.validate();
    if (level < 1 || level > spec.levels) {
        throw ConfigError("filter level " + std::to_string(level) + " outside [1, " +
                          std::to_string(spec.levels) + "]");
    }
    const FilterPair base = base_filters(spec.family);
    const int zeros = pow2(level - 1) - 1;
    auto upsample = [&](const std::vector<double>& taps) {
        std::vector<double> out((taps.size() - 1) * (zeros + 1) + 1, 0.0);
        for (std::size_t k = 0; k < taps.size(); ++k) {
            out[k * (zeros + 1)] = taps[k];
        }
        return out;
    };
    return FilterPair{upsample(base.low_pass), upsample(base.high_pass)};
}

SubbandMatrix::SubbandMatrix(WaveletSpec spec, std::size_t source_length)
    : spec_(spec), n_(source_length) {
    spec_.validate();
    bands_.assign(channels(), std::vector<double>(n_, 0.0));
}

std::vector<double>& SubbandMatrix::approximation(int level) {
    return bands_.at(static_cast<std::size_t>(level) - 1);
}
const std::vector<double>& SubbandMatrix::approximation(int level) const {
    return bands_.at(static_cast<std::size_t>(level) - 1);
}
std::vector<double>& SubbandMatrix::detail(int level) {
    return bands_.at(static_cast<std::size_t>(spec_.levels + level) - 1);
}
const std::vector<double>& SubbandMatrix::detail(int level) const {
    return bands_.at(static_cast<std::size_t>(spec_.levels + level) - 1);
}

std::string SubbandMatrix::channel_name(std::size_t c, int levels) {
    const auto l = static_cast<std::size_t>(levels);
    if (c < l) return "A" + std::to_string(c + 1);
    return "D" + std::to_string(c - l + 1);
}

std::vector<double> SubbandMatrix::row(std::size_t t) const {
    std::vector<double> out(channels());
    for (std::size_t c = 0; c < channels(); ++c) out[c] = bands_[c].at(t);
    return out;
}

void SubbandMatrix::trim(std::size_t keep) {
    if (keep > n_) {
        throw UsageError("cannot trim subbands of length " + std::to_string(n_) + " to " +
                         std::to_string(keep));
    }
    for (auto& band : bands_) band.resize(keep);
    n_ = keep;
}

void SubbandMatrix::check_well_formed() const {
    spec_.validate();
    if (bands_.size() != channels()) {
        throw ShapeError("subband matrix has " + std::to_string(bands_.size()) +
                         " bands, expected " + std::to_string(channels()));
    }
    for (std::size_t c = 0; c < bands_.size(); ++c) {
        if (bands_[c].size() != n_) {
            throw ShapeError("subband " + channel_name(c, spec_.levels) + " has length " +
                             std::to_string(bands_[c].size()) + ", expected " +
                             std::to_string(n_));
        }
    }
}

SubbandMatrix decompose(const std::vector<double>& signal, const WaveletSpec& spec) {
    spec.validate();
    const std::size_t n = signal.size();
    const std::size_t block = static_cast<std::size_t>(pow2(spec.levels));
    if (n < block || n % block != 0) {
        std::ostringstream msg;
        msg << "signal length " << n << " must be a positive multiple of 2^levels = " << block;
        throw ShapeError(msg.str());
    }
    for (double v : signal) {
        if (!std::isfinite(v)) throw DataError("signal contains a non-finite value");
    }

    const FilterPair base = base_filters(spec.family);
    const std::size_t taps = base.low_pass.size();

    SubbandMatrix out(spec, n);
    std::vector<double> approx = signal;  // A_0
    std::vector<double> next(n);
    for (int level = 1; level <= spec.levels; ++level) {
        const std::size_t stride = static_cast<std::size_t>(pow2(level - 1));
        std::vector<double>& detail = out.detail(level);
        for (std::size_t t = 0; t < n; ++t) {
            double a = 0.0, d = 0.0;
            for (std::size_t k = 0; k < taps; ++k) {
                const double x = approx[(t + k * stride) % n];
                a += base.low_pass[k] * x;
                d += base.high_pass[k] * x;
            }
            next[t] = a;
            detail[t] = d;
        }
        out.approximation(level) = next;
        approx.swap(next);
    }
    return out;
}

std::vector<double> reconstruct(const SubbandMatrix& subbands) {
    subbands.check_well_formed();
    const WaveletSpec& spec = subbands.spec();
    const std::size_t n = subbands.source_length();
    const FilterPair base = base_filters(spec.family);
    const std::size_t taps = base.low_pass.size();

    // Adjoint synthesis halved at each level averages the two interleaved
    // decimated reconstructions of the redundant transform.
    std::vector<double> approx = subbands.approximation(spec.levels);
    std::vector<double> prev(n);
    for (int level = spec.levels; level >= 1; --level) {
        const std::size_t stride = static_cast<std::size_t>(pow2(level - 1));
        const std::vector<double>& detail = subbands.detail(level);
        for (std::size_t t = 0; t < n; ++t) {
            double acc = 0.0;
            for (std::size_t k = 0; k < taps; ++k) {
                const std::size_t idx = (t + n * taps - k * stride) % n;
                acc += base.low_pass[k] * approx[idx] + base.high_pass[k] * detail[idx];
            }
            prev[t] = 0.5 * acc;
        }
        approx.swap(prev);
    }
    return approx;
}

} // namespace powercast::swt
