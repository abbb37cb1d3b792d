#ifndef POWERCAST_DATA_HPP
#define POWERCAST_DATA_HPP

#include "powercast/swt.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace powercast::data {

enum class Resolution { minutely, hourly, daily, weekly };

Resolution resolution_from_string(const std::string& name);
std::string to_string(Resolution resolution);
std::int64_t step_seconds(Resolution resolution);

// Naive civil time (no time zones); epoch seconds relative to 1970-01-01.
struct DateTime {
    int year = 1970;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;
    int second = 0;
};

std::int64_t to_epoch_seconds(const DateTime& dt);
DateTime from_epoch_seconds(std::int64_t seconds);
/// "YYYY-MM-DD HH:MM:SS"
std::string format_timestamp(std::int64_t seconds);
std::int64_t parse_timestamp(const std::string& text);

/// Uniformly spaced univariate power sequence in kW. Timestamps are implied
/// by start + i * step_seconds(resolution), hence strictly increasing.
struct TimeSeries {
    std::int64_t start = 0;
    Resolution resolution = Resolution::minutely;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    std::int64_t timestamp(std::size_t i) const {
        return start + static_cast<std::int64_t>(i) * step_seconds(resolution);
    }
    /// Index whose timestamp equals `ts` exactly, if in range.
    std::optional<std::size_t> index_of(std::int64_t ts) const;
};

struct ParseReport {
    std::size_t data_rows = 0;
    std::size_t missing_values = 0;
    std::size_t malformed_rows = 0;
    std::size_t gap_minutes = 0;
};

/// Read the UCI household consumption text format: semicolon-separated,
/// header row, dd/mm/yyyy;hh:mm:ss;Global_active_power;...; "?" marks a
/// missing measurement. Missing values and skipped minutes become NaN.
/// Malformed rows are skipped (logged to stderr); more than 5% of them is an
/// error.
TimeSeries parse_dataset(const std::string& path, ParseReport* report = nullptr);

struct ImputeReport {
    std::size_t forward_filled = 0;
    std::size_t seasonal_filled = 0;
    std::size_t back_filled = 0;
    std::size_t total() const { return forward_filled + seasonal_filled + back_filled; }
};

/// Fill gaps: forward-fill up to 60 consecutive minutes; longer gaps take the
/// mean of same-time-of-day values from the 7 adjacent days on each side;
/// a leading gap back-fills from the first observation.
TimeSeries impute(const TimeSeries& series, ImputeReport* report = nullptr);

/// Mean of constituent minutes per bucket, buckets aligned to hour/day/ISO
/// week starts; partial edge buckets are dropped. kW is a rate, so averaging
/// preserves units.
TimeSeries resample(const TimeSeries& minutely, Resolution target);

struct SplitSeries {
    TimeSeries train;
    TimeSeries test;
    std::int64_t boundary = 0;
};

/// Calendar split: boundary is midnight of the first timestamp's date plus
/// three years; buckets starting before it are train, the rest test.
/// `boundary_override` (epoch seconds) replaces the computed boundary so all
/// resamplings of one dataset split at the same instant.
SplitSeries split(const TimeSeries& series, std::int64_t boundary_override = 0);

/// The split instant a dataset starting at `first_timestamp` uses.
std::int64_t split_boundary(std::int64_t first_timestamp);

/// Per-subband min/max scaling to [0,1], computed on the training split.
/// Degenerate channels (min == max) shift only and are flagged.
struct NormStats {
    std::vector<double> minimum;
    std::vector<double> maximum;

    bool empty() const { return minimum.empty(); }
    std::size_t channels() const { return minimum.size(); }
    bool degenerate(std::size_t c) const { return maximum[c] == minimum[c]; }
    double scale(std::size_t c) const { return degenerate(c) ? 1.0 : maximum[c] - minimum[c]; }
    double normalize_value(std::size_t c, double v) const {
        return (v - minimum[c]) / scale(c);
    }
    double denormalize_value(std::size_t c, double v) const {
        return v * scale(c) + minimum[c];
    }
};

NormStats compute_norm_stats(const swt::SubbandMatrix& subbands);
/// Values outside the training range map outside [0,1] and are not clipped.
swt::SubbandMatrix normalize(const swt::SubbandMatrix& subbands, const NormStats& stats);
swt::SubbandMatrix denormalize(const swt::SubbandMatrix& subbands, const NormStats& stats);

/// Sliding supervised pairs: window i holds rows [i, i+n) of the coefficient
/// matrix (time-major, 2L features per step); its target is row i+n.
struct SupervisedWindows {
    std::size_t count = 0;
    std::size_t lookback = 0;
    std::size_t features = 0;
    std::vector<double> inputs;   // count x lookback x features
    std::vector<double> targets;  // count x features

    const double* input_window(std::size_t i) const {
        return inputs.data() + i * lookback * features;
    }
    const double* target(std::size_t i) const { return targets.data() + i * features; }
    /// Coefficient-matrix row index the target of window i lives at.
    std::size_t target_row(std::size_t i) const { return i + lookback; }
};

SupervisedWindows make_windows(const swt::SubbandMatrix& subbands, int lookback);

/// Time-major copy of a subband matrix: row t holds [A1..AL, D1..DL](t).
std::vector<double> to_rows(const swt::SubbandMatrix& subbands);

// Canonical CSV interfaces ("timestamp,value_kw" and subband dumps).
void write_series_csv(const TimeSeries& series, const std::string& path);
TimeSeries read_series_csv(const std::string& path);
void write_subbands_csv(const swt::SubbandMatrix& subbands, const std::string& path);
swt::SubbandMatrix read_subbands_csv(const std::string& path, swt::WaveletFamily family);

// --- Synthetic stand-in for the UCI dataset -------------------------------

/// Deterministic household-load generator: annual and weekday cycles, two
/// intraday peaks, a slow autoregressive level, appliance bursts and noise.
struct SynthConfig {
    std::int64_t start = 0;            // defaults to 2006-12-16 17:24:00 when 0
    std::size_t minutes = 2075259;
    std::uint64_t seed = 2006;
    double missing_fraction = 0.0;     // fraction of minutes written as "?"
};

TimeSeries synthesize_minutely(const SynthConfig& config);
/// Write a series in the UCI text format (with derived filler columns), so
/// parse_dataset can ingest it. Missing entries come from config.seed.
void write_uci_file(const TimeSeries& minutely, const SynthConfig& config,
                    const std::string& path);

} // namespace powercast::data

#endif
