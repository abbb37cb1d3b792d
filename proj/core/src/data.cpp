#include "powercast/data.hpp"

#include "powercast/errors.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace powercast::data {

Resolution resolution_from_string(const std::string& name) {
    if (name == "minutely") return Resolution::minutely;
    if (name == "hourly") return Resolution::hourly;
    if (name == "daily") return Resolution::daily;
    if (name == "weekly") return Resolution::weekly;
    throw ConfigError("unknown resolution: " + name +
                      " (expected minutely|hourly|daily|weekly)");
}

std::string to_string(Resolution resolution) {
    switch (resolution) {
        case Resolution::minutely: return "minutely";
        case Resolution::hourly: return "hourly";
        case Resolution::daily: return "daily";
        case Resolution::weekly: return "weekly";
    }
    return "?";
}

std::int64_t step_seconds(Resolution resolution) {
    switch (resolution) {
        case Resolution::minutely: return 60;
        case Resolution::hourly: return 3600;
        case Resolution::daily: return 86400;
        case Resolution::weekly: return 7 * 86400;
    }
    return 60;
}

// ---------------------------------------------------------------------------
// Civil time
// ---------------------------------------------------------------------------

namespace {

// Hinnant's civil-date algorithms.
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y = static_cast<int>(yy + (m <= 2));
}

unsigned days_in_month(int year, unsigned month) {
    static const unsigned lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month == 2) {
        const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
        return leap ? 29 : 28;
    }
    return lengths[month - 1];
}

} // namespace

std::int64_t to_epoch_seconds(const DateTime& dt) {
    return days_from_civil(dt.year, static_cast<unsigned>(dt.month),
                           static_cast<unsigned>(dt.day)) * 86400 +
           dt.hour * 3600 + dt.minute * 60 + dt.second;
}

DateTime from_epoch_seconds(std::int64_t seconds) {
    std::int64_t days = seconds / 86400;
    std::int64_t rem = seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    DateTime dt;
    unsigned m, d;
    civil_from_days(days, dt.year, m, d);
    dt.month = static_cast<int>(m);
    dt.day = static_cast<int>(d);
    dt.hour = static_cast<int>(rem / 3600);
    dt.minute = static_cast<int>(rem % 3600 / 60);
    dt.second = static_cast<int>(rem % 60);
    return dt;
}

std::string format_timestamp(std::int64_t seconds) {
    const DateTime dt = from_epoch_seconds(seconds);
    char buffer[24];
    std::snprintf(buffer, sizeof(buffer), "%04d-%02d-%02d %02d:%02d:%02d", dt.year, dt.month,
                  dt.day, dt.hour, dt.minute, dt.second);
    return buffer;
}

std::int64_t parse_timestamp(const std::string& text) {
    DateTime dt;
    if (std::sscanf(text.c_str(), "%d-%d-%d %d:%d:%d", &dt.year, &dt.month, &dt.day, &dt.hour,
                    &dt.minute, &dt.second) != 6) {
        throw DataError("cannot parse timestamp '" + text + "' (want YYYY-MM-DD HH:MM:SS)");
    }
    return to_epoch_seconds(dt);
}

std::optional<std::size_t> TimeSeries::index_of(std::int64_t ts) const {
    const std::int64_t step = step_seconds(resolution);
    if (ts < start || (ts - start) % step != 0) return std::nullopt;
    const auto idx = static_cast<std::size_t>((ts - start) / step);
    if (idx >= values.size()) return std::nullopt;
    return idx;
}

// ---------------------------------------------------------------------------
// UCI parsing
// ---------------------------------------------------------------------------

namespace {

bool parse_double_field(const std::string& field, double& out) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto result = std::from_chars(begin, end, out);
    return result.ec == std::errc() && result.ptr == end;
}

bool parse_uci_stamp(const std::string& date, const std::string& time, std::int64_t& out) {
    int d, m, y, hh, mm, ss;
    if (std::sscanf(date.c_str(), "%d/%d/%d", &d, &m, &y) != 3) return false;
    if (std::sscanf(time.c_str(), "%d:%d:%d", &hh, &mm, &ss) != 3) return false;
    if (m < 1 || m > 12 || d < 1 || d > 31 || hh < 0 || hh > 23 || mm < 0 || mm > 59) {
        return false;
    }
    out = to_epoch_seconds(DateTime{y, m, d, hh, mm, ss});
    return true;
}

} // namespace

TimeSeries parse_dataset(const std::string& path, ParseReport* report) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset: " + path);

    TimeSeries series;
    series.resolution = Resolution::minutely;
    ParseReport local;
    std::int64_t expected = 0;
    bool have_start = false;
    std::size_t line_number = 0;
    std::string line;
    std::vector<std::string> fields;

    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("Date;", 0) == 0) continue;  // header

        fields.clear();
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const std::size_t next = line.find(';', pos);
            if (next == std::string::npos) {
                fields.push_back(line.substr(pos));
                break;
            }
            fields.push_back(line.substr(pos, next - pos));
            pos = next + 1;
        }

        auto malformed = [&](const char* why) {
            ++local.malformed_rows;
            std::cerr << "parse_dataset: skipping line " << line_number << " (" << why << ")\n";
        };

        if (fields.size() < 3) {
            malformed("too few fields");
            continue;
        }
        std::int64_t stamp = 0;
        if (!parse_uci_stamp(fields[0], fields[1], stamp)) {
            malformed("bad date/time");
            continue;
        }
        double power = std::numeric_limits<double>::quiet_NaN();
        bool missing = fields[2] == "?" || fields[2].empty();
        if (!missing && !parse_double_field(fields[2], power)) {
            malformed("bad power value");
            continue;
        }

        if (!have_start) {
            series.start = stamp;
            expected = stamp;
            have_start = true;
        }
        if (stamp < expected) {
            malformed("timestamp out of order");
            continue;
        }
        // Absent minutes count as missing measurements.
        while (expected < stamp) {
            series.values.push_back(std::numeric_limits<double>::quiet_NaN());
            ++local.gap_minutes;
            ++local.missing_values;
            expected += 60;
        }
        series.values.push_back(missing ? std::numeric_limits<double>::quiet_NaN() : power);
        if (missing) ++local.missing_values;
        ++local.data_rows;
        expected += 60;
    }

    if (local.data_rows == 0) throw DataError("dataset contains no data rows: " + path);
    if (local.malformed_rows * 20 > local.data_rows + local.malformed_rows) {
        throw DataError("more than 5% malformed rows in " + path + " (" +
                        std::to_string(local.malformed_rows) + " of " +
                        std::to_string(local.data_rows + local.malformed_rows) + ")");
    }
    if (report) *report = local;
    return series;
}

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

TimeSeries impute(const TimeSeries& series, ImputeReport* report) {
    constexpr std::size_t kForwardLimit = 60;
    constexpr std::int64_t kMinutesPerDay = 1440;

    TimeSeries out = series;
    ImputeReport local;
    const std::vector<double>& original = series.values;
    std::vector<double>& values = out.values;
    const std::size_t n = values.size();

    auto seasonal_mean = [&](std::size_t idx) -> std::optional<double> {
        double sum = 0.0;
        int count = 0;
        for (int day = 1; day <= 7; ++day) {
            for (const std::int64_t sign : {-1, +1}) {
                const std::int64_t j = static_cast<std::int64_t>(idx) +
                                       sign * day * kMinutesPerDay;
                if (j < 0 || j >= static_cast<std::int64_t>(n)) continue;
                const double v = original[static_cast<std::size_t>(j)];
                if (!std::isnan(v)) {
                    sum += v;
                    ++count;
                }
            }
        }
        if (count == 0) return std::nullopt;
        return sum / count;
    };

    std::size_t i = 0;
    while (i < n) {
        if (!std::isnan(values[i])) {
            ++i;
            continue;
        }
        std::size_t run_end = i;
        while (run_end < n && std::isnan(values[run_end])) ++run_end;
        const std::size_t run = run_end - i;

        if (i == 0) {
            // Leading gap: back-fill from the first observation.
            if (run_end == n) throw DataError("series is entirely missing");
            for (std::size_t j = i; j < run_end; ++j) values[j] = values[run_end];
            local.back_filled += run;
        } else if (run <= kForwardLimit) {
            for (std::size_t j = i; j < run_end; ++j) values[j] = values[i - 1];
            local.forward_filled += run;
        } else {
            for (std::size_t j = i; j < run_end; ++j) {
                if (auto mean = seasonal_mean(j)) {
                    values[j] = *mean;
                    ++local.seasonal_filled;
                } else {
                    values[j] = values[j - 1];
                    ++local.forward_filled;
                }
            }
        }
        i = run_end;
    }
    if (report) *report = local;
    return out;
}

// ---------------------------------------------------------------------------
// Resampling and splitting
// ---------------------------------------------------------------------------

namespace {

/// Start of the bucket containing `ts` for a resolution. Weeks are ISO
/// (Monday 00:00); 1970-01-01 was a Thursday.
std::int64_t bucket_start(std::int64_t ts, Resolution resolution) {
    switch (resolution) {
        case Resolution::minutely: return ts - ts % 60;
        case Resolution::hourly: return ts - ts % 3600;
        case Resolution::daily: return ts - ts % 86400;
        case Resolution::weekly: {
            const std::int64_t days = ts / 86400;
            const std::int64_t dow = (days + 3) % 7;  // Monday == 0
            return (days - dow) * 86400;
        }
    }
    return ts;
}

} // namespace

TimeSeries resample(const TimeSeries& minutely, Resolution target) {
    if (minutely.resolution != Resolution::minutely) {
        throw UsageError("resample expects a minutely source series");
    }
    for (double v : minutely.values) {
        if (std::isnan(v)) throw DataError("resample requires an imputed series (found NaN)");
    }
    if (target == Resolution::minutely) return minutely;

    const std::int64_t step = step_seconds(target);
    const std::size_t per_bucket = static_cast<std::size_t>(step / 60);
    const std::int64_t first_aligned = [&] {
        const std::int64_t s = bucket_start(minutely.start, target);
        return s == minutely.start ? s : s + step;
    }();

    TimeSeries out;
    out.resolution = target;
    out.start = first_aligned;
    const std::int64_t offset_minutes = (first_aligned - minutely.start) / 60;
    if (offset_minutes < 0 || static_cast<std::size_t>(offset_minutes) >= minutely.size()) {
        throw DataError("series too short to cover one full " + to_string(target) + " bucket");
    }
    std::size_t idx = static_cast<std::size_t>(offset_minutes);
    while (idx + per_bucket <= minutely.size()) {
        double sum = 0.0;
        for (std::size_t j = 0; j < per_bucket; ++j) sum += minutely.values[idx + j];
        out.values.push_back(sum / static_cast<double>(per_bucket));
        idx += per_bucket;
    }
    if (out.values.empty()) {
        throw DataError("series too short to cover one full " + to_string(target) + " bucket");
    }
    return out;
}

std::int64_t split_boundary(std::int64_t first_timestamp) {
    DateTime first = from_epoch_seconds(first_timestamp);
    DateTime boundary_dt{first.year + 3, first.month, first.day, 0, 0, 0};
    const unsigned max_day = days_in_month(boundary_dt.year,
                                           static_cast<unsigned>(boundary_dt.month));
    boundary_dt.day = std::min<int>(boundary_dt.day, static_cast<int>(max_day));
    return to_epoch_seconds(boundary_dt);
}

SplitSeries split(const TimeSeries& series, std::int64_t boundary_override) {
    if (series.values.empty()) throw ConfigError("cannot split an empty series");
    const std::int64_t boundary =
        boundary_override != 0 ? boundary_override : split_boundary(series.start);

    SplitSeries out;
    out.boundary = boundary;
    out.train.resolution = out.test.resolution = series.resolution;
    std::size_t cut = series.size();
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series.timestamp(i) >= boundary) {
            cut = i;
            break;
        }
    }
    if (cut == 0 || cut == series.size()) {
        throw ConfigError("series does not span the three-year training boundary " +
                          format_timestamp(boundary));
    }
    out.train.start = series.start;
    out.train.values.assign(series.values.begin(), series.values.begin() + cut);
    out.test.start = series.timestamp(cut);
    out.test.values.assign(series.values.begin() + cut, series.values.end());
    return out;
}

// ---------------------------------------------------------------------------
// Normalization and windows
// ---------------------------------------------------------------------------

NormStats compute_norm_stats(const swt::SubbandMatrix& subbands) {
    subbands.check_well_formed();
    NormStats stats;
    const std::size_t channels = subbands.channels();
    stats.minimum.resize(channels);
    stats.maximum.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        const auto& band = subbands.channel(c);
        double lo = band[0], hi = band[0];
        for (double v : band) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        stats.minimum[c] = lo;
        stats.maximum[c] = hi;
        if (lo == hi) {
            std::cerr << "normalize: degenerate subband "
                      << swt::SubbandMatrix::channel_name(c, subbands.spec().levels)
                      << " (min == max == " << lo << "), shifting only\n";
        }
    }
    return stats;
}

namespace {

swt::SubbandMatrix map_subbands(const swt::SubbandMatrix& subbands, const NormStats& stats,
                                bool forward) {
    subbands.check_well_formed();
    if (stats.channels() != subbands.channels()) {
        throw ShapeError("normalization stats cover " + std::to_string(stats.channels()) +
                         " channels, subbands have " + std::to_string(subbands.channels()));
    }
    swt::SubbandMatrix out = subbands;
    for (std::size_t c = 0; c < out.channels(); ++c) {
        auto& band = out.channel(c);
        for (double& v : band) {
            v = forward ? stats.normalize_value(c, v) : stats.denormalize_value(c, v);
        }
    }
    return out;
}

} // namespace

swt::SubbandMatrix normalize(const swt::SubbandMatrix& subbands, const NormStats& stats) {
    return map_subbands(subbands, stats, true);
}

swt::SubbandMatrix denormalize(const swt::SubbandMatrix& subbands, const NormStats& stats) {
    return map_subbands(subbands, stats, false);
}

std::vector<double> to_rows(const swt::SubbandMatrix& subbands) {
    const std::size_t n = subbands.source_length();
    const std::size_t channels = subbands.channels();
    std::vector<double> rows(n * channels);
    for (std::size_t c = 0; c < channels; ++c) {
        const auto& band = subbands.channel(c);
        for (std::size_t t = 0; t < n; ++t) rows[t * channels + c] = band[t];
    }
    return rows;
}

SupervisedWindows make_windows(const swt::SubbandMatrix& subbands, int lookback) {
    subbands.check_well_formed();
    const std::size_t n = subbands.source_length();
    if (lookback < 1) throw ConfigError("lookback must be positive");
    const auto nb = static_cast<std::size_t>(lookback);
    if (nb >= n) {
        throw ConfigError("lookback " + std::to_string(lookback) +
                          " must be smaller than the series length " + std::to_string(n));
    }

    SupervisedWindows out;
    out.count = n - nb;
    out.lookback = nb;
    out.features = subbands.channels();
    const std::vector<double> rows = to_rows(subbands);
    out.inputs.resize(out.count * nb * out.features);
    out.targets.resize(out.count * out.features);
    for (std::size_t i = 0; i < out.count; ++i) {
        std::copy_n(rows.data() + i * out.features, nb * out.features,
                    out.inputs.data() + i * nb * out.features);
        std::copy_n(rows.data() + (i + nb) * out.features, out.features,
                    out.targets.data() + i * out.features);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_series_csv(const TimeSeries& series, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "timestamp,value_kw\n";
    char buffer[64];
    for (std::size_t i = 0; i < series.size(); ++i) {
        std::snprintf(buffer, sizeof(buffer), "%.12g", series.values[i]);
        out << format_timestamp(series.timestamp(i)) << ',' << buffer << '\n';
    }
    if (!out) throw DataError("failed writing " + path);
}

TimeSeries read_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open series CSV: " + path);
    std::string line;
    std::vector<std::int64_t> stamps;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.rfind("timestamp", 0) == 0) continue;
        const std::size_t comma = line.rfind(',');
        if (comma == std::string::npos) throw DataError("bad series CSV row: " + line);
        double v = 0.0;
        if (!parse_double_field(line.substr(comma + 1), v)) {
            throw DataError("bad value in series CSV row: " + line);
        }
        stamps.push_back(parse_timestamp(line.substr(0, comma)));
        values.push_back(v);
    }
    if (values.size() < 2) throw DataError("series CSV needs at least two rows: " + path);
    const std::int64_t step = stamps[1] - stamps[0];
    Resolution resolution;
    switch (step) {
        case 60: resolution = Resolution::minutely; break;
        case 3600: resolution = Resolution::hourly; break;
        case 86400: resolution = Resolution::daily; break;
        case 7 * 86400: resolution = Resolution::weekly; break;
        default:
            throw DataError("series CSV step of " + std::to_string(step) +
                            "s is not a supported resolution");
    }
    for (std::size_t i = 1; i < stamps.size(); ++i) {
        if (stamps[i] - stamps[i - 1] != step) {
            throw DataError("series CSV timestamps are not uniformly spaced at row " +
                            std::to_string(i + 1));
        }
    }
    return TimeSeries{stamps[0], resolution, std::move(values)};
}

void write_subbands_csv(const swt::SubbandMatrix& subbands, const std::string& path) {
    subbands.check_well_formed();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << 't';
    for (std::size_t c = 0; c < subbands.channels(); ++c) {
        out << ',' << swt::SubbandMatrix::channel_name(c, subbands.spec().levels);
    }
    out << '\n';
    char buffer[64];
    for (std::size_t t = 0; t < subbands.source_length(); ++t) {
        out << t;
        for (std::size_t c = 0; c < subbands.channels(); ++c) {
            std::snprintf(buffer, sizeof(buffer), "%.17g", subbands.channel(c)[t]);
            out << ',' << buffer;
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + path);
}

swt::SubbandMatrix read_subbands_csv(const std::string& path, swt::WaveletFamily family) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open subband CSV: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty subband CSV: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t columns = 1;
    for (char ch : line) columns += ch == ',';
    if (columns < 3 || (columns - 1) % 2 != 0) {
        throw DataError("subband CSV header must be t,A1..AL,D1..DL: " + path);
    }
    const int levels = static_cast<int>((columns - 1) / 2);

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t pos = line.find(',');  // skip t column
        if (pos == std::string::npos) throw DataError("bad subband CSV row: " + line);
        ++pos;
        while (pos <= line.size()) {
            const std::size_t next = line.find(',', pos);
            const std::string field = next == std::string::npos
                                          ? line.substr(pos)
                                          : line.substr(pos, next - pos);
            double v = 0.0;
            if (!parse_double_field(field, v)) {
                throw DataError("bad subband CSV value: " + field);
            }
            row.push_back(v);
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        if (row.size() != columns - 1) {
            throw DataError("subband CSV row has " + std::to_string(row.size()) +
                            " coefficients, expected " + std::to_string(columns - 1));
        }
        rows.push_back(std::move(row));
    }
    swt::SubbandMatrix out(swt::WaveletSpec{family, levels}, rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t c = 0; c + 1 < columns; ++c) out.channel(c)[t] = rows[t][c];
    }
    return out;
}

} // namespace powercast::data
