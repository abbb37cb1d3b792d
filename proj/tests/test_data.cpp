#include "powercast/data.hpp"

#include "powercast/errors.hpp"
#include "powercast/swt.hpp"
#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

using namespace powercast;
using data::Resolution;
using data::TimeSeries;

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    out << content;
}

constexpr const char* kHeader =
    "Date;Time;Global_active_power;Global_reactive_power;Voltage;Global_intensity;"
    "Sub_metering_1;Sub_metering_2;Sub_metering_3\n";

TimeSeries minutely_series(std::int64_t start, std::vector<double> values) {
    return TimeSeries{start, Resolution::minutely, std::move(values)};
}

} // namespace

TEST_CASE("Timestamp formatting and parsing round-trip", "[data][time]") {
    for (const char* text : {"2006-12-16 17:24:00", "2008-02-29 00:00:00",
                             "2009-12-16 00:00:00", "1999-01-01 23:59:59"}) {
        CHECK(data::format_timestamp(data::parse_timestamp(text)) == text);
    }
    CHECK_THROWS_AS(data::parse_timestamp("yesterday"), DataError);
}

TEST_CASE("UCI rows parse with missing markers and skipped minutes", "[data][parse]") {
    tests::TempDir dir("parse");
    const std::string path = dir.file("uci.txt");
    write_file(path, std::string(kHeader) +
                         "16/12/2006;17:24:00;4.216;0.418;234.84;18.4;0;1;17\n"
                         "16/12/2006;17:25:00;?;?;?;?;?;?;?\n"
                         "16/12/2006;17:26:00;3.520;0.4;234;15;0;1;16\n"
                         "this line is garbage\n"
                         "16/12/2006;17:28:00;3.702;0.4;234;15;0;1;17\n");
    data::ParseReport report;
    const TimeSeries series = data::parse_dataset(path, &report);

    CHECK(report.data_rows == 4);
    CHECK(report.malformed_rows == 1);
    CHECK(report.missing_values == 2);  // one "?", one skipped minute
    CHECK(report.gap_minutes == 1);

    REQUIRE(series.size() == 5);  // 17:24 .. 17:28 inclusive
    CHECK(series.values[0] == 4.216);
    CHECK(std::isnan(series.values[1]));
    CHECK(series.values[2] == 3.520);
    CHECK(std::isnan(series.values[3]));  // the absent 17:27 row
    CHECK(series.values[4] == 3.702);
    CHECK(data::format_timestamp(series.timestamp(0)) == "2006-12-16 17:24:00");
}

TEST_CASE("More than 5% malformed rows is a hard error", "[data][parse][error]") {
    tests::TempDir dir("parse_bad");
    const std::string path = dir.file("uci.txt");
    std::string content = kHeader;
    content += "16/12/2006;17:24:00;1.0;0;230;4;0;0;0\n";
    for (int i = 0; i < 5; ++i) content += "complete nonsense row\n";
    write_file(path, content);
    CHECK_THROWS_AS(data::parse_dataset(path), DataError);
    CHECK_THROWS_AS(data::parse_dataset(dir.file("missing.txt")), DataError);
}

TEST_CASE("Short gaps forward-fill", "[data][impute]") {
    TimeSeries series = minutely_series(0, {2.5, NAN, NAN, NAN, 1.0});
    data::ImputeReport report;
    const TimeSeries filled = data::impute(series, &report);
    CHECK(filled.values == std::vector<double>{2.5, 2.5, 2.5, 2.5, 1.0});
    CHECK(report.forward_filled == 3);
    CHECK(report.total() == 3);
}

TEST_CASE("Imputation without gaps is the identity", "[data][impute]") {
    const TimeSeries series = minutely_series(0, {1.0, 2.0, 3.0});
    data::ImputeReport report;
    CHECK(data::impute(series, &report).values == series.values);
    CHECK(report.total() == 0);
}

TEST_CASE("Leading gaps back-fill from the first observation", "[data][impute]") {
    const TimeSeries series = minutely_series(0, {NAN, NAN, 4.0, 5.0});
    data::ImputeReport report;
    const TimeSeries filled = data::impute(series, &report);
    CHECK(filled.values == std::vector<double>{4.0, 4.0, 4.0, 5.0});
    CHECK(report.back_filled == 2);
}

TEST_CASE("Long gaps use the same-minute mean of adjacent days", "[data][impute]") {
    // Three days of minutes: value equals the day index everywhere, with a
    // 61-minute hole in the middle of day 1.
    std::vector<double> values(3 * 1440);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = static_cast<double>(i / 1440 + 1);
    }
    const std::size_t hole = 1440 + 700;
    for (std::size_t i = hole; i < hole + 61; ++i) values[i] = NAN;

    data::ImputeReport report;
    const TimeSeries filled = data::impute(minutely_series(0, values), &report);
    CHECK(report.seasonal_filled == 61);
    for (std::size_t i = hole; i < hole + 61; ++i) {
        CHECK(filled.values[i] == Catch::Approx(2.0));  // mean of day 0 (1) and day 2 (3)
    }
}

TEST_CASE("Imputation never changes observed values", "[data][impute][property]") {
    auto values = tests::random_signal(600, 77, 0.5, 3.0);
    auto holes = values;
    for (std::size_t i : {5u, 6u, 100u, 101u, 102u, 400u}) holes[i] = NAN;
    const TimeSeries filled = data::impute(minutely_series(0, holes));
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isnan(holes[i])) CHECK(filled.values[i] == values[i]);
    }
}

TEST_CASE("Hourly resampling averages aligned buckets", "[data][resample]") {
    // Start at 17:24; the first full hour begins at 18:00.
    const std::int64_t start = data::parse_timestamp("2006-12-16 17:24:00");
    std::vector<double> values(36 + 120, 2.0);           // 17:24..17:59 then two hours
    for (std::size_t i = 36; i < 96; ++i) values[i] = 2.0;   // 18:00..18:59
    for (std::size_t i = 96; i < 156; ++i) values[i] = 4.0;  // 19:00..19:59
    const TimeSeries hourly = data::resample(minutely_series(start, values),
                                             Resolution::hourly);
    REQUIRE(hourly.size() == 2);
    CHECK(data::format_timestamp(hourly.timestamp(0)) == "2006-12-16 18:00:00");
    CHECK(hourly.values[0] == Catch::Approx(2.0));
    CHECK(hourly.values[1] == Catch::Approx(4.0));
}

TEST_CASE("Weekly buckets start on ISO Mondays", "[data][resample]") {
    // 2006-12-16 is a Saturday; the first full ISO week starts Monday the 18th.
    const std::int64_t start = data::parse_timestamp("2006-12-16 00:00:00");
    const std::vector<double> values(3 * 7 * 1440, 1.5);
    const TimeSeries weekly = data::resample(minutely_series(start, values),
                                             Resolution::weekly);
    REQUIRE(weekly.size() == 2);  // 18th..24th and 25th..31st fit; the tail is partial
    CHECK(data::format_timestamp(weekly.timestamp(0)) == "2006-12-18 00:00:00");
    CHECK(weekly.values[0] == Catch::Approx(1.5));
}

TEST_CASE("Resolution hierarchy is consistent", "[data][resample][property]") {
    const std::int64_t start = data::parse_timestamp("2007-01-01 00:00:00");
    const auto values = tests::random_signal(2 * 1440, 88, 0.2, 3.0);
    const TimeSeries minutely = minutely_series(start, values);
    const TimeSeries hourly = data::resample(minutely, Resolution::hourly);
    const TimeSeries daily = data::resample(minutely, Resolution::daily);
    REQUIRE(hourly.size() == 48);
    REQUIRE(daily.size() == 2);
    for (std::size_t d = 0; d < 2; ++d) {
        double mean = 0.0;
        for (std::size_t h = 0; h < 24; ++h) mean += hourly.values[d * 24 + h];
        mean /= 24.0;
        CHECK(std::fabs(mean - daily.values[d]) < 1e-9);
    }
}

TEST_CASE("Resampling rejects NaN and non-minutely input", "[data][resample][error]") {
    CHECK_THROWS_AS(data::resample(minutely_series(0, {1.0, NAN}), Resolution::hourly),
                    DataError);
    const TimeSeries hourly{0, Resolution::hourly, {1.0, 2.0}};
    CHECK_THROWS_AS(data::resample(hourly, Resolution::daily), UsageError);
}

TEST_CASE("Split boundary is midnight three years after the first timestamp",
          "[data][split]") {
    CHECK(data::format_timestamp(
              data::split_boundary(data::parse_timestamp("2006-12-16 17:24:00"))) ==
          "2009-12-16 00:00:00");

    // Four years of daily data starting 2006-12-17.
    const std::int64_t start = data::parse_timestamp("2006-12-17 00:00:00");
    std::vector<double> values(4 * 365, 1.0);
    const TimeSeries daily{start, Resolution::daily, values};
    const data::SplitSeries parts = data::split(daily);
    CHECK(data::format_timestamp(parts.boundary) == "2009-12-17 00:00:00");
    CHECK(parts.train.size() + parts.test.size() == daily.size());
    CHECK(data::format_timestamp(parts.test.timestamp(0)) == "2009-12-17 00:00:00");

    // Re-splitting the same series reproduces the same boundary.
    const data::SplitSeries again = data::split(daily);
    CHECK(again.boundary == parts.boundary);
    CHECK(again.train.size() == parts.train.size());

    // An explicit boundary overrides the calendar rule.
    const data::SplitSeries overridden =
        data::split(daily, data::parse_timestamp("2008-01-01 00:00:00"));
    CHECK(data::format_timestamp(overridden.test.timestamp(0)) == "2008-01-01 00:00:00");
}

TEST_CASE("Split rejects series that do not span the boundary", "[data][split][error]") {
    const TimeSeries sliver{0, Resolution::daily, {1.0, 2.0, 3.0}};
    CHECK_THROWS_AS(data::split(sliver), ConfigError);
}

TEST_CASE("Min-max normalization maps the training range to [0,1]", "[data][normalize]") {
    swt::SubbandMatrix subbands(swt::WaveletSpec{swt::WaveletFamily::db1, 1}, 3);
    subbands.channel(0) = {0.0, 5.0, 10.0};
    subbands.channel(1) = {-1.0, 0.0, 1.0};
    const data::NormStats stats = data::compute_norm_stats(subbands);
    const swt::SubbandMatrix normalized = data::normalize(subbands, stats);
    CHECK(normalized.channel(0) == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(normalized.channel(1) == std::vector<double>{0.0, 0.5, 1.0});

    const swt::SubbandMatrix round = data::denormalize(normalized, stats);
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t t = 0; t < 3; ++t) {
            CHECK(round.channel(c)[t] == Catch::Approx(subbands.channel(c)[t]).margin(1e-12));
        }
    }
}

TEST_CASE("Values outside the training range are not clipped", "[data][normalize]") {
    data::NormStats stats;
    stats.minimum = {0.0};
    stats.maximum = {10.0};
    CHECK(stats.normalize_value(0, 15.0) == Catch::Approx(1.5));
    CHECK(stats.normalize_value(0, -5.0) == Catch::Approx(-0.5));
}

TEST_CASE("Degenerate subbands shift without scaling", "[data][normalize]") {
    swt::SubbandMatrix subbands(swt::WaveletSpec{swt::WaveletFamily::db1, 1}, 3);
    subbands.channel(0) = {4.0, 4.0, 4.0};
    subbands.channel(1) = {1.0, 2.0, 3.0};
    const data::NormStats stats = data::compute_norm_stats(subbands);
    CHECK(stats.degenerate(0));
    CHECK_FALSE(stats.degenerate(1));
    const swt::SubbandMatrix normalized = data::normalize(subbands, stats);
    CHECK(normalized.channel(0) == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(stats.denormalize_value(0, 0.0) == 4.0);
}

TEST_CASE("Sliding windows pair each span with the next row", "[data][windows]") {
    swt::SubbandMatrix subbands(swt::WaveletSpec{swt::WaveletFamily::db1, 1}, 10);
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t t = 0; t < 10; ++t) {
            subbands.channel(c)[t] = static_cast<double>(10 * c + t);
        }
    }
    const data::SupervisedWindows windows = data::make_windows(subbands, 3);
    CHECK(windows.count == 7);
    CHECK(windows.lookback == 3);
    CHECK(windows.features == 2);

    // Window 0 target is the coefficient vector at row 3.
    CHECK(windows.target(0)[0] == 3.0);
    CHECK(windows.target(0)[1] == 13.0);
    CHECK(windows.target_row(0) == 3);

    // Window 0 inputs are rows 0..2.
    CHECK(windows.input_window(0)[0] == 0.0);
    CHECK(windows.input_window(0)[1] == 10.0);
    CHECK(windows.input_window(0)[2 * 2] == 2.0);

    // Targets reassemble rows lookback..N-1.
    for (std::size_t i = 0; i < windows.count; ++i) {
        CHECK(windows.target(i)[0] == static_cast<double>(i + 3));
    }
    CHECK_THROWS_AS(data::make_windows(subbands, 10), ConfigError);
    CHECK_THROWS_AS(data::make_windows(subbands, 0), ConfigError);
}

TEST_CASE("Series CSV round-trip", "[data][csv]") {
    tests::TempDir dir("csv");
    const TimeSeries series{data::parse_timestamp("2008-05-01 00:00:00"), Resolution::daily,
                            {1.25, 2.5, 0.125, 9.75}};
    const std::string path = dir.file("series.csv");
    data::write_series_csv(series, path);
    const TimeSeries read = data::read_series_csv(path);
    CHECK(read.start == series.start);
    CHECK(read.resolution == Resolution::daily);
    CHECK(read.values == series.values);
}

TEST_CASE("Subband CSV round-trip", "[data][csv]") {
    tests::TempDir dir("csv_sub");
    const auto signal = tests::random_signal(32, 99);
    const swt::WaveletSpec spec{swt::WaveletFamily::db2, 2};
    const swt::SubbandMatrix subbands = swt::decompose(signal, spec);
    const std::string path = dir.file("subbands.csv");
    data::write_subbands_csv(subbands, path);

    const swt::SubbandMatrix read = data::read_subbands_csv(path, swt::WaveletFamily::db2);
    CHECK(read.spec().levels == 2);
    REQUIRE(read.source_length() == 32);
    for (std::size_t c = 0; c < subbands.channels(); ++c) {
        for (std::size_t t = 0; t < 32; ++t) {
            CHECK(read.channel(c)[t] == subbands.channel(c)[t]);  // %.17g is lossless
        }
    }
}

TEST_CASE("Synthetic generator is deterministic and plausibly calibrated",
          "[data][synth]") {
    data::SynthConfig config;
    config.minutes = 120 * 1440;  // 120 days is enough for stable statistics
    const TimeSeries a = data::synthesize_minutely(config);
    const TimeSeries b = data::synthesize_minutely(config);
    CHECK(a.values == b.values);

    config.seed = 77;
    const TimeSeries c = data::synthesize_minutely(config);
    CHECK(a.values != c.values);

    const TimeSeries daily = data::resample(a, Resolution::daily);
    double mean = 0.0, sq = 0.0;
    for (double v : daily.values) {
        mean += v;
        sq += v * v;
    }
    mean /= static_cast<double>(daily.size());
    const double sd = std::sqrt(sq / static_cast<double>(daily.size()) - mean * mean);
    CHECK(mean > 0.8);
    CHECK(mean < 1.4);
    CHECK(sd > 0.2);
    CHECK(sd < 0.6);
    for (double v : a.values) CHECK(v > 0.0);
}

TEST_CASE("Synthetic UCI files parse back to the generated series", "[data][synth]") {
    tests::TempDir dir("synth");
    data::SynthConfig config;
    config.minutes = 3000;
    config.missing_fraction = 0.01;
    const TimeSeries series = data::synthesize_minutely(config);
    const std::string path = dir.file("uci.txt");
    data::write_uci_file(series, config, path);

    data::ParseReport report;
    const TimeSeries parsed = data::parse_dataset(path, &report);
    REQUIRE(parsed.size() == series.size());
    CHECK(report.missing_values > 0);
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        if (!std::isnan(parsed.values[i])) {
            CHECK(parsed.values[i] == Catch::Approx(series.values[i]).margin(5e-4));
        }
    }
}
