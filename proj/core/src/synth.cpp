#include "powercast/data.hpp"
#include "powercast/errors.hpp"
#include "powercast/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace powercast::data {

namespace {

constexpr double kTwoPi = 6.283185307179586;

double gaussian_bump(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z);
}

struct SpikeProcess {
    std::mt19937_64 rng;
    std::int64_t next_start = 0;
    struct Event {
        std::int64_t until;
        double amplitude;
    };
    std::vector<Event> active;

    explicit SpikeProcess(std::mt19937_64 generator) : rng(std::move(generator)) {
        next_start = 1 + static_cast<std::int64_t>(rng::uniform_range(rng, 0.0, 240.0));
    }

    double sample(std::int64_t minute, int minute_of_day) {
        while (minute >= next_start) {
            const double gap = -220.0 * std::log(1.0 - rng::uniform_unit(rng));
            const double duration = rng::uniform_range(rng, 8.0, 85.0);
            double amplitude = rng::uniform_range(rng, 0.35, 2.1);
            if (minute_of_day < 6 * 60) amplitude *= 0.3;  // quiet nights
            active.push_back({next_start + static_cast<std::int64_t>(duration), amplitude});
            next_start += std::max<std::int64_t>(1, static_cast<std::int64_t>(gap));
        }
        double total = 0.0;
        for (auto it = active.begin(); it != active.end();) {
            if (minute >= it->until) {
                it = active.erase(it);
            } else {
                total += it->amplitude;
                ++it;
            }
        }
        return total;
    }
};

} // namespace

TimeSeries synthesize_minutely(const SynthConfig& config) {
    if (config.minutes < 2) throw ConfigError("synthesize_minutely needs at least 2 minutes");
    const std::int64_t start =
        config.start != 0 ? config.start
                          : to_epoch_seconds(DateTime{2006, 12, 16, 17, 24, 0});

    TimeSeries series;
    series.start = start;
    series.resolution = Resolution::minutely;
    series.values.resize(config.minutes);

    std::mt19937_64 fast_rng = rng::seeded(config.seed, 1);
    std::mt19937_64 noise_rng = rng::seeded(config.seed, 2);
    std::mt19937_64 drift_rng = rng::seeded(config.seed, 3);
    SpikeProcess spikes(rng::seeded(config.seed, 4));
    std::mt19937_64 slow_rng = rng::seeded(config.seed, 5);

    // Fast level wander (correlation time ~1.5 days): predictable from the
    // recent past but gone a week later.
    const double fast_phi = 0.9995;
    const double fast_sigma = 0.22;
    double fast = 0.0;
    const double fast_innovation = fast_sigma * std::sqrt(1.0 - fast_phi * fast_phi);

    // Slow level wander (correlation time ~3 weeks): dominates how errors
    // grow across a long horizon.
    const double slow_phi = 0.99995;
    const double slow_sigma = 0.20;
    double slow = 0.0;
    const double slow_innovation = slow_sigma * std::sqrt(1.0 - slow_phi * slow_phi);

    // Drift of the evening-peak amplitude, so week-over-week repetition is
    // imperfect.
    const double drift_phi = 0.99998;
    const double drift_sigma = 0.16;
    double drift = 0.0;
    const double drift_innovation = drift_sigma * std::sqrt(1.0 - drift_phi * drift_phi);

    static const double weekday_offset[7] = {0.00, -0.02, -0.01, 0.00,
                                             0.02, 0.10,  0.12};

    for (std::size_t i = 0; i < config.minutes; ++i) {
        const std::int64_t ts = series.timestamp(i);
        const std::int64_t day = ts / 86400;
        const int minute_of_day = static_cast<int>(ts % 86400 / 60);
        const int day_of_week = static_cast<int>((day + 3) % 7);  // Monday == 0
        const double day_of_year = static_cast<double>(day % 365);

        fast = fast_phi * fast + fast_innovation * rng::normal(fast_rng);
        slow = slow_phi * slow + slow_innovation * rng::normal(slow_rng);
        drift = drift_phi * drift + drift_innovation * rng::normal(drift_rng);

        const double annual = 0.30 * std::cos(kTwoPi * (day_of_year - 20.0) / 365.25);
        const double season_boost = 1.0 + 0.55 * annual / 0.30;
        const double morning =
            0.42 * season_boost * gaussian_bump(minute_of_day, 450.0, 80.0);
        const double evening = 0.86 * season_boost * (1.0 + drift) *
                               gaussian_bump(minute_of_day, 1180.0, 140.0);
        const double noise = 0.06 * rng::normal(noise_rng);
        const double burst =
            spikes.sample(static_cast<std::int64_t>(i), minute_of_day);

        const double value = 0.56 + annual + weekday_offset[day_of_week] + morning +
                             evening + fast + slow + burst + noise;
        series.values[i] = std::max(0.076, value);
    }
    return series;
}

void write_uci_file(const TimeSeries& minutely, const SynthConfig& config,
                    const std::string& path) {
    if (minutely.resolution != Resolution::minutely) {
        throw UsageError("write_uci_file expects a minutely series");
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "Date;Time;Global_active_power;Global_reactive_power;Voltage;"
           "Global_intensity;Sub_metering_1;Sub_metering_2;Sub_metering_3\n";

    std::mt19937_64 missing_rng = rng::seeded(config.seed, 9);
    std::size_t missing_left = 0;
    // Mixture of short and long outages targeting config.missing_fraction.
    const double mean_run = 0.8 * 5.0 + 0.2 * 200.0;
    const double start_prob = config.missing_fraction / mean_run;

    char line[160];
    for (std::size_t i = 0; i < minutely.size(); ++i) {
        const DateTime dt = from_epoch_seconds(minutely.timestamp(i));
        if (missing_left == 0 && config.missing_fraction > 0.0 &&
            rng::uniform_unit(missing_rng) < start_prob) {
            missing_left = rng::uniform_unit(missing_rng) < 0.8
                               ? 1 + rng::uniform_index(missing_rng, 9)
                               : 20 + rng::uniform_index(missing_rng, 360);
        }
        if (missing_left > 0) {
            --missing_left;
            std::snprintf(line, sizeof(line), "%d/%d/%04d;%02d:%02d:%02d;?;?;?;?;?;?;?\n",
                          dt.day, dt.month, dt.year, dt.hour, dt.minute, dt.second);
            out << line;
            continue;
        }
        const double power = minutely.values[i];
        const double voltage = 240.0 + 2.5 * std::sin(static_cast<double>(i) * 0.0013);
        const double intensity = power * 1000.0 / voltage;
        std::snprintf(line, sizeof(line),
                      "%d/%d/%04d;%02d:%02d:%02d;%.3f;%.3f;%.2f;%.1f;0.0;0.0;%.1f\n",
                      dt.day, dt.month, dt.year, dt.hour, dt.minute, dt.second, power,
                      0.1 + 0.04 * std::sin(static_cast<double>(i) * 0.002), voltage,
                      intensity, std::max(0.0, (power - 0.5) * 8.0));
        out << line;
    }
    if (!out) throw DataError("failed writing " + path);
}

} // namespace powercast::data
