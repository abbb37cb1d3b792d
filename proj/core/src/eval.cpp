#include "powercast/eval.hpp"

#include "powercast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace powercast::eval {

MetricReport metrics(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size() || actual.empty()) {
        throw UsageError("metrics: sequences must have equal nonzero length, got " +
                         std::to_string(actual.size()) + " and " +
                         std::to_string(predicted.size()));
    }
    double sum_sq = 0.0, sum_abs = 0.0, sum_pct = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double err = actual[i] - predicted[i];
        sum_sq += err * err;
        sum_abs += std::fabs(err);
        sum_pct += std::fabs(err) / std::max(std::fabs(actual[i]), kMapeEpsilonKw);
    }
    const double inv = 1.0 / static_cast<double>(actual.size());
    MetricReport report;
    report.rmse_kw = std::sqrt(sum_sq * inv);
    report.mae_kw = sum_abs * inv;
    report.mape_pct = 100.0 * sum_pct * inv;
    report.count = actual.size();
    return report;
}

std::size_t seasonal_period(data::Resolution resolution) {
    switch (resolution) {
        case data::Resolution::minutely: return 1440;
        case data::Resolution::hourly: return 24;
        case data::Resolution::daily: return 7;
        case data::Resolution::weekly: return 52;
    }
    return 1;
}

std::vector<double> naive_forecast(double last_value, int horizon) {
    if (horizon < 1) throw UsageError("naive_forecast horizon must be >= 1");
    return std::vector<double>(static_cast<std::size_t>(horizon), last_value);
}

std::vector<double> seasonal_naive_forecast(const std::vector<double>& values,
                                            std::size_t anchor, int horizon,
                                            std::size_t period) {
    if (horizon < 1) throw UsageError("seasonal_naive_forecast horizon must be >= 1");
    if (period == 0) throw UsageError("seasonal period must be positive");
    if (anchor >= values.size()) throw UsageError("seasonal_naive anchor out of range");
    if (anchor + 1 < period) {
        throw UsageError("seasonal_naive needs at least one full period of history (" +
                         std::to_string(period) + " steps)");
    }
    std::vector<double> out(static_cast<std::size_t>(horizon));
    for (int k = 1; k <= horizon; ++k) {
        const std::size_t whole_periods =
            (static_cast<std::size_t>(k) + period - 1) / period;
        const std::ptrdiff_t index = static_cast<std::ptrdiff_t>(anchor) + k -
                                     static_cast<std::ptrdiff_t>(whole_periods * period);
        if (index < 0) {
            throw UsageError("seasonal_naive lacks history at step " + std::to_string(k));
        }
        out[static_cast<std::size_t>(k - 1)] = values[static_cast<std::size_t>(index)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Test-split evaluation
// ---------------------------------------------------------------------------

namespace {

struct AnchorPlan {
    std::vector<std::size_t> test_anchors;  // subband row indices in the test split
    bool boundary_mode = false;             // single anchor at the end of training
    int horizon = 0;
};

AnchorPlan plan_anchors(const pipeline::PreparedData& prepared, const EvalOptions& options) {
    AnchorPlan plan;
    plan.horizon = options.horizon;
    const std::size_t test_len = prepared.test.size();
    const auto lookback = static_cast<std::size_t>(prepared.lookback);
    const std::size_t context_rows = std::max(lookback, pipeline::kReconstructionWindow);
    const auto horizon = static_cast<std::size_t>(options.horizon);

    if (context_rows + horizon <= test_len) {
        const std::size_t first = context_rows - 1;
        const std::size_t last = test_len - 1 - horizon;
        for (std::size_t a = first; a <= last; a += std::max<std::size_t>(1,
                                                                          options.anchor_stride)) {
            plan.test_anchors.push_back(a);
        }
    }
    if (plan.test_anchors.empty()) {
        plan.boundary_mode = true;
        plan.horizon = static_cast<int>(std::min<std::size_t>(horizon, test_len));
        if (plan.horizon < 1) {
            throw UsageError("test split too short for any evaluation horizon");
        }
    }
    return plan;
}

EvalOutcome pooled_outcome(const std::vector<double>& actual,
                           const std::vector<double>& predicted, std::size_t anchors,
                           int horizon, const pipeline::PreparedData& prepared) {
    EvalOutcome outcome;
    outcome.anchors = anchors;
    outcome.report = metrics(actual, predicted);
    outcome.report.resolution = prepared.test.resolution;
    const auto h = static_cast<std::size_t>(horizon);
    outcome.per_step_mae.assign(h, 0.0);
    for (std::size_t a = 0; a < anchors; ++a) {
        for (std::size_t k = 0; k < h; ++k) {
            outcome.per_step_mae[k] += std::fabs(actual[a * h + k] - predicted[a * h + k]);
        }
    }
    for (double& v : outcome.per_step_mae) v /= static_cast<double>(anchors);
    return outcome;
}

} // namespace

EvalOutcome evaluate_model(const models::Model& model, const pipeline::PreparedData& prepared,
                           const EvalOptions& options) {
    if (options.horizon < 1) throw UsageError("evaluation horizon must be >= 1");
    const AnchorPlan plan = plan_anchors(prepared, options);
    const auto features = static_cast<std::size_t>(model.config().feature_dim());
    const auto lookback = static_cast<std::size_t>(prepared.lookback);
    const auto horizon = static_cast<std::size_t>(plan.horizon);

    pipeline::RolloutOptions rollout_options;
    rollout_options.keep_mask = options.keep_mask;

    std::vector<double> actual;
    std::vector<double> predicted;

    if (plan.boundary_mode) {
        // Forecast the first `horizon` test steps from the end of training.
        pipeline::ForecastContext context = pipeline::make_context(
            prepared, false, prepared.train.size() - 1);
        std::vector<double> coeffs =
            pipeline::rollout(model, context.window, 1, plan.horizon, rollout_options);
        const data::NormStats& stats = prepared.stats;
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            coeffs[i] = stats.denormalize_value(i % features, coeffs[i]);
        }
        predicted = pipeline::reconstruct_horizon(context.history_rows, context.history_count,
                                                  coeffs, horizon, prepared.wavelet);
        actual.assign(prepared.test.values.begin(),
                      prepared.test.values.begin() + static_cast<std::ptrdiff_t>(horizon));
        return pooled_outcome(actual, predicted, 1, plan.horizon, prepared);
    }

    const std::size_t anchors = plan.test_anchors.size();
    std::vector<double> contexts(anchors * lookback * features);
    const std::vector<double> rows = data::to_rows(prepared.test_normalized);
    for (std::size_t a = 0; a < anchors; ++a) {
        const std::size_t anchor = plan.test_anchors[a];
        std::copy_n(rows.data() + (anchor + 1 - lookback) * features, lookback * features,
                    contexts.data() + a * lookback * features);
    }
    std::vector<double> coeffs =
        pipeline::rollout(model, contexts, anchors, plan.horizon, rollout_options);
    const data::NormStats& stats = prepared.stats;
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        coeffs[i] = stats.denormalize_value(i % features, coeffs[i]);
    }

    const std::vector<double> raw_rows = data::to_rows(prepared.test_subbands);
    actual.resize(anchors * horizon);
    predicted.resize(anchors * horizon);
    for (std::size_t a = 0; a < anchors; ++a) {
        const std::size_t anchor = plan.test_anchors[a];
        std::vector<double> history(raw_rows.begin(),
                                    raw_rows.begin() +
                                        static_cast<std::ptrdiff_t>((anchor + 1) * features));
        std::vector<double> anchor_coeffs(
            coeffs.begin() + static_cast<std::ptrdiff_t>(a * horizon * features),
            coeffs.begin() + static_cast<std::ptrdiff_t>((a + 1) * horizon * features));
        std::vector<double> power = pipeline::reconstruct_horizon(
            history, anchor + 1, anchor_coeffs, horizon, prepared.wavelet);
        for (std::size_t k = 0; k < horizon; ++k) {
            predicted[a * horizon + k] = power[k];
            actual[a * horizon + k] = prepared.test.values[anchor + 1 + k];
        }
    }
    return pooled_outcome(actual, predicted, anchors, plan.horizon, prepared);
}

EvalOutcome evaluate_baseline(const std::string& tag, const pipeline::PreparedData& prepared,
                              const EvalOptions& options) {
    if (tag != "naive" && tag != "seasonal_naive") {
        throw ConfigError("unknown baseline '" + tag + "' (expected naive|seasonal_naive)");
    }
    if (options.horizon < 1) throw UsageError("evaluation horizon must be >= 1");
    const AnchorPlan plan = plan_anchors(prepared, options);
    const auto horizon = static_cast<std::size_t>(plan.horizon);
    const std::size_t period = seasonal_period(prepared.test.resolution);

    // Baselines read the continuous resampled series, so seasonal lookups may
    // reach across the split boundary.
    std::vector<double> combined = prepared.train.values;
    combined.insert(combined.end(), prepared.test.values.begin(), prepared.test.values.end());
    const std::size_t offset = prepared.train.size();

    std::vector<std::size_t> anchors_global;
    if (plan.boundary_mode) {
        anchors_global.push_back(offset - 1);
    } else {
        for (std::size_t a : plan.test_anchors) anchors_global.push_back(offset + a);
    }

    std::vector<double> actual(anchors_global.size() * horizon);
    std::vector<double> predicted(anchors_global.size() * horizon);
    for (std::size_t a = 0; a < anchors_global.size(); ++a) {
        const std::size_t g = anchors_global[a];
        const std::vector<double> forecast =
            tag == "naive" ? naive_forecast(combined[g], plan.horizon)
                           : seasonal_naive_forecast(combined, g, plan.horizon, period);
        for (std::size_t k = 0; k < horizon; ++k) {
            predicted[a * horizon + k] = forecast[k];
            actual[a * horizon + k] = combined[g + 1 + k];
        }
    }
    EvalOutcome outcome = pooled_outcome(actual, predicted, anchors_global.size(),
                                         plan.horizon, prepared);
    outcome.report.model_tag = tag;
    return outcome;
}

MetricReport ablate_subbands(const models::Model& model,
                             const pipeline::PreparedData& prepared,
                             const std::vector<bool>& keep, const EvalOptions& options) {
    if (std::none_of(keep.begin(), keep.end(), [](bool k) { return k; })) {
        throw UsageError("ablation keep mask selects no subbands");
    }
    EvalOptions with_mask = options;
    with_mask.keep_mask = keep;
    EvalOutcome outcome = evaluate_model(model, prepared, with_mask);
    outcome.report.model_tag = mask_to_string(keep, prepared.wavelet.levels);
    return outcome.report;
}

std::vector<double> horizon_mae_curve(const models::Model& model,
                                      const pipeline::PreparedData& prepared,
                                      const EvalOptions& options) {
    return evaluate_model(model, prepared, options).per_step_mae;
}

// ---------------------------------------------------------------------------
// Masks and reports
// ---------------------------------------------------------------------------

std::vector<bool> parse_subband_mask(const std::string& text, int levels) {
    const std::size_t channels = 2 * static_cast<std::size_t>(levels);
    if (text == "all" || text == "ALL" || text.empty()) {
        return std::vector<bool>(channels, true);
    }
    std::vector<bool> mask(channels, false);
    std::stringstream stream(text);
    std::string token;
    while (std::getline(stream, token, ',')) {
        token.erase(std::remove(token.begin(), token.end(), ' '), token.end());
        if (token.empty()) continue;
        bool found = false;
        for (std::size_t c = 0; c < channels; ++c) {
            if (token == swt::SubbandMatrix::channel_name(c, levels)) {
                mask[c] = true;
                found = true;
                break;
            }
        }
        if (!found) {
            throw ConfigError("unknown subband '" + token + "' (expected A1..A" +
                              std::to_string(levels) + ", D1..D" + std::to_string(levels) +
                              ")");
        }
    }
    if (std::none_of(mask.begin(), mask.end(), [](bool k) { return k; })) {
        throw ConfigError("subband mask '" + text + "' selects nothing");
    }
    return mask;
}

std::string mask_to_string(const std::vector<bool>& mask, int levels) {
    if (std::all_of(mask.begin(), mask.end(), [](bool k) { return k; })) return "all";
    std::string out;
    for (std::size_t c = 0; c < mask.size(); ++c) {
        if (!mask[c]) continue;
        if (!out.empty()) out += ',';
        out += swt::SubbandMatrix::channel_name(c, levels);
    }
    return out;
}

void write_report_csv(const std::vector<MetricReport>& reports, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "model,resolution,rmse_kw,mae_kw,mape_pct\n";
    char buffer[128];
    for (const MetricReport& r : reports) {
        std::snprintf(buffer, sizeof(buffer), "%.6f,%.6f,%.4f", r.rmse_kw, r.mae_kw,
                      r.mape_pct);
        out << r.model_tag << ',' << data::to_string(r.resolution) << ',' << buffer << '\n';
    }
    if (!out) throw DataError("failed writing " + path);
}

std::string format_report_table(const std::vector<MetricReport>& reports) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-28s %-10s %10s %10s %10s\n", "model", "resolution",
                  "RMSE (kW)", "MAE (kW)", "MAPE (%)");
    out << line;
    for (const MetricReport& r : reports) {
        std::snprintf(line, sizeof(line), "%-28s %-10s %10.4f %10.4f %10.2f\n",
                      r.model_tag.c_str(), data::to_string(r.resolution).c_str(), r.rmse_kw,
                      r.mae_kw, r.mape_pct);
        out << line;
    }
    return out.str();
}

} // namespace powercast::eval
