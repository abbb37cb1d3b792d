#ifndef POWERCAST_EVAL_HPP
#define POWERCAST_EVAL_HPP

#include "powercast/data.hpp"
#include "powercast/models.hpp"
#include "powercast/pipeline.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace powercast::eval {

/// Guard against near-zero actuals in the percentage error.
inline constexpr double kMapeEpsilonKw = 1e-6;

struct MetricReport {
    double rmse_kw = 0.0;
    double mae_kw = 0.0;
    double mape_pct = 0.0;
    std::size_t count = 0;
    data::Resolution resolution = data::Resolution::daily;
    std::string model_tag;
};

/// RMSE = sqrt(mean((a-p)^2)), MAE = mean|a-p|,
/// MAPE = 100 mean(|a-p| / max(|a|, eps)).
MetricReport metrics(std::span<const double> actual, std::span<const double> predicted);

/// Steps per season: one day for minutely/hourly, 7 for daily, 52 for weekly.
std::size_t seasonal_period(data::Resolution resolution);

/// Repeat the last observed value across the horizon.
std::vector<double> naive_forecast(double last_value, int horizon);

/// Repeat the value one (or more) whole periods back: prediction for anchor+k
/// reads values[anchor + k - ceil(k/period)*period].
std::vector<double> seasonal_naive_forecast(const std::vector<double>& values,
                                            std::size_t anchor, int horizon,
                                            std::size_t period);

struct EvalOptions {
    int horizon = 60;
    /// Every stride-th eligible test anchor is evaluated.
    std::size_t anchor_stride = 1;
    /// Optional per-channel keep mask (subband ablation).
    std::optional<std::vector<bool>> keep_mask;
};

struct EvalOutcome {
    MetricReport report;
    std::vector<double> per_step_mae;  // MAE at steps 1..horizon, in kW
    std::size_t anchors = 0;
};

/// Multistep evaluation over the test split. Anchors need a full lookback and
/// reconstruction window of test-side context plus `horizon` future steps;
/// when the test split is too short for that (the weekly case), the single
/// boundary anchor with train-side context is evaluated instead, mirroring
/// deployment at the end of the training data.
EvalOutcome evaluate_model(const models::Model& model, const pipeline::PreparedData& prepared,
                           const EvalOptions& options);

/// Same protocol and anchors for a baseline ("naive" or "seasonal_naive").
EvalOutcome evaluate_baseline(const std::string& tag, const pipeline::PreparedData& prepared,
                              const EvalOptions& options);

/// Table-style subband importance: inputs outside `keep` are zeroed (in
/// normalized space) before every recursive model call.
MetricReport ablate_subbands(const models::Model& model,
                             const pipeline::PreparedData& prepared,
                             const std::vector<bool>& keep, const EvalOptions& options);

/// Per-step MAE across the horizon (same rollouts as evaluate_model).
std::vector<double> horizon_mae_curve(const models::Model& model,
                                      const pipeline::PreparedData& prepared,
                                      const EvalOptions& options);

/// Parse "all" or a comma list of channel names ("A3", "A3,D1") into a keep
/// mask over the 2L channels.
std::vector<bool> parse_subband_mask(const std::string& text, int levels);
std::string mask_to_string(const std::vector<bool>& mask, int levels);

void write_report_csv(const std::vector<MetricReport>& reports, const std::string& path);
std::string format_report_table(const std::vector<MetricReport>& reports);

} // namespace powercast::eval

#endif
