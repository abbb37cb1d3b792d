#ifndef POWERCAST_PIPELINE_HPP
#define POWERCAST_PIPELINE_HPP

#include "powercast/data.hpp"
#include "powercast/models.hpp"
#include "powercast/swt.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace powercast::pipeline {

inline constexpr double kRmspropRho = 0.9;
inline constexpr double kRmspropEpsilon = 1e-8;
/// Trailing coefficient steps fed to the inverse transform per reconstructed
/// sample; a multiple of 2^levels that comfortably exceeds the synthesis
/// support of db1..db4 at three levels.
inline constexpr std::size_t kReconstructionWindow = 64;

struct TrainConfig {
    double learning_rate = 0.001;
    int batch_size = 32;
    int epochs = 100;
    int fine_tune_epochs = 5;
    int fine_tune_stages = 4;  // covers steps k = 2..5
    int horizon = 60;
    std::uint64_t seed = 42;
    double validation_fraction = 0.1;

    void validate() const;
};

int default_horizon(data::Resolution resolution);

struct EpochLoss {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};
using History = std::vector<EpochLoss>;

/// Loss went non-finite or above 1e6; carries the history recorded so far.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& msg, History history)
        : std::runtime_error(msg), history_(std::move(history)) {}
    const History& history() const { return history_; }

private:
    History history_;
};

// --- Optimizer -------------------------------------------------------------

struct RmspropState {
    std::vector<std::vector<double>> accumulators;  // one per model parameter
};

RmspropState make_rmsprop_state(const models::Model& model);

/// s <- rho s + (1-rho) g^2 ; p <- p - lr g / (sqrt(s) + eps), element-wise.
void rmsprop_update(std::vector<double>& params, const std::vector<double>& grads,
                    std::vector<double>& accumulator, double learning_rate);

/// Apply one update across all model parameters from their current gradients.
/// A non-finite gradient aborts with TrainingDiverged naming the parameter.
void rmsprop_step(models::Model& model, RmspropState& state, double learning_rate,
                  const History& history_so_far = {});

// --- Data preparation ------------------------------------------------------

/// Everything a training or evaluation run needs at one resolution. The SWT
/// runs per split (padded to a multiple of 2^levels by repeating the last
/// value, then trimmed back) so no coefficient mixes train and test samples.
struct PreparedData {
    data::TimeSeries train;
    data::TimeSeries test;
    std::int64_t boundary = 0;
    swt::WaveletSpec wavelet;
    int lookback = 0;
    swt::SubbandMatrix train_subbands;  // raw coefficient units
    swt::SubbandMatrix test_subbands;
    data::NormStats stats;              // from the training split only
    swt::SubbandMatrix train_normalized;
    swt::SubbandMatrix test_normalized;
    data::SupervisedWindows train_windows;
};

swt::SubbandMatrix decompose_padded(const std::vector<double>& values,
                                    const swt::WaveletSpec& spec);

PreparedData prepare(const data::TimeSeries& minutely, data::Resolution resolution,
                     const swt::WaveletSpec& wavelet, int lookback);

// --- Training --------------------------------------------------------------

/// Minimize one-step-ahead coefficient MSE with shuffled mini-batches; the
/// last 10% of windows are held out for the per-epoch validation loss.
History train_one_step(models::Model& model, const data::SupervisedWindows& windows,
                       const TrainConfig& config);

/// Sequential refinement for steps k = 2..min(horizon, 1+stages): roll the
/// model k steps on its own predictions (treated as constants), train on the
/// step-k error for fine_tune_epochs per stage.
History fine_tune_recursive(models::Model& model, const data::SupervisedWindows& windows,
                            const TrainConfig& config);

/// Mean step-k MSE over anchors [begin, end) when the model consumes its own
/// recursive predictions. Anchor i uses window i; ground truth is the target
/// of window i+k-1.
double stage_loss(const models::Model& model, const data::SupervisedWindows& windows, int k,
                  std::size_t begin, std::size_t end);

// --- Forecasting -----------------------------------------------------------

struct RolloutOptions {
    /// Per-channel keep mask applied (in normalized space) to every model
    /// input; absent means all channels pass through.
    std::optional<std::vector<bool>> keep_mask;
    /// Ground-truth normalized rows (anchors x horizon x features). When set,
    /// the true row re-enters the window instead of the prediction
    /// (teacher forcing); outputs remain the model's one-step predictions.
    const std::vector<double>* teacher_rows = nullptr;
};

/// Lockstep recursive prediction for many anchors at once. `contexts` holds
/// anchors x lookback x features normalized rows; the result is anchors x
/// horizon x features normalized coefficient predictions.
std::vector<double> rollout(const models::Model& model, const std::vector<double>& contexts,
                            std::size_t anchors, int horizon,
                            const RolloutOptions& options = {});

/// Inverse-transform the predicted rows of one anchor into kW. For each step
/// k the trailing kReconstructionWindow coefficient rows ending at that step
/// (true history plus predictions so far, raw units) are inverted and the
/// final sample taken. Short history is padded by repeating the oldest row.
std::vector<double> reconstruct_horizon(const std::vector<double>& history_rows,
                                        std::size_t history_count,
                                        const std::vector<double>& predicted_rows,
                                        std::size_t horizon, const swt::WaveletSpec& spec);

struct ForecastContext {
    std::vector<double> window;        // lookback x features, normalized, oldest first
    std::vector<double> history_rows;  // history_count x features, raw coefficient units
    std::size_t history_count = 0;
    std::int64_t anchor_timestamp = 0;
    data::Resolution resolution = data::Resolution::daily;
};

struct ForecastResult {
    std::vector<double> coefficients;  // horizon x features, normalized
    std::vector<double> power_kw;      // horizon
    std::int64_t anchor_timestamp = 0;
    data::Resolution resolution = data::Resolution::daily;
};

/// Recursive multistep forecast: predict horizon coefficient vectors, then
/// denormalize and reconstruct the horizon power values.
ForecastResult forecast(const models::Model& model, const ForecastContext& context,
                        int horizon);

/// Context whose window ends at subband row `anchor` (inclusive).
ForecastContext make_context(const PreparedData& prepared, bool from_test,
                             std::size_t anchor);

} // namespace powercast::pipeline

#endif
