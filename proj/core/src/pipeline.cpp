#include "powercast/pipeline.hpp"

#include "powercast/errors.hpp"
#include "powercast/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace powercast::pipeline {

using autodiff::Tensor;

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (fine_tune_epochs < 0 || fine_tune_stages < 0) {
        throw ConfigError("fine-tune epochs/stages must be >= 0");
    }
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
        throw ConfigError("validation fraction must lie in [0, 1)");
    }
}

int default_horizon(data::Resolution resolution) {
    return resolution == data::Resolution::weekly ? 48 : 60;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

RmspropState make_rmsprop_state(const models::Model& model) {
    RmspropState state;
    state.accumulators.reserve(model.parameters().size());
    for (const auto& [name, tensor] : model.parameters()) {
        state.accumulators.emplace_back(tensor.numel(), 0.0);
    }
    return state;
}

void rmsprop_update(std::vector<double>& params, const std::vector<double>& grads,
                    std::vector<double>& accumulator, double learning_rate) {
    if (params.size() != grads.size() || params.size() != accumulator.size()) {
        throw ShapeError("rmsprop_update: mismatched sizes " + std::to_string(params.size()) +
                         "/" + std::to_string(grads.size()) + "/" +
                         std::to_string(accumulator.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        accumulator[i] = kRmspropRho * accumulator[i] + (1.0 - kRmspropRho) * g * g;
        params[i] -= learning_rate * g / (std::sqrt(accumulator[i]) + kRmspropEpsilon);
    }
}

void rmsprop_step(models::Model& model, RmspropState& state, double learning_rate,
                  const History& history_so_far) {
    const auto& params = model.parameters();
    if (state.accumulators.size() != params.size()) {
        throw UsageError("rmsprop state does not match model parameter count");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto tensor = params[p].second;
        if (!tensor.has_grad()) continue;
        const auto& grads = tensor.grad();
        for (double g : grads) {
            if (!std::isfinite(g)) {
                throw TrainingDiverged("non-finite gradient in parameter '" +
                                           params[p].first + "'",
                                       history_so_far);
            }
        }
        rmsprop_update(tensor.mutable_values(), grads, state.accumulators[p], learning_rate);
    }
}

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

swt::SubbandMatrix decompose_padded(const std::vector<double>& values,
                                    const swt::WaveletSpec& spec) {
    spec.validate();
    if (values.empty()) throw UsageError("cannot decompose an empty series");
    const std::size_t block = std::size_t{1} << spec.levels;
    const std::size_t padded = (values.size() + block - 1) / block * block;
    std::vector<double> extended = values;
    extended.resize(padded, values.back());
    swt::SubbandMatrix subbands = swt::decompose(extended, spec);
    subbands.trim(values.size());
    return subbands;
}

PreparedData prepare(const data::TimeSeries& minutely, data::Resolution resolution,
                     const swt::WaveletSpec& wavelet, int lookback) {
    PreparedData out;
    out.wavelet = wavelet;
    out.lookback = lookback;
    const data::TimeSeries resampled = data::resample(minutely, resolution);
    // All resolutions split at the instant fixed by the dataset's first
    // timestamp, not by each resampled series' own first bucket.
    data::SplitSeries parts =
        data::split(resampled, data::split_boundary(minutely.start));
    out.boundary = parts.boundary;
    out.train = std::move(parts.train);
    out.test = std::move(parts.test);
    out.train_subbands = decompose_padded(out.train.values, wavelet);
    out.test_subbands = decompose_padded(out.test.values, wavelet);
    out.stats = data::compute_norm_stats(out.train_subbands);
    out.train_normalized = data::normalize(out.train_subbands, out.stats);
    out.test_normalized = data::normalize(out.test_subbands, out.stats);
    out.train_windows = data::make_windows(out.train_normalized, lookback);
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

Tensor batch_inputs(const data::SupervisedWindows& windows,
                    const std::vector<std::size_t>& indices, std::size_t begin,
                    std::size_t end) {
    const std::size_t rows = windows.lookback * windows.features;
    std::vector<double> values((end - begin) * rows);
    for (std::size_t i = begin; i < end; ++i) {
        std::copy_n(windows.input_window(indices[i]), rows, values.data() + (i - begin) * rows);
    }
    return Tensor::from({end - begin, windows.lookback, windows.features},
                        std::move(values));
}

Tensor batch_targets(const data::SupervisedWindows& windows,
                     const std::vector<std::size_t>& indices, std::size_t begin,
                     std::size_t end) {
    std::vector<double> values((end - begin) * windows.features);
    for (std::size_t i = begin; i < end; ++i) {
        std::copy_n(windows.target(indices[i]), windows.features,
                    values.data() + (i - begin) * windows.features);
    }
    return Tensor::from({end - begin, windows.features}, std::move(values));
}

double validation_loss(const models::Model& model, const data::SupervisedWindows& windows,
                       std::size_t begin, std::size_t end) {
    if (begin >= end) return 0.0;
    autodiff::NoGradGuard guard;
    double sum_sq = 0.0;
    std::size_t count = 0;
    std::vector<std::size_t> all(end - begin);
    std::iota(all.begin(), all.end(), begin);
    constexpr std::size_t kChunk = 512;
    for (std::size_t at = 0; at < all.size(); at += kChunk) {
        const std::size_t stop = std::min(all.size(), at + kChunk);
        Tensor inputs = batch_inputs(windows, all, at, stop);
        Tensor expected = batch_targets(windows, all, at, stop);
        Tensor got = model.forward(inputs);
        const auto& p = got.values();
        const auto& t = expected.values();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double d = p[i] - t[i];
            sum_sq += d * d;
        }
        count += p.size();
    }
    return sum_sq / static_cast<double>(count);
}

void check_divergence(double loss, const History& history) {
    if (!std::isfinite(loss) || loss > 1e6) {
        throw TrainingDiverged("training diverged (loss = " + std::to_string(loss) + ")",
                               history);
    }
}

} // namespace

History train_one_step(models::Model& model, const data::SupervisedWindows& windows,
                       const TrainConfig& config) {
    config.validate();
    if (windows.count < 2) throw UsageError("training needs at least two windows");

    const std::size_t val_count = std::max<std::size_t>(
        windows.count >= 10 ? 1 : 0,
        static_cast<std::size_t>(static_cast<double>(windows.count) *
                                 config.validation_fraction));
    const std::size_t train_count = windows.count - val_count;
    if (train_count == 0) throw UsageError("validation split leaves no training windows");

    std::mt19937_64 shuffle_rng = rng::seeded(config.seed, 10);
    std::mt19937_64 dropout_rng = rng::seeded(config.seed, 11);
    RmspropState state = make_rmsprop_state(model);
    History history;
    history.reserve(static_cast<std::size_t>(config.epochs));

    std::vector<std::size_t> order(train_count);
    std::iota(order.begin(), order.end(), 0);
    const auto batch = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng::shuffle(order, shuffle_rng);
        double weighted_loss = 0.0;
        for (std::size_t at = 0; at < order.size(); at += batch) {
            const std::size_t stop = std::min(order.size(), at + batch);
            Tensor inputs = batch_inputs(windows, order, at, stop);
            Tensor targets = batch_targets(windows, order, at, stop);
            models::ForwardMode mode{true, &dropout_rng};
            Tensor loss = autodiff::mse(model.forward(inputs, mode), targets);
            const double batch_loss = loss.item();
            check_divergence(batch_loss, history);
            model.zero_grad();
            autodiff::backward(loss);
            rmsprop_step(model, state, config.learning_rate, history);
            weighted_loss += batch_loss * static_cast<double>(stop - at);
        }
        EpochLoss row;
        row.epoch = epoch;
        row.train_loss = weighted_loss / static_cast<double>(train_count);
        row.val_loss = validation_loss(model, windows, train_count, windows.count);
        history.push_back(row);
    }

    model.training_meta().epochs = config.epochs;
    if (!history.empty()) {
        model.training_meta().final_train_loss = history.back().train_loss;
        model.training_meta().final_val_loss = history.back().val_loss;
    }
    return history;
}

// ---------------------------------------------------------------------------
// Recursive fine-tuning
// ---------------------------------------------------------------------------

namespace {

/// Roll the window buffer (anchors x lookback x features) forward one step,
/// appending `next` rows (anchors x features).
void shift_append(std::vector<double>& buffer, std::size_t anchors, std::size_t lookback,
                  std::size_t features, const std::vector<double>& next) {
    for (std::size_t a = 0; a < anchors; ++a) {
        double* window = buffer.data() + a * lookback * features;
        std::move(window + features, window + lookback * features, window);
        std::copy_n(next.data() + a * features, features,
                    window + (lookback - 1) * features);
    }
}

/// Inference predictions for a buffer of windows, chunked to bound memory.
std::vector<double> predict_buffer(const models::Model& model,
                                   const std::vector<double>& buffer, std::size_t anchors,
                                   std::size_t lookback, std::size_t features) {
    autodiff::NoGradGuard guard;
    std::vector<double> out(anchors * features);
    constexpr std::size_t kChunk = 512;
    for (std::size_t at = 0; at < anchors; at += kChunk) {
        const std::size_t stop = std::min(anchors, at + kChunk);
        std::vector<double> slice(buffer.begin() +
                                      static_cast<std::ptrdiff_t>(at * lookback * features),
                                  buffer.begin() +
                                      static_cast<std::ptrdiff_t>(stop * lookback * features));
        Tensor inputs = Tensor::from({stop - at, lookback, features}, std::move(slice));
        const auto& values = model.forward(inputs).values();
        std::copy(values.begin(), values.end(), out.begin() +
                                                    static_cast<std::ptrdiff_t>(at * features));
    }
    return out;
}

} // namespace

double stage_loss(const models::Model& model, const data::SupervisedWindows& windows, int k,
                  std::size_t begin, std::size_t end) {
    if (k < 1) throw UsageError("stage_loss requires k >= 1");
    const auto offset = static_cast<std::size_t>(k - 1);
    if (end > windows.count - offset || begin >= end) {
        throw UsageError("stage_loss anchor range out of bounds");
    }
    const std::size_t anchors = end - begin;
    const std::size_t lookback = windows.lookback;
    const std::size_t features = windows.features;

    std::vector<double> buffer(anchors * lookback * features);
    for (std::size_t a = 0; a < anchors; ++a) {
        std::copy_n(windows.input_window(begin + a), lookback * features,
                    buffer.data() + a * lookback * features);
    }
    std::vector<double> predictions;
    for (int step = 1; step <= k; ++step) {
        predictions = predict_buffer(model, buffer, anchors, lookback, features);
        if (step < k) shift_append(buffer, anchors, lookback, features, predictions);
    }
    double sum_sq = 0.0;
    for (std::size_t a = 0; a < anchors; ++a) {
        const double* truth = windows.target(begin + a + offset);
        const double* got = predictions.data() + a * features;
        for (std::size_t f = 0; f < features; ++f) {
            const double d = got[f] - truth[f];
            sum_sq += d * d;
        }
    }
    return sum_sq / static_cast<double>(anchors * features);
}

History fine_tune_recursive(models::Model& model, const data::SupervisedWindows& windows,
                            const TrainConfig& config) {
    config.validate();
    History history;
    if (config.horizon <= 1 || config.fine_tune_stages == 0 || config.fine_tune_epochs == 0) {
        return history;  // nothing beyond one-step training
    }
    const int last_stage = std::min(config.horizon, 1 + config.fine_tune_stages);

    std::mt19937_64 shuffle_rng = rng::seeded(config.seed, 20);
    std::mt19937_64 dropout_rng = rng::seeded(config.seed, 21);
    RmspropState state = make_rmsprop_state(model);
    const auto batch = static_cast<std::size_t>(config.batch_size);
    const std::size_t lookback = windows.lookback;
    const std::size_t features = windows.features;
    int epoch_counter = 0;

    for (int k = 2; k <= last_stage; ++k) {
        const auto offset = static_cast<std::size_t>(k - 1);
        if (windows.count <= offset + 1) break;  // not enough ground truth this deep
        const std::size_t usable = windows.count - offset;
        const std::size_t val_count = std::max<std::size_t>(
            usable >= 10 ? 1 : 0,
            static_cast<std::size_t>(static_cast<double>(usable) *
                                     config.validation_fraction));
        const std::size_t train_count = usable - val_count;
        if (train_count == 0) break;

        std::vector<std::size_t> order(train_count);
        std::iota(order.begin(), order.end(), 0);

        // Roll every training anchor forward k-1 steps with the stage-start
        // weights, in large inference chunks. Predictions re-entering the
        // window are constants: only the final step's forward pass carries
        // gradients.
        std::vector<double> rolled(train_count * lookback * features);
        for (std::size_t a = 0; a < train_count; ++a) {
            std::copy_n(windows.input_window(a), lookback * features,
                        rolled.data() + a * lookback * features);
        }
        for (int step = 1; step < k; ++step) {
            shift_append(rolled, train_count, lookback, features,
                         predict_buffer(model, rolled, train_count, lookback, features));
        }

        for (int epoch = 1; epoch <= config.fine_tune_epochs; ++epoch) {
            rng::shuffle(order, shuffle_rng);
            double weighted_loss = 0.0;
            for (std::size_t at = 0; at < order.size(); at += batch) {
                const std::size_t stop = std::min(order.size(), at + batch);
                const std::size_t anchors = stop - at;

                std::vector<double> buffer(anchors * lookback * features);
                std::vector<double> targets(anchors * features);
                for (std::size_t i = at; i < stop; ++i) {
                    const std::size_t anchor = order[i];
                    std::copy_n(rolled.data() + anchor * lookback * features,
                                lookback * features,
                                buffer.data() + (i - at) * lookback * features);
                    std::copy_n(windows.target(anchor + offset), features,
                                targets.data() + (i - at) * features);
                }
                Tensor inputs = Tensor::from({anchors, lookback, features}, buffer);
                models::ForwardMode mode{true, &dropout_rng};
                Tensor loss = autodiff::mse(model.forward(inputs, mode),
                                            Tensor::from({anchors, features}, targets));
                const double batch_loss = loss.item();
                check_divergence(batch_loss, history);
                model.zero_grad();
                autodiff::backward(loss);
                rmsprop_step(model, state, config.learning_rate, history);
                weighted_loss += batch_loss * static_cast<double>(anchors);
            }
            EpochLoss row;
            row.epoch = ++epoch_counter;
            row.train_loss = weighted_loss / static_cast<double>(train_count);
            row.val_loss = val_count > 0
                               ? stage_loss(model, windows, k, train_count, usable)
                               : 0.0;
            history.push_back(row);
        }
    }
    model.training_meta().fine_tune_stages = std::max(0, last_stage - 1);
    return history;
}

// ---------------------------------------------------------------------------
// Rollout and reconstruction
// ---------------------------------------------------------------------------

std::vector<double> rollout(const models::Model& model, const std::vector<double>& contexts,
                            std::size_t anchors, int horizon,
                            const RolloutOptions& options) {
    if (horizon < 1) throw UsageError("rollout horizon must be >= 1");
    const auto lookback = static_cast<std::size_t>(model.config().lookback);
    const auto features = static_cast<std::size_t>(model.config().feature_dim());
    if (contexts.size() != anchors * lookback * features) {
        throw ShapeError("rollout contexts hold " + std::to_string(contexts.size()) +
                         " values, expected " +
                         std::to_string(anchors * lookback * features));
    }
    if (options.keep_mask && options.keep_mask->size() != features) {
        throw UsageError("rollout keep mask must cover all " + std::to_string(features) +
                         " channels");
    }
    if (options.keep_mask &&
        std::none_of(options.keep_mask->begin(), options.keep_mask->end(),
                     [](bool keep) { return keep; })) {
        throw UsageError("rollout keep mask cannot be empty");
    }

    std::vector<double> buffer = contexts;
    std::vector<double> masked;
    std::vector<double> predictions(anchors * static_cast<std::size_t>(horizon) * features);

    for (int k = 0; k < horizon; ++k) {
        const std::vector<double>* input = &buffer;
        if (options.keep_mask) {
            masked = buffer;
            for (std::size_t i = 0; i < masked.size(); ++i) {
                if (!(*options.keep_mask)[i % features]) masked[i] = 0.0;
            }
            input = &masked;
        }
        std::vector<double> step =
            predict_buffer(model, *input, anchors, lookback, features);
        for (std::size_t a = 0; a < anchors; ++a) {
            std::copy_n(step.data() + a * features, features,
                        predictions.data() +
                            (a * static_cast<std::size_t>(horizon) +
                             static_cast<std::size_t>(k)) * features);
        }
        if (k + 1 < horizon) {
            if (options.teacher_rows) {
                std::vector<double> truth(anchors * features);
                for (std::size_t a = 0; a < anchors; ++a) {
                    std::copy_n(options.teacher_rows->data() +
                                    (a * static_cast<std::size_t>(horizon) +
                                     static_cast<std::size_t>(k)) * features,
                                features, truth.data() + a * features);
                }
                shift_append(buffer, anchors, lookback, features, truth);
            } else {
                shift_append(buffer, anchors, lookback, features, step);
            }
        }
    }
    return predictions;
}

std::vector<double> reconstruct_horizon(const std::vector<double>& history_rows,
                                        std::size_t history_count,
                                        const std::vector<double>& predicted_rows,
                                        std::size_t horizon, const swt::WaveletSpec& spec) {
    spec.validate();
    const std::size_t features = 2 * static_cast<std::size_t>(spec.levels);
    if (history_rows.size() != history_count * features) {
        throw ShapeError("reconstruct_horizon: history holds " +
                         std::to_string(history_rows.size()) + " values for " +
                         std::to_string(history_count) + " rows");
    }
    if (predicted_rows.size() != horizon * features) {
        throw ShapeError("reconstruct_horizon: predictions hold " +
                         std::to_string(predicted_rows.size()) + " values for horizon " +
                         std::to_string(horizon));
    }
    if (history_count == 0) throw UsageError("reconstruct_horizon needs history rows");

    const std::size_t window = kReconstructionWindow;
    std::vector<double> out(horizon);
    auto row_at = [&](std::ptrdiff_t index) -> const double* {
        // index is relative to the full buffer [history | predictions];
        // negative positions repeat the oldest history row.
        if (index < 0) index = 0;
        if (index < static_cast<std::ptrdiff_t>(history_count)) {
            return history_rows.data() + index * static_cast<std::ptrdiff_t>(features);
        }
        return predicted_rows.data() +
               (index - static_cast<std::ptrdiff_t>(history_count)) *
                   static_cast<std::ptrdiff_t>(features);
    };

    swt::SubbandMatrix slab(spec, window);
    for (std::size_t k = 1; k <= horizon; ++k) {
        const std::ptrdiff_t end = static_cast<std::ptrdiff_t>(history_count + k);  // exclusive
        for (std::size_t t = 0; t < window; ++t) {
            const double* row =
                row_at(end - static_cast<std::ptrdiff_t>(window) +
                       static_cast<std::ptrdiff_t>(t));
            for (std::size_t c = 0; c < features; ++c) slab.channel(c)[t] = row[c];
        }
        out[k - 1] = swt::reconstruct(slab).back();
    }
    return out;
}

ForecastResult forecast(const models::Model& model, const ForecastContext& context,
                        int horizon) {
    if (horizon < 1) throw UsageError("forecast horizon must be >= 1");
    const auto lookback = static_cast<std::size_t>(model.config().lookback);
    const auto features = static_cast<std::size_t>(model.config().feature_dim());
    if (context.window.size() != lookback * features) {
        throw UsageError("forecast context window must hold lookback x features values");
    }
    if (model.norm_stats().empty()) {
        throw UsageError("model carries no normalization statistics; train it first");
    }

    ForecastResult result;
    result.anchor_timestamp = context.anchor_timestamp;
    result.resolution = context.resolution;
    result.coefficients = rollout(model, context.window, 1, horizon);

    // Denormalize predictions into raw coefficient units before inversion so
    // the reconstructed series is in kW exactly.
    const data::NormStats& stats = model.norm_stats();
    std::vector<double> raw = result.coefficients;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = stats.denormalize_value(i % features, raw[i]);
    }
    const swt::WaveletSpec spec{model.config().wavelet, model.config().levels};
    result.power_kw =
        reconstruct_horizon(context.history_rows, context.history_count, raw,
                            static_cast<std::size_t>(horizon), spec);
    return result;
}

ForecastContext make_context(const PreparedData& prepared, bool from_test,
                             std::size_t anchor) {
    const swt::SubbandMatrix& normalized =
        from_test ? prepared.test_normalized : prepared.train_normalized;
    const swt::SubbandMatrix& raw = from_test ? prepared.test_subbands
                                              : prepared.train_subbands;
    const data::TimeSeries& series = from_test ? prepared.test : prepared.train;
    const auto lookback = static_cast<std::size_t>(prepared.lookback);
    if (anchor + 1 < lookback || anchor >= normalized.source_length()) {
        throw UsageError("anchor " + std::to_string(anchor) + " lacks " +
                         std::to_string(lookback) + "-step context");
    }
    ForecastContext context;
    context.resolution = series.resolution;
    context.anchor_timestamp = series.timestamp(anchor);
    const std::size_t features = normalized.channels();
    context.window.resize(lookback * features);
    for (std::size_t t = 0; t < lookback; ++t) {
        const auto row = normalized.row(anchor + 1 - lookback + t);
        std::copy(row.begin(), row.end(), context.window.begin() + t * features);
    }
    context.history_count = anchor + 1;
    context.history_rows.resize(context.history_count * features);
    for (std::size_t t = 0; t <= anchor; ++t) {
        const auto row = raw.row(t);
        std::copy(row.begin(), row.end(), context.history_rows.begin() + t * features);
    }
    return context;
}

} // namespace powercast::pipeline
