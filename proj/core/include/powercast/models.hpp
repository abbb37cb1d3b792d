#ifndef POWERCAST_MODELS_HPP
#define POWERCAST_MODELS_HPP

#include "powercast/autodiff.hpp"
#include "powercast/data.hpp"
#include "powercast/layers.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace powercast::models {

enum class Architecture { cnn_lstm_swt, transformer_swt };

Architecture architecture_from_string(const std::string& name);
std::string to_string(Architecture arch);

struct TransformerHyper {
    int model_dim = 256;
    int heads = 8;
    int blocks = 3;
    int ff_dim = 1024;  // 4 x model_dim
    int t2v_k = 7;
    int head_hidden = 128;
    double dropout = 0.1;
};

struct CnnLstmHyper {
    int conv_channels = 64;
    int conv_layers = 3;
    int kernel = 3;
    int lstm_hidden = 64;
    int lstm_layers = 2;
    int dense_hidden = 128;
    double dropout = 0.2;
};

struct ModelConfig {
    Architecture architecture = Architecture::transformer_swt;
    int lookback = 30;
    int levels = 3;
    swt::WaveletFamily wavelet = swt::WaveletFamily::db1;
    TransformerHyper transformer;
    CnnLstmHyper cnn_lstm;
    std::uint64_t seed = 42;

    int feature_dim() const { return 2 * levels; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Normalization statistics of the training split travel with the weights so
/// forecasting never needs the training data again.
using NormStats = data::NormStats;

struct TrainingMeta {
    int epochs = 0;
    int fine_tune_stages = 0;
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
    data::Resolution resolution = data::Resolution::daily;
};

struct ForwardMode {
    bool training = false;
    std::mt19937_64* dropout_rng = nullptr;
};

/// A built architecture: named parameter tensors plus the wiring to run a
/// forward pass. Weights are Glorot-uniform from config.seed; biases, layer
/// norm shifts and Time2Vec phases start at zero.
class Model {
public:
    explicit Model(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    const std::vector<std::pair<std::string, autodiff::Tensor>>& parameters() const {
        return parameters_;
    }
    std::size_t count_params() const;
    void zero_grad();

    /// x is (batch, lookback, 2*levels); result is (batch, 2*levels).
    autodiff::Tensor forward(const autodiff::Tensor& x, const ForwardMode& mode = {}) const;

    NormStats& norm_stats() { return norm_stats_; }
    const NormStats& norm_stats() const { return norm_stats_; }
    TrainingMeta& training_meta() { return meta_; }
    const TrainingMeta& meta() const { return meta_; }

private:
    struct TransformerWeights {
        layers::Time2VecParams t2v;
        autodiff::Tensor input_w, input_b;
        std::vector<layers::EncoderBlockWeights> blocks;
        autodiff::Tensor head1_w, head1_b, head2_w, head2_b;
    };
    struct CnnLstmWeights {
        std::vector<autodiff::Tensor> conv_w, conv_b;
        std::vector<layers::LstmParams> lstm;
        autodiff::Tensor head1_w, head1_b, head2_w, head2_b;
    };

    autodiff::Tensor forward_transformer(const autodiff::Tensor& x,
                                         const ForwardMode& mode) const;
    autodiff::Tensor forward_cnn_lstm(const autodiff::Tensor& x, const ForwardMode& mode) const;

    ModelConfig config_;
    std::vector<std::pair<std::string, autodiff::Tensor>> parameters_;
    TransformerWeights transformer_;
    CnnLstmWeights cnn_lstm_;
    NormStats norm_stats_;
    TrainingMeta meta_;
};

/// Reference parameter counts reported for the two architectures; informative
/// only, never enforced.
inline constexpr std::size_t kReportedTransformerParams = 340294;
inline constexpr std::size_t kReportedCnnLstmParams = 422358;

/// Versioned binary checkpoint: magic, format version, JSON config block,
/// named little-endian arrays, trailing CRC32.
void save(const Model& model, const std::string& path);
Model load(const std::string& path);

} // namespace powercast::models

#endif
