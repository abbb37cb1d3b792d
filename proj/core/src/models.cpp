#include "powercast/models.hpp"

#include "powercast/errors.hpp"
#include "powercast/rng.hpp"

#include <json.hpp>

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

namespace powercast::models {

using autodiff::Shape;
using autodiff::Tensor;
using nlohmann::json;

Architecture architecture_from_string(const std::string& name) {
    if (name == "cnn_lstm_swt" || name == "cnn-lstm" || name == "cnn_lstm")
        return Architecture::cnn_lstm_swt;
    if (name == "transformer_swt" || name == "transformer")
        return Architecture::transformer_swt;
    throw ConfigError("unknown architecture: " + name +
                      " (expected cnn_lstm_swt or transformer_swt)");
}

std::string to_string(Architecture arch) {
    return arch == Architecture::cnn_lstm_swt ? "cnn_lstm_swt" : "transformer_swt";
}

void ModelConfig::validate() const {
    if (lookback < 1) throw ConfigError("lookback must be positive");
    if (levels < 1 || levels > 5) throw ConfigError("levels must lie in [1, 5]");
    if (architecture == Architecture::transformer_swt) {
        layers::AttentionConfig att{transformer.heads, transformer.model_dim};
        att.validate();
        if (transformer.blocks < 1 || transformer.ff_dim < 1 || transformer.t2v_k < 1 ||
            transformer.head_hidden < 1) {
            throw ConfigError("transformer hyperparameters must be positive");
        }
        if (transformer.dropout < 0.0 || transformer.dropout >= 1.0) {
            throw ConfigError("transformer dropout must lie in [0, 1)");
        }
    } else {
        if (cnn_lstm.conv_channels < 1 || cnn_lstm.conv_layers < 1 || cnn_lstm.kernel < 1 ||
            cnn_lstm.lstm_hidden < 1 || cnn_lstm.lstm_layers < 1 || cnn_lstm.dense_hidden < 1) {
            throw ConfigError("cnn_lstm hyperparameters must be positive");
        }
        if (cnn_lstm.dropout < 0.0 || cnn_lstm.dropout >= 1.0) {
            throw ConfigError("cnn_lstm dropout must lie in [0, 1)");
        }
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace {

enum class Init { glorot, zeros, ones };

struct ParamBuilder {
    std::vector<std::pair<std::string, Tensor>>& registry;
    std::mt19937_64& rng;

    Tensor operator()(const std::string& name, Shape shape, Init init,
                      std::size_t fan_in = 0, std::size_t fan_out = 0) {
        const std::size_t count = autodiff::shape_numel(shape);
        std::vector<double> values;
        switch (init) {
            case Init::glorot:
                values = rng::glorot_uniform(fan_in, fan_out, count, rng);
                break;
            case Init::zeros:
                values.assign(count, 0.0);
                break;
            case Init::ones:
                values.assign(count, 1.0);
                break;
        }
        Tensor t = Tensor::from(std::move(shape), std::move(values), true);
        registry.emplace_back(name, t);
        return t;
    }
};

} // namespace

Model::Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng = rng::seeded(config_.seed, 0);
    ParamBuilder param{parameters_, rng};
    const auto features = static_cast<std::size_t>(config_.feature_dim());

    if (config_.architecture == Architecture::transformer_swt) {
        const TransformerHyper& hp = config_.transformer;
        const auto dim = static_cast<std::size_t>(hp.model_dim);
        const auto k1 = static_cast<std::size_t>(hp.t2v_k + 1);
        const auto head_dim = static_cast<std::size_t>(hp.model_dim / hp.heads);
        const auto ff = static_cast<std::size_t>(hp.ff_dim);
        const auto hidden = static_cast<std::size_t>(hp.head_hidden);

        transformer_.t2v.k = hp.t2v_k;
        transformer_.t2v.omega = param("t2v.omega", {1, k1}, Init::glorot, 1, k1);
        transformer_.t2v.phi = param("t2v.phi", {k1}, Init::zeros);
        const std::size_t in_dim = features + k1;
        transformer_.input_w = param("input.W", {in_dim, dim}, Init::glorot, in_dim, dim);
        transformer_.input_b = param("input.b", {dim}, Init::zeros);

        for (int i = 0; i < hp.blocks; ++i) {
            const std::string prefix = "enc" + std::to_string(i) + ".";
            layers::EncoderBlockWeights block;
            for (int h = 0; h < hp.heads; ++h) {
                const std::string hp_name = prefix + "head" + std::to_string(h) + ".";
                layers::AttentionHeadWeights head;
                head.Wq = param(hp_name + "Wq", {dim, head_dim}, Init::glorot, dim, head_dim);
                head.bq = param(hp_name + "bq", {head_dim}, Init::zeros);
                head.Wk = param(hp_name + "Wk", {dim, head_dim}, Init::glorot, dim, head_dim);
                head.bk = param(hp_name + "bk", {head_dim}, Init::zeros);
                head.Wv = param(hp_name + "Wv", {dim, head_dim}, Init::glorot, dim, head_dim);
                head.bv = param(hp_name + "bv", {head_dim}, Init::zeros);
                block.attention.heads.push_back(head);
            }
            block.attention.Wo = param(prefix + "attn.Wo", {dim, dim}, Init::glorot, dim, dim);
            block.attention.bo = param(prefix + "attn.bo", {dim}, Init::zeros);
            block.ff.W1 = param(prefix + "ff.W1", {dim, ff}, Init::glorot, dim, ff);
            block.ff.b1 = param(prefix + "ff.b1", {ff}, Init::zeros);
            block.ff.W2 = param(prefix + "ff.W2", {ff, dim}, Init::glorot, ff, dim);
            block.ff.b2 = param(prefix + "ff.b2", {dim}, Init::zeros);
            block.ln1_gamma = param(prefix + "ln1.gamma", {dim}, Init::ones);
            block.ln1_beta = param(prefix + "ln1.beta", {dim}, Init::zeros);
            block.ln2_gamma = param(prefix + "ln2.gamma", {dim}, Init::ones);
            block.ln2_beta = param(prefix + "ln2.beta", {dim}, Init::zeros);
            transformer_.blocks.push_back(std::move(block));
        }
        transformer_.head1_w = param("head.W1", {dim, hidden}, Init::glorot, dim, hidden);
        transformer_.head1_b = param("head.b1", {hidden}, Init::zeros);
        transformer_.head2_w =
            param("head.W2", {hidden, features}, Init::glorot, hidden, features);
        transformer_.head2_b = param("head.b2", {features}, Init::zeros);
    } else {
        const CnnLstmHyper& hp = config_.cnn_lstm;
        const auto channels = static_cast<std::size_t>(hp.conv_channels);
        const auto kernel = static_cast<std::size_t>(hp.kernel);
        const auto hidden = static_cast<std::size_t>(hp.lstm_hidden);
        const auto dense = static_cast<std::size_t>(hp.dense_hidden);

        std::size_t in_channels = features;
        for (int i = 0; i < hp.conv_layers; ++i) {
            const std::string name = "conv" + std::to_string(i);
            cnn_lstm_.conv_w.push_back(param(name + ".W", {kernel, in_channels, channels},
                                             Init::glorot, kernel * in_channels,
                                             kernel * channels));
            cnn_lstm_.conv_b.push_back(param(name + ".b", {channels}, Init::zeros));
            in_channels = channels;
        }
        std::size_t lstm_in = channels;
        for (int i = 0; i < hp.lstm_layers; ++i) {
            const std::string name = "lstm" + std::to_string(i) + ".";
            layers::LstmParams p;
            auto w = [&](const char* gate) {
                return param(name + "W_" + gate, {lstm_in, hidden}, Init::glorot, lstm_in,
                             hidden);
            };
            auto u = [&](const char* gate) {
                return param(name + "U_" + gate, {hidden, hidden}, Init::glorot, hidden, hidden);
            };
            auto b = [&](const char* gate) {
                return param(name + "b_" + gate, {hidden}, Init::zeros);
            };
            p.W_i = w("i"); p.W_f = w("f"); p.W_o = w("o"); p.W_c = w("c");
            p.U_i = u("i"); p.U_f = u("f"); p.U_o = u("o"); p.U_c = u("c");
            p.b_i = b("i"); p.b_f = b("f"); p.b_o = b("o"); p.b_c = b("c");
            cnn_lstm_.lstm.push_back(std::move(p));
            lstm_in = hidden;
        }
        cnn_lstm_.head1_w = param("head.W1", {hidden, dense}, Init::glorot, hidden, dense);
        cnn_lstm_.head1_b = param("head.b1", {dense}, Init::zeros);
        cnn_lstm_.head2_w = param("head.W2", {dense, features}, Init::glorot, dense, features);
        cnn_lstm_.head2_b = param("head.b2", {features}, Init::zeros);
    }
}

std::size_t Model::count_params() const {
    std::size_t total = 0;
    for (const auto& [name, tensor] : parameters_) total += tensor.numel();
    return total;
}

void Model::zero_grad() {
    for (auto& [name, tensor] : parameters_) {
        auto t = tensor;
        t.zero_grad();
    }
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

autodiff::Tensor Model::forward(const Tensor& x, const ForwardMode& mode) const {
    const Shape& sh = x.shape();
    const auto n = static_cast<std::size_t>(config_.lookback);
    const auto features = static_cast<std::size_t>(config_.feature_dim());
    if (sh.size() != 3 || sh[1] != n || sh[2] != features) {
        throw ShapeError("model input must be (batch," + std::to_string(n) + "," +
                         std::to_string(features) + "), got " + autodiff::shape_to_string(sh));
    }
    return config_.architecture == Architecture::transformer_swt
               ? forward_transformer(x, mode)
               : forward_cnn_lstm(x, mode);
}

autodiff::Tensor Model::forward_transformer(const Tensor& x, const ForwardMode& mode) const {
    const TransformerHyper& hp = config_.transformer;
    const std::size_t batch = x.shape()[0];
    const auto n = static_cast<std::size_t>(config_.lookback);
    const layers::AttentionConfig att{hp.heads, hp.model_dim};
    const layers::DropoutSpec dropout{mode.training, hp.dropout, mode.dropout_rng};

    // tau is the integer position within the lookback window.
    std::vector<double> tau(n);
    for (std::size_t t = 0; t < n; ++t) tau[t] = static_cast<double>(t);
    Tensor encoded = layers::time2vec(Tensor::from({n, 1}, std::move(tau)), transformer_.t2v);
    const Tensor parts[] = {x, autodiff::expand_batch(encoded, batch)};
    Tensor h = autodiff::affine(autodiff::concat_lastdim(parts), transformer_.input_w,
                                transformer_.input_b);
    for (const auto& block : transformer_.blocks) {
        h = layers::encoder_block(h, att, block, dropout);
    }
    Tensor pooled = autodiff::mean_axis(h, 1);
    pooled = layers::apply_dropout(pooled, dropout);
    Tensor hidden = autodiff::relu(
        autodiff::affine(pooled, transformer_.head1_w, transformer_.head1_b));
    hidden = layers::apply_dropout(hidden, dropout);
    return autodiff::affine(hidden, transformer_.head2_w, transformer_.head2_b);
}

autodiff::Tensor Model::forward_cnn_lstm(const Tensor& x, const ForwardMode& mode) const {
    const CnnLstmHyper& hp = config_.cnn_lstm;
    const std::size_t batch = x.shape()[0];
    const auto n = static_cast<std::size_t>(config_.lookback);
    const auto hidden_dim = static_cast<std::size_t>(hp.lstm_hidden);
    const layers::DropoutSpec dropout{mode.training, hp.dropout, mode.dropout_rng};

    Tensor h = x;
    for (std::size_t i = 0; i < cnn_lstm_.conv_w.size(); ++i) {
        h = autodiff::relu(autodiff::add(
            autodiff::conv1d(h, cnn_lstm_.conv_w[i], autodiff::ConvPadding::same),
            cnn_lstm_.conv_b[i]));
    }

    std::vector<Tensor> sequence(n);
    for (std::size_t t = 0; t < n; ++t) sequence[t] = autodiff::select_step(h, t);

    Tensor last;
    for (std::size_t layer = 0; layer < cnn_lstm_.lstm.size(); ++layer) {
        Tensor state_h = Tensor::zeros({batch, hidden_dim});
        Tensor state_c = Tensor::zeros({batch, hidden_dim});
        for (std::size_t t = 0; t < n; ++t) {
            auto [new_h, new_c] = layers::lstm_step(sequence[t], state_h, state_c,
                                                    cnn_lstm_.lstm[layer]);
            state_h = new_h;
            state_c = new_c;
            if (layer + 1 < cnn_lstm_.lstm.size()) {
                sequence[t] = layers::apply_dropout(state_h, dropout);
            }
        }
        last = state_h;
    }

    Tensor head_in = layers::apply_dropout(last, dropout);
    Tensor hidden = autodiff::relu(
        autodiff::affine(head_in, cnn_lstm_.head1_w, cnn_lstm_.head1_b));
    hidden = layers::apply_dropout(hidden, dropout);
    return autodiff::affine(hidden, cnn_lstm_.head2_w, cnn_lstm_.head2_b);
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'O', 'W', 'E', 'R', 'C', 'K', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

std::uint32_t crc32(const unsigned char* data, std::size_t size, std::uint32_t seed = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int bit = 0; bit < 8; ++bit) c = (c >> 1) ^ (0xEDB88320u & (~(c & 1) + 1));
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = ~seed;
    for (std::size_t i = 0; i < size; ++i) crc = (crc >> 8) ^ table[(crc ^ data[i]) & 0xFF];
    return ~crc;
}

json config_to_json(const ModelConfig& cfg) {
    return json{
        {"architecture", to_string(cfg.architecture)},
        {"lookback", cfg.lookback},
        {"levels", cfg.levels},
        {"wavelet", swt::to_string(cfg.wavelet)},
        {"seed", cfg.seed},
        {"transformer",
         {{"model_dim", cfg.transformer.model_dim},
          {"heads", cfg.transformer.heads},
          {"blocks", cfg.transformer.blocks},
          {"ff_dim", cfg.transformer.ff_dim},
          {"t2v_k", cfg.transformer.t2v_k},
          {"head_hidden", cfg.transformer.head_hidden},
          {"dropout", cfg.transformer.dropout}}},
        {"cnn_lstm",
         {{"conv_channels", cfg.cnn_lstm.conv_channels},
          {"conv_layers", cfg.cnn_lstm.conv_layers},
          {"kernel", cfg.cnn_lstm.kernel},
          {"lstm_hidden", cfg.cnn_lstm.lstm_hidden},
          {"lstm_layers", cfg.cnn_lstm.lstm_layers},
          {"dense_hidden", cfg.cnn_lstm.dense_hidden},
          {"dropout", cfg.cnn_lstm.dropout}}},
    };
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    cfg.lookback = j.at("lookback").get<int>();
    cfg.levels = j.at("levels").get<int>();
    cfg.wavelet = swt::wavelet_family_from_string(j.at("wavelet").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
    const json& t = j.at("transformer");
    cfg.transformer = TransformerHyper{
        t.at("model_dim").get<int>(),  t.at("heads").get<int>(),
        t.at("blocks").get<int>(),     t.at("ff_dim").get<int>(),
        t.at("t2v_k").get<int>(),      t.at("head_hidden").get<int>(),
        t.at("dropout").get<double>()};
    const json& c = j.at("cnn_lstm");
    cfg.cnn_lstm = CnnLstmHyper{
        c.at("conv_channels").get<int>(), c.at("conv_layers").get<int>(),
        c.at("kernel").get<int>(),        c.at("lstm_hidden").get<int>(),
        c.at("lstm_layers").get<int>(),   c.at("dense_hidden").get<int>(),
        c.at("dropout").get<double>()};
    return cfg;
}

template <typename T>
void append_raw(std::string& out, const T& value) {
    const auto* bytes = reinterpret_cast<const char*>(&value);
    out.append(bytes, sizeof(T));
}

template <typename T>
T read_raw(const std::string& data, std::size_t& offset) {
    if (offset + sizeof(T) > data.size()) {
        throw CorruptionError("checkpoint truncated while reading field");
    }
    T value;
    std::memcpy(&value, data.data() + offset, sizeof(T));
    offset += sizeof(T);
    return value;
}

} // namespace

void save(const Model& model, const std::string& path) {
    json header = {
        {"config", config_to_json(model.config())},
        {"normalization",
         {{"min", model.norm_stats().minimum}, {"max", model.norm_stats().maximum}}},
        {"training",
         {{"epochs", model.meta().epochs},
          {"fine_tune_stages", model.meta().fine_tune_stages},
          {"final_train_loss", model.meta().final_train_loss},
          {"final_val_loss", model.meta().final_val_loss},
          {"resolution", data::to_string(model.meta().resolution)}}},
    };
    const std::string header_text = header.dump();

    std::string blob;
    blob.append(kMagic, sizeof(kMagic));
    append_raw(blob, kFormatVersion);
    append_raw(blob, static_cast<std::uint64_t>(header_text.size()));
    blob.append(header_text);
    append_raw(blob, static_cast<std::uint64_t>(model.parameters().size()));
    for (const auto& [name, tensor] : model.parameters()) {
        append_raw(blob, static_cast<std::uint16_t>(name.size()));
        blob.append(name);
        append_raw(blob, static_cast<std::uint8_t>(0));  // dtype: f64
        append_raw(blob, static_cast<std::uint8_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) append_raw(blob, static_cast<std::uint64_t>(d));
        const auto& values = tensor.values();
        blob.append(reinterpret_cast<const char*>(values.data()),
                    values.size() * sizeof(double));
    }
    append_raw(blob, crc32(reinterpret_cast<const unsigned char*>(blob.data()), blob.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    out.flush();
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

Model load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string blob = buffer.str();

    if (blob.size() < sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint32_t)) {
        throw CorruptionError("checkpoint too small: " + path);
    }
    if (std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
        throw CorruptionError("bad checkpoint magic: " + path);
    }
    // Version is judged before the checksum: a file from a newer format should
    // report as unsupported rather than corrupt.
    std::size_t offset = sizeof(kMagic);
    const auto version = read_raw<std::uint32_t>(blob, offset);
    if (version != kFormatVersion) {
        throw UnsupportedVersionError("checkpoint format version " + std::to_string(version) +
                                      " unsupported (expected " +
                                      std::to_string(kFormatVersion) + ")");
    }
    const std::size_t body_size = blob.size() - sizeof(std::uint32_t);
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, blob.data() + body_size, sizeof(stored_crc));
    const std::uint32_t actual_crc =
        crc32(reinterpret_cast<const unsigned char*>(blob.data()), body_size);
    if (stored_crc != actual_crc) {
        throw CorruptionError("checkpoint checksum mismatch: " + path);
    }
    const auto header_size = read_raw<std::uint64_t>(blob, offset);
    if (offset + header_size > body_size) throw CorruptionError("checkpoint header truncated");
    json header;
    try {
        header = json::parse(blob.substr(offset, header_size));
    } catch (const json::exception& e) {
        throw CorruptionError(std::string("checkpoint header unreadable: ") + e.what());
    }
    offset += header_size;

    Model model(config_from_json(header.at("config")));
    model.norm_stats().minimum =
        header.at("normalization").at("min").get<std::vector<double>>();
    model.norm_stats().maximum =
        header.at("normalization").at("max").get<std::vector<double>>();
    const json& training = header.at("training");
    model.training_meta().epochs = training.at("epochs").get<int>();
    model.training_meta().fine_tune_stages = training.at("fine_tune_stages").get<int>();
    model.training_meta().final_train_loss = training.at("final_train_loss").get<double>();
    model.training_meta().final_val_loss = training.at("final_val_loss").get<double>();
    model.training_meta().resolution =
        data::resolution_from_string(training.at("resolution").get<std::string>());

    const auto count = read_raw<std::uint64_t>(blob, offset);
    if (count != model.parameters().size()) {
        throw CorruptionError("checkpoint stores " + std::to_string(count) +
                              " arrays, model has " +
                              std::to_string(model.parameters().size()));
    }
    for (const auto& [name, tensor] : model.parameters()) {
        const auto name_len = read_raw<std::uint16_t>(blob, offset);
        if (offset + name_len > body_size) throw CorruptionError("checkpoint name truncated");
        const std::string stored_name = blob.substr(offset, name_len);
        offset += name_len;
        if (stored_name != name) {
            throw CorruptionError("checkpoint array '" + stored_name + "' does not match '" +
                                  name + "'");
        }
        const auto dtype = read_raw<std::uint8_t>(blob, offset);
        if (dtype != 0) throw CorruptionError("unsupported dtype in checkpoint");
        const auto rank = read_raw<std::uint8_t>(blob, offset);
        Shape shape(rank);
        for (auto& d : shape)
            d = static_cast<std::size_t>(read_raw<std::uint64_t>(blob, offset));
        if (shape != tensor.shape()) {
            throw CorruptionError("checkpoint array '" + name + "' shape " +
                                  autodiff::shape_to_string(shape) + " does not match model " +
                                  autodiff::shape_to_string(tensor.shape()));
        }
        const std::size_t bytes = autodiff::shape_numel(shape) * sizeof(double);
        if (offset + bytes > body_size) throw CorruptionError("checkpoint payload truncated");
        auto writable = tensor;
        std::memcpy(writable.mutable_values().data(), blob.data() + offset, bytes);
        offset += bytes;
    }
    if (offset != body_size) throw CorruptionError("checkpoint has trailing bytes");
    return model;
}

} // namespace powercast::models
