// Batch command-line surface for the SWT + deep-learning forecasting
// pipeline: synth-data, decompose, reconstruct, train, forecast, evaluate,
// ablate, horizon-curve.

#include "powercast/data.hpp"
#include "powercast/errors.hpp"
#include "powercast/eval.hpp"
#include "powercast/models.hpp"
#include "powercast/pipeline.hpp"
#include "powercast/swt.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace powercast;

namespace {

/// Removes this run's outputs unless commit() was reached, so failures never
/// leave partial files behind.
class OutputGuard {
public:
    ~OutputGuard() {
        if (committed_) return;
        for (const fs::path& p : outputs_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
    const fs::path& track(const fs::path& p) {
        outputs_.push_back(p);
        return outputs_.back();
    }
    void keep(const fs::path& p) {
        std::erase(outputs_, p);
    }
    void commit() { committed_ = true; }
    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& p : outputs_) out.push_back(p.string());
        return out;
    }

private:
    std::vector<fs::path> outputs_;
    bool committed_ = false;
};

std::string resolve_dataset(const std::string& path) {
    if (path.empty()) throw ConfigError("--dataset is required");
    fs::path p(path);
    if (p.is_relative()) {
        if (const char* root = std::getenv("POWERCAST_DATA_ROOT")) {
            const fs::path joined = fs::path(root) / p;
            if (fs::exists(joined) || !fs::exists(p)) return joined.string();
        }
    }
    return path;
}

data::TimeSeries load_minutely(const std::string& dataset) {
    data::ParseReport parse_report;
    data::TimeSeries raw = data::parse_dataset(resolve_dataset(dataset), &parse_report);
    data::ImputeReport impute_report;
    data::TimeSeries series = data::impute(raw, &impute_report);
    std::cerr << "dataset: " << parse_report.data_rows << " rows, "
              << parse_report.missing_values << " missing ("
              << impute_report.total() << " imputed: " << impute_report.forward_filled
              << " forward, " << impute_report.seasonal_filled << " seasonal, "
              << impute_report.back_filled << " back-filled)\n";
    return series;
}

void write_manifest(const fs::path& path, const std::string& command, const json& options,
                    const std::vector<std::string>& outputs) {
    json manifest{{"command", command}, {"options", options}, {"outputs", outputs}};
    std::ofstream out(path, std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw DataError("failed writing manifest " + path.string());
}

void write_key_values(const fs::path& path, const std::map<std::string, std::string>& kv) {
    std::ofstream out(path, std::ios::trunc);
    for (const auto& [key, value] : kv) out << key << " = " << value << '\n';
    if (!out) throw DataError("failed writing " + path.string());
}

std::string format_double(double v) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.12g", v);
    return buffer;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
    std::string dataset;
    std::string resolution = "daily";
    std::string arch = "transformer_swt";
    std::string wavelet = "db1";
    int levels = 3;
    int lookback = 30;
    int epochs = 100;
    int fine_tune_epochs = 5;
    int fine_tune_stages = 4;
    int batch_size = 32;
    double learning_rate = 0.001;
    int horizon = -1;  // -1: resolution default
    std::uint64_t seed = 42;
    std::string out_dir = "runs/latest";
    // architecture hyperparameters
    int model_dim = 256, heads = 8, blocks = 3, ff_dim = -1, t2v_k = 7, head_hidden = 128;
    int conv_channels = 64, conv_layers = 3, kernel = 3;
    int lstm_hidden = 64, lstm_layers = 2, dense_hidden = 128;
    double dropout = -1.0;  // -1: architecture default
};

models::ModelConfig model_config_from(const TrainArgs& args) {
    models::ModelConfig config;
    config.architecture = models::architecture_from_string(args.arch);
    config.lookback = args.lookback;
    config.levels = args.levels;
    config.wavelet = swt::wavelet_family_from_string(args.wavelet);
    config.seed = args.seed;
    config.transformer.model_dim = args.model_dim;
    config.transformer.heads = args.heads;
    config.transformer.blocks = args.blocks;
    config.transformer.ff_dim = args.ff_dim > 0 ? args.ff_dim : 4 * args.model_dim;
    config.transformer.t2v_k = args.t2v_k;
    config.transformer.head_hidden = args.head_hidden;
    if (args.dropout >= 0.0) config.transformer.dropout = args.dropout;
    config.cnn_lstm.conv_channels = args.conv_channels;
    config.cnn_lstm.conv_layers = args.conv_layers;
    config.cnn_lstm.kernel = args.kernel;
    config.cnn_lstm.lstm_hidden = args.lstm_hidden;
    config.cnn_lstm.lstm_layers = args.lstm_layers;
    config.cnn_lstm.dense_hidden = args.dense_hidden;
    if (args.dropout >= 0.0) config.cnn_lstm.dropout = args.dropout;
    return config;
}

void write_history_csv(const fs::path& path, const pipeline::History& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << "epoch,train_loss,val_loss\n";
    for (const auto& row : history) {
        out << row.epoch << ',' << format_double(row.train_loss) << ','
            << format_double(row.val_loss) << '\n';
    }
    if (!out) throw DataError("failed writing " + path.string());
}

int cmd_train(const TrainArgs& args) {
    const data::Resolution resolution = data::resolution_from_string(args.resolution);
    const int horizon = args.horizon > 0 ? args.horizon : pipeline::default_horizon(resolution);

    models::ModelConfig model_config = model_config_from(args);
    pipeline::TrainConfig train_config;
    train_config.learning_rate = args.learning_rate;
    train_config.batch_size = args.batch_size;
    train_config.epochs = args.epochs;
    train_config.fine_tune_epochs = args.fine_tune_epochs;
    train_config.fine_tune_stages = args.fine_tune_stages;
    train_config.horizon = horizon;
    train_config.seed = args.seed;
    train_config.validate();

    fs::create_directories(args.out_dir);
    OutputGuard guard;
    const fs::path checkpoint_path = guard.track(fs::path(args.out_dir) / "checkpoint.pck");
    const fs::path history_path = guard.track(fs::path(args.out_dir) / "history.csv");
    const fs::path config_path = guard.track(fs::path(args.out_dir) / "run_config.txt");
    const fs::path manifest_path = guard.track(fs::path(args.out_dir) / "manifest.json");

    const data::TimeSeries minutely = load_minutely(args.dataset);
    const swt::WaveletSpec wavelet{model_config.wavelet, model_config.levels};
    pipeline::PreparedData prepared =
        pipeline::prepare(minutely, resolution, wavelet, model_config.lookback);
    std::cerr << "prepared " << data::to_string(resolution) << ": " << prepared.train.size()
              << " train / " << prepared.test.size() << " test points, "
              << prepared.train_windows.count << " windows\n";

    models::Model model(model_config);
    model.norm_stats() = prepared.stats;
    model.training_meta().resolution = resolution;
    std::cerr << "built " << models::to_string(model_config.architecture) << " with "
              << model.count_params() << " parameters (reported reference: "
              << (model_config.architecture == models::Architecture::transformer_swt
                      ? models::kReportedTransformerParams
                      : models::kReportedCnnLstmParams)
              << ")\n";

    pipeline::History history;
    try {
        history = pipeline::train_one_step(model, prepared.train_windows, train_config);
        pipeline::History fine = pipeline::fine_tune_recursive(model, prepared.train_windows,
                                                               train_config);
        const int offset = history.empty() ? 0 : history.back().epoch;
        for (auto row : fine) {
            row.epoch += offset;
            history.push_back(row);
        }
    } catch (const pipeline::TrainingDiverged& diverged) {
        write_history_csv(history_path, diverged.history());
        guard.keep(history_path);
        std::cerr << "error: " << diverged.what() << " (history preserved at "
                  << history_path.string() << ")\n";
        return 1;
    }

    models::save(model, checkpoint_path.string());
    write_history_csv(history_path, history);

    std::map<std::string, std::string> effective{
        {"arch", models::to_string(model_config.architecture)},
        {"batch-size", std::to_string(args.batch_size)},
        {"dataset", args.dataset},
        {"epochs", std::to_string(args.epochs)},
        {"fine-tune-epochs", std::to_string(args.fine_tune_epochs)},
        {"fine-tune-stages", std::to_string(args.fine_tune_stages)},
        {"horizon", std::to_string(horizon)},
        {"learning-rate", format_double(args.learning_rate)},
        {"levels", std::to_string(model_config.levels)},
        {"lookback", std::to_string(model_config.lookback)},
        {"out", args.out_dir},
        {"resolution", data::to_string(resolution)},
        {"seed", std::to_string(args.seed)},
        {"wavelet", swt::to_string(model_config.wavelet)},
    };
    if (model_config.architecture == models::Architecture::transformer_swt) {
        effective["model-dim"] = std::to_string(model_config.transformer.model_dim);
        effective["heads"] = std::to_string(model_config.transformer.heads);
        effective["blocks"] = std::to_string(model_config.transformer.blocks);
        effective["ff-dim"] = std::to_string(model_config.transformer.ff_dim);
        effective["t2v-k"] = std::to_string(model_config.transformer.t2v_k);
        effective["head-hidden"] = std::to_string(model_config.transformer.head_hidden);
        effective["dropout"] = format_double(model_config.transformer.dropout);
    } else {
        effective["conv-channels"] = std::to_string(model_config.cnn_lstm.conv_channels);
        effective["conv-layers"] = std::to_string(model_config.cnn_lstm.conv_layers);
        effective["kernel"] = std::to_string(model_config.cnn_lstm.kernel);
        effective["lstm-hidden"] = std::to_string(model_config.cnn_lstm.lstm_hidden);
        effective["lstm-layers"] = std::to_string(model_config.cnn_lstm.lstm_layers);
        effective["dense-hidden"] = std::to_string(model_config.cnn_lstm.dense_hidden);
        effective["dropout"] = format_double(model_config.cnn_lstm.dropout);
    }
    write_key_values(config_path, effective);
    write_manifest(manifest_path, "train", json(effective), guard.names());
    guard.commit();

    std::cerr << "wrote " << checkpoint_path.string() << " ("
              << (history.empty() ? 0.0 : history.back().train_loss)
              << " final train loss)\n";
    return 0;
}

// --- forecast ----------------------------------------------------------------

int cmd_forecast(const std::string& checkpoint, const std::string& dataset,
                 const std::string& anchor_text, int horizon_flag,
                 const std::string& out_file) {
    models::Model model = models::load(checkpoint);
    const data::Resolution resolution = model.meta().resolution;
    const int horizon =
        horizon_flag > 0 ? horizon_flag : pipeline::default_horizon(resolution);

    const data::TimeSeries minutely = load_minutely(dataset);
    const swt::WaveletSpec wavelet{model.config().wavelet, model.config().levels};
    pipeline::PreparedData prepared =
        pipeline::prepare(minutely, resolution, wavelet, model.config().lookback);

    pipeline::ForecastContext context;
    std::vector<double> actuals;  // aligned with steps 1..horizon when known
    if (anchor_text.empty() || anchor_text == "boundary") {
        context = pipeline::make_context(prepared, false, prepared.train.size() - 1);
        for (int k = 0; k < horizon && static_cast<std::size_t>(k) < prepared.test.size();
             ++k) {
            actuals.push_back(prepared.test.values[static_cast<std::size_t>(k)]);
        }
    } else {
        const std::int64_t ts = data::parse_timestamp(anchor_text);
        const auto index = prepared.test.index_of(ts);
        if (!index) {
            throw UsageError("anchor " + anchor_text + " is not a " +
                             data::to_string(resolution) + " test timestamp (test spans " +
                             data::format_timestamp(prepared.test.timestamp(0)) + " .. " +
                             data::format_timestamp(
                                 prepared.test.timestamp(prepared.test.size() - 1)) +
                             ")");
        }
        context = pipeline::make_context(prepared, true, *index);
        for (int k = 1; k <= horizon; ++k) {
            const std::size_t i = *index + static_cast<std::size_t>(k);
            if (i >= prepared.test.size()) break;
            actuals.push_back(prepared.test.values[i]);
        }
    }

    const pipeline::ForecastResult result = pipeline::forecast(model, context, horizon);

    OutputGuard guard;
    const fs::path out_path = guard.track(out_file);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + out_file);
    out << "step,timestamp,predicted_kw,actual_kw\n";
    const std::int64_t step = data::step_seconds(resolution);
    for (int k = 1; k <= horizon; ++k) {
        out << k << ',' << data::format_timestamp(context.anchor_timestamp + k * step) << ','
            << format_double(result.power_kw[static_cast<std::size_t>(k - 1)]) << ',';
        if (static_cast<std::size_t>(k - 1) < actuals.size()) {
            out << format_double(actuals[static_cast<std::size_t>(k - 1)]);
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + out_file);
    out.close();
    guard.commit();
    std::cerr << "wrote " << out_file << " (" << horizon << " steps from "
              << data::format_timestamp(context.anchor_timestamp) << ")\n";
    return 0;
}

// --- evaluate / ablate / horizon-curve --------------------------------------

eval::EvalOptions eval_options(int horizon, std::size_t stride, data::Resolution resolution) {
    eval::EvalOptions options;
    options.horizon = horizon > 0 ? horizon : pipeline::default_horizon(resolution);
    options.anchor_stride = stride;
    return options;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& baseline,
                 const std::string& dataset, const std::string& resolution_text, int horizon,
                 std::size_t stride, const std::string& out_file) {
    if (checkpoint.empty() == baseline.empty()) {
        throw UsageError("evaluate needs exactly one of --checkpoint or --baseline");
    }
    const data::TimeSeries minutely = load_minutely(dataset);

    eval::EvalOutcome outcome;
    data::Resolution resolution;
    std::string tag;
    if (!checkpoint.empty()) {
        models::Model model = models::load(checkpoint);
        resolution = model.meta().resolution;
        if (!resolution_text.empty()) {
            resolution = data::resolution_from_string(resolution_text);
        }
        const swt::WaveletSpec wavelet{model.config().wavelet, model.config().levels};
        pipeline::PreparedData prepared =
            pipeline::prepare(minutely, resolution, wavelet, model.config().lookback);
        outcome = eval::evaluate_model(model, prepared,
                                       eval_options(horizon, stride, resolution));
        tag = models::to_string(model.config().architecture);
    } else {
        if (resolution_text.empty()) {
            throw UsageError("baseline evaluation needs --resolution");
        }
        resolution = data::resolution_from_string(resolution_text);
        pipeline::PreparedData prepared = pipeline::prepare(
            minutely, resolution, swt::WaveletSpec{swt::WaveletFamily::db1, 3}, 30);
        outcome = eval::evaluate_baseline(baseline, prepared,
                                          eval_options(horizon, stride, resolution));
        tag = baseline;
    }
    outcome.report.model_tag = tag;
    outcome.report.resolution = resolution;

    std::cout << eval::format_report_table({outcome.report});
    std::cerr << "(" << outcome.anchors << " anchors, horizon "
              << outcome.per_step_mae.size() << ")\n";
    if (!out_file.empty()) {
        OutputGuard guard;
        eval::write_report_csv({outcome.report}, guard.track(out_file).string());
        guard.commit();
    }
    return 0;
}

int cmd_ablate(const std::string& checkpoint, const std::string& dataset,
               const std::string& keep_text, int horizon, std::size_t stride,
               const std::string& out_file) {
    models::Model model = models::load(checkpoint);
    const data::Resolution resolution = model.meta().resolution;
    const data::TimeSeries minutely = load_minutely(dataset);
    const swt::WaveletSpec wavelet{model.config().wavelet, model.config().levels};
    pipeline::PreparedData prepared =
        pipeline::prepare(minutely, resolution, wavelet, model.config().lookback);

    const std::vector<bool> keep = eval::parse_subband_mask(keep_text, model.config().levels);
    eval::MetricReport report = eval::ablate_subbands(
        model, prepared, keep, eval_options(horizon, stride, resolution));
    report.model_tag = models::to_string(model.config().architecture) + "[" +
                       eval::mask_to_string(keep, model.config().levels) + "]";
    std::cout << eval::format_report_table({report});
    if (!out_file.empty()) {
        OutputGuard guard;
        eval::write_report_csv({report}, guard.track(out_file).string());
        guard.commit();
    }
    return 0;
}

int cmd_horizon_curve(const std::string& checkpoint, const std::string& dataset, int horizon,
                      std::size_t stride, const std::string& out_file) {
    models::Model model = models::load(checkpoint);
    const data::Resolution resolution = model.meta().resolution;
    const data::TimeSeries minutely = load_minutely(dataset);
    const swt::WaveletSpec wavelet{model.config().wavelet, model.config().levels};
    pipeline::PreparedData prepared =
        pipeline::prepare(minutely, resolution, wavelet, model.config().lookback);

    const std::vector<double> curve = eval::horizon_mae_curve(
        model, prepared, eval_options(horizon, stride, resolution));

    OutputGuard guard;
    const fs::path out_path = guard.track(out_file);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + out_file);
    out << "step,mae_kw\n";
    for (std::size_t k = 0; k < curve.size(); ++k) {
        out << k + 1 << ',' << format_double(curve[k]) << '\n';
    }
    if (!out) throw DataError("failed writing " + out_file);
    out.close();
    guard.commit();
    std::cerr << "wrote " << out_file << " (MAE(1) = " << curve.front()
              << " kW, MAE(" << curve.size() << ") = " << curve.back() << " kW)\n";
    return 0;
}

// --- decompose / reconstruct -------------------------------------------------

int cmd_decompose(const std::string& in_file, const std::string& wavelet, int levels,
                  const std::string& out_file) {
    const data::TimeSeries series = data::read_series_csv(in_file);
    const swt::WaveletSpec spec{swt::wavelet_family_from_string(wavelet), levels};
    // Pad to the required multiple so the dump holds a complete transform.
    const std::size_t block = std::size_t{1} << levels;
    std::vector<double> padded = series.values;
    padded.resize((padded.size() + block - 1) / block * block, padded.back());
    const swt::SubbandMatrix subbands = swt::decompose(padded, spec);

    OutputGuard guard;
    data::write_subbands_csv(subbands, guard.track(out_file).string());
    guard.commit();
    std::cerr << "wrote " << out_file << " (" << subbands.source_length() << " rows, "
              << subbands.channels() << " subbands; " << series.size()
              << " input samples)\n";
    return 0;
}

int cmd_reconstruct(const std::string& in_file, const std::string& wavelet, int trim,
                    const std::string& out_file) {
    const swt::SubbandMatrix subbands =
        data::read_subbands_csv(in_file, swt::wavelet_family_from_string(wavelet));
    std::vector<double> values = swt::reconstruct(subbands);
    if (trim > 0 && static_cast<std::size_t>(trim) < values.size()) {
        values.resize(static_cast<std::size_t>(trim));
    }

    OutputGuard guard;
    const fs::path out_path = guard.track(out_file);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + out_file);
    out << "t,value_kw\n";
    for (std::size_t t = 0; t < values.size(); ++t) {
        char buffer[64];
        std::snprintf(buffer, sizeof(buffer), "%.17g", values[t]);
        out << t << ',' << buffer << '\n';
    }
    if (!out) throw DataError("failed writing " + out_file);
    out.close();
    guard.commit();
    std::cerr << "wrote " << out_file << " (" << values.size() << " samples)\n";
    return 0;
}

// --- synth-data ---------------------------------------------------------------

int cmd_synth(const std::string& out_file, std::size_t minutes, std::uint64_t seed,
              double missing, const std::string& start_text) {
    data::SynthConfig config;
    config.minutes = minutes;
    config.seed = seed;
    config.missing_fraction = missing;
    if (!start_text.empty()) config.start = data::parse_timestamp(start_text);
    const data::TimeSeries series = data::synthesize_minutely(config);

    OutputGuard guard;
    data::write_uci_file(series, config, guard.track(out_file).string());
    guard.commit();
    std::cerr << "wrote " << out_file << " (" << series.size() << " minutes from "
              << data::format_timestamp(series.timestamp(0)) << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascaded SWT + deep-learning multistep forecasting of household power"};
    app.require_subcommand(1);

    // synth-data
    auto* synth = app.add_subcommand("synth-data",
                                     "Generate a synthetic dataset in the UCI text format");
    std::string synth_out = "household_power_consumption.txt";
    std::size_t synth_minutes = 2075259;
    std::uint64_t synth_seed = 2006;
    double synth_missing = 0.0125;
    std::string synth_start;
    synth->add_option("--out", synth_out, "Output file");
    synth->add_option("--minutes", synth_minutes, "Number of minutes to generate");
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--missing", synth_missing, "Fraction of minutes written as '?'");
    synth->add_option("--start", synth_start, "First timestamp (YYYY-MM-DD HH:MM:SS)");
    synth->set_config("--config");

    // decompose
    auto* decompose = app.add_subcommand("decompose", "Dump SWT subbands of a series CSV");
    std::string dec_in, dec_out = "subbands.csv", dec_wavelet = "db1";
    int dec_levels = 3;
    decompose->add_option("--in", dec_in, "Input series CSV (timestamp,value_kw)")
        ->required();
    decompose->add_option("--wavelet", dec_wavelet, "Wavelet family (db1..db4)");
    decompose->add_option("--levels", dec_levels, "Decomposition levels");
    decompose->add_option("--out", dec_out, "Output subband CSV");
    decompose->set_config("--config");

    // reconstruct
    auto* reconstruct = app.add_subcommand("reconstruct",
                                           "Inverse transform of a subband CSV");
    std::string rec_in, rec_out = "reconstructed.csv", rec_wavelet = "db1";
    int rec_trim = 0;
    reconstruct->add_option("--in", rec_in, "Input subband CSV")->required();
    reconstruct->add_option("--wavelet", rec_wavelet, "Wavelet family (db1..db4)");
    reconstruct->add_option("--trim", rec_trim, "Keep only the first N samples");
    reconstruct->add_option("--out", rec_out, "Output CSV (t,value_kw)");
    reconstruct->set_config("--config");

    // train
    auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
    TrainArgs targs;
    train->add_option("--dataset", targs.dataset, "UCI-format dataset file")->required();
    train->add_option("--resolution", targs.resolution, "minutely|hourly|daily|weekly");
    train->add_option("--arch", targs.arch, "cnn_lstm_swt|transformer_swt");
    train->add_option("--wavelet", targs.wavelet, "Wavelet family (db1..db4)");
    train->add_option("--levels", targs.levels, "Decomposition levels");
    train->add_option("--lookback", targs.lookback, "Lookback window length");
    train->add_option("--epochs", targs.epochs, "One-step training epochs");
    train->add_option("--fine-tune-epochs", targs.fine_tune_epochs,
                      "Epochs per recursive fine-tuning stage");
    train->add_option("--fine-tune-stages", targs.fine_tune_stages,
                      "Recursive fine-tuning stages (steps 2..1+stages)");
    train->add_option("--batch-size", targs.batch_size, "Mini-batch size");
    train->add_option("--learning-rate", targs.learning_rate, "RMSProp learning rate");
    train->add_option("--horizon", targs.horizon, "Forecast horizon (default per resolution)");
    train->add_option("--seed", targs.seed, "Master seed for init/shuffle/dropout");
    train->add_option("--out", targs.out_dir, "Output directory");
    train->add_option("--model-dim", targs.model_dim, "Transformer model dimension");
    train->add_option("--heads", targs.heads, "Transformer attention heads");
    train->add_option("--blocks", targs.blocks, "Transformer encoder blocks");
    train->add_option("--ff-dim", targs.ff_dim, "Feedforward width (default 4x model dim)");
    train->add_option("--t2v-k", targs.t2v_k, "Time2Vec periodic elements");
    train->add_option("--head-hidden", targs.head_hidden, "Transformer head hidden width");
    train->add_option("--conv-channels", targs.conv_channels, "CNN channels per conv layer");
    train->add_option("--conv-layers", targs.conv_layers, "CNN conv layer count");
    train->add_option("--kernel", targs.kernel, "CNN kernel size");
    train->add_option("--lstm-hidden", targs.lstm_hidden, "LSTM hidden size");
    train->add_option("--lstm-layers", targs.lstm_layers, "LSTM layer count");
    train->add_option("--dense-hidden", targs.dense_hidden, "CNN-LSTM dense hidden width");
    train->add_option("--dropout", targs.dropout, "Dropout rate override");
    train->set_config("--config");

    // forecast
    auto* forecast = app.add_subcommand("forecast", "Recursive multistep forecast");
    std::string fc_checkpoint, fc_dataset, fc_anchor, fc_out = "forecast.csv";
    int fc_horizon = -1;
    forecast->add_option("--checkpoint", fc_checkpoint, "Checkpoint file")->required();
    forecast->add_option("--dataset", fc_dataset, "UCI-format dataset file")->required();
    forecast->add_option("--anchor", fc_anchor,
                         "Anchor timestamp in the test range (default: end of training)");
    forecast->add_option("--horizon", fc_horizon, "Steps to forecast");
    forecast->add_option("--out", fc_out, "Output CSV");
    forecast->set_config("--config");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Multistep metrics on the test split");
    std::string ev_checkpoint, ev_baseline, ev_dataset, ev_resolution, ev_out;
    int ev_horizon = -1;
    std::size_t ev_stride = 1;
    evaluate->add_option("--checkpoint", ev_checkpoint, "Checkpoint file");
    evaluate->add_option("--baseline", ev_baseline, "naive|seasonal_naive");
    evaluate->add_option("--dataset", ev_dataset, "UCI-format dataset file")->required();
    evaluate->add_option("--resolution", ev_resolution,
                         "Resolution (defaults to the checkpoint's)");
    evaluate->add_option("--horizon", ev_horizon, "Evaluation horizon");
    evaluate->add_option("--stride", ev_stride, "Evaluate every stride-th anchor");
    evaluate->add_option("--out", ev_out, "Report CSV path");
    evaluate->set_config("--config");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Subband-importance evaluation");
    std::string ab_checkpoint, ab_dataset, ab_keep = "all", ab_out;
    int ab_horizon = -1;
    std::size_t ab_stride = 1;
    ablate->add_option("--checkpoint", ab_checkpoint, "Checkpoint file")->required();
    ablate->add_option("--dataset", ab_dataset, "UCI-format dataset file")->required();
    ablate->add_option("--keep", ab_keep, "Subbands kept as input, e.g. A3 or A3,D1 or all");
    ablate->add_option("--horizon", ab_horizon, "Evaluation horizon");
    ablate->add_option("--stride", ab_stride, "Evaluate every stride-th anchor");
    ablate->add_option("--out", ab_out, "Report CSV path");
    ablate->set_config("--config");

    // horizon-curve
    auto* curve = app.add_subcommand("horizon-curve", "Per-step MAE across the horizon");
    std::string hc_checkpoint, hc_dataset, hc_out = "horizon_mae.csv";
    int hc_horizon = -1;
    std::size_t hc_stride = 1;
    curve->add_option("--checkpoint", hc_checkpoint, "Checkpoint file")->required();
    curve->add_option("--dataset", hc_dataset, "UCI-format dataset file")->required();
    curve->add_option("--horizon", hc_horizon, "Curve horizon");
    curve->add_option("--stride", hc_stride, "Evaluate every stride-th anchor");
    curve->add_option("--out", hc_out, "Output CSV");
    curve->set_config("--config");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            return cmd_synth(synth_out, synth_minutes, synth_seed, synth_missing, synth_start);
        }
        if (decompose->parsed()) {
            return cmd_decompose(dec_in, dec_wavelet, dec_levels, dec_out);
        }
        if (reconstruct->parsed()) {
            return cmd_reconstruct(rec_in, rec_wavelet, rec_trim, rec_out);
        }
        if (train->parsed()) return cmd_train(targs);
        if (forecast->parsed()) {
            return cmd_forecast(fc_checkpoint, fc_dataset, fc_anchor, fc_horizon, fc_out);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(ev_checkpoint, ev_baseline, ev_dataset, ev_resolution,
                                ev_horizon, ev_stride, ev_out);
        }
        if (ablate->parsed()) {
            return cmd_ablate(ab_checkpoint, ab_dataset, ab_keep, ab_horizon, ab_stride,
                              ab_out);
        }
        if (curve->parsed()) {
            return cmd_horizon_curve(hc_checkpoint, hc_dataset, hc_horizon, hc_stride, hc_out);
        }
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << '\n';
        return 1;
    }
    return 0;
}
