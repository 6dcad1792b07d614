#include "neurodec/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

#include "neurodec/errors.hpp"

namespace neurodec {

namespace {

constexpr int kSchemaVersion = 1;

class WallTimer {
public:
    WallTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

std::string format_number(double value) { return Json(value).dump(); }

std::string csv_quote(const std::string& text) {
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

double optional_double(const Json& j, const char* key, double fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return require_double(j, key);
}

int optional_int(const Json& j, const char* key, int fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return require_int(j, key);
}

std::string optional_string(const Json& j, const char* key, const std::string& fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return require_string(j, key);
}

std::vector<double> parse_double_list(const Json& j, const char* key) {
    std::vector<double> out;
    if (!j.contains(key)) return out;
    const Json& array = j.at(key);
    if (!array.is_array()) throw SchemaError(std::string("'") + key + "' must be an array");
    for (const Json& e : array) {
        if (!e.is_number()) throw SchemaError(std::string("'") + key + "' must hold numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<int> parse_int_list(const Json& j, const char* key) {
    std::vector<int> out;
    if (!j.contains(key)) return out;
    const Json& array = j.at(key);
    if (!array.is_array()) throw SchemaError(std::string("'") + key + "' must be an array");
    for (const Json& e : array) {
        if (!e.is_number_integer()) throw SchemaError(std::string("'") + key + "' must hold integers");
        out.push_back(e.get<int>());
    }
    return out;
}

Json int_list_json(const std::vector<int>& v) { return Json(v); }
Json double_list_json(const std::vector<double>& v) { return Json(v); }

std::string decoder_kind_name(DecoderKind kind) {
    switch (kind) {
        case DecoderKind::ccbr: return "ccbr";
        case DecoderKind::wiener: return "wiener";
        case DecoderKind::wiener_cascade: return "wiener_cascade";
    }
    return "ccbr";
}

DecoderKind decoder_kind_from_name(const std::string& name) {
    if (name == "ccbr") return DecoderKind::ccbr;
    if (name == "wiener") return DecoderKind::wiener;
    if (name == "wiener_cascade") return DecoderKind::wiener_cascade;
    throw SchemaError("unknown decoder kind '" + name + "'");
}

Json decoder_spec_to_json(const DecoderSpec& spec) {
    Json j{{"name", spec.name}, {"kind", decoder_kind_name(spec.kind)}};
    if (spec.kind == DecoderKind::ccbr) {
        j["ccbr"] = ccbr_config_to_json(spec.ccbr);
    } else {
        j["lambda"] = spec.lambda;
        if (spec.kind == DecoderKind::wiener_cascade) j["degree"] = spec.degree;
    }
    return j;
}

DecoderSpec decoder_spec_from_json(const Json& j) {
    DecoderSpec spec;
    spec.name = require_string(j, "name");
    spec.kind = decoder_kind_from_name(require_string(j, "kind"));
    if (spec.kind == DecoderKind::ccbr) {
        if (j.contains("ccbr")) spec.ccbr = ccbr_config_from_json(j.at("ccbr"));
    } else {
        spec.lambda = optional_double(j, "lambda", 0.0);
        if (spec.kind == DecoderKind::wiener_cascade) spec.degree = optional_int(j, "degree", 3);
    }
    return spec;
}

Json feature_config_to_json(const FeatureConfig& features) {
    return Json{{"source", name_of(features.source)},
                {"bin_width_s", features.bin_width_s},
                {"lags_before", features.lags_before},
                {"lags_after", features.lags_after},
                {"crossing",
                 Json{{"threshold_scale", features.crossing.threshold_scale},
                      {"refractory_s", features.crossing.refractory_s},
                      {"negative_going", features.crossing.negative_going}}},
                {"band_low_hz", features.band_low_hz},
                {"band_high_hz", features.band_high_hz}};
}

FeatureConfig feature_config_from_json(const Json& j) {
    FeatureConfig features;
    features.source = feature_source_from_name(require_string(j, "source"));
    features.bin_width_s = require_double(j, "bin_width_s");
    features.lags_before = optional_int(j, "lags_before", 0);
    features.lags_after = optional_int(j, "lags_after", 0);
    if (j.contains("crossing")) {
        const Json& crossing = j.at("crossing");
        features.crossing.threshold_scale = optional_double(crossing, "threshold_scale", 4.5);
        features.crossing.refractory_s = optional_double(crossing, "refractory_s", 0.001);
        if (crossing.contains("negative_going"))
            features.crossing.negative_going = require_bool(crossing, "negative_going");
    }
    features.band_low_hz = optional_double(j, "band_low_hz", 300.0);
    features.band_high_hz = optional_double(j, "band_high_hz", 1000.0);
    return features;
}

}  // namespace

void BenchConfig::validate() const {
    if (!dataset_path.empty() && synth.has_value())
        throw ConfigError("config sets both a dataset path and a synth block");
    if (dataset_path.empty() && !synth.has_value())
        throw ConfigError("config needs a dataset path or a synth block");
    if (decoders.empty()) throw ConfigError("config needs at least one decoder");
    for (const DecoderSpec& spec : decoders) {
        if (spec.name.empty()) throw ConfigError("every decoder needs a name");
        if (spec.kind != DecoderKind::ccbr && spec.lambda < 0.0)
            throw ConfigError("ridge penalty must be nonnegative");
        if (spec.kind == DecoderKind::wiener_cascade && spec.degree < 1)
            throw ConfigError("polynomial degree must be at least 1");
    }
    if (features.bin_width_s <= 0.0) throw ConfigError("bin width must be positive");
    if (features.lags_before < 0 || features.lags_after < 0)
        throw ConfigError("lag counts must be nonnegative");
    if (folds.n_folds < 2) throw ConfigError("cross-validation needs at least two folds");
    if (folds.val_fraction <= 0.0 || folds.val_fraction >= 0.5)
        throw ConfigError("validation fraction must be in (0, 0.5)");
}

Json bench_config_to_json(const BenchConfig& config) {
    Json dataset;
    if (!config.dataset_path.empty()) {
        dataset = Json{{"path", config.dataset_path}};
    } else if (config.synth.has_value()) {
        dataset = Json{{"synth", synth_config_to_json(*config.synth)}};
    } else {
        dataset = Json::object();
    }
    Json decoders = Json::array();
    for (const DecoderSpec& spec : config.decoders) decoders.push_back(decoder_spec_to_json(spec));
    return Json{{"schema_version", kSchemaVersion},
                {"dataset", std::move(dataset)},
                {"features", feature_config_to_json(config.features)},
                {"decoders", std::move(decoders)},
                {"folds", Json{{"n_folds", config.folds.n_folds},
                               {"val_fraction", config.folds.val_fraction}}},
                {"sweeps", Json{{"c", double_list_json(config.sweeps.c)},
                                {"ql", int_list_json(config.sweeps.ql)},
                                {"pcs", int_list_json(config.sweeps.pcs)},
                                {"bits", int_list_json(config.sweeps.bits)},
                                {"sparsity", double_list_json(config.sweeps.sparsity)},
                                {"channel_count", int_list_json(config.sweeps.channel_count)},
                                {"lambda", double_list_json(config.sweeps.lambda)},
                                {"degree", int_list_json(config.sweeps.degree)}}},
                {"seed", config.seed},
                {"output_dir", config.output_dir}};
}

BenchConfig bench_config_from_json(const Json& j) {
    if (require_int(j, "schema_version") != kSchemaVersion)
        throw SchemaError("unsupported schema_version");
    BenchConfig config;
    const Json& dataset = require_field(j, "dataset");
    if (dataset.contains("path") && dataset.contains("synth"))
        throw SchemaError("dataset block sets both 'path' and 'synth'");
    if (dataset.contains("path")) {
        config.dataset_path = require_string(dataset, "path");
    } else if (dataset.contains("synth")) {
        config.synth = synth_config_from_json(dataset.at("synth"));
    } else {
        throw SchemaError("dataset block needs 'path' or 'synth'");
    }
    config.features = feature_config_from_json(require_field(j, "features"));
    const Json& decoders = require_field(j, "decoders");
    if (!decoders.is_array()) throw SchemaError("'decoders' must be an array");
    for (const Json& spec : decoders) config.decoders.push_back(decoder_spec_from_json(spec));
    if (j.contains("folds")) {
        const Json& folds = j.at("folds");
        config.folds.n_folds = optional_int(folds, "n_folds", 10);
        config.folds.val_fraction = optional_double(folds, "val_fraction", 0.1);
    }
    if (j.contains("sweeps")) {
        const Json& sweeps = j.at("sweeps");
        config.sweeps.c = parse_double_list(sweeps, "c");
        config.sweeps.ql = parse_int_list(sweeps, "ql");
        config.sweeps.pcs = parse_int_list(sweeps, "pcs");
        config.sweeps.bits = parse_int_list(sweeps, "bits");
        config.sweeps.sparsity = parse_double_list(sweeps, "sparsity");
        config.sweeps.channel_count = parse_int_list(sweeps, "channel_count");
        config.sweeps.lambda = parse_double_list(sweeps, "lambda");
        config.sweeps.degree = parse_int_list(sweeps, "degree");
    }
    if (j.contains("seed")) {
        const Json& seed = j.at("seed");
        if (!seed.is_number_integer() && !seed.is_number_unsigned())
            throw SchemaError("'seed' must be an integer");
        config.seed = seed.get<std::uint64_t>();
    }
    config.output_dir = optional_string(j, "output_dir", "");
    return config;
}

BenchConfig load_bench_config(const std::string& path) {
    try {
        return bench_config_from_json(read_json_file(path));
    } catch (const SchemaError& error) {
        throw ConfigError(path + ": " + error.what());
    }
}

std::string environment_string() {
    std::ostringstream out;
#if defined(__clang__)
    out << "clang " << __clang_major__ << "." << __clang_minor__ << "." << __clang_patchlevel__;
#elif defined(__GNUC__)
    out << "gcc " << __GNUC__ << "." << __GNUC_MINOR__ << "." << __GNUC_PATCHLEVEL__;
#else
    out << "unknown compiler";
#endif
    out << ", eigen " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "."
        << EIGEN_MINOR_VERSION;
    out << ", " << sizeof(void*) * 8 << "-bit";
    return out.str();
}

bool EvalReport::all_failed() const {
    if (records.empty()) return true;
    for (const EvalRecord& record : records)
        if (!record.failed) return false;
    return true;
}

std::vector<Aggregate> aggregate_records(const std::vector<EvalRecord>& records) {
    std::vector<Aggregate> aggregates;
    std::vector<std::vector<double>> values;
    for (const EvalRecord& record : records) {
        if (record.failed) continue;
        std::size_t slot = aggregates.size();
        for (std::size_t i = 0; i < aggregates.size(); ++i) {
            if (aggregates[i].decoder == record.decoder) {
                slot = i;
                break;
            }
        }
        if (slot == aggregates.size()) {
            aggregates.push_back(Aggregate{record.decoder, 0, 0.0, 0.0, 0.0, 0.0});
            values.emplace_back();
        }
        Aggregate& aggregate = aggregates[slot];
        aggregate.n_records += 1;
        aggregate.fit_total_seconds += record.fit_seconds;
        aggregate.predict_total_seconds += record.predict_seconds;
        values[slot].push_back(record.r2_mean);
    }
    for (std::size_t i = 0; i < aggregates.size(); ++i) {
        const std::vector<double>& v = values[i];
        double mean = 0.0;
        for (double r2 : v) mean += r2;
        mean /= static_cast<double>(v.size());
        double variance = 0.0;
        for (double r2 : v) variance += (r2 - mean) * (r2 - mean);
        aggregates[i].r2_mean = mean;
        aggregates[i].r2_std =
            v.size() > 1 ? std::sqrt(variance / static_cast<double>(v.size() - 1)) : 0.0;
    }
    return aggregates;
}

Json report_to_json(const EvalReport& report) {
    Json records = Json::array();
    for (const EvalRecord& record : report.records) {
        Json entry{{"decoder", record.decoder}, {"fold", record.fold}, {"config", record.config}};
        if (record.failed) {
            entry["error"] = record.error;
        } else {
            entry["error"] = nullptr;
            Json metrics{{"r2_per_dim", json_vector(record.r2_per_dim)},
                         {"r2_mean", record.r2_mean},
                         {"n_stages", record.n_stages},
                         {"model_size", record.model_size}};
            if (record.val_r2.has_value()) metrics["val_r2"] = *record.val_r2;
            entry["metrics"] = std::move(metrics);
            entry["timing"] =
                Json{{"fit_s", record.fit_seconds}, {"predict_s", record.predict_seconds}};
        }
        records.push_back(std::move(entry));
    }
    Json aggregates = Json::array();
    for (const Aggregate& aggregate : report.aggregates)
        aggregates.push_back(Json{{"decoder", aggregate.decoder},
                                  {"n_records", aggregate.n_records},
                                  {"r2_mean", aggregate.r2_mean},
                                  {"r2_std", aggregate.r2_std},
                                  {"fit_total_s", aggregate.fit_total_seconds},
                                  {"predict_total_s", aggregate.predict_total_seconds}});
    return Json{{"schema_version", kSchemaVersion},
                {"environment", report.environment},
                {"summary", report.summary},
                {"records", std::move(records)},
                {"aggregates", std::move(aggregates)}};
}

void write_report(const EvalReport& report, const std::string& output_dir) {
    std::filesystem::create_directories(output_dir);
    write_json_file((std::filesystem::path(output_dir) / "report.json").string(), report_to_json(report));

    const std::string csv_path = (std::filesystem::path(output_dir) / "records.csv").string();
    std::ofstream out(csv_path);
    if (!out) throw LoadError("cannot open '" + csv_path + "' for writing");
    out << "decoder,fold,r2_mean,val_r2,fit_s,predict_s,n_stages,model_size,error\n";
    for (const EvalRecord& record : report.records) {
        out << csv_quote(record.decoder) << ',' << record.fold << ',';
        if (!record.failed) {
            out << format_number(record.r2_mean) << ',';
            if (record.val_r2.has_value()) out << format_number(*record.val_r2);
            out << ',' << format_number(record.fit_seconds) << ','
                << format_number(record.predict_seconds) << ',' << record.n_stages << ','
                << record.model_size << ',';
        } else {
            out << ",,,,,," << csv_quote(record.error);
        }
        out << '\n';
    }
    if (!out) throw LoadError("write to '" + csv_path + "' failed");
}

NeuralDataset bench_dataset(const BenchConfig& config) {
    if (!config.dataset_path.empty()) return load_dataset(config.dataset_path, DatasetSchema{});
    SynthConfig synth = config.synth.value();
    synth.noise_seed = config.seed;
    return generate_synthetic(synth);
}

PreparedData prepare_features(const NeuralDataset& dataset, const FeatureConfig& features) {
    PreparedData prepared;
    switch (features.source) {
        case FeatureSource::spike_count:
            prepared.base = bin_spike_counts(dataset, features.bin_width_s);
            break;
        case FeatureSource::threshold_crossing:
            if (!dataset.continuous.has_value())
                throw UnsupportedInputError("threshold crossings need a continuous recording");
            prepared.base =
                threshold_crossing_rate(*dataset.continuous, features.crossing, features.bin_width_s);
            break;
        case FeatureSource::band_power:
            if (!dataset.continuous.has_value())
                throw UnsupportedInputError("band power needs a continuous recording");
            prepared.base = spiking_band_power(*dataset.continuous, features.band_low_hz,
                                               features.band_high_hz, features.bin_width_s);
            break;
    }
    prepared.y_binned = bin_kinematics(dataset, features.bin_width_s);
    const Index t = std::min(prepared.base.rows(), prepared.y_binned.rows());
    prepared.base.conservativeResize(t, Eigen::NoChange);
    prepared.y_binned.conservativeResize(t, Eigen::NoChange);
    prepared.features = lag_embed(prepared.base, features.lags_before, features.lags_after,
                                  features.bin_width_s, features.source);
    prepared.targets = trim_to_lags(prepared.y_binned, features.lags_before, features.lags_after);
    return prepared;
}

namespace {

struct CellMetrics {
    Vector r2_per_dim;
    double r2_mean = 0.0;
    std::optional<double> val_r2;
    double fit_seconds = 0.0;
    double predict_seconds = 0.0;
    int n_stages = 0;
    Index model_size = 0;
};

Index ccbr_model_size(const std::vector<CCBRModel>& models) {
    Index size = 0;
    for (const CCBRModel& model : models) {
        size += model.standardizer.mean.size() * 2;
        size += model.pca.mean.size() + model.pca.components.size();
        for (const CCBRStage& stage : model.stages)
            size += stage.classifier->parameter_count() + stage.quantizer.centers.size() +
                    stage.quantizer.edges.size();
    }
    return size;
}

int ccbr_stage_count(const std::vector<CCBRModel>& models) {
    int stages = 0;
    for (const CCBRModel& model : models) stages += static_cast<int>(model.stages.size());
    return stages;
}

CellMetrics metrics_from_prediction(const Matrix& y_test, const Matrix& predicted) {
    CellMetrics metrics;
    const RSquared r2 = r_squared(y_test, predicted);
    metrics.r2_per_dim = r2.per_dim;
    metrics.r2_mean = r2.mean;
    return metrics;
}

CellMetrics evaluate_cell(const Matrix& x, const Matrix& y, const FoldSplit& split,
                          const DecoderSpec& spec) {
    const Matrix x_test = x.middleRows(split.test.lo, split.test.size());
    const Matrix y_test = y.middleRows(split.test.lo, split.test.size());

    if (spec.kind == DecoderKind::ccbr) {
        const WallTimer fit_timer;
        const std::vector<CCBRModel> models = ccbr_fit(x, y, split, spec.ccbr);
        const double fit_seconds = fit_timer.seconds();
        const WallTimer predict_timer;
        const Matrix predicted = ccbr_predict(models, x_test);
        const double predict_seconds = predict_timer.seconds();
        CellMetrics metrics = metrics_from_prediction(y_test, predicted);
        metrics.fit_seconds = fit_seconds;
        metrics.predict_seconds = predict_seconds;
        metrics.n_stages = ccbr_stage_count(models);
        metrics.model_size = ccbr_model_size(models);
        return metrics;
    }

    const Matrix x_train = gather_rows(x, split.train);
    const Matrix y_train = gather_rows(y, split.train);
    const WallTimer fit_timer;
    const WienerModel model = spec.kind == DecoderKind::wiener
                                  ? wiener_fit(x_train, y_train, spec.lambda)
                                  : wiener_cascade_fit(x_train, y_train, spec.degree, spec.lambda);
    const double fit_seconds = fit_timer.seconds();
    const WallTimer predict_timer;
    const Matrix predicted = wiener_predict(model, x_test);
    const double predict_seconds = predict_timer.seconds();
    CellMetrics metrics = metrics_from_prediction(y_test, predicted);
    metrics.fit_seconds = fit_seconds;
    metrics.predict_seconds = predict_seconds;
    metrics.model_size = model.weights.size() + model.polynomial.size();
    return metrics;
}

void fill_record(EvalRecord& record, const CellMetrics& metrics) {
    record.r2_per_dim = metrics.r2_per_dim;
    record.r2_mean = metrics.r2_mean;
    record.val_r2 = metrics.val_r2;
    record.fit_seconds = metrics.fit_seconds;
    record.predict_seconds = metrics.predict_seconds;
    record.n_stages = metrics.n_stages;
    record.model_size = metrics.model_size;
}

Json cell_config(const BenchConfig& config, const DecoderSpec& spec, const Json& extras) {
    Json cell{{"decoder", decoder_spec_to_json(spec)},
              {"features", feature_config_to_json(config.features)},
              {"folds", Json{{"n_folds", config.folds.n_folds},
                             {"val_fraction", config.folds.val_fraction}}},
              {"seed", config.seed}};
    if (!config.dataset_path.empty()) cell["dataset"] = config.dataset_path;
    if (extras.is_object())
        for (const auto& [key, value] : extras.items()) cell[key] = value;
    return cell;
}

EvalRecord make_record(const BenchConfig& config, const DecoderSpec& spec, int fold,
                       const Json& extras) {
    EvalRecord record;
    record.decoder = spec.name;
    record.fold = fold;
    record.config = cell_config(config, spec, extras);
    return record;
}

const DecoderSpec& find_decoder(const BenchConfig& config, DecoderKind kind, const char* what) {
    for (const DecoderSpec& spec : config.decoders)
        if (spec.kind == kind) return spec;
    throw ConfigError(std::string("config needs a ") + what + " decoder");
}

struct SweepCellSummary {
    Json params;
    std::vector<double> per_fold;       // NaN marks a failed fold
    std::vector<bool> fold_succeeded;
};

Json sweep_summary(const std::string& grid_name, std::vector<SweepCellSummary>& cells, int n_folds) {
    Json cell_entries = Json::array();
    std::vector<double> cell_means;
    for (SweepCellSummary& cell : cells) {
        Json per_fold = Json::array();
        double mean = 0.0;
        int successes = 0;
        for (int f = 0; f < n_folds; ++f) {
            if (cell.fold_succeeded[static_cast<std::size_t>(f)]) {
                per_fold.push_back(cell.per_fold[static_cast<std::size_t>(f)]);
                mean += cell.per_fold[static_cast<std::size_t>(f)];
                ++successes;
            } else {
                per_fold.push_back(nullptr);
            }
        }
        Json entry = cell.params;
        entry["per_fold"] = std::move(per_fold);
        if (successes > 0) {
            mean /= successes;
            entry["r2_mean"] = mean;
            cell_means.push_back(mean);
        } else {
            entry["r2_mean"] = nullptr;
        }
        cell_entries.push_back(std::move(entry));
    }

    Json per_fold_spread = Json::array();
    double max_per_fold_spread = 0.0;
    bool any_fold = false;
    for (int f = 0; f < n_folds; ++f) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (const SweepCellSummary& cell : cells) {
            if (!cell.fold_succeeded[static_cast<std::size_t>(f)]) continue;
            lo = std::min(lo, cell.per_fold[static_cast<std::size_t>(f)]);
            hi = std::max(hi, cell.per_fold[static_cast<std::size_t>(f)]);
            any = true;
        }
        if (any) {
            per_fold_spread.push_back(hi - lo);
            max_per_fold_spread = std::max(max_per_fold_spread, hi - lo);
            any_fold = true;
        } else {
            per_fold_spread.push_back(nullptr);
        }
    }

    Json summary{{"grid", grid_name},
                 {"cells", std::move(cell_entries)},
                 {"per_fold_spread", std::move(per_fold_spread)}};
    summary["max_per_fold_spread"] = any_fold ? Json(max_per_fold_spread) : Json(nullptr);
    if (!cell_means.empty()) {
        const auto [lo, hi] = std::minmax_element(cell_means.begin(), cell_means.end());
        summary["mean_spread"] = *hi - *lo;
    } else {
        summary["mean_spread"] = nullptr;
    }
    return summary;
}

}  // namespace

EvalReport run_benchmark(const BenchConfig& config) {
    config.validate();
    const NeuralDataset dataset = bench_dataset(config);
    const PreparedData prepared = prepare_features(dataset, config.features);
    const std::vector<FoldSplit> folds =
        make_folds(prepared.features.values.rows(), config.folds.n_folds, config.folds.val_fraction);

    EvalReport report;
    report.environment = environment_string();
    report.summary = Json::object();
    for (const DecoderSpec& spec : config.decoders) {
        for (const FoldSplit& split : folds) {
            EvalRecord record = make_record(config, spec, split.fold_index, Json::object());
            try {
                fill_record(record, evaluate_cell(prepared.features.values, prepared.targets, split, spec));
            } catch (const std::exception& error) {
                record.failed = true;
                record.error = error.what();
            }
            report.records.push_back(std::move(record));
        }
    }
    report.aggregates = aggregate_records(report.records);
    if (!config.output_dir.empty()) write_report(report, config.output_dir);
    return report;
}

EvalReport sweep_robustness(const BenchConfig& config, const std::string& grid_name) {
    config.validate();
    const DecoderSpec& base = find_decoder(config, DecoderKind::ccbr, "cascade");
    const NeuralDataset dataset = bench_dataset(config);
    const PreparedData prepared = prepare_features(dataset, config.features);
    const Index n_bins = prepared.features.values.rows();
    const std::vector<FoldSplit> folds =
        make_folds(n_bins, config.folds.n_folds, config.folds.val_fraction);
    const int n_folds = static_cast<int>(folds.size());

    EvalReport report;
    report.environment = environment_string();
    std::vector<SweepCellSummary> cells;
    auto new_cell = [&](Json params) {
        SweepCellSummary cell;
        cell.params = std::move(params);
        cell.per_fold.assign(static_cast<std::size_t>(n_folds),
                             std::numeric_limits<double>::quiet_NaN());
        cell.fold_succeeded.assign(static_cast<std::size_t>(n_folds), false);
        cells.push_back(std::move(cell));
        return cells.size() - 1;
    };

    auto run_plain_cell = [&](const DecoderSpec& spec, const Json& extras, std::size_t cell,
                              const Matrix& x, const Matrix& y) {
        for (const FoldSplit& split : folds) {
            EvalRecord record = make_record(config, spec, split.fold_index, extras);
            try {
                fill_record(record, evaluate_cell(x, y, split, spec));
                cells[cell].per_fold[static_cast<std::size_t>(split.fold_index)] = record.r2_mean;
                cells[cell].fold_succeeded[static_cast<std::size_t>(split.fold_index)] = true;
            } catch (const std::exception& error) {
                record.failed = true;
                record.error = error.what();
            }
            report.records.push_back(std::move(record));
        }
    };

    if (grid_name == "robustness") {
        if (config.sweeps.c.size() < 2 || config.sweeps.ql.size() < 2)
            throw ConfigError("robustness sweep needs at least two values of C and of QL");
        for (double c : config.sweeps.c) {
            for (int ql : config.sweeps.ql) {
                DecoderSpec spec = base;
                spec.ccbr.c = c;
                spec.ccbr.ql = ql;
                spec.name = base.name + "[c=" + format_number(c) + ",ql=" + std::to_string(ql) + "]";
                const std::size_t cell = new_cell(Json{{"c", c}, {"ql", ql}});
                run_plain_cell(spec, Json{{"c", c}, {"ql", ql}}, cell, prepared.features.values,
                               prepared.targets);
            }
        }
    } else if (grid_name == "pcs") {
        if (config.sweeps.pcs.empty()) throw ConfigError("pcs sweep needs a non-empty grid");
        for (int pcs : config.sweeps.pcs) {
            DecoderSpec spec = base;
            spec.ccbr.pc = PcSelector::fixed(pcs);
            spec.name = base.name + "[pcs=" + std::to_string(pcs) + "]";
            const std::size_t cell = new_cell(Json{{"pcs", pcs}});
            run_plain_cell(spec, Json{{"pcs", pcs}}, cell, prepared.features.values, prepared.targets);
        }
    } else if (grid_name == "channels") {
        if (config.sweeps.channel_count.empty())
            throw ConfigError("channels sweep needs a non-empty grid");
        for (int channels : config.sweeps.channel_count) {
            if (channels < 1 || channels > prepared.base.cols())
                throw ConfigError("channel_count value out of range");
            const FeatureMatrix sliced =
                lag_embed(prepared.base.leftCols(channels), config.features.lags_before,
                          config.features.lags_after, config.features.bin_width_s,
                          config.features.source);
            DecoderSpec spec = base;
            spec.name = base.name + "[channels=" + std::to_string(channels) + "]";
            const std::size_t cell = new_cell(Json{{"channel_count", channels}});
            run_plain_cell(spec, Json{{"channel_count", channels}}, cell, sliced.values,
                           prepared.targets);
        }
    } else if (grid_name == "bits" || grid_name == "sparsity") {
        const bool is_bits = grid_name == "bits";
        if (is_bits && config.sweeps.bits.empty())
            throw ConfigError("bits sweep needs a non-empty grid");
        if (!is_bits && config.sweeps.sparsity.empty())
            throw ConfigError("sparsity sweep needs a non-empty grid");
        const std::size_t n_cells = is_bits ? config.sweeps.bits.size() : config.sweeps.sparsity.size();
        for (std::size_t i = 0; i < n_cells; ++i)
            new_cell(is_bits ? Json{{"bits", config.sweeps.bits[i]}}
                             : Json{{"sparsity", config.sweeps.sparsity[i]}});

        for (const FoldSplit& split : folds) {
            std::vector<CCBRModel> models;
            double fit_seconds = 0.0;
            std::string fit_error;
            try {
                const WallTimer fit_timer;
                models = ccbr_fit(prepared.features.values, prepared.targets, split, base.ccbr);
                fit_seconds = fit_timer.seconds();
            } catch (const std::exception& error) {
                fit_error = error.what();
            }
            const Matrix x_test =
                prepared.features.values.middleRows(split.test.lo, split.test.size());
            const Matrix y_test = prepared.targets.middleRows(split.test.lo, split.test.size());

            for (std::size_t i = 0; i < n_cells; ++i) {
                DecoderSpec spec = base;
                Json extras;
                if (is_bits) {
                    extras = Json{{"bits", config.sweeps.bits[i]}};
                    spec.name = base.name + "[bits=" + std::to_string(config.sweeps.bits[i]) + "]";
                } else {
                    extras = Json{{"sparsity", config.sweeps.sparsity[i]}};
                    spec.name =
                        base.name + "[sparsity=" + format_number(config.sweeps.sparsity[i]) + "]";
                }
                EvalRecord record = make_record(config, spec, split.fold_index, extras);
                if (!fit_error.empty()) {
                    record.failed = true;
                    record.error = fit_error;
                    report.records.push_back(std::move(record));
                    continue;
                }
                try {
                    std::vector<CCBRModel> edge;
                    edge.reserve(models.size());
                    for (const CCBRModel& model : models)
                        edge.push_back(is_bits
                                           ? ccbr_quantize_weights(model, config.sweeps.bits[i])
                                           : ccbr_prune_weights(model, config.sweeps.sparsity[i]));
                    const WallTimer predict_timer;
                    const Matrix predicted = ccbr_predict(edge, x_test);
                    const double predict_seconds = predict_timer.seconds();
                    CellMetrics metrics = metrics_from_prediction(y_test, predicted);
                    metrics.fit_seconds = fit_seconds;
                    metrics.predict_seconds = predict_seconds;
                    metrics.n_stages = ccbr_stage_count(edge);
                    metrics.model_size = ccbr_model_size(edge);
                    fill_record(record, metrics);
                    cells[i].per_fold[static_cast<std::size_t>(split.fold_index)] = record.r2_mean;
                    cells[i].fold_succeeded[static_cast<std::size_t>(split.fold_index)] = true;
                } catch (const std::exception& error) {
                    record.failed = true;
                    record.error = error.what();
                }
                report.records.push_back(std::move(record));
            }
        }
    } else {
        throw ConfigError("unknown sweep grid '" + grid_name + "'");
    }

    report.summary = sweep_summary(grid_name, cells, n_folds);
    report.aggregates = aggregate_records(report.records);
    if (!config.output_dir.empty()) write_report(report, config.output_dir);
    return report;
}

EvalReport compare_training_time(const BenchConfig& config) {
    config.validate();
    const DecoderSpec& ccbr_spec = find_decoder(config, DecoderKind::ccbr, "cascade");
    const DecoderSpec& baseline = find_decoder(config, DecoderKind::wiener_cascade, "wiener_cascade");
    if (config.sweeps.lambda.empty() || config.sweeps.degree.empty() ||
        config.sweeps.lambda.size() * config.sweeps.degree.size() < 12)
        throw ConfigError("training-time comparison needs a lambda x degree grid of at least 12 points");

    const NeuralDataset dataset = bench_dataset(config);
    const PreparedData prepared = prepare_features(dataset, config.features);
    const Matrix& x = prepared.features.values;
    const Matrix& y = prepared.targets;
    const std::vector<FoldSplit> folds =
        make_folds(x.rows(), config.folds.n_folds, config.folds.val_fraction);

    EvalReport report;
    report.environment = environment_string();
    double ccbr_total = 0.0;
    double grid_total = 0.0;
    double max_selection_gap = 0.0;
    Json selection = Json::array();

    for (const FoldSplit& split : folds) {
        EvalRecord ccbr_record = make_record(config, ccbr_spec, split.fold_index, Json::object());
        try {
            CellMetrics metrics = evaluate_cell(x, y, split, ccbr_spec);
            ccbr_total += metrics.fit_seconds;
            fill_record(ccbr_record, metrics);
        } catch (const std::exception& error) {
            ccbr_record.failed = true;
            ccbr_record.error = error.what();
        }
        report.records.push_back(std::move(ccbr_record));

        const Matrix x_train = gather_rows(x, split.train);
        const Matrix y_train = gather_rows(y, split.train);
        const Matrix x_val = x.middleRows(split.validation.lo, split.validation.size());
        const Matrix y_val = y.middleRows(split.validation.lo, split.validation.size());
        const Matrix x_test = x.middleRows(split.test.lo, split.test.size());
        const Matrix y_test = y.middleRows(split.test.lo, split.test.size());

        double best_val = -std::numeric_limits<double>::infinity();
        double selected_test = 0.0;
        double best_test = -std::numeric_limits<double>::infinity();
        Json selected_params;
        bool any_point = false;

        for (double lambda : config.sweeps.lambda) {
            for (int degree : config.sweeps.degree) {
                DecoderSpec spec = baseline;
                spec.lambda = lambda;
                spec.degree = degree;
                spec.name = baseline.name + "[lambda=" + format_number(lambda) +
                            ",degree=" + std::to_string(degree) + "]";
                EvalRecord record = make_record(
                    config, spec, split.fold_index,
                    Json{{"lambda", lambda}, {"degree", degree}});
                try {
                    const WallTimer fit_timer;
                    const WienerModel model = wiener_cascade_fit(x_train, y_train, degree, lambda);
                    const Matrix val_predicted = wiener_predict(model, x_val);
                    const double val_r2 = r_squared(y_val, val_predicted).mean;
                    grid_total += fit_timer.seconds();

                    const WallTimer predict_timer;
                    const Matrix predicted = wiener_predict(model, x_test);
                    const double predict_seconds = predict_timer.seconds();
                    CellMetrics metrics = metrics_from_prediction(y_test, predicted);
                    metrics.val_r2 = val_r2;
                    metrics.predict_seconds = predict_seconds;
                    metrics.model_size = model.weights.size() + model.polynomial.size();
                    fill_record(record, metrics);

                    any_point = true;
                    best_test = std::max(best_test, metrics.r2_mean);
                    if (val_r2 > best_val) {
                        best_val = val_r2;
                        selected_test = metrics.r2_mean;
                        selected_params = Json{{"lambda", lambda}, {"degree", degree}};
                    }
                } catch (const std::exception& error) {
                    record.failed = true;
                    record.error = error.what();
                }
                report.records.push_back(std::move(record));
            }
        }

        if (any_point) {
            const double gap = best_test - selected_test;
            max_selection_gap = std::max(max_selection_gap, gap);
            selection.push_back(Json{{"fold", split.fold_index},
                                     {"selected", selected_params},
                                     {"val_r2", best_val},
                                     {"test_r2", selected_test},
                                     {"best_test_r2", best_test},
                                     {"gap", gap}});
        }
    }

    report.summary = Json{
        {"ccbr_total_s", ccbr_total},
        {"grid_total_s", grid_total},
        {"ratio", ccbr_total > 0.0 ? Json(grid_total / ccbr_total) : Json(nullptr)},
        {"grid_points", config.sweeps.lambda.size() * config.sweeps.degree.size()},
        {"selection", std::move(selection)},
        {"max_selection_gap", max_selection_gap}};
    report.aggregates = aggregate_records(report.records);
    if (!config.output_dir.empty()) write_report(report, config.output_dir);
    return report;
}

std::string render_plot_data(const Json& report, const std::string& kind) {
    std::ostringstream out;
    if (kind == "r2_bars" || kind == "runtime_bars") {
        const Json& aggregates = require_field(report, "aggregates");
        if (!aggregates.is_array()) throw SchemaError("'aggregates' must be an array");
        if (kind == "r2_bars") {
            out << "# decoder,r2_mean,r2_std\n";
            for (const Json& a : aggregates)
                out << csv_quote(require_string(a, "decoder")) << ','
                    << format_number(require_double(a, "r2_mean")) << ','
                    << format_number(require_double(a, "r2_std")) << '\n';
        } else {
            out << "# decoder,fit_total_s,predict_total_s\n";
            for (const Json& a : aggregates)
                out << csv_quote(require_string(a, "decoder")) << ','
                    << format_number(require_double(a, "fit_total_s")) << ','
                    << format_number(require_double(a, "predict_total_s")) << '\n';
        }
        return out.str();
    }
    if (kind == "sweep_heatmap") {
        const Json& summary = require_field(report, "summary");
        const Json& cells = require_field(summary, "cells");
        if (!cells.is_array()) throw SchemaError("'cells' must be an array");
        out << "# c,ql,r2_mean\n";
        for (const Json& cell : cells)
            out << format_number(require_double(cell, "c")) << ',' << require_int(cell, "ql") << ','
                << format_number(require_double(cell, "r2_mean")) << '\n';
        return out.str();
    }
    throw ConfigError("unknown plot kind '" + kind + "'");
}

}  // namespace neurodec
