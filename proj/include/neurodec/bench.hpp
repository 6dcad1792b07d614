#pragma once

#include <optional>
#include <string>
#include <vector>

#include "neurodec/dataset.hpp"
#include "neurodec/decode.hpp"
#include "neurodec/features.hpp"
#include "neurodec/serialize.hpp"
#include "neurodec/types.hpp"

namespace neurodec {

struct FeatureConfig {
    FeatureSource source = FeatureSource::spike_count;
    double bin_width_s = 0.1;
    int lags_before = 4;
    int lags_after = 0;
    CrossingConfig crossing;         // threshold_crossing source
    double band_low_hz = 300.0;      // band_power source
    double band_high_hz = 1000.0;
};

enum class DecoderKind { ccbr, wiener, wiener_cascade };

struct DecoderSpec {
    std::string name;
    DecoderKind kind = DecoderKind::ccbr;
    CCBRConfig ccbr;       // ccbr only
    double lambda = 0.0;   // wiener variants
    int degree = 3;        // wiener_cascade only
};

struct FoldConfig {
    int n_folds = 10;
    double val_fraction = 0.1;
};

/// Named hyperparameter grids; a sweep uses only the grids it asks for.
struct SweepGrids {
    std::vector<double> c;
    std::vector<int> ql;
    std::vector<int> pcs;
    std::vector<int> bits;
    std::vector<double> sparsity;
    std::vector<int> channel_count;
    std::vector<double> lambda;  // baseline tuning grid
    std::vector<int> degree;     // baseline tuning grid
};

/// One benchmark definition. `seed` is the harness-level seed: it overrides
/// the synthetic generator's noise seed so that (config, seed) alone pins
/// every metric value.
struct BenchConfig {
    std::string dataset_path;  // empty when synthesizing
    std::optional<SynthConfig> synth;
    FeatureConfig features;
    std::vector<DecoderSpec> decoders;
    FoldConfig folds;
    SweepGrids sweeps;
    std::uint64_t seed = 1;
    std::string output_dir;

    void validate() const;
};

Json bench_config_to_json(const BenchConfig& config);
BenchConfig bench_config_from_json(const Json& j);
BenchConfig load_bench_config(const std::string& path);

struct EvalRecord {
    std::string decoder;
    int fold = 0;
    Json config;  // full configuration of this cell
    bool failed = false;
    std::string error;
    Vector r2_per_dim;
    double r2_mean = 0.0;
    std::optional<double> val_r2;  // grid-search cells only
    double fit_seconds = 0.0;
    double predict_seconds = 0.0;
    int n_stages = 0;    // cascade cells only
    Index model_size = 0;
};

struct Aggregate {
    std::string decoder;
    int n_records = 0;
    double r2_mean = 0.0;
    double r2_std = 0.0;  // sample standard deviation across folds
    double fit_total_seconds = 0.0;
    double predict_total_seconds = 0.0;
};

struct EvalReport {
    std::string environment;
    Json summary;  // operation-specific numbers (spreads, timing ratio, ...)
    std::vector<EvalRecord> records;
    std::vector<Aggregate> aggregates;

    bool all_failed() const;
};

/// Toolchain/version string recorded in every report.
std::string environment_string();

/// Aggregates recomputed from the records (mean and sample STD per decoder).
std::vector<Aggregate> aggregate_records(const std::vector<EvalRecord>& records);

Json report_to_json(const EvalReport& report);

/// report.json plus records.csv under output_dir (created if missing).
void write_report(const EvalReport& report, const std::string& output_dir);

/// Feature extraction shared by every operation: binned base channels, bin-grid
/// targets, and the lag-embedded decoder input with aligned target rows.
struct PreparedData {
    Matrix base;       // T x C binned features before lag embedding
    Matrix y_binned;   // T x K targets on the same bin grid
    FeatureMatrix features;
    Matrix targets;    // rows aligned with features.values
};

NeuralDataset bench_dataset(const BenchConfig& config);
PreparedData prepare_features(const NeuralDataset& dataset, const FeatureConfig& features);

/// Cross-validated evaluation of every configured decoder: fit on train,
/// select on validation, report on test. A failing cell becomes an error
/// record; the run only fails as a whole if every cell failed.
EvalReport run_benchmark(const BenchConfig& config);

/// Full-factorial robustness sweeps over one named grid:
///   "robustness" (C x QL), "pcs", "bits", "sparsity", "channels".
/// The summary carries per-fold and across-fold spreads of test R^2.
EvalReport sweep_robustness(const BenchConfig& config, const std::string& grid_name);

/// One CCBR fit per fold versus a lambda x degree Wiener-cascade grid search
/// (fit every point, select on validation). The summary carries total wall
/// times, their ratio, and the selected grid points.
EvalReport compare_training_time(const BenchConfig& config);

/// Plot-ready CSV (header comment + rows) for kind in
/// {r2_bars, runtime_bars, sweep_heatmap}.
std::string render_plot_data(const Json& report, const std::string& kind);

}  // namespace neurodec
