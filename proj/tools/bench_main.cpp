#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>

#include "neurodec/bench.hpp"
#include "neurodec/errors.hpp"
#include "neurodec/serialize.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAllCellsFailed = 3;

int finish_run(const neurodec::EvalReport& report) {
    int failed = 0;
    for (const neurodec::EvalRecord& record : report.records)
        if (record.failed) ++failed;
    std::printf("records: %zu (%d failed)\n", report.records.size(), failed);
    for (const neurodec::Aggregate& aggregate : report.aggregates)
        std::printf("%s: r2 %.4f +- %.4f over %d folds, fit %.3fs total\n",
                    aggregate.decoder.c_str(), aggregate.r2_mean, aggregate.r2_std,
                    aggregate.n_records, aggregate.fit_total_seconds);
    if (!report.summary.empty()) std::printf("summary: %s\n", report.summary.dump().c_str());
    if (report.all_failed()) {
        std::fprintf(stderr, "error: every cell failed\n");
        return kExitAllCellsFailed;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural decoding benchmark harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir;
    std::string grid_name = "robustness";
    std::string report_path;
    std::string plot_kind = "r2_bars";
    std::string plot_out;

    CLI::App* run = app.add_subcommand("run", "Cross-validated evaluation of configured decoders");
    run->add_option("--config", config_path, "Benchmark config (JSON)")->required();
    run->add_option("--out", output_dir, "Output directory (overrides config)");

    CLI::App* sweep = app.add_subcommand("sweep", "Hyperparameter robustness sweep");
    sweep->add_option("--config", config_path, "Benchmark config (JSON)")->required();
    sweep->add_option("--grid", grid_name,
                      "Grid name: robustness | pcs | bits | sparsity | channels");
    sweep->add_option("--out", output_dir, "Output directory (overrides config)");

    CLI::App* timing = app.add_subcommand("timing", "Single fit vs grid-search training time");
    timing->add_option("--config", config_path, "Benchmark config (JSON)")->required();
    timing->add_option("--out", output_dir, "Output directory (overrides config)");

    CLI::App* synth = app.add_subcommand("synth", "Write the configured synthetic dataset as CSV");
    synth->add_option("--config", config_path, "Benchmark config (JSON)")->required();
    synth->add_option("--out", output_dir, "Dataset directory")->required();

    CLI::App* plotdata = app.add_subcommand("plotdata", "Plot-ready CSV from a report");
    plotdata->add_option("--report", report_path, "report.json from a previous run")->required();
    plotdata->add_option("--kind", plot_kind, "r2_bars | runtime_bars | sweep_heatmap");
    plotdata->add_option("--out", plot_out, "Output CSV path (default <kind>.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed() || sweep->parsed() || timing->parsed()) {
            neurodec::BenchConfig config = neurodec::load_bench_config(config_path);
            if (!output_dir.empty()) config.output_dir = output_dir;
            neurodec::EvalReport report;
            if (run->parsed()) {
                report = neurodec::run_benchmark(config);
            } else if (sweep->parsed()) {
                report = neurodec::sweep_robustness(config, grid_name);
            } else {
                report = neurodec::compare_training_time(config);
            }
            if (!config.output_dir.empty())
                std::printf("report written to %s\n",
                            (std::filesystem::path(config.output_dir) / "report.json").c_str());
            return finish_run(report);
        }
        if (synth->parsed()) {
            neurodec::BenchConfig config = neurodec::load_bench_config(config_path);
            if (!config.synth.has_value())
                throw neurodec::ConfigError("synth subcommand needs a synth dataset block");
            const neurodec::NeuralDataset dataset = neurodec::bench_dataset(config);
            neurodec::save_dataset(dataset, output_dir, neurodec::DatasetSchema{});
            std::printf("dataset written to %s\n", output_dir.c_str());
            return kExitOk;
        }
        // plotdata
        const neurodec::Json report = neurodec::read_json_file(report_path);
        const std::string csv = neurodec::render_plot_data(report, plot_kind);
        const std::string out_path = plot_out.empty() ? plot_kind + ".csv" : plot_out;
        std::ofstream out(out_path);
        if (!out) throw neurodec::LoadError("cannot open '" + out_path + "' for writing");
        out << csv;
        if (!out) throw neurodec::LoadError("write to '" + out_path + "' failed");
        std::printf("plot data written to %s\n", out_path.c_str());
        return kExitOk;
    } catch (const neurodec::ConfigError& error) {
        std::fprintf(stderr, "configuration error: %s\n", error.what());
        return kExitConfig;
    } catch (const neurodec::SchemaError& error) {
        std::fprintf(stderr, "configuration error: %s\n", error.what());
        return kExitConfig;
    } catch (const neurodec::ParseError& error) {
        std::fprintf(stderr, "configuration error: %s\n", error.what());
        return kExitConfig;
    } catch (const std::exception& error) {
        std::fprintf(stderr, "error: %s\n", error.what());
        return kExitFailure;
    }
}
