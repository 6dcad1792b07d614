#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "neurodec/bench.hpp"
#include "neurodec/errors.hpp"

using namespace neurodec;

namespace {

SynthConfig tiny_synth(double duration_s = 60.0) {
    SynthConfig synth;
    synth.n_units = 20;
    synth.duration_s = duration_s;
    synth.noise_seed = 5;
    return synth;
}

DecoderSpec ccbr_spec(const std::string& name = "ccbr") {
    DecoderSpec spec;
    spec.name = name;
    spec.kind = DecoderKind::ccbr;
    spec.ccbr.ql = 8;
    spec.ccbr.pc = PcSelector::fixed(5);
    spec.ccbr.max_stages = 2;
    return spec;
}

DecoderSpec wiener_spec(const std::string& name = "wiener") {
    DecoderSpec spec;
    spec.name = name;
    spec.kind = DecoderKind::wiener;
    spec.lambda = 0.0;
    return spec;
}

DecoderSpec cascade_spec(const std::string& name = "wiener_cascade") {
    DecoderSpec spec;
    spec.name = name;
    spec.kind = DecoderKind::wiener_cascade;
    spec.lambda = 1e-4;
    spec.degree = 2;
    return spec;
}

BenchConfig tiny_config() {
    BenchConfig config;
    config.synth = tiny_synth();
    config.features.bin_width_s = 0.1;
    config.features.lags_before = 2;
    config.features.lags_after = 0;
    config.decoders = {ccbr_spec(), wiener_spec(), cascade_spec()};
    config.folds.n_folds = 3;
    config.folds.val_fraction = 0.15;
    config.seed = 7;
    return config;
}

}  // namespace

TEST_CASE("configs round trip through JSON and reject malformed documents") {
    BenchConfig config = tiny_config();
    config.sweeps.c = {0.5, 2.0};
    config.sweeps.ql = {4, 8};
    config.sweeps.pcs = {2, 5};
    config.sweeps.bits = {8, 16};
    config.sweeps.sparsity = {0.1, 0.3};
    config.sweeps.channel_count = {5, 20};
    config.sweeps.lambda = {0.0, 1e-2};
    config.sweeps.degree = {1, 2, 3};
    config.output_dir = "out";

    const BenchConfig loaded = bench_config_from_json(bench_config_to_json(config));
    CHECK(loaded.synth.has_value());
    CHECK(loaded.synth->n_units == 20);
    CHECK(loaded.synth->noise_seed == 5);
    CHECK(loaded.features.lags_before == 2);
    REQUIRE(loaded.decoders.size() == 3);
    CHECK(loaded.decoders[0].kind == DecoderKind::ccbr);
    CHECK(loaded.decoders[0].ccbr.ql == 8);
    CHECK(loaded.decoders[0].ccbr.pc.fixed_count == 5);
    CHECK(loaded.decoders[2].degree == 2);
    CHECK(loaded.folds.n_folds == 3);
    CHECK(loaded.sweeps.c == config.sweeps.c);
    CHECK(loaded.sweeps.ql == config.sweeps.ql);
    CHECK(loaded.sweeps.lambda == config.sweeps.lambda);
    CHECK(loaded.seed == 7);
    CHECK(loaded.output_dir == "out");

    Json j = bench_config_to_json(config);
    j["dataset"] = Json{{"path", "somewhere"}, {"synth", synth_config_to_json(tiny_synth())}};
    CHECK_THROWS_AS((void)bench_config_from_json(j), SchemaError);
    j["dataset"] = Json::object();
    CHECK_THROWS_AS((void)bench_config_from_json(j), SchemaError);
    j = bench_config_to_json(config);
    j["schema_version"] = 999;
    CHECK_THROWS_AS((void)bench_config_from_json(j), SchemaError);
}

TEST_CASE("config validation names the offending constraint") {
    BenchConfig config = tiny_config();
    config.dataset_path = "somewhere";
    CHECK_THROWS_AS(config.validate(), ConfigError);

    config = tiny_config();
    config.synth.reset();
    CHECK_THROWS_AS(config.validate(), ConfigError);

    config = tiny_config();
    config.decoders.clear();
    CHECK_THROWS_AS(config.validate(), ConfigError);

    config = tiny_config();
    config.decoders[0].name.clear();
    CHECK_THROWS_AS(config.validate(), ConfigError);

    config = tiny_config();
    config.folds.n_folds = 1;
    CHECK_THROWS_AS(config.validate(), ConfigError);

    config = tiny_config();
    config.folds.val_fraction = 0.5;
    CHECK_THROWS_AS(config.validate(), ConfigError);

    config = tiny_config();
    config.features.lags_before = -1;
    CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("the harness seed pins the synthetic dataset") {
    BenchConfig config = tiny_config();
    config.seed = 7;
    const NeuralDataset from_bench = bench_dataset(config);

    SynthConfig direct = tiny_synth();
    direct.noise_seed = 7;
    const NeuralDataset reference = generate_synthetic(direct);

    REQUIRE(from_bench.spikes.has_value());
    REQUIRE(reference.spikes.has_value());
    CHECK(from_bench.spikes->events.size() == reference.spikes->events.size());
    CHECK((from_bench.kinematics.array() == reference.kinematics.array()).all());
}

TEST_CASE("feature preparation aligns lagged features with targets") {
    const NeuralDataset dataset = bench_dataset(tiny_config());
    FeatureConfig features;
    features.bin_width_s = 0.1;
    features.lags_before = 2;
    features.lags_after = 1;
    const PreparedData prepared = prepare_features(dataset, features);

    CHECK(prepared.base.rows() == 600);
    CHECK(prepared.base.cols() == 20);
    CHECK(prepared.y_binned.rows() == 600);
    CHECK(prepared.features.values.rows() == 597);
    CHECK(prepared.features.values.cols() == 80);
    CHECK(prepared.targets.rows() == 597);
    CHECK((prepared.targets.array() == prepared.y_binned.middleRows(2, 597).array()).all());

    FeatureConfig crossing;
    crossing.source = FeatureSource::threshold_crossing;
    CHECK_THROWS_AS((void)prepare_features(dataset, crossing), UnsupportedInputError);
    FeatureConfig band;
    band.source = FeatureSource::band_power;
    CHECK_THROWS_AS((void)prepare_features(dataset, band), UnsupportedInputError);
}

TEST_CASE("a benchmark run produces one record per decoder and fold") {
    const BenchConfig config = tiny_config();
    const EvalReport report = run_benchmark(config);

    REQUIRE(report.records.size() == 9);
    CHECK_FALSE(report.all_failed());
    for (const EvalRecord& record : report.records) {
        CHECK_FALSE(record.failed);
        CHECK(record.r2_per_dim.size() == 2);
        CHECK(record.r2_mean > 0.2);
        CHECK(record.fit_seconds >= 0.0);
        CHECK(record.model_size > 0);
    }
    for (size_t i = 0; i < report.records.size(); ++i)
        CHECK(report.records[i].fold == static_cast<int>(i % 3));

    REQUIRE(report.aggregates.size() == 3);
    for (const Aggregate& aggregate : report.aggregates) {
        CHECK(aggregate.n_records == 3);
        double mean = 0.0;
        std::vector<double> values;
        for (const EvalRecord& record : report.records)
            if (record.decoder == aggregate.decoder) {
                values.push_back(record.r2_mean);
                mean += record.r2_mean;
            }
        mean /= static_cast<double>(values.size());
        double variance = 0.0;
        for (double v : values) variance += (v - mean) * (v - mean);
        const double std_dev = std::sqrt(variance / static_cast<double>(values.size() - 1));
        CHECK(std::abs(aggregate.r2_mean - mean) <= 1e-15);
        CHECK(std::abs(aggregate.r2_std - std_dev) <= 1e-15);
    }
}

TEST_CASE("identical configurations reproduce every metric byte for byte") {
    const BenchConfig config = tiny_config();
    const EvalReport first = run_benchmark(config);
    const EvalReport second = run_benchmark(config);

    const Json a = report_to_json(first);
    const Json b = report_to_json(second);
    REQUIRE(a["records"].size() == b["records"].size());
    for (size_t i = 0; i < a["records"].size(); ++i) {
        CHECK(a["records"][i]["metrics"].dump() == b["records"][i]["metrics"].dump());
        CHECK(a["records"][i]["config"].dump() == b["records"][i]["config"].dump());
    }
    REQUIRE(a["aggregates"].size() == b["aggregates"].size());
    for (size_t i = 0; i < a["aggregates"].size(); ++i) {
        CHECK(a["aggregates"][i]["r2_mean"].dump() == b["aggregates"][i]["r2_mean"].dump());
        CHECK(a["aggregates"][i]["r2_std"].dump() == b["aggregates"][i]["r2_std"].dump());
    }
}

TEST_CASE("a failing cell becomes an error record without stopping the run") {
    BenchConfig config = tiny_config();
    DecoderSpec poisoned = ccbr_spec("poisoned");
    poisoned.ccbr.pc = PcSelector::fixed(10000);
    config.decoders.push_back(poisoned);

    const EvalReport report = run_benchmark(config);
    REQUIRE(report.records.size() == 12);
    CHECK_FALSE(report.all_failed());

    int failed = 0;
    for (const EvalRecord& record : report.records) {
        if (record.decoder == "poisoned") {
            CHECK(record.failed);
            CHECK_FALSE(record.error.empty());
            ++failed;
        } else {
            CHECK_FALSE(record.failed);
        }
    }
    CHECK(failed == 3);
    CHECK(report.aggregates.size() == 3);
    for (const Aggregate& aggregate : report.aggregates) CHECK(aggregate.decoder != "poisoned");
}

TEST_CASE("a run where every cell fails is detected") {
    BenchConfig config = tiny_config();
    DecoderSpec poisoned = ccbr_spec("poisoned");
    poisoned.ccbr.pc = PcSelector::fixed(10000);
    config.decoders = {poisoned};
    const EvalReport report = run_benchmark(config);
    CHECK(report.all_failed());
}

TEST_CASE("reports land on disk as JSON plus CSV") {
    BenchConfig config = tiny_config();
    config.decoders = {wiener_spec()};
    const auto dir = std::filesystem::temp_directory_path() / "neurodec_bench_report";
    std::filesystem::remove_all(dir);
    config.output_dir = dir.string();

    const EvalReport report = run_benchmark(config);
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "records.csv"));

    const Json loaded = read_json_file((dir / "report.json").string());
    CHECK(loaded["records"].size() == report.records.size());
    CHECK(require_int(loaded, "schema_version") == 1);
    CHECK(require_string(loaded, "environment") == environment_string());

    std::ifstream csv(dir / "records.csv");
    std::string line;
    int lines = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 1 + static_cast<int>(report.records.size()));
    std::filesystem::remove_all(dir);
}

TEST_CASE("the robustness sweep covers the full C x QL grid") {
    BenchConfig config = tiny_config();
    config.decoders = {ccbr_spec()};
    config.folds.n_folds = 2;
    config.sweeps.c = {0.5, 2.0};
    config.sweeps.ql = {4, 8};

    const EvalReport report = sweep_robustness(config, "robustness");
    CHECK(report.records.size() == 8);
    for (const EvalRecord& record : report.records) CHECK_FALSE(record.failed);

    const Json& summary = report.summary;
    CHECK(require_string(summary, "grid") == "robustness");
    REQUIRE(summary.at("cells").size() == 4);
    for (const Json& cell : summary.at("cells")) {
        CHECK(cell.contains("c"));
        CHECK(cell.contains("ql"));
        REQUIRE(cell.at("per_fold").size() == 2);
        double mean = 0.0;
        for (const Json& v : cell.at("per_fold")) mean += v.get<double>();
        CHECK(std::abs(require_double(cell, "r2_mean") - mean / 2.0) <= 1e-15);
    }

    REQUIRE(summary.at("per_fold_spread").size() == 2);
    for (int f = 0; f < 2; ++f) {
        double lo = 1e300, hi = -1e300;
        for (const Json& cell : summary.at("cells")) {
            const double v = cell.at("per_fold")[f].get<double>();
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(summary.at("per_fold_spread")[f].get<double>() == hi - lo);
    }
    const double max_spread = require_double(summary, "max_per_fold_spread");
    CHECK(max_spread >= 0.0);
    CHECK(max_spread == std::max(summary.at("per_fold_spread")[0].get<double>(),
                                 summary.at("per_fold_spread")[1].get<double>()));
}

TEST_CASE("sweeps demand usable grids") {
    BenchConfig config = tiny_config();
    config.decoders = {ccbr_spec()};
    config.sweeps.c = {1.0};
    config.sweeps.ql = {4, 8};
    CHECK_THROWS_AS((void)sweep_robustness(config, "robustness"), ConfigError);

    config.sweeps.c.clear();
    config.sweeps.ql.clear();
    CHECK_THROWS_AS((void)sweep_robustness(config, "pcs"), ConfigError);
    CHECK_THROWS_AS((void)sweep_robustness(config, "bits"), ConfigError);
    CHECK_THROWS_AS((void)sweep_robustness(config, "sparsity"), ConfigError);
    CHECK_THROWS_AS((void)sweep_robustness(config, "mystery"), ConfigError);

    config.sweeps.channel_count = {1000};
    CHECK_THROWS_AS((void)sweep_robustness(config, "channels"), ConfigError);

    BenchConfig no_ccbr = tiny_config();
    no_ccbr.decoders = {wiener_spec()};
    no_ccbr.sweeps.c = {0.5, 2.0};
    no_ccbr.sweeps.ql = {4, 8};
    CHECK_THROWS_AS((void)sweep_robustness(no_ccbr, "robustness"), ConfigError);
}

TEST_CASE("the component sweep reuses the shared fit pipeline per cell") {
    BenchConfig config = tiny_config();
    config.decoders = {ccbr_spec()};
    config.folds.n_folds = 2;
    config.sweeps.pcs = {2, 5};

    const EvalReport report = sweep_robustness(config, "pcs");
    CHECK(report.records.size() == 4);
    REQUIRE(report.summary.at("cells").size() == 2);
    CHECK(report.summary.at("cells")[0].at("pcs").get<int>() == 2);
    CHECK(report.summary.at("cells")[1].at("pcs").get<int>() == 5);
}

TEST_CASE("edge sweeps fit once per fold and transform per cell") {
    BenchConfig config = tiny_config();
    config.decoders = {ccbr_spec()};
    config.folds.n_folds = 2;
    config.sweeps.bits = {8, 24};

    const EvalReport report = sweep_robustness(config, "bits");
    REQUIRE(report.records.size() == 4);
    for (const EvalRecord& record : report.records) CHECK_FALSE(record.failed);

    double fit_8 = -1.0, fit_24 = -1.0;
    for (const EvalRecord& record : report.records) {
        if (record.fold != 0) continue;
        if (record.config.at("bits").get<int>() == 8) fit_8 = record.fit_seconds;
        if (record.config.at("bits").get<int>() == 24) fit_24 = record.fit_seconds;
    }
    CHECK(fit_8 == fit_24);
}

TEST_CASE("the training time comparison needs a full grid and both decoders") {
    BenchConfig config = tiny_config();
    config.decoders = {ccbr_spec(), cascade_spec()};
    config.sweeps.lambda = {0.0, 1.0};
    config.sweeps.degree = {1, 2, 3};
    CHECK_THROWS_AS((void)compare_training_time(config), ConfigError);

    config.sweeps.lambda = {0.0, 1e-4, 1e-2, 1.0};
    config.decoders = {ccbr_spec()};
    CHECK_THROWS_AS((void)compare_training_time(config), ConfigError);
    config.decoders = {cascade_spec()};
    CHECK_THROWS_AS((void)compare_training_time(config), ConfigError);
}

TEST_CASE("the training time comparison reports totals, ratio, and selections") {
    BenchConfig config = tiny_config();
    config.decoders = {ccbr_spec(), cascade_spec()};
    config.folds.n_folds = 2;
    config.sweeps.lambda = {0.0, 1e-4, 1e-2, 1.0};
    config.sweeps.degree = {1, 2, 3};

    const EvalReport report = compare_training_time(config);
    REQUIRE(report.records.size() == 2 * (1 + 12));

    const Json& summary = report.summary;
    CHECK(require_double(summary, "ccbr_total_s") > 0.0);
    CHECK(require_double(summary, "grid_total_s") > 0.0);
    CHECK(require_double(summary, "ratio") ==
          require_double(summary, "grid_total_s") / require_double(summary, "ccbr_total_s"));
    CHECK(summary.at("grid_points").get<int>() == 12);

    REQUIRE(summary.at("selection").size() == 2);
    double max_gap = 0.0;
    for (const Json& fold : summary.at("selection")) {
        CHECK(fold.at("selected").contains("lambda"));
        CHECK(fold.at("selected").contains("degree"));
        const double gap = require_double(fold, "gap");
        CHECK(gap >= 0.0);
        CHECK(std::abs(gap - (require_double(fold, "best_test_r2") -
                              require_double(fold, "test_r2"))) <= 1e-15);
        max_gap = std::max(max_gap, gap);
    }
    CHECK(require_double(summary, "max_selection_gap") == max_gap);

    int grid_records = 0;
    for (const EvalRecord& record : report.records)
        if (record.val_r2.has_value()) ++grid_records;
    CHECK(grid_records == 24);
}

TEST_CASE("plot data renders from report JSON and rejects bad input") {
    BenchConfig config = tiny_config();
    config.decoders = {ccbr_spec(), wiener_spec()};
    const Json report = report_to_json(run_benchmark(config));

    const std::string bars = render_plot_data(report, "r2_bars");
    std::istringstream bars_in(bars);
    std::string line;
    REQUIRE(std::getline(bars_in, line));
    CHECK(line == "# decoder,r2_mean,r2_std");
    int rows = 0;
    while (std::getline(bars_in, line)) {
        const auto first_comma = line.find(',');
        const auto second_comma = line.find(',', first_comma + 1);
        const double mean = std::stod(line.substr(first_comma + 1, second_comma - first_comma - 1));
        const double reference = report.at("aggregates")[rows].at("r2_mean").get<double>();
        CHECK(mean == reference);
        ++rows;
    }
    CHECK(rows == 2);

    const std::string runtime = render_plot_data(report, "runtime_bars");
    CHECK(runtime.rfind("# decoder,fit_total_s,predict_total_s", 0) == 0);

    BenchConfig sweep_config = tiny_config();
    sweep_config.decoders = {ccbr_spec()};
    sweep_config.folds.n_folds = 2;
    sweep_config.sweeps.c = {0.5, 2.0};
    sweep_config.sweeps.ql = {4, 8};
    const Json sweep_report = report_to_json(sweep_robustness(sweep_config, "robustness"));
    const std::string heatmap = render_plot_data(sweep_report, "sweep_heatmap");
    std::istringstream heat_in(heatmap);
    REQUIRE(std::getline(heat_in, line));
    CHECK(line == "# c,ql,r2_mean");
    rows = 0;
    while (std::getline(heat_in, line)) {
        const auto first_comma = line.find(',');
        const auto second_comma = line.find(',', first_comma + 1);
        const double c = std::stod(line.substr(0, first_comma));
        const int ql = std::stoi(line.substr(first_comma + 1, second_comma - first_comma - 1));
        const double r2 = std::stod(line.substr(second_comma + 1));
        const Json& cell = sweep_report.at("summary").at("cells")[rows];
        CHECK(c == cell.at("c").get<double>());
        CHECK(ql == cell.at("ql").get<int>());
        CHECK(r2 == cell.at("r2_mean").get<double>());
        ++rows;
    }
    CHECK(rows == 4);

    CHECK_THROWS_AS((void)render_plot_data(report, "pie_chart"), ConfigError);
    CHECK_THROWS_AS((void)render_plot_data(Json{{"summary", Json::object()}}, "sweep_heatmap"),
                    SchemaError);
    Json broken = report;
    broken["aggregates"][0].erase("r2_mean");
    CHECK_THROWS_AS((void)render_plot_data(broken, "r2_bars"), SchemaError);
}
