#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "neurodec/dataset.hpp"
#include "neurodec/decode.hpp"
#include "neurodec/errors.hpp"
#include "neurodec/features.hpp"

using namespace neurodec;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("neurodec_dataset_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

std::string kinematics_csv(Index rows, double rate_hz) {
    std::string s = "t_s,y0,y1\n";
    for (Index r = 0; r < rows; ++r) {
        s += std::to_string(static_cast<double>(r) / rate_hz) + "," +
             std::to_string(0.1 * static_cast<double>(r)) + "," +
             std::to_string(-0.05 * static_cast<double>(r)) + "\n";
    }
    return s;
}

template <typename E, typename Fn>
std::string thrown_message(Fn&& fn) {
    try {
        fn();
    } catch (const E& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("load_dataset reads a two-unit spike session") {
    const auto dir = fresh_dir("two_unit");
    write_text(dir / "spikes.csv",
               "unit,time_s\n"
               "0,0.5\n"
               "1,1.25\n"
               "0,3.0\n"
               "1,9.75\n");
    write_text(dir / "kinematics.csv", kinematics_csv(250, 25.0));
    write_text(dir / "meta.json", "{\"duration_s\": 10.0, \"kin_rate_hz\": 25.0}\n");

    const auto ds = load_dataset(dir);
    CHECK(ds.n_units() == 2);
    CHECK(ds.kinematics.rows() == 250);
    CHECK(ds.kinematics.cols() == 2);
    CHECK(ds.duration_s == doctest::Approx(10.0));
    CHECK(ds.kin_rate_hz == doctest::Approx(25.0));
    REQUIRE(ds.spikes.has_value());
    CHECK(ds.spikes->events.size() == 4);
    for (size_t i = 1; i < ds.spikes->events.size(); ++i)
        CHECK(ds.spikes->events[i - 1].time_s <= ds.spikes->events[i].time_s);
    fs::remove_all(dir);
}

TEST_CASE("empty spikes file leaves the spike modality absent") {
    const auto dir = fresh_dir("continuous_only");
    write_text(dir / "spikes.csv", "unit,time_s\n");
    std::string cont = "t_s,ch0\n";
    for (int s = 0; s < 100; ++s)
        cont += std::to_string(s / 100.0) + "," + std::to_string(0.01 * s) + "\n";
    write_text(dir / "continuous.csv", cont);
    write_text(dir / "kinematics.csv", kinematics_csv(25, 25.0));
    write_text(dir / "meta.json",
               "{\"duration_s\": 1.0, \"kin_rate_hz\": 25.0, \"continuous_rate_hz\": 100.0}\n");

    const auto ds = load_dataset(dir);
    CHECK_FALSE(ds.spikes.has_value());
    REQUIRE(ds.continuous.has_value());
    CHECK(ds.continuous->n_channels() == 1);
    CHECK(ds.continuous->n_samples() == 100);
    CHECK(ds.continuous->rate_hz == doctest::Approx(100.0));
    fs::remove_all(dir);
}

TEST_CASE("kinematics length mismatch is rejected by name") {
    const auto dir = fresh_dir("short_kinematics");
    write_text(dir / "spikes.csv", "unit,time_s\n0,0.5\n");
    write_text(dir / "kinematics.csv", kinematics_csv(249, 25.0));
    write_text(dir / "meta.json", "{\"duration_s\": 10.0, \"kin_rate_hz\": 25.0}\n");

    const auto msg = thrown_message<ValidationError>([&] { load_dataset(dir); });
    CHECK(msg.find("kinematics length mismatch") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("missing files raise load errors naming the file") {
    const auto dir = fresh_dir("missing_meta");
    write_text(dir / "spikes.csv", "unit,time_s\n0,0.5\n");
    write_text(dir / "kinematics.csv", kinematics_csv(250, 25.0));

    const auto msg = thrown_message<LoadError>([&] { load_dataset(dir); });
    CHECK(msg.find("meta.json") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("malformed rows raise parse errors with the line number") {
    const auto dir = fresh_dir("bad_row");
    write_text(dir / "spikes.csv", "unit,time_s\n0,0.5\n0,oops\n");
    write_text(dir / "kinematics.csv", kinematics_csv(250, 25.0));
    write_text(dir / "meta.json", "{\"duration_s\": 10.0, \"kin_rate_hz\": 25.0}\n");

    const auto msg = thrown_message<ParseError>([&] { load_dataset(dir); });
    CHECK(msg.find(":3:") != std::string::npos);
    CHECK(msg.find("oops") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("untuned population fires at the baseline rate") {
    SynthConfig cfg;
    cfg.n_units = 20;
    cfg.duration_s = 100.0;
    cfg.tuning.baseline_rate_hz = 10.0;
    cfg.tuning.modulation_depth_hz = 0.0;
    cfg.noise_seed = 7;

    const auto ds = generate_synthetic(cfg);
    REQUIRE(ds.spikes.has_value());
    std::vector<Index> counts(static_cast<size_t>(cfg.n_units), 0);
    for (const auto& ev : ds.spikes->events) ++counts[static_cast<size_t>(ev.unit)];

    const double sigma = std::sqrt(cfg.tuning.baseline_rate_hz / cfg.duration_s);
    for (int u = 0; u < cfg.n_units; ++u) {
        const double rate = static_cast<double>(counts[static_cast<size_t>(u)]) / cfg.duration_s;
        CHECK(std::abs(rate - cfg.tuning.baseline_rate_hz) < 3.0 * sigma);
    }
}

TEST_CASE("generation is bit-identical for equal configs") {
    SynthConfig cfg;
    cfg.n_units = 5;
    cfg.duration_s = 20.0;
    cfg.noise_seed = 42;

    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    REQUIRE(a.spikes.has_value());
    REQUIRE(b.spikes.has_value());
    REQUIRE(a.spikes->events.size() == b.spikes->events.size());
    for (size_t i = 0; i < a.spikes->events.size(); ++i) {
        CHECK(a.spikes->events[i].unit == b.spikes->events[i].unit);
        CHECK(a.spikes->events[i].time_s == b.spikes->events[i].time_s);
    }
    CHECK(a.kinematics.rows() == b.kinematics.rows());
    CHECK((a.kinematics.array() == b.kinematics.array()).all());

    cfg.noise_seed = 43;
    const auto c = generate_synthetic(cfg);
    CHECK(a.spikes->events.size() != c.spikes->events.size());
}

TEST_CASE("baseline firing stays within Poisson error across seeds") {
    SynthConfig cfg;
    cfg.n_units = 10;
    cfg.duration_s = 50.0;
    cfg.tuning.baseline_rate_hz = 10.0;
    cfg.tuning.modulation_depth_hz = 0.0;

    const double bound = 4.0 * std::sqrt(cfg.tuning.baseline_rate_hz / cfg.duration_s);
    int within = 0;
    int total = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        cfg.noise_seed = seed;
        const auto ds = generate_synthetic(cfg);
        std::vector<Index> counts(static_cast<size_t>(cfg.n_units), 0);
        for (const auto& ev : ds.spikes->events) ++counts[static_cast<size_t>(ev.unit)];
        for (int u = 0; u < cfg.n_units; ++u) {
            const double rate = static_cast<double>(counts[static_cast<size_t>(u)]) / cfg.duration_s;
            if (std::abs(rate - cfg.tuning.baseline_rate_hz) < bound) ++within;
            ++total;
        }
    }
    CHECK(within >= static_cast<int>(0.95 * total));
}

TEST_CASE("make_folds splits 100 bins into 5 folds of 20-bin test blocks") {
    const auto folds = make_folds(100, 5, 0.1);
    REQUIRE(folds.size() == 5);
    for (const auto& fold : folds) {
        CHECK(fold.test.size() == 20);
        CHECK(fold.validation.size() == 10);
        CHECK(fold.train_size() + fold.validation.size() + fold.test.size() == 100);
    }
}

TEST_CASE("infeasible fold configurations are rejected") {
    CHECK_THROWS_AS(make_folds(10, 20, 0.1), ConfigError);
    CHECK_THROWS_AS(make_folds(100, 1, 0.1), ConfigError);
    CHECK_THROWS_AS(make_folds(100, 5, 0.0), ConfigError);
    CHECK_THROWS_AS(make_folds(100, 5, 0.5), ConfigError);
}

TEST_CASE("fold test blocks partition the timeline") {
    const Index n_bins = 1000;
    const auto folds = make_folds(n_bins, 10, 0.1);
    REQUIRE(folds.size() == 10);

    Index expected_lo = 0;
    for (const auto& fold : folds) {
        CHECK(fold.test.lo == expected_lo);
        CHECK(fold.test.hi > fold.test.lo);
        expected_lo = fold.test.hi;
    }
    CHECK(expected_lo == n_bins);

    for (const auto& fold : folds) {
        CHECK(!fold.validation.empty());
        CHECK(!fold.test.empty());
        std::vector<int> cover(static_cast<size_t>(n_bins), 0);
        for (const auto& iv : fold.train)
            for (Index i = iv.lo; i < iv.hi; ++i) ++cover[static_cast<size_t>(i)];
        for (Index i = fold.validation.lo; i < fold.validation.hi; ++i)
            ++cover[static_cast<size_t>(i)];
        for (Index i = fold.test.lo; i < fold.test.hi; ++i) ++cover[static_cast<size_t>(i)];
        Index covered_once = 0;
        for (int c : cover) covered_once += (c == 1);
        CHECK(covered_once == n_bins);
    }
}

TEST_CASE("dataset round-trips through the CSV schema") {
    SynthConfig cfg;
    cfg.n_units = 4;
    cfg.duration_s = 30.0;
    cfg.noise_seed = 11;
    const auto original = generate_synthetic(cfg);

    const auto dir = fresh_dir("round_trip");
    save_dataset(original, dir);
    const auto loaded = load_dataset(dir);

    CHECK(loaded.n_units() == original.n_units());
    CHECK(loaded.duration_s == original.duration_s);
    CHECK(loaded.kin_rate_hz == original.kin_rate_hz);
    CHECK_FALSE(loaded.continuous.has_value());
    REQUIRE(loaded.spikes->events.size() == original.spikes->events.size());
    for (size_t i = 0; i < loaded.spikes->events.size(); ++i) {
        CHECK(loaded.spikes->events[i].unit == original.spikes->events[i].unit);
        CHECK(loaded.spikes->events[i].time_s == original.spikes->events[i].time_s);
    }
    REQUIRE(loaded.kinematics.rows() == original.kinematics.rows());
    CHECK((loaded.kinematics.array() == original.kinematics.array()).all());
    CHECK(loaded.metadata.at("source") == "synthetic");
    fs::remove_all(dir);
}

TEST_CASE("continuous traces round-trip through the CSV schema") {
    NeuralDataset ds;
    ContinuousRecording rec;
    rec.rate_hz = 500.0;
    rec.samples.resize(2, 50);
    for (Index s = 0; s < 50; ++s) {
        rec.samples(0, s) = std::sin(0.37 * static_cast<double>(s));
        rec.samples(1, s) = 1e-3 * static_cast<double>(s) - 0.5;
    }
    ds.continuous = rec;
    ds.kinematics.resize(10, 1);
    for (Index r = 0; r < 10; ++r) ds.kinematics(r, 0) = 0.25 * static_cast<double>(r);
    ds.kin_rate_hz = 100.0;
    ds.duration_s = 0.1;

    const auto dir = fresh_dir("continuous_round_trip");
    save_dataset(ds, dir);
    const auto loaded = load_dataset(dir);

    REQUIRE(loaded.continuous.has_value());
    CHECK(loaded.continuous->rate_hz == 500.0);
    CHECK((loaded.continuous->samples.array() == rec.samples.array()).all());
    CHECK((loaded.kinematics.array() == ds.kinematics.array()).all());
    fs::remove_all(dir);
}

TEST_CASE("synthetic population is decodable with a Wiener filter") {
    SynthConfig cfg;
    cfg.n_units = 100;
    cfg.duration_s = 800.0;
    cfg.tuning.modulation_depth_hz = 10.0;
    cfg.noise_seed = 3;
    const auto ds = generate_synthetic(cfg);

    const double bin_width = 0.1;
    const Matrix counts = bin_spike_counts(ds, bin_width);
    const Matrix kin = bin_kinematics(ds, bin_width);
    REQUIRE(counts.rows() == kin.rows());

    const auto embedded = lag_embed(counts, 4, 0, bin_width, FeatureSource::spike_count);
    const Matrix targets = trim_to_lags(kin, 4, 0);
    REQUIRE(embedded.values.rows() == targets.rows());

    const auto folds = make_folds(embedded.values.rows(), 5, 0.1);
    const auto& fold = folds.front();
    const Matrix x_train = gather_rows(embedded.values, fold.train);
    const Matrix y_train = gather_rows(targets, fold.train);
    const Matrix x_test = gather_rows(embedded.values, fold.test);
    const Matrix y_test = gather_rows(targets, fold.test);

    const auto wf = wiener_fit(x_train, y_train);
    const auto score = r_squared(y_test, wiener_predict(wf, x_test));
    CHECK(score.mean > 0.5);
}
