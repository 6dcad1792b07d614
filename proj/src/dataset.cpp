#include "neurodec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "neurodec/errors.hpp"
#include "neurodec/rng.hpp"

namespace neurodec {

void NeuralDataset::validate() const {
    if (!spikes && !continuous)
        throw ValidationError("dataset must carry spike events or continuous traces");
    if (duration_s <= 0.0) throw ValidationError("duration must be positive");
    if (kin_rate_hz <= 0.0) throw ValidationError("kin_rate_hz must be positive");

    const Index expected = static_cast<Index>(std::llround(duration_s * kin_rate_hz));
    if (kinematics.rows() != expected)
        throw ValidationError("kinematics length mismatch: got " +
                              std::to_string(kinematics.rows()) + " rows, expected " +
                              std::to_string(expected));
    if (kinematics.cols() < 1) throw ValidationError("kinematics must have at least one column");

    if (spikes) {
        std::vector<char> seen(static_cast<size_t>(std::max(spikes->n_units, 0)), 0);
        int max_unit = -1;
        for (const auto& ev : spikes->events) {
            if (ev.time_s < 0.0 || ev.time_s > duration_s)
                throw ValidationError("spike time outside [0, duration]");
            if (ev.unit < 0 || ev.unit >= spikes->n_units)
                throw ValidationError("unit index outside [0, n_units)");
            seen[static_cast<size_t>(ev.unit)] = 1;
            max_unit = std::max(max_unit, ev.unit);
        }
        for (int u = 0; u < max_unit; ++u)
            if (!seen[static_cast<size_t>(u)])
                throw ValidationError("unit indices are not contiguous from 0");
    }
    if (continuous) {
        if (continuous->rate_hz <= 0.0) throw ValidationError("continuous rate must be positive");
        if (continuous->samples.rows() < 1)
            throw ValidationError("continuous recording must have at least one channel");
    }
}

void SynthConfig::validate() const {
    if (n_units < 1) throw ConfigError("n_units must be >= 1");
    if (duration_s <= 0.0) throw ConfigError("duration must be positive");
    if (bin_hint_hz <= 0.0) throw ConfigError("bin_hint_hz must be positive");
    if (tuning.baseline_rate_hz < 0.0 || tuning.modulation_depth_hz < 0.0)
        throw ConfigError("rates must be nonnegative");
    if (velocity.smoothing_tau_s <= 0.0) throw ConfigError("smoothing_tau must be positive");
    if (velocity.speed_scale <= 0.0) throw ConfigError("speed_scale must be positive");
}

namespace {

// Rate of one unit given the instantaneous velocity.
double unit_rate(const SynthConfig& cfg, double pd, double vx, double vy) {
    const double speed = std::hypot(vx, vy);
    double drive = 0.0;
    if (speed > 0.0) {
        const double angle = std::atan2(vy, vx);
        drive = cfg.tuning.modulation_depth_hz * std::cos(angle - pd) * cfg.tuning.speed_gain *
                speed / cfg.velocity.speed_scale;
    }
    if (cfg.nonlinearity == RateNonlinearity::saturating) {
        const double level = 1.5 * std::max(cfg.tuning.modulation_depth_hz, 1e-12);
        drive = level * std::tanh(drive / level);
    }
    return std::max(0.0, cfg.tuning.baseline_rate_hz + drive);
}

}  // namespace

NeuralDataset generate_synthetic(const SynthConfig& config) {
    config.validate();
    Rng rng(config.noise_seed);

    const double dt = 1.0 / config.bin_hint_hz;
    const Index n_kin = static_cast<Index>(std::llround(config.duration_s * config.bin_hint_hz));

    // Stationary AR(1) velocity, per-component std = speed_scale.
    const double alpha = std::exp(-dt / config.velocity.smoothing_tau_s);
    const double innov = config.velocity.speed_scale * std::sqrt(1.0 - alpha * alpha);
    Matrix kin(n_kin, 2);
    double vx = config.velocity.speed_scale * rng.normal();
    double vy = config.velocity.speed_scale * rng.normal();
    for (Index t = 0; t < n_kin; ++t) {
        kin(t, 0) = vx;
        kin(t, 1) = vy;
        vx = alpha * vx + innov * rng.normal();
        vy = alpha * vy + innov * rng.normal();
    }

    const double pd_step = config.tuning.preferred_direction_step > 0.0
                               ? config.tuning.preferred_direction_step
                               : 2.0 * M_PI / config.n_units;

    // Poisson thinning against the per-unit peak rate; the target rate is held
    // constant on a 1 ms sub-grid (nearest kinematic sample).
    const double sub_dt = 1e-3;
    SpikeTrain train;
    train.n_units = config.n_units;
    const double speed_cap = 4.0 * config.velocity.speed_scale * std::sqrt(2.0);
    for (int u = 0; u < config.n_units; ++u) {
        const double pd = u * pd_step;
        double peak = config.tuning.baseline_rate_hz +
                      config.tuning.modulation_depth_hz * config.tuning.speed_gain * speed_cap /
                          config.velocity.speed_scale;
        peak = std::max(peak, 1e-9);
        double t = rng.exponential(peak);
        while (t < config.duration_s) {
            const Index cell = static_cast<Index>(t / sub_dt);
            const double t_cell = (static_cast<double>(cell) + 0.5) * sub_dt;
            Index k = static_cast<Index>(t_cell * config.bin_hint_hz);
            k = std::min(k, n_kin - 1);
            const double rate = std::min(unit_rate(config, pd, kin(k, 0), kin(k, 1)), peak);
            if (rng.uniform() * peak < rate) train.events.push_back({u, t});
            t += rng.exponential(peak);
        }
    }
    std::sort(train.events.begin(), train.events.end(), [](const SpikeEvent& a, const SpikeEvent& b) {
        return a.time_s != b.time_s ? a.time_s < b.time_s : a.unit < b.unit;
    });

    NeuralDataset ds;
    ds.spikes = std::move(train);
    ds.kinematics = std::move(kin);
    ds.kin_rate_hz = config.bin_hint_hz;
    ds.duration_s = config.duration_s;
    ds.metadata["source"] = "synthetic";
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// CSV I/O

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& file, size_t line_no) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError(file + ":" + std::to_string(line_no) + ": cannot parse number '" + s + "'");
    }
}

long parse_long(const std::string& s, const std::string& file, size_t line_no) {
    try {
        size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError(file + ":" + std::to_string(line_no) + ": cannot parse integer '" + s + "'");
    }
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw LoadError("cannot open " + p.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

void write_float(std::FILE* f, double v) { std::fprintf(f, "%.17g", v); }

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_for_write(const std::filesystem::path& p) {
    FilePtr f(std::fopen(p.string().c_str(), "wb"));
    if (!f) throw LoadError("cannot write " + p.string());
    return f;
}

}  // namespace

NeuralDataset load_dataset(const std::filesystem::path& dir, const DatasetSchema& schema) {
    NeuralDataset ds;

    const auto meta_path = dir / schema.meta;
    if (!std::filesystem::exists(meta_path)) throw LoadError("missing file: " + meta_path.string());
    nlohmann::json meta;
    {
        std::ifstream in(meta_path);
        try {
            in >> meta;
        } catch (const std::exception& e) {
            throw ParseError(meta_path.string() + ": " + e.what());
        }
    }
    if (!meta.contains("duration_s") || !meta.contains("kin_rate_hz"))
        throw ParseError(meta_path.string() + ": requires duration_s and kin_rate_hz");
    ds.duration_s = meta["duration_s"].get<double>();
    ds.kin_rate_hz = meta["kin_rate_hz"].get<double>();

    // Spikes (optional file; an empty or header-only file means no spike modality).
    const auto spikes_path = dir / schema.spikes;
    if (std::filesystem::exists(spikes_path)) {
        auto lines = read_lines(spikes_path);
        SpikeTrain train;
        int max_unit = -1;
        for (size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            auto fields = split_csv(lines[i]);
            if (fields.size() != 2)
                throw ParseError(spikes_path.string() + ":" + std::to_string(i + 1) +
                                 ": expected 2 fields, got " + std::to_string(fields.size()));
            SpikeEvent ev;
            ev.unit = static_cast<int>(parse_long(fields[0], spikes_path.string(), i + 1));
            ev.time_s = parse_double(fields[1], spikes_path.string(), i + 1);
            max_unit = std::max(max_unit, ev.unit);
            train.events.push_back(ev);
        }
        if (!train.events.empty()) {
            train.n_units = max_unit + 1;
            std::sort(train.events.begin(), train.events.end(),
                      [](const SpikeEvent& a, const SpikeEvent& b) {
                          return a.time_s != b.time_s ? a.time_s < b.time_s : a.unit < b.unit;
                      });
            ds.spikes = std::move(train);
        }
    }

    // Continuous traces (optional).
    const auto cont_path = dir / schema.continuous;
    if (std::filesystem::exists(cont_path)) {
        auto lines = read_lines(cont_path);
        if (lines.size() > 1) {
            const auto header = split_csv(lines[0]);
            const Index n_ch = static_cast<Index>(header.size()) - 1;
            if (n_ch < 1) throw ParseError(cont_path.string() + ":1: expected t_s,ch0,...");
            Index n_rows = 0;
            for (size_t i = 1; i < lines.size(); ++i)
                if (!lines[i].empty()) ++n_rows;
            ContinuousRecording rec;
            rec.samples.resize(n_ch, n_rows);
            Index r = 0;
            for (size_t i = 1; i < lines.size(); ++i) {
                if (lines[i].empty()) continue;
                auto fields = split_csv(lines[i]);
                if (static_cast<Index>(fields.size()) != n_ch + 1)
                    throw ParseError(cont_path.string() + ":" + std::to_string(i + 1) +
                                     ": expected " + std::to_string(n_ch + 1) + " fields");
                for (Index c = 0; c < n_ch; ++c)
                    rec.samples(c, r) =
                        parse_double(fields[static_cast<size_t>(c + 1)], cont_path.string(), i + 1);
                ++r;
            }
            if (meta.contains("continuous_rate_hz") && !meta["continuous_rate_hz"].is_null())
                rec.rate_hz = meta["continuous_rate_hz"].get<double>();
            else
                throw ParseError(meta_path.string() + ": continuous_rate_hz required when " +
                                 schema.continuous + " is present");
            ds.continuous = std::move(rec);
        }
    }

    // Kinematics (required).
    const auto kin_path = dir / schema.kinematics;
    if (!std::filesystem::exists(kin_path)) throw LoadError("missing file: " + kin_path.string());
    {
        auto lines = read_lines(kin_path);
        if (lines.empty()) throw ParseError(kin_path.string() + ":1: missing header");
        const auto header = split_csv(lines[0]);
        const Index n_dims = static_cast<Index>(header.size()) - 1;
        if (n_dims < 1) throw ParseError(kin_path.string() + ":1: expected t_s,y0,...");
        Index n_rows = 0;
        for (size_t i = 1; i < lines.size(); ++i)
            if (!lines[i].empty()) ++n_rows;
        ds.kinematics.resize(n_rows, n_dims);
        Index r = 0;
        for (size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            auto fields = split_csv(lines[i]);
            if (static_cast<Index>(fields.size()) != n_dims + 1)
                throw ParseError(kin_path.string() + ":" + std::to_string(i + 1) + ": expected " +
                                 std::to_string(n_dims + 1) + " fields");
            for (Index c = 0; c < n_dims; ++c)
                ds.kinematics(r, c) =
                    parse_double(fields[static_cast<size_t>(c + 1)], kin_path.string(), i + 1);
            ++r;
        }
    }

    if (meta.contains("metadata") && meta["metadata"].is_object())
        for (auto& [k, v] : meta["metadata"].items())
            ds.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();

    ds.validate();
    return ds;
}

void save_dataset(const NeuralDataset& dataset, const std::filesystem::path& dir,
                  const DatasetSchema& schema) {
    dataset.validate();
    std::filesystem::create_directories(dir);

    {
        auto f = open_for_write(dir / schema.spikes);
        std::fputs("unit,time_s\n", f.get());
        if (dataset.spikes)
            for (const auto& ev : dataset.spikes->events) {
                std::fprintf(f.get(), "%d,", ev.unit);
                write_float(f.get(), ev.time_s);
                std::fputc('\n', f.get());
            }
    }
    {
        auto f = open_for_write(dir / schema.kinematics);
        std::fputs("t_s", f.get());
        for (Index c = 0; c < dataset.kinematics.cols(); ++c)
            std::fprintf(f.get(), ",y%lld", static_cast<long long>(c));
        std::fputc('\n', f.get());
        for (Index r = 0; r < dataset.kinematics.rows(); ++r) {
            write_float(f.get(), static_cast<double>(r) / dataset.kin_rate_hz);
            for (Index c = 0; c < dataset.kinematics.cols(); ++c) {
                std::fputc(',', f.get());
                write_float(f.get(), dataset.kinematics(r, c));
            }
            std::fputc('\n', f.get());
        }
    }
    if (dataset.continuous) {
        auto f = open_for_write(dir / schema.continuous);
        std::fputs("t_s", f.get());
        for (Index c = 0; c < dataset.continuous->n_channels(); ++c)
            std::fprintf(f.get(), ",ch%lld", static_cast<long long>(c));
        std::fputc('\n', f.get());
        for (Index s = 0; s < dataset.continuous->n_samples(); ++s) {
            write_float(f.get(), static_cast<double>(s) / dataset.continuous->rate_hz);
            for (Index c = 0; c < dataset.continuous->n_channels(); ++c) {
                std::fputc(',', f.get());
                write_float(f.get(), dataset.continuous->samples(c, s));
            }
            std::fputc('\n', f.get());
        }
    }
    {
        nlohmann::json meta;
        meta["duration_s"] = dataset.duration_s;
        meta["kin_rate_hz"] = dataset.kin_rate_hz;
        meta["continuous_rate_hz"] =
            dataset.continuous ? nlohmann::json(dataset.continuous->rate_hz) : nlohmann::json();
        if (!dataset.metadata.empty()) meta["metadata"] = dataset.metadata;
        std::ofstream out(dir / schema.meta);
        if (!out) throw LoadError("cannot write " + (dir / schema.meta).string());
        out << meta.dump(2) << "\n";
    }
}

std::vector<FoldSplit> make_folds(Index n_bins, int n_folds, double val_fraction) {
    if (n_folds < 2) throw ConfigError("n_folds must be >= 2");
    if (!(val_fraction > 0.0 && val_fraction < 0.5))
        throw ConfigError("val_fraction must lie in (0, 0.5)");
    if (n_bins < n_folds) throw ConfigError("fewer bins than folds: cannot partition timeline");

    const Index val_len = std::max<Index>(1, static_cast<Index>(std::llround(val_fraction * n_bins)));

    std::vector<FoldSplit> folds;
    folds.reserve(static_cast<size_t>(n_folds));
    for (int k = 0; k < n_folds; ++k) {
        FoldSplit fold;
        fold.fold_index = k;
        fold.test.lo = n_bins * k / n_folds;
        fold.test.hi = n_bins * (k + 1) / n_folds;

        if (fold.test.hi + val_len <= n_bins)
            fold.validation = {fold.test.hi, fold.test.hi + val_len};
        else if (fold.test.lo - val_len >= 0)
            fold.validation = {fold.test.lo - val_len, fold.test.lo};
        else
            throw ConfigError("validation block does not fit next to the test block");

        // Validation sits flush against the test block, so the held-out region
        // is one contiguous span and training is the one or two blocks outside it.
        const Index lo = std::min(fold.test.lo, fold.validation.lo);
        const Index hi = std::max(fold.test.hi, fold.validation.hi);
        if (lo > 0) fold.train.push_back({0, lo});
        if (hi < n_bins) fold.train.push_back({hi, n_bins});

        if (fold.train_size() < 1)
            throw ConfigError("fold " + std::to_string(k) + " leaves no training bins");
        folds.push_back(std::move(fold));
    }
    return folds;
}

}  // namespace neurodec
