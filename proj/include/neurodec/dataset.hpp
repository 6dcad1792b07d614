#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "neurodec/types.hpp"

namespace neurodec {

struct SpikeEvent {
    int unit = 0;
    double time_s = 0.0;
};

struct SpikeTrain {
    std::vector<SpikeEvent> events;  // sorted by time on load/generation
    int n_units = 0;
};

/// Continuous voltage traces, one row per channel, uniformly sampled.
struct ContinuousRecording {
    Matrix samples;  // channels x samples
    double rate_hz = 0.0;

    Index n_channels() const { return samples.rows(); }
    Index n_samples() const { return samples.cols(); }
    double duration_s() const { return static_cast<double>(samples.cols()) / rate_hz; }
};

/// Paired neural activity and kinematic targets over a session timeline.
struct NeuralDataset {
    std::optional<SpikeTrain> spikes;
    std::optional<ContinuousRecording> continuous;
    Matrix kinematics;  // T_k x K, velocity in cm/s
    double kin_rate_hz = 0.0;
    double duration_s = 0.0;
    std::map<std::string, std::string> metadata;

    int n_units() const { return spikes ? spikes->n_units : 0; }
    Index n_kin_dims() const { return kinematics.cols(); }

    /// Throws ValidationError naming the violated invariant.
    void validate() const;
};

struct TuningConfig {
    double baseline_rate_hz = 10.0;
    double modulation_depth_hz = 10.0;
    /// Preferred direction of unit u is u * preferred_direction_step radians.
    /// A non-positive step selects an even spread (2*pi / n_units).
    double preferred_direction_step = 0.0;
    double speed_gain = 1.0;
};

struct VelocityProcessConfig {
    double smoothing_tau_s = 0.5;
    double speed_scale = 1.0;  // stationary per-component std, cm/s
};

enum class RateNonlinearity { none, saturating };

struct SynthConfig {
    int n_units = 100;
    double duration_s = 800.0;
    double bin_hint_hz = 10.0;  // kinematic sampling rate of the generated dataset
    TuningConfig tuning;
    VelocityProcessConfig velocity;
    RateNonlinearity nonlinearity = RateNonlinearity::none;
    std::uint64_t noise_seed = 1;

    void validate() const;
};

/// Cosine-tuned inhomogeneous-Poisson population paired with a smoothed
/// random-walk 2-D velocity. Pure function of the config: equal configs
/// (including noise_seed) produce bit-identical datasets.
NeuralDataset generate_synthetic(const SynthConfig& config);

/// File names inside a dataset directory.
struct DatasetSchema {
    std::string spikes = "spikes.csv";
    std::string continuous = "continuous.csv";
    std::string kinematics = "kinematics.csv";
    std::string meta = "meta.json";
};

NeuralDataset load_dataset(const std::filesystem::path& dir, const DatasetSchema& schema = {});
void save_dataset(const NeuralDataset& dataset, const std::filesystem::path& dir,
                  const DatasetSchema& schema = {});

/// One cross-validation fold. Validation and test are single contiguous
/// blocks; the training set is the remaining one or two blocks. The three
/// regions are disjoint and together tile [0, n_bins).
struct FoldSplit {
    int fold_index = 0;
    std::vector<IndexInterval> train;
    IndexInterval validation;
    IndexInterval test;

    Index train_size() const {
        Index n = 0;
        for (const auto& iv : train) n += iv.size();
        return n;
    }
};

/// Contiguous, temporally ordered folds. Test blocks tile the timeline across
/// folds; each fold's validation block sits next to its test block.
std::vector<FoldSplit> make_folds(Index n_bins, int n_folds, double val_fraction);

}  // namespace neurodec
