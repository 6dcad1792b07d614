#pragma once

#include <array>
#include <vector>

#include "neurodec/dataset.hpp"
#include "neurodec/types.hpp"

namespace neurodec {

enum class FeatureSource { spike_count, threshold_crossing, band_power };

/// Binned, lag-embedded neural features (the decoder input X).
struct FeatureMatrix {
    Matrix values;  // T x D, D = base_channels * (lags_before + lags_after + 1)
    double bin_width_s = 0.0;
    int lags_before = 0;
    int lags_after = 0;
    Index base_channels = 0;
    FeatureSource source = FeatureSource::spike_count;
};

/// Spike counts per (bin, unit). Entry (t, c) counts unit-c spikes in
/// [t*bin_width, (t+1)*bin_width); spikes past the last full bin are dropped.
Matrix bin_spike_counts(const NeuralDataset& dataset, double bin_width_s);

/// median(|x|) / 0.6745, the standard spike-detection noise proxy.
double robust_noise_sigma(const Eigen::Ref<const Vector>& x);

/// Sample indices of threshold crossings. A crossing is a sample strictly past
/// the threshold whose predecessor was not; crossings closer than
/// refractory_samples to the previous accepted one are discarded.
std::vector<Index> detect_crossings(const Eigen::Ref<const Vector>& x, double threshold,
                                    Index refractory_samples, bool negative_going = true);

struct CrossingConfig {
    double threshold_scale = 4.5;
    double refractory_s = 0.001;
    bool negative_going = true;
};

/// Threshold-crossing counts per (bin, channel); the per-channel threshold is
/// -threshold_scale * robust_noise_sigma (negated for positive polarity).
Matrix threshold_crossing_rate(const ContinuousRecording& rec, const CrossingConfig& config,
                               double bin_width_s);

/// One second-order IIR section, direct form II transposed.
struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0;  // numerator
    double a1 = 0, a2 = 0;          // denominator (a0 normalized to 1)

    void filter_inplace(Eigen::Ref<Vector> x) const;
    /// |H(f)| from the coefficients.
    double magnitude(double freq_hz, double rate_hz) const;
};

Biquad butterworth_lowpass(double cutoff_hz, double rate_hz);
Biquad butterworth_highpass(double cutoff_hz, double rate_hz);

/// The causal 300-1000 Hz style band-pass as two cascaded Butterworth biquads
/// (high-pass at band_low, low-pass at band_high).
std::array<Biquad, 2> bandpass_sections(double band_low_hz, double band_high_hz, double rate_hz);

/// Mean squared band-passed sample per (bin, channel).
Matrix spiking_band_power(const ContinuousRecording& rec, double band_low_hz, double band_high_hz,
                          double bin_width_s);

/// Row t of the result concatenates base rows t-lags_before .. t+lags_after;
/// rows without full context are dropped (T' = T - lags_before - lags_after).
FeatureMatrix lag_embed(const Eigen::Ref<const Matrix>& base, int lags_before, int lags_after,
                        double bin_width_s, FeatureSource source);

/// Trim targets to the rows kept by lag_embed with the same lag settings.
Matrix trim_to_lags(const Eigen::Ref<const Matrix>& y, int lags_before, int lags_after);

/// Per-column training statistics. Zero-variance columns are mapped to
/// constant 0 on apply instead of being rejected.
struct Standardizer {
    Vector mean;
    Vector std;  // strictly positive (1.0 placeholder for flagged columns)
    std::vector<char> zero_variance;

    Matrix apply(const Eigen::Ref<const Matrix>& x) const;
    Index n_features() const { return mean.size(); }
};

Standardizer standardize_fit(const Eigen::Ref<const Matrix>& train);

/// Kinematic targets resampled onto the feature-bin grid: per-bin mean of the
/// kinematic samples falling in the bin, linear interpolation at the bin
/// center when the bin width is finer than the kinematic sampling.
Matrix bin_kinematics(const NeuralDataset& dataset, double bin_width_s);

}  // namespace neurodec
