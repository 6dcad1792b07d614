#include "neurodec/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "neurodec/errors.hpp"

namespace neurodec {

Matrix bin_spike_counts(const NeuralDataset& dataset, double bin_width_s) {
    if (!dataset.spikes) throw UnsupportedInputError("dataset carries no spike events");
    if (bin_width_s <= 0.0) throw ConfigError("bin_width must be positive");

    const Index n_bins = static_cast<Index>(dataset.duration_s / bin_width_s);
    const Index n_units = dataset.spikes->n_units;
    Matrix counts = Matrix::Zero(n_bins, n_units);
    for (const auto& ev : dataset.spikes->events) {
        const Index bin = static_cast<Index>(ev.time_s / bin_width_s);
        if (bin >= n_bins) continue;
        counts(bin, ev.unit) += 1.0;
    }
    return counts;
}

double robust_noise_sigma(const Eigen::Ref<const Vector>& x) {
    std::vector<double> mag(static_cast<size_t>(x.size()));
    for (Index i = 0; i < x.size(); ++i) mag[static_cast<size_t>(i)] = std::abs(x[i]);
    std::sort(mag.begin(), mag.end());
    const size_t n = mag.size();
    if (n == 0) return 0.0;
    const double median = n % 2 ? mag[n / 2] : 0.5 * (mag[n / 2 - 1] + mag[n / 2]);
    return median / 0.6745;
}

std::vector<Index> detect_crossings(const Eigen::Ref<const Vector>& x, double threshold,
                                    Index refractory_samples, bool negative_going) {
    std::vector<Index> out;
    Index last_accepted = std::numeric_limits<Index>::min() / 2;
    for (Index i = 1; i < x.size(); ++i) {
        const bool crossed = negative_going ? (x[i] < threshold && x[i - 1] >= threshold)
                                            : (x[i] > threshold && x[i - 1] <= threshold);
        if (!crossed) continue;
        if (i - last_accepted < refractory_samples) continue;
        out.push_back(i);
        last_accepted = i;
    }
    return out;
}

Matrix threshold_crossing_rate(const ContinuousRecording& rec, const CrossingConfig& config,
                               double bin_width_s) {
    if (rec.rate_hz <= 0.0) throw ConfigError("continuous sampling rate must be positive");
    if (bin_width_s <= 0.0) throw ConfigError("bin_width must be positive");
    if (config.refractory_s < 0.0) throw ConfigError("refractory must be nonnegative");

    const double duration = rec.duration_s();
    const Index n_bins = static_cast<Index>(duration / bin_width_s);
    const Index refractory_samples =
        static_cast<Index>(std::ceil(config.refractory_s * rec.rate_hz));
    Matrix counts = Matrix::Zero(n_bins, rec.n_channels());
    for (Index c = 0; c < rec.n_channels(); ++c) {
        const Vector channel = rec.samples.row(c).transpose();
        double threshold = config.threshold_scale * robust_noise_sigma(channel);
        if (config.negative_going) threshold = -threshold;
        const auto crossings =
            detect_crossings(channel, threshold, refractory_samples, config.negative_going);
        for (Index s : crossings) {
            const Index bin = static_cast<Index>(static_cast<double>(s) / rec.rate_hz / bin_width_s);
            if (bin < n_bins) counts(bin, c) += 1.0;
        }
    }
    return counts;
}

void Biquad::filter_inplace(Eigen::Ref<Vector> x) const {
    double s1 = 0.0, s2 = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        const double in = x[i];
        const double out = b0 * in + s1;
        s1 = b1 * in - a1 * out + s2;
        s2 = b2 * in - a2 * out;
        x[i] = out;
    }
}

double Biquad::magnitude(double freq_hz, double rate_hz) const {
    const double w = 2.0 * M_PI * freq_hz / rate_hz;
    const std::complex<double> z1 = std::polar(1.0, -w);
    const std::complex<double> z2 = z1 * z1;
    const std::complex<double> num = b0 + b1 * z1 + b2 * z2;
    const std::complex<double> den = 1.0 + a1 * z1 + a2 * z2;
    return std::abs(num / den);
}

namespace {

constexpr double kButterworthQ = 0.7071067811865476;  // 1/sqrt(2)

Biquad bilinear_section(double cutoff_hz, double rate_hz, bool highpass) {
    if (cutoff_hz <= 0.0 || cutoff_hz >= rate_hz / 2.0)
        throw ConfigError("cutoff must lie in (0, rate/2)");
    const double w0 = 2.0 * M_PI * cutoff_hz / rate_hz;
    const double cw = std::cos(w0);
    const double alpha = std::sin(w0) / (2.0 * kButterworthQ);
    const double a0 = 1.0 + alpha;
    Biquad q;
    if (highpass) {
        q.b0 = (1.0 + cw) / 2.0 / a0;
        q.b1 = -(1.0 + cw) / a0;
        q.b2 = (1.0 + cw) / 2.0 / a0;
    } else {
        q.b0 = (1.0 - cw) / 2.0 / a0;
        q.b1 = (1.0 - cw) / a0;
        q.b2 = (1.0 - cw) / 2.0 / a0;
    }
    q.a1 = -2.0 * cw / a0;
    q.a2 = (1.0 - alpha) / a0;
    return q;
}

}  // namespace

Biquad butterworth_lowpass(double cutoff_hz, double rate_hz) {
    return bilinear_section(cutoff_hz, rate_hz, false);
}

Biquad butterworth_highpass(double cutoff_hz, double rate_hz) {
    return bilinear_section(cutoff_hz, rate_hz, true);
}

std::array<Biquad, 2> bandpass_sections(double band_low_hz, double band_high_hz, double rate_hz) {
    if (band_low_hz <= 0.0 || band_high_hz <= band_low_hz)
        throw ConfigError("band must satisfy 0 < low < high");
    if (rate_hz <= 2.0 * band_high_hz)
        throw ConfigError("sampling rate violates Nyquist for the requested band");
    return {butterworth_highpass(band_low_hz, rate_hz), butterworth_lowpass(band_high_hz, rate_hz)};
}

Matrix spiking_band_power(const ContinuousRecording& rec, double band_low_hz, double band_high_hz,
                          double bin_width_s) {
    if (bin_width_s <= 0.0) throw ConfigError("bin_width must be positive");
    const auto sections = bandpass_sections(band_low_hz, band_high_hz, rec.rate_hz);

    const Index n_bins = static_cast<Index>(rec.duration_s() / bin_width_s);
    const Index samples_per_bin = static_cast<Index>(std::llround(bin_width_s * rec.rate_hz));
    Matrix power = Matrix::Zero(n_bins, rec.n_channels());
    Matrix bin_counts = Matrix::Zero(n_bins, 1);
    for (Index c = 0; c < rec.n_channels(); ++c) {
        Vector channel = rec.samples.row(c).transpose();
        sections[0].filter_inplace(channel);
        sections[1].filter_inplace(channel);
        for (Index s = 0; s < channel.size(); ++s) {
            const Index bin = static_cast<Index>(static_cast<double>(s) / rec.rate_hz / bin_width_s);
            if (bin >= n_bins) break;
            power(bin, c) += channel[s] * channel[s];
            if (c == 0) bin_counts(bin, 0) += 1.0;
        }
    }
    for (Index t = 0; t < n_bins; ++t) {
        const double n = bin_counts(t, 0) > 0 ? bin_counts(t, 0)
                                              : static_cast<double>(samples_per_bin);
        power.row(t) /= n;
    }
    return power;
}

FeatureMatrix lag_embed(const Eigen::Ref<const Matrix>& base, int lags_before, int lags_after,
                        double bin_width_s, FeatureSource source) {
    if (lags_before < 0 || lags_after < 0) throw ConfigError("lag counts must be nonnegative");
    const Index window = static_cast<Index>(lags_before) + lags_after + 1;
    if (window > base.rows())
        throw ConfigError("lag window longer than the time series");

    const Index t_out = base.rows() - lags_before - lags_after;
    const Index c = base.cols();
    FeatureMatrix fm;
    fm.values.resize(t_out, window * c);
    for (Index w = 0; w < window; ++w)
        fm.values.middleCols(w * c, c) = base.middleRows(w, t_out);
    if (!fm.values.allFinite()) throw ValidationError("feature matrix contains NaN or Inf");
    fm.bin_width_s = bin_width_s;
    fm.lags_before = lags_before;
    fm.lags_after = lags_after;
    fm.base_channels = c;
    fm.source = source;
    return fm;
}

Matrix trim_to_lags(const Eigen::Ref<const Matrix>& y, int lags_before, int lags_after) {
    const Index t_out = y.rows() - lags_before - lags_after;
    if (t_out < 1) throw ConfigError("lag window longer than the target series");
    return y.middleRows(lags_before, t_out);
}

Standardizer standardize_fit(const Eigen::Ref<const Matrix>& train) {
    if (train.rows() < 1) throw ConfigError("cannot standardize an empty matrix");
    Standardizer model;
    const Index d = train.cols();
    model.mean = train.colwise().mean();
    model.std.resize(d);
    model.zero_variance.assign(static_cast<size_t>(d), 0);
    for (Index j = 0; j < d; ++j) {
        const double var =
            (train.col(j).array() - model.mean[j]).square().sum() / static_cast<double>(train.rows());
        const double sd = std::sqrt(var);
        if (sd < 1e-12) {
            model.zero_variance[static_cast<size_t>(j)] = 1;
            model.std[j] = 1.0;
        } else {
            model.std[j] = sd;
        }
    }
    return model;
}

Matrix Standardizer::apply(const Eigen::Ref<const Matrix>& x) const {
    if (x.cols() != mean.size())
        throw ShapeError("standardizer fitted on " + std::to_string(mean.size()) +
                         " columns, got " + std::to_string(x.cols()));
    Matrix out = (x.rowwise() - mean.transpose()).array().rowwise() /
                 std.transpose().array();
    for (Index j = 0; j < out.cols(); ++j)
        if (zero_variance[static_cast<size_t>(j)]) out.col(j).setZero();
    return out;
}

Matrix bin_kinematics(const NeuralDataset& dataset, double bin_width_s) {
    if (bin_width_s <= 0.0) throw ConfigError("bin_width must be positive");
    const Index n_bins = static_cast<Index>(dataset.duration_s / bin_width_s);
    const Index k = dataset.kinematics.cols();
    const Index t_k = dataset.kinematics.rows();

    Matrix sums = Matrix::Zero(n_bins, k);
    Vector counts = Vector::Zero(n_bins);
    for (Index r = 0; r < t_k; ++r) {
        const double t = static_cast<double>(r) / dataset.kin_rate_hz;
        const Index bin = static_cast<Index>(t / bin_width_s);
        if (bin >= n_bins) continue;
        sums.row(bin) += dataset.kinematics.row(r);
        counts[bin] += 1.0;
    }
    Matrix out(n_bins, k);
    for (Index t = 0; t < n_bins; ++t) {
        if (counts[t] > 0.0) {
            out.row(t) = sums.row(t) / counts[t];
        } else {
            // Bin finer than the kinematic sampling: interpolate at the bin center.
            const double center = (static_cast<double>(t) + 0.5) * bin_width_s;
            const double pos = center * dataset.kin_rate_hz;
            const Index i0 = std::clamp<Index>(static_cast<Index>(pos), 0, t_k - 1);
            const Index i1 = std::min<Index>(i0 + 1, t_k - 1);
            const double frac = std::clamp(pos - static_cast<double>(i0), 0.0, 1.0);
            out.row(t) = (1.0 - frac) * dataset.kinematics.row(i0) +
                         frac * dataset.kinematics.row(i1);
        }
    }
    return out;
}

}  // namespace neurodec
