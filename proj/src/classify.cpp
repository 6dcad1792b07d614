#include "neurodec/classify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>

#include "neurodec/errors.hpp"
#include "neurodec/minimize.hpp"
#include "neurodec/rng.hpp"

namespace neurodec {

namespace {

int validate_training_pair(const Eigen::Ref<const Matrix>& x, const IntVector& labels) {
    if (x.rows() == 0) throw ValidationError("classifier fit requires at least one sample");
    if (labels.size() != x.rows())
        throw ShapeError("labels length does not match sample count");
    if (!x.allFinite()) throw ValidationError("classifier fit input contains non-finite values");
    int max_label = 0;
    for (Index i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) throw ValidationError("labels must be nonnegative");
        max_label = std::max(max_label, labels[i]);
    }
    const int n_classes = max_label + 1;
    std::vector<char> seen(static_cast<std::size_t>(n_classes), 0);
    for (Index i = 0; i < labels.size(); ++i) seen[static_cast<std::size_t>(labels[i])] = 1;
    int distinct = 0;
    for (char s : seen) distinct += s;
    if (distinct < 2) throw DegenerateLabelsError("classifier fit requires at least two classes");
    return n_classes;
}

void softmax_rows_inplace(Matrix& scores) {
    for (Index i = 0; i < scores.rows(); ++i) {
        const double m = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - m).exp();
        scores.row(i) /= scores.row(i).sum();
    }
}

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double median_of_sorted(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double quantile_sorted(const std::vector<double>& sorted, double fraction) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = fraction * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double t = pos - static_cast<double>(lo);
    return (1.0 - t) * sorted[lo] + t * sorted[hi];
}

double metric_distance(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b,
                       DistanceMetric metric) {
    switch (metric) {
        case DistanceMetric::l1:
            return (a - b).cwiseAbs().sum();
        case DistanceMetric::l2:
            return (a - b).norm();
        case DistanceMetric::cosine: {
            const double na = a.norm();
            const double nb = b.norm();
            if (na <= 0.0 || nb <= 0.0) return 1.0;
            return 1.0 - a.dot(b) / (na * nb);
        }
    }
    return 0.0;
}

Vector column_medians(const Matrix& x, const std::vector<Index>& rows) {
    Vector out(x.cols());
    std::vector<double> buf(rows.size());
    for (Index d = 0; d < x.cols(); ++d) {
        for (std::size_t i = 0; i < rows.size(); ++i) buf[i] = x(rows[i], d);
        out[d] = median_of_sorted(buf);
    }
    return out;
}

/// Two-parameter sigmoid fit of calibration targets to decision values,
/// with the usual smoothed targets to keep the optimum finite.
std::pair<double, double> platt_sigmoid_fit(const Vector& scores, const std::vector<char>& positive) {
    const auto n = static_cast<Index>(scores.size());
    double n_pos = 0.0;
    for (char p : positive) n_pos += p ? 1.0 : 0.0;
    const double n_neg = static_cast<double>(n) - n_pos;
    const double target_pos = (n_pos + 1.0) / (n_pos + 2.0);
    const double target_neg = 1.0 / (n_neg + 2.0);

    auto objective = [&](const Vector& theta, Vector& grad) {
        const double a = theta[0];
        const double b = theta[1];
        double loss = 0.0;
        double ga = 0.0;
        double gb = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double z = a * scores[i] + b;
            const double t = positive[static_cast<std::size_t>(i)] ? target_pos : target_neg;
            loss += t * softplus(-z) + (1.0 - t) * softplus(z);
            const double gz = stable_sigmoid(z) - t;
            ga += gz * scores[i];
            gb += gz;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        grad.resize(2);
        grad[0] = ga * inv_n;
        grad[1] = gb * inv_n;
        return loss * inv_n;
    };

    Vector init(2);
    init[0] = 0.0;
    init[1] = std::log((n_pos + 1.0) / (n_neg + 1.0));
    MinimizeOptions options;
    options.max_iterations = 500;
    options.gradient_tolerance = 1e-7;
    const MinimizeResult result = minimize_lbfgs(objective, init, options);
    return {result.x[0], result.x[1]};
}

struct BinaryLinearFit {
    Vector weights;
    double bias = 0.0;
};

/// Binary logistic regression, cross-entropy + ||w||^2 / (2 C T).
BinaryLinearFit binary_logistic(const Eigen::Ref<const Matrix>& x, const std::vector<char>& y,
                                double c, int max_iterations, double tolerance) {
    const Index t = x.rows();
    const Index d = x.cols();
    const double ridge = 1.0 / (c * static_cast<double>(t));

    auto objective = [&](const Vector& theta, Vector& grad) {
        const Eigen::Map<const Vector> w(theta.data(), d);
        const double b = theta[d];
        Vector z = x * w;
        z.array() += b;
        double loss = 0.0;
        Vector gz(t);
        for (Index i = 0; i < t; ++i) {
            const double target = y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
            loss += target * softplus(-z[i]) + (1.0 - target) * softplus(z[i]);
            gz[i] = stable_sigmoid(z[i]) - target;
        }
        const double inv_t = 1.0 / static_cast<double>(t);
        loss = loss * inv_t + 0.5 * ridge * w.squaredNorm();
        grad.resize(d + 1);
        grad.head(d) = x.transpose() * gz * inv_t + ridge * w;
        grad[d] = gz.sum() * inv_t;
        return loss;
    };

    MinimizeOptions options;
    options.max_iterations = max_iterations;
    options.gradient_tolerance = tolerance;
    const MinimizeResult result = minimize_lbfgs(objective, Vector::Zero(d + 1), options);
    BinaryLinearFit fit;
    fit.weights = result.x.head(d);
    fit.bias = result.x[d];
    return fit;
}

double gini_from_sumsq(double sumsq, double n) { return 1.0 - sumsq / (n * n); }

Vector quantize_row(const Eigen::Ref<const RowVector>& row, int levels) {
    const double magnitude = row.cwiseAbs().maxCoeff();
    Vector out = row.transpose();
    if (magnitude <= 0.0) return out;
    const double step = 2.0 * magnitude / static_cast<double>(levels - 1);
    for (Index i = 0; i < out.size(); ++i) {
        const double snapped = -magnitude + std::round((out[i] + magnitude) / step) * step;
        out[i] = std::clamp(snapped, -magnitude, magnitude);
    }
    return out;
}

void check_quantize_bits(int bits) {
    if (bits < 2 || bits > 24) throw ConfigError("quantization bits must be in [2, 24]");
}

}  // namespace

Matrix ProbClassifier::predict_proba_batch(const Eigen::Ref<const Matrix>& x) const {
    Matrix out(x.rows(), n_classes());
    for (Index i = 0; i < x.rows(); ++i) out.row(i) = predict_proba(x.row(i).transpose()).transpose();
    return out;
}

IntVector predict_classes(const ProbClassifier& model, const Eigen::Ref<const Matrix>& x) {
    const Matrix probs = model.predict_proba_batch(x);
    IntVector out(x.rows());
    for (Index i = 0; i < probs.rows(); ++i) {
        Index arg = 0;
        probs.row(i).maxCoeff(&arg);
        out[i] = static_cast<int>(arg);
    }
    return out;
}

double accuracy(const ProbClassifier& model, const Eigen::Ref<const Matrix>& x,
                const IntVector& labels) {
    if (labels.size() != x.rows()) throw ShapeError("labels length does not match sample count");
    if (x.rows() == 0) throw ValidationError("accuracy requires at least one sample");
    const IntVector predicted = predict_classes(model, x);
    Index hits = 0;
    for (Index i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Matrix LinearProbModel::decision_values(const Eigen::Ref<const Matrix>& x) const {
    if (x.cols() != weights.cols()) throw ShapeError("input feature count does not match model");
    Matrix scores = x * weights.transpose();
    scores.rowwise() += biases.transpose();
    return scores;
}

Matrix LinearProbModel::predict_proba_batch(const Eigen::Ref<const Matrix>& x) const {
    Matrix scores = decision_values(x);
    if (calibration == Calibration::softmax) {
        softmax_rows_inplace(scores);
        return scores;
    }
    for (Index k = 0; k < scores.cols(); ++k)
        for (Index i = 0; i < scores.rows(); ++i)
            scores(i, k) = stable_sigmoid(platt_slope[k] * scores(i, k) + platt_offset[k]);
    for (Index i = 0; i < scores.rows(); ++i) {
        const double total = scores.row(i).sum();
        if (total < 1e-300) {
            scores.row(i).setConstant(1.0 / static_cast<double>(scores.cols()));
        } else {
            scores.row(i) /= total;
        }
    }
    return scores;
}

Vector LinearProbModel::predict_proba(const Eigen::Ref<const Vector>& x) const {
    return predict_proba_batch(x.transpose()).row(0).transpose();
}

LinearProbModel logistic_fit(const Eigen::Ref<const Matrix>& x, const IntVector& labels, double c) {
    if (c <= 0.0) throw ConfigError("regularization parameter C must be positive");
    const int n_classes = validate_training_pair(x, labels);
    const Index t = x.rows();
    const Index d = x.cols();
    const auto k = static_cast<Index>(n_classes);
    const double ridge = 1.0 / (c * static_cast<double>(t));
    const double inv_t = 1.0 / static_cast<double>(t);

    auto objective = [&](const Vector& theta, Vector& grad) {
        const Eigen::Map<const Matrix> w(theta.data(), k, d);
        const Eigen::Map<const Vector> b(theta.data() + k * d, k);
        Matrix scores = x * w.transpose();
        scores.rowwise() += b.transpose();
        double loss = 0.0;
        for (Index i = 0; i < t; ++i) {
            const double m = scores.row(i).maxCoeff();
            const double true_score = scores(i, labels[i]);
            scores.row(i) = (scores.row(i).array() - m).exp();
            const double total = scores.row(i).sum();
            loss += std::log(total) + m - true_score;
            scores.row(i) /= total;
            scores(i, labels[i]) -= 1.0;
        }
        loss = loss * inv_t + 0.5 * ridge * w.squaredNorm();
        grad.resize(theta.size());
        Eigen::Map<Matrix> gw(grad.data(), k, d);
        Eigen::Map<Vector> gb(grad.data() + k * d, k);
        gw = scores.transpose() * x * inv_t + ridge * w;
        gb = scores.colwise().sum().transpose() * inv_t;
        return loss;
    };

    MinimizeOptions options;
    const MinimizeResult result = minimize_lbfgs(objective, Vector::Zero(k * d + k), options);

    LinearProbModel model;
    model.weights = Eigen::Map<const Matrix>(result.x.data(), k, d);
    model.biases = result.x.segment(k * d, k);
    model.c_regularization = c;
    model.calibration = Calibration::softmax;
    return model;
}

LinearProbModel svm_platt_fit(const Eigen::Ref<const Matrix>& x, const IntVector& labels, double c) {
    if (c <= 0.0) throw ConfigError("regularization parameter C must be positive");
    const int n_classes = validate_training_pair(x, labels);
    const Index t = x.rows();
    const Index d = x.cols();

    // Every fifth row is held out to calibrate the sigmoids on decision
    // values the margin fit has not seen.
    std::vector<Index> core_rows;
    std::vector<Index> calib_rows;
    for (Index i = 0; i < t; ++i) {
        if (i % 5 == 4) {
            calib_rows.push_back(i);
        } else {
            core_rows.push_back(i);
        }
    }
    if (calib_rows.empty() || core_rows.empty()) {
        core_rows.resize(static_cast<std::size_t>(t));
        std::iota(core_rows.begin(), core_rows.end(), Index{0});
        calib_rows = core_rows;
    }

    Matrix x_core(static_cast<Index>(core_rows.size()), d);
    for (std::size_t i = 0; i < core_rows.size(); ++i) x_core.row(static_cast<Index>(i)) = x.row(core_rows[i]);
    Matrix x_calib(static_cast<Index>(calib_rows.size()), d);
    for (std::size_t i = 0; i < calib_rows.size(); ++i) x_calib.row(static_cast<Index>(i)) = x.row(calib_rows[i]);

    const Index t_core = x_core.rows();
    const double ridge = 1.0 / (c * static_cast<double>(t_core));
    const double inv_t = 1.0 / static_cast<double>(t_core);

    LinearProbModel model;
    model.weights.resize(n_classes, d);
    model.biases.resize(n_classes);
    model.platt_slope.resize(n_classes);
    model.platt_offset.resize(n_classes);
    model.c_regularization = c;
    model.calibration = Calibration::platt;

    for (int cls = 0; cls < n_classes; ++cls) {
        Vector sign(t_core);
        for (Index i = 0; i < t_core; ++i)
            sign[i] = labels[core_rows[static_cast<std::size_t>(i)]] == cls ? 1.0 : -1.0;

        auto objective = [&](const Vector& theta, Vector& grad) {
            const Eigen::Map<const Vector> w(theta.data(), d);
            const double b = theta[d];
            Vector scores = x_core * w;
            scores.array() += b;
            double loss = 0.0;
            Vector gs = Vector::Zero(t_core);
            for (Index i = 0; i < t_core; ++i) {
                const double margin = 1.0 - sign[i] * scores[i];
                if (margin > 0.0) {
                    loss += margin * margin;
                    gs[i] = -2.0 * sign[i] * margin;
                }
            }
            loss = loss * inv_t + 0.5 * ridge * w.squaredNorm();
            grad.resize(d + 1);
            grad.head(d) = x_core.transpose() * gs * inv_t + ridge * w;
            grad[d] = gs.sum() * inv_t;
            return loss;
        };

        MinimizeOptions options;
        const MinimizeResult result = minimize_lbfgs(objective, Vector::Zero(d + 1), options);
        model.weights.row(cls) = result.x.head(d).transpose();
        model.biases[cls] = result.x[d];

        Vector calib_scores = x_calib * result.x.head(d);
        calib_scores.array() += result.x[d];
        std::vector<char> positive(calib_rows.size());
        bool any_pos = false;
        bool any_neg = false;
        for (std::size_t i = 0; i < calib_rows.size(); ++i) {
            positive[i] = labels[calib_rows[i]] == cls ? 1 : 0;
            (positive[i] ? any_pos : any_neg) = true;
        }
        if (!any_pos || !any_neg) {
            // Calibration split lost one side of this class; calibrate on
            // everything rather than fit a sigmoid to a single target value.
            calib_scores = x * result.x.head(d);
            calib_scores.array() += result.x[d];
            positive.resize(static_cast<std::size_t>(t));
            for (Index i = 0; i < t; ++i) positive[static_cast<std::size_t>(i)] = labels[i] == cls ? 1 : 0;
        }
        const auto [slope, offset] = platt_sigmoid_fit(calib_scores, positive);
        model.platt_slope[cls] = slope;
        model.platt_offset[cls] = offset;
    }
    return model;
}

Vector CentroidModel::distances(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != centroids.cols()) throw ShapeError("input feature count does not match model");
    Vector out(centroids.rows());
    for (Index k = 0; k < centroids.rows(); ++k)
        out[k] = metric_distance(x, centroids.row(k).transpose(), metric);
    return out;
}

Vector CentroidModel::predict_proba(const Eigen::Ref<const Vector>& x) const {
    Vector scores = -distances(x) / temperature;
    const double m = scores.maxCoeff();
    scores = (scores.array() - m).exp();
    return scores / scores.sum();
}

namespace {

/// Median pairwise centroid distance / 4, so that one inter-centroid step
/// moves the softmax by a few odds ratios regardless of feature scale.
double default_temperature(const Matrix& centroids, DistanceMetric metric) {
    std::vector<double> pairwise;
    for (Index a = 0; a < centroids.rows(); ++a)
        for (Index b = a + 1; b < centroids.rows(); ++b)
            pairwise.push_back(
                metric_distance(centroids.row(a).transpose(), centroids.row(b).transpose(), metric));
    const double median = median_of_sorted(pairwise);
    return median > 0.0 ? median / 4.0 : 1.0;
}

}  // namespace

CentroidModel centroid_fit(const Eigen::Ref<const Matrix>& x, const IntVector& labels,
                           DistanceMetric metric, double temperature) {
    const int n_classes = validate_training_pair(x, labels);
    const Index d = x.cols();

    CentroidModel model;
    model.metric = metric;
    model.centroids.resize(n_classes, d);
    for (int cls = 0; cls < n_classes; ++cls) {
        std::vector<Index> rows;
        for (Index i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) rows.push_back(i);
        if (rows.empty())
            throw DegenerateLabelsError("class " + std::to_string(cls) + " has no training samples");
        if (metric == DistanceMetric::l1) {
            model.centroids.row(cls) = column_medians(Matrix(x), rows).transpose();
        } else {
            Vector mean = Vector::Zero(d);
            for (Index r : rows) mean += x.row(r).transpose();
            model.centroids.row(cls) = mean.transpose() / static_cast<double>(rows.size());
        }
    }
    model.temperature =
        temperature > 0.0 ? temperature : default_temperature(model.centroids, metric);
    return model;
}

CentroidModel kmeans_fit(const Eigen::Ref<const Matrix>& x, int k, DistanceMetric metric,
                         std::uint64_t seed) {
    const Index t = x.rows();
    const Index d = x.cols();
    if (k < 2) throw ConfigError("k-means requires at least two clusters");
    if (t < k) throw ValidationError("k-means requires at least as many samples as clusters");
    if (!x.allFinite()) throw ValidationError("classifier fit input contains non-finite values");

    Rng rng(seed);
    Matrix centers(k, d);
    Vector nearest = Vector::Constant(t, std::numeric_limits<double>::infinity());

    centers.row(0) = x.row(static_cast<Index>(rng.integer(static_cast<std::uint64_t>(t))));
    for (int cls = 1; cls < k; ++cls) {
        for (Index i = 0; i < t; ++i) {
            const double dist =
                metric_distance(x.row(i).transpose(), centers.row(cls - 1).transpose(), metric);
            nearest[i] = std::min(nearest[i], dist);
        }
        const Vector weight = nearest.array().square();
        const double total = weight.sum();
        Index pick = 0;
        if (total <= 0.0) {
            pick = static_cast<Index>(rng.integer(static_cast<std::uint64_t>(t)));
        } else {
            const double r = rng.uniform() * total;
            double cumulative = 0.0;
            pick = t - 1;
            for (Index i = 0; i < t; ++i) {
                cumulative += weight[i];
                if (cumulative >= r) {
                    pick = i;
                    break;
                }
            }
        }
        centers.row(cls) = x.row(pick);
    }

    std::vector<int> assignment(static_cast<std::size_t>(t), -1);
    std::vector<std::vector<Index>> members(static_cast<std::size_t>(k));
    constexpr int kMaxIterations = 300;
    for (int iteration = 0; iteration < kMaxIterations; ++iteration) {
        bool changed = false;
        for (auto& m : members) m.clear();
        for (Index i = 0; i < t; ++i) {
            int best = 0;
            double best_dist = std::numeric_limits<double>::infinity();
            for (int cls = 0; cls < k; ++cls) {
                const double dist =
                    metric_distance(x.row(i).transpose(), centers.row(cls).transpose(), metric);
                if (dist < best_dist) {
                    best_dist = dist;
                    best = cls;
                }
            }
            if (assignment[static_cast<std::size_t>(i)] != best) {
                assignment[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
            members[static_cast<std::size_t>(best)].push_back(i);
        }
        if (!changed && iteration > 0) break;

        for (int cls = 0; cls < k; ++cls) {
            auto& rows = members[static_cast<std::size_t>(cls)];
            if (rows.empty()) {
                // Re-seed a starved cluster from the sample farthest from its
                // own center, the standard deterministic repair.
                Index farthest = 0;
                double far_dist = -1.0;
                for (Index i = 0; i < t; ++i) {
                    const int own = assignment[static_cast<std::size_t>(i)];
                    const double dist =
                        metric_distance(x.row(i).transpose(), centers.row(own).transpose(), metric);
                    if (dist > far_dist) {
                        far_dist = dist;
                        farthest = i;
                    }
                }
                centers.row(cls) = x.row(farthest);
                continue;
            }
            if (metric == DistanceMetric::l1) {
                centers.row(cls) = column_medians(Matrix(x), rows).transpose();
            } else {
                Vector mean = Vector::Zero(d);
                for (Index r : rows) mean += x.row(r).transpose();
                centers.row(cls) = mean.transpose() / static_cast<double>(rows.size());
            }
        }
    }

    CentroidModel model;
    model.centroids = std::move(centers);
    model.metric = metric;
    model.temperature = default_temperature(model.centroids, metric);
    return model;
}

Vector WindowModel::predict_proba(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != low.cols()) throw ShapeError("input feature count does not match model");
    int contained = -1;
    int count = 0;
    for (Index k = 0; k < low.rows(); ++k) {
        bool inside = true;
        for (Index dIdx = 0; dIdx < low.cols(); ++dIdx) {
            if (x[dIdx] < low(k, dIdx) || x[dIdx] > high(k, dIdx)) {
                inside = false;
                break;
            }
        }
        if (inside) {
            contained = static_cast<int>(k);
            if (++count > 1) break;
        }
    }
    if (count == 1) {
        Vector out = Vector::Zero(low.rows());
        out[contained] = 1.0;
        return out;
    }
    return fallback.predict_proba(x);
}

WindowModel window_fit(const Eigen::Ref<const Matrix>& x, const IntVector& labels, double coverage) {
    if (!(coverage > 0.5 && coverage <= 1.0)) throw ConfigError("window coverage must be in (0.5, 1]");
    WindowModel model;
    model.fallback = centroid_fit(x, labels, DistanceMetric::l2);  // rejects empty classes
    const int n_classes = model.fallback.n_classes();
    const Index d = x.cols();
    const double tail = (1.0 - coverage) / 2.0;

    model.low.resize(n_classes, d);
    model.high.resize(n_classes, d);
    std::vector<double> buf;
    for (int cls = 0; cls < n_classes; ++cls) {
        std::vector<Index> rows;
        for (Index i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) rows.push_back(i);
        for (Index dIdx = 0; dIdx < d; ++dIdx) {
            buf.resize(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) buf[i] = x(rows[i], dIdx);
            std::sort(buf.begin(), buf.end());
            model.low(cls, dIdx) = quantile_sorted(buf, tail);
            model.high(cls, dIdx) = quantile_sorted(buf, 1.0 - tail);
        }
    }
    return model;
}

const TreeModel::Node& TreeModel::leaf_for(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != features) throw ShapeError("input feature count does not match model");
    const Node* node = &nodes[0];
    while (!node->leaf) {
        const double score =
            node->weights.size() > 0 ? node->weights.dot(x) : x[node->feature];
        node = score < node->threshold ? &nodes[static_cast<std::size_t>(node->left)]
                                       : &nodes[static_cast<std::size_t>(node->right)];
    }
    return *node;
}

Vector TreeModel::predict_proba(const Eigen::Ref<const Vector>& x) const { return leaf_for(x).probs; }

Index TreeModel::parameter_count() const {
    Index count = 0;
    for (const Node& node : nodes) {
        if (node.leaf) {
            count += node.probs.size();
        } else if (node.weights.size() > 0) {
            count += node.weights.size() + 1;
        } else {
            count += 2;
        }
    }
    return count;
}

namespace {

struct TreeBuilder {
    const Matrix& x;
    const IntVector& labels;
    TreeKind kind;
    int max_depth;
    int min_leaf;
    int n_classes;
    std::vector<TreeModel::Node> nodes;

    int build(const std::vector<Index>& rows, int depth) {
        const auto n = static_cast<double>(rows.size());
        Vector counts = Vector::Zero(n_classes);
        for (Index r : rows) counts[labels[r]] += 1.0;

        const int index = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes[static_cast<std::size_t>(index)].probs = counts / n;

        const double parent_gini = gini_from_sumsq(counts.squaredNorm(), n);
        if (depth >= max_depth || rows.size() < 2 * static_cast<std::size_t>(min_leaf) ||
            parent_gini <= 0.0)
            return index;

        std::vector<Index> left_rows;
        std::vector<Index> right_rows;
        bool found = kind == TreeKind::axis
                         ? best_axis_split(rows, counts, parent_gini, index, left_rows, right_rows)
                         : best_oblique_split(rows, counts, parent_gini, index, left_rows, right_rows);
        if (!found) return index;

        nodes[static_cast<std::size_t>(index)].leaf = false;
        const int left = build(left_rows, depth + 1);
        const int right = build(right_rows, depth + 1);
        nodes[static_cast<std::size_t>(index)].left = left;
        nodes[static_cast<std::size_t>(index)].right = right;
        return index;
    }

    bool best_axis_split(const std::vector<Index>& rows, const Vector& total_counts,
                         double parent_gini, int index, std::vector<Index>& left_rows,
                         std::vector<Index>& right_rows) {
        const auto n = static_cast<double>(rows.size());
        double best_score = parent_gini - 1e-12;
        int best_feature = -1;
        double best_threshold = 0.0;

        std::vector<Index> order;
        for (Index d = 0; d < x.cols(); ++d) {
            order = rows;
            std::sort(order.begin(), order.end(),
                      [&](Index a, Index b) { return x(a, d) < x(b, d); });
            Vector left_counts = Vector::Zero(n_classes);
            Vector right_counts = total_counts;
            double left_sumsq = 0.0;
            double right_sumsq = total_counts.squaredNorm();
            for (std::size_t i = 1; i < order.size(); ++i) {
                const int moved = labels[order[i - 1]];
                left_sumsq += 2.0 * left_counts[moved] + 1.0;
                left_counts[moved] += 1.0;
                right_counts[moved] -= 1.0;
                right_sumsq -= 2.0 * right_counts[moved] + 1.0;

                const double prev = x(order[i - 1], d);
                const double cur = x(order[i], d);
                if (cur <= prev) continue;
                const auto n_left = static_cast<double>(i);
                const double n_right = n - n_left;
                if (n_left < min_leaf || n_right < min_leaf) continue;
                const double score = (n_left - left_sumsq / n_left + n_right - right_sumsq / n_right) / n;
                if (score < best_score) {
                    best_score = score;
                    best_feature = static_cast<int>(d);
                    best_threshold = 0.5 * (prev + cur);
                }
            }
        }
        if (best_feature < 0) return false;

        nodes[static_cast<std::size_t>(index)].feature = best_feature;
        nodes[static_cast<std::size_t>(index)].threshold = best_threshold;
        for (Index r : rows)
            (x(r, best_feature) < best_threshold ? left_rows : right_rows).push_back(r);
        return true;
    }

    bool best_oblique_split(const std::vector<Index>& rows, const Vector& total_counts,
                            double parent_gini, int index, std::vector<Index>& left_rows,
                            std::vector<Index>& right_rows) {
        const auto n = static_cast<double>(rows.size());
        Matrix node_x(static_cast<Index>(rows.size()), x.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) node_x.row(static_cast<Index>(i)) = x.row(rows[i]);

        double best_score = parent_gini - 1e-12;
        Vector best_weights;
        double best_threshold = 0.0;

        std::vector<char> is_class(rows.size());
        for (int cls = 0; cls < n_classes; ++cls) {
            if (total_counts[cls] <= 0.0 || total_counts[cls] >= n) continue;
            for (std::size_t i = 0; i < rows.size(); ++i)
                is_class[i] = labels[rows[i]] == cls ? 1 : 0;
            const BinaryLinearFit fit = binary_logistic(node_x, is_class, 1.0, 200, 1e-4);

            Vector scores = node_x * fit.weights;
            scores.array() += fit.bias;
            Vector left_counts = Vector::Zero(n_classes);
            double n_left = 0.0;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (scores[static_cast<Index>(i)] < 0.0) {
                    left_counts[labels[rows[i]]] += 1.0;
                    n_left += 1.0;
                }
            }
            const double n_right = n - n_left;
            if (n_left < min_leaf || n_right < min_leaf) continue;
            const Vector right_counts = total_counts - left_counts;
            const double score = (n_left * gini_from_sumsq(left_counts.squaredNorm(), n_left) +
                                  n_right * gini_from_sumsq(right_counts.squaredNorm(), n_right)) /
                                 n;
            if (score < best_score) {
                best_score = score;
                best_weights = fit.weights;
                best_threshold = -fit.bias;
            }
        }
        if (best_weights.size() == 0) return false;

        nodes[static_cast<std::size_t>(index)].weights = best_weights;
        nodes[static_cast<std::size_t>(index)].threshold = best_threshold;
        for (Index r : rows)
            (best_weights.dot(x.row(r).transpose()) < best_threshold ? left_rows : right_rows)
                .push_back(r);
        return true;
    }
};

}  // namespace

TreeModel tree_fit(const Eigen::Ref<const Matrix>& x, const IntVector& labels, TreeKind kind,
                   int max_depth, int min_leaf) {
    if (max_depth < 1) throw ConfigError("tree depth must be at least 1");
    if (min_leaf < 1) throw ConfigError("minimum leaf size must be at least 1");
    // Pure-label input is legal here (the tree is a single leaf), so the
    // two-distinct-classes rule of the other fits does not apply.
    if (x.rows() == 0) throw ValidationError("classifier fit requires at least one sample");
    if (labels.size() != x.rows()) throw ShapeError("labels length does not match sample count");
    if (!x.allFinite()) throw ValidationError("classifier fit input contains non-finite values");
    int n_classes = 1;
    for (Index i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) throw ValidationError("labels must be nonnegative");
        n_classes = std::max(n_classes, labels[i] + 1);
    }

    const Matrix x_copy = x;
    TreeBuilder builder{x_copy, labels, kind, max_depth, min_leaf, n_classes, {}};
    std::vector<Index> rows(static_cast<std::size_t>(x.rows()));
    std::iota(rows.begin(), rows.end(), Index{0});
    builder.build(rows, 0);

    TreeModel model;
    model.nodes = std::move(builder.nodes);
    model.tree_kind = kind;
    model.max_depth = max_depth;
    model.min_leaf = min_leaf;
    model.classes = n_classes;
    model.features = x.cols();
    return model;
}

LinearProbModel quantize_weights(const LinearProbModel& model, int bits) {
    check_quantize_bits(bits);
    const int levels = 1 << bits;
    LinearProbModel out = model;
    for (Index k = 0; k < out.weights.rows(); ++k)
        out.weights.row(k) = quantize_row(model.weights.row(k), levels).transpose();
    return out;
}

TreeModel quantize_weights(const TreeModel& model, int bits) {
    check_quantize_bits(bits);
    if (model.tree_kind != TreeKind::oblique)
        throw ConfigError("axis-parallel trees have no weight vectors to quantize");
    const int levels = 1 << bits;
    TreeModel out = model;
    for (TreeModel::Node& node : out.nodes)
        if (!node.leaf && node.weights.size() > 0)
            node.weights = quantize_row(node.weights.transpose(), levels);
    return out;
}

LinearProbModel prune_weights(const LinearProbModel& model, double sparsity) {
    if (sparsity < 0.0 || sparsity > 1.0) throw ConfigError("sparsity must be in [0, 1]");
    LinearProbModel out = model;
    const Index n = out.weights.size();
    const auto n_zero = static_cast<Index>(std::llround(sparsity * static_cast<double>(n)));
    if (n_zero == 0) return out;

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const double* flat = out.weights.data();
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double ma = std::abs(flat[a]);
        const double mb = std::abs(flat[b]);
        return ma != mb ? ma < mb : a < b;
    });
    for (Index i = 0; i < n_zero; ++i) out.weights.data()[order[static_cast<std::size_t>(i)]] = 0.0;
    return out;
}

double weight_sparsity(const LinearProbModel& model) {
    const Index n = model.weights.size();
    if (n == 0) return 0.0;
    Index zeros = 0;
    for (Index i = 0; i < n; ++i) zeros += model.weights.data()[i] == 0.0 ? 1 : 0;
    return static_cast<double>(zeros) / static_cast<double>(n);
}

}  // namespace neurodec
