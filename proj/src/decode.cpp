#include "neurodec/decode.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "neurodec/errors.hpp"

namespace neurodec {

namespace {

std::vector<double> sorted_values(const Eigen::Ref<const Vector>& y) {
    std::vector<double> v(y.data(), y.data() + y.size());
    std::sort(v.begin(), v.end());
    return v;
}

double quantile_of_sorted(const std::vector<double>& sorted, double fraction) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = fraction * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double t = pos - static_cast<double>(lo);
    return (1.0 - t) * sorted[lo] + t * sorted[hi];
}

}  // namespace

QuantizerModel quantizer_fit(const Eigen::Ref<const Vector>& y, int ql, QuantizerKind kind) {
    if (ql < 2) throw ConfigError("quantization level count must be at least 2");
    if (y.size() == 0) throw ValidationError("quantizer fit requires at least one value");
    if (!y.allFinite()) throw ValidationError("quantizer fit input contains non-finite values");

    std::vector<double> sorted = sorted_values(y);
    Index distinct = 1;
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i] > sorted[i - 1]) ++distinct;
    if (distinct < ql)
        throw DegenerateTargetError("target has fewer distinct values than quantization levels");

    QuantizerModel model;
    model.ql = ql;
    model.quantizer_kind = kind;
    model.input_min = sorted.front();
    model.input_max = sorted.back();
    model.edges.resize(ql - 1);
    model.centers.resize(ql);

    if (kind == QuantizerKind::uniform) {
        const double span = model.input_max - model.input_min;
        for (int j = 1; j < ql; ++j)
            model.edges[j - 1] = model.input_min + span * static_cast<double>(j) / ql;
        for (int j = 0; j < ql; ++j)
            model.centers[j] = model.input_min + span * (static_cast<double>(j) + 0.5) / ql;
    } else {
        for (int j = 1; j < ql; ++j)
            model.edges[j - 1] = quantile_of_sorted(sorted, static_cast<double>(j) / ql);
        for (int j = 0; j < ql; ++j)
            model.centers[j] = quantile_of_sorted(sorted, (static_cast<double>(j) + 0.5) / ql);
        for (int j = 1; j < ql - 1; ++j)
            if (model.edges[j] <= model.edges[j - 1])
                throw DegenerateTargetError("target distribution collapses quantile bin edges");
    }
    return model;
}

IntVector quantizer_encode(const QuantizerModel& model, const Eigen::Ref<const Vector>& y) {
    if (model.ql < 2) throw ValidationError("quantizer model is not fitted");
    IntVector out(y.size());
    const double* begin = model.edges.data();
    const double* end = begin + model.edges.size();
    for (Index i = 0; i < y.size(); ++i) {
        // Bin index = number of edges at or below the value, so bins are
        // [edge_{j-1}, edge_j) and out-of-range values clamp to the end bins.
        out[i] = static_cast<int>(std::upper_bound(begin, end, y[i]) - begin);
    }
    return out;
}

Vector quantizer_decode_expect(const QuantizerModel& model, const Eigen::Ref<const Matrix>& probs) {
    if (probs.cols() != model.ql)
        throw ShapeError("probability columns do not match quantization level count");
    return probs * model.centers;
}

namespace {

void validate_ccbr_config(const CCBRConfig& config) {
    if (config.ql < 2) throw ConfigError("quantization level count must be at least 2");
    if (config.c <= 0.0) throw ConfigError("regularization parameter C must be positive");
    if (config.max_stages < 1) throw ConfigError("cascade needs at least one stage");
    if (config.min_gain < 0.0) throw ConfigError("stage acceptance gain must be nonnegative");
}

std::unique_ptr<ProbClassifier> fit_stage_classifier(const CCBRConfig& config,
                                                     const StageFitContext& context) {
    if (config.factory) return config.factory(context);
    const Matrix& x = context.scores_train;
    const IntVector& labels = context.labels_train;
    switch (config.classifier) {
        case ClassifierKind::logistic:
            return std::make_unique<LinearProbModel>(logistic_fit(x, labels, config.c));
        case ClassifierKind::svm_platt:
            return std::make_unique<LinearProbModel>(svm_platt_fit(x, labels, config.c));
        case ClassifierKind::centroid:
            return std::make_unique<CentroidModel>(centroid_fit(x, labels, config.metric));
        case ClassifierKind::kmeans: {
            // Unsupervised clusters carry no bin identity, so relabel each
            // cluster with the majority training bin among its members.
            CentroidModel clusters = kmeans_fit(x, config.ql, config.metric, config.seed);
            Matrix relabeled = Matrix::Zero(config.ql, x.cols());
            Matrix counts = Matrix::Zero(config.ql, config.ql);  // cluster x bin
            const IntVector assignment = predict_classes(clusters, x);
            for (Index i = 0; i < labels.size(); ++i) counts(assignment[i], labels[i]) += 1.0;
            CentroidModel model = clusters;
            // Keep cluster geometry but reorder rows so argmax aligns with bins:
            // each bin takes the centroid of the cluster most dominated by it.
            for (int bin = 0; bin < config.ql; ++bin) {
                Index best = 0;
                counts.col(bin).maxCoeff(&best);
                relabeled.row(bin) = clusters.centroids.row(best);
            }
            model.centroids = relabeled;
            return std::make_unique<CentroidModel>(std::move(model));
        }
        case ClassifierKind::window:
            return std::make_unique<WindowModel>(window_fit(x, labels, config.window_coverage));
        case ClassifierKind::tree_axis:
            return std::make_unique<TreeModel>(
                tree_fit(x, labels, TreeKind::axis, config.tree_depth, config.tree_min_leaf));
        case ClassifierKind::tree_oblique:
            return std::make_unique<TreeModel>(
                tree_fit(x, labels, TreeKind::oblique, config.tree_depth, config.tree_min_leaf));
    }
    throw ConfigError("unknown classifier kind");
}

double single_column_r2(const Vector& truth, const Vector& predicted) {
    return r_squared(truth, predicted).per_dim[0];
}

}  // namespace

Vector CCBRModel::predict(const Eigen::Ref<const Matrix>& x) const {
    const Matrix scores = pca_transform(pca, standardizer.apply(x));
    Vector out = Vector::Zero(x.rows());
    for (const CCBRStage& stage : stages)
        out += quantizer_decode_expect(stage.quantizer,
                                       stage.classifier->predict_proba_batch(scores));
    return out;
}

std::vector<CCBRModel> ccbr_fit(const Eigen::Ref<const Matrix>& x,
                                const Eigen::Ref<const Matrix>& y, const FoldSplit& split,
                                const CCBRConfig& config) {
    validate_ccbr_config(config);
    if (x.rows() != y.rows()) throw ShapeError("feature and target row counts differ");
    if (y.cols() < 1) throw ShapeError("target matrix has no columns");
    const Index n = x.rows();
    for (const IndexInterval& interval : split.train)
        if (interval.lo < 0 || interval.hi > n) throw ValidationError("training range out of bounds");
    if (split.validation.lo < 0 || split.validation.hi > n || split.validation.empty())
        throw ValidationError("validation range out of bounds");

    const Matrix x_train = gather_rows(x, split.train);
    const Matrix y_train = gather_rows(y, split.train);
    const Matrix x_val = x.middleRows(split.validation.lo, split.validation.size());
    const Matrix y_val = y.middleRows(split.validation.lo, split.validation.size());
    if (x_train.rows() < 2) throw ValidationError("training range has fewer than two samples");

    const Standardizer standardizer = standardize_fit(x_train);
    const PCAModel pca = pca_fit(standardizer.apply(x_train), config.pc);
    const Matrix scores_train = pca_transform(pca, standardizer.apply(x_train));
    const Matrix scores_val = pca_transform(pca, standardizer.apply(x_val));

    std::vector<CCBRModel> models;
    models.reserve(static_cast<std::size_t>(y.cols()));
    for (Index dim = 0; dim < y.cols(); ++dim) {
        CCBRModel model;
        model.standardizer = standardizer;
        model.pca = pca;
        model.config = config;

        const Vector target_train = y_train.col(dim);
        const Vector target_val = y_val.col(dim);
        const double target_span = target_train.maxCoeff() - target_train.minCoeff();

        Vector residual_train = target_train;
        Vector residual_val = target_val;
        Vector prediction_val = Vector::Zero(target_val.size());
        double best_val_r2 = 0.0;

        for (int stage_index = 0; stage_index < config.max_stages; ++stage_index) {
            const double residual_span = residual_train.maxCoeff() - residual_train.minCoeff();
            if (stage_index > 0 && residual_span < 1e-9 * target_span) break;

            QuantizerModel quantizer;
            try {
                quantizer = quantizer_fit(residual_train, config.ql, QuantizerKind::uniform);
            } catch (const DegenerateTargetError&) {
                if (stage_index == 0) throw;
                break;
            }
            const IntVector labels_train = quantizer_encode(quantizer, residual_train);
            const IntVector labels_val = quantizer_encode(quantizer, residual_val);

            std::unique_ptr<ProbClassifier> classifier;
            try {
                StageFitContext context{scores_train, labels_train, scores_val, labels_val,
                                        stage_index};
                classifier = fit_stage_classifier(config, context);
            } catch (const DegenerateLabelsError&) {
                if (stage_index == 0) throw;
                break;
            }

            const Vector stage_train = quantizer_decode_expect(
                quantizer, classifier->predict_proba_batch(scores_train));
            const Vector stage_val =
                quantizer_decode_expect(quantizer, classifier->predict_proba_batch(scores_val));

            const Vector candidate_val = prediction_val + stage_val;
            const double val_r2 = single_column_r2(target_val, candidate_val);
            if (stage_index > 0 && val_r2 - best_val_r2 < config.min_gain) break;

            CCBRStage stage;
            stage.quantizer = quantizer;
            stage.classifier = std::move(classifier);
            model.stages.push_back(std::move(stage));
            model.validation_trace.push_back(val_r2);

            residual_train -= stage_train;
            residual_val -= stage_val;
            prediction_val = candidate_val;
            best_val_r2 = val_r2;
        }
        models.push_back(std::move(model));
    }
    return models;
}

Matrix ccbr_predict(const std::vector<CCBRModel>& models, const Eigen::Ref<const Matrix>& x) {
    if (models.empty()) throw ValidationError("no cascade models given");
    Matrix out(x.rows(), static_cast<Index>(models.size()));
    for (std::size_t k = 0; k < models.size(); ++k)
        out.col(static_cast<Index>(k)) = models[k].predict(x);
    return out;
}

CCBRModel ccbr_quantize_weights(const CCBRModel& model, int bits) {
    CCBRModel out = model;
    for (CCBRStage& stage : out.stages) {
        if (const auto* linear = dynamic_cast<const LinearProbModel*>(stage.classifier.get())) {
            stage.classifier = std::make_unique<LinearProbModel>(quantize_weights(*linear, bits));
        } else if (const auto* tree = dynamic_cast<const TreeModel*>(stage.classifier.get())) {
            if (tree->tree_kind == TreeKind::oblique)
                stage.classifier = std::make_unique<TreeModel>(quantize_weights(*tree, bits));
        }
    }
    return out;
}

CCBRModel ccbr_prune_weights(const CCBRModel& model, double sparsity) {
    CCBRModel out = model;
    for (CCBRStage& stage : out.stages)
        if (const auto* linear = dynamic_cast<const LinearProbModel*>(stage.classifier.get()))
            stage.classifier = std::make_unique<LinearProbModel>(prune_weights(*linear, sparsity));
    return out;
}

namespace {

Matrix solve_normal_equations(const Matrix& x, const Matrix& y, double lambda, bool& used_fallback) {
    const Index t = x.rows();
    const Index d = x.cols();
    Matrix a(t, d + 1);
    a.col(0).setOnes();
    a.rightCols(d) = x;

    Matrix gram = Matrix::Zero(d + 1, d + 1);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose());
    gram = gram.selfadjointView<Eigen::Lower>();
    const Matrix rhs = a.transpose() * y;

    auto solve_with = [&](double penalty) -> Matrix {
        Matrix system = gram;
        // Intercept stays unpenalized.
        system.diagonal().tail(d).array() += penalty;
        return system.ldlt().solve(rhs);
    };

    Matrix weights = solve_with(lambda);
    Matrix system_check = gram;
    system_check.diagonal().tail(d).array() += lambda;
    const double residual = (system_check * weights - rhs).norm();
    const double scale = std::max(1.0, rhs.norm());
    used_fallback = false;
    if (!weights.allFinite() || residual > 1e-6 * scale) {
        used_fallback = true;
        weights = solve_with(lambda + 1e-8 * std::max(1.0, gram.diagonal().tail(d).maxCoeff()));
    }
    return weights;
}

double evaluate_polynomial(const Eigen::Ref<const Vector>& coefficients, double value) {
    double out = 0.0;
    for (Index p = coefficients.size() - 1; p >= 0; --p) out = out * value + coefficients[p];
    return out;
}

}  // namespace

WienerModel wiener_fit(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y,
                       double lambda) {
    if (lambda < 0.0) throw ConfigError("ridge penalty must be nonnegative");
    if (x.rows() != y.rows()) throw ShapeError("feature and target row counts differ");
    if (x.rows() < 2) throw ValidationError("least-squares fit requires at least two samples");
    if (!x.allFinite() || !y.allFinite())
        throw ValidationError("least-squares fit input contains non-finite values");

    WienerModel model;
    model.weights = solve_normal_equations(x, y, lambda, model.ridge_fallback);
    return model;
}

Matrix wiener_predict(const WienerModel& model, const Eigen::Ref<const Matrix>& x) {
    if (x.cols() != model.n_features()) throw ShapeError("input feature count does not match model");
    Matrix out = x * model.weights.bottomRows(model.n_features());
    out.rowwise() += model.weights.row(0);
    if (model.polynomial.size() > 0) {
        for (Index k = 0; k < out.cols(); ++k)
            for (Index i = 0; i < out.rows(); ++i)
                out(i, k) = evaluate_polynomial(model.polynomial.col(k), out(i, k));
    }
    return out;
}

WienerModel wiener_cascade_fit(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y,
                               int degree, double lambda) {
    if (degree < 1) throw ConfigError("polynomial degree must be at least 1");
    WienerModel model = wiener_fit(x, y, lambda);
    const Matrix linear = wiener_predict(model, x);

    model.polynomial.resize(degree + 1, y.cols());
    Matrix vandermonde(x.rows(), degree + 1);
    for (Index k = 0; k < y.cols(); ++k) {
        vandermonde.col(0).setOnes();
        for (int p = 1; p <= degree; ++p)
            vandermonde.col(p) = vandermonde.col(p - 1).cwiseProduct(linear.col(k));
        model.polynomial.col(k) = vandermonde.colPivHouseholderQr().solve(y.col(k));
    }
    return model;
}

RSquared r_squared(const Eigen::Ref<const Matrix>& truth, const Eigen::Ref<const Matrix>& predicted) {
    if (truth.rows() != predicted.rows() || truth.cols() != predicted.cols())
        throw ShapeError("truth and prediction shapes differ");
    if (truth.rows() < 2) throw MetricError("coefficient of determination needs at least two samples");

    RSquared out;
    out.per_dim.resize(truth.cols());
    for (Index k = 0; k < truth.cols(); ++k) {
        const double mean = truth.col(k).mean();
        const double sst = (truth.col(k).array() - mean).square().sum();
        if (sst <= 0.0)
            throw MetricError("target dimension " + std::to_string(k) +
                              " is constant; coefficient of determination is undefined");
        const double sse = (truth.col(k) - predicted.col(k)).squaredNorm();
        out.per_dim[k] = 1.0 - sse / sst;
    }
    out.mean = out.per_dim.mean();
    return out;
}

}  // namespace neurodec
