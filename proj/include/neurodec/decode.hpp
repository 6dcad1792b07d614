#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "neurodec/classify.hpp"
#include "neurodec/dataset.hpp"
#include "neurodec/features.hpp"
#include "neurodec/pca.hpp"
#include "neurodec/types.hpp"

namespace neurodec {

enum class QuantizerKind { uniform, quantile };

/// Scalar-to-bin mapping over [input_min, input_max] with QL bins; decoding a
/// probability vector takes the expectation over bin centers.
struct QuantizerModel {
    Vector edges;    // ql - 1 interior edges, ascending
    Vector centers;  // ql bin centers
    int ql = 0;
    double input_min = 0.0;
    double input_max = 0.0;
    QuantizerKind quantizer_kind = QuantizerKind::uniform;
};

QuantizerModel quantizer_fit(const Eigen::Ref<const Vector>& y, int ql, QuantizerKind kind);

/// Bin index per value; values past the range clamp to the end bins.
IntVector quantizer_encode(const QuantizerModel& model, const Eigen::Ref<const Vector>& y);

/// Expected value under `probs` (rows) of the bin centers.
Vector quantizer_decode_expect(const QuantizerModel& model, const Eigen::Ref<const Matrix>& probs);

enum class ClassifierKind { logistic, svm_platt, centroid, kmeans, window, tree_axis, tree_oblique };

/// Everything a stage factory may condition on. Production factories should
/// use only the training split; the validation fields exist so that tests can
/// substitute reference classifiers.
struct StageFitContext {
    const Matrix& scores_train;
    const IntVector& labels_train;
    const Matrix& scores_validation;
    const IntVector& labels_validation;
    int stage_index = 0;
};

using StageClassifierFactory = std::function<std::unique_ptr<ProbClassifier>(const StageFitContext&)>;

struct CCBRConfig {
    int ql = 32;
    double c = 1.0;
    PcSelector pc = PcSelector::variance(0.90);
    int max_stages = 5;
    double min_gain = 0.002;
    ClassifierKind classifier = ClassifierKind::logistic;
    DistanceMetric metric = DistanceMetric::l2;
    double window_coverage = 0.9;
    int tree_depth = 6;
    int tree_min_leaf = 5;
    std::uint64_t seed = 1;
    StageClassifierFactory factory;  // overrides `classifier` when set
};

struct CCBRStage {
    QuantizerModel quantizer;
    std::unique_ptr<ProbClassifier> classifier;

    CCBRStage() = default;
    CCBRStage(const CCBRStage& other)
        : quantizer(other.quantizer),
          classifier(other.classifier ? other.classifier->clone() : nullptr) {}
    CCBRStage& operator=(const CCBRStage& other) {
        quantizer = other.quantizer;
        classifier = other.classifier ? other.classifier->clone() : nullptr;
        return *this;
    }
    CCBRStage(CCBRStage&&) = default;
    CCBRStage& operator=(CCBRStage&&) = default;
};

/// Cascade for one kinematic dimension: standardize, project, then one
/// quantize-classify-expect stage per accepted refinement.
struct CCBRModel {
    Standardizer standardizer;
    PCAModel pca;
    std::vector<CCBRStage> stages;
    std::vector<double> validation_trace;  // validation R^2 after each accepted stage
    CCBRConfig config;

    Vector predict(const Eigen::Ref<const Matrix>& x) const;
};

/// Fits one cascade per target column on the split's training rows, growing
/// stages while validation R^2 improves by at least min_gain.
std::vector<CCBRModel> ccbr_fit(const Eigen::Ref<const Matrix>& x,
                                const Eigen::Ref<const Matrix>& y, const FoldSplit& split,
                                const CCBRConfig& config);

/// Column k from models[k]; models must agree on feature count.
Matrix ccbr_predict(const std::vector<CCBRModel>& models, const Eigen::Ref<const Matrix>& x);

/// Copies with every stage classifier's linear weights quantized / pruned;
/// backends without weight matrices pass through unchanged.
CCBRModel ccbr_quantize_weights(const CCBRModel& model, int bits);
CCBRModel ccbr_prune_weights(const CCBRModel& model, double sparsity);

/// Affine least-squares decoder, optionally followed by a per-output
/// polynomial read-out (the cascade variant).
struct WienerModel {
    Matrix weights;  // (n_features + 1) x n_outputs; row 0 is the intercept
    Matrix polynomial;  // (degree + 1) x n_outputs, ascending powers; empty for the plain filter
    bool ridge_fallback = false;

    Index n_features() const { return weights.rows() - 1; }
    Index n_outputs() const { return weights.cols(); }
};

/// Ridge-regularized normal equations (intercept unpenalized). A singular
/// system retries with lambda = 1e-8 and sets ridge_fallback.
WienerModel wiener_fit(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y,
                       double lambda = 0.0);

/// wiener_fit plus a least-squares polynomial of the linear stage's output.
WienerModel wiener_cascade_fit(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y,
                               int degree, double lambda = 0.0);

Matrix wiener_predict(const WienerModel& model, const Eigen::Ref<const Matrix>& x);

struct RSquared {
    Vector per_dim;
    double mean = 0.0;
};

/// Coefficient of determination per output column (1 - SSE/SST) and its mean.
RSquared r_squared(const Eigen::Ref<const Matrix>& truth, const Eigen::Ref<const Matrix>& predicted);

}  // namespace neurodec
