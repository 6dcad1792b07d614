#pragma once

#include <memory>
#include <string>
#include <vector>

#include "neurodec/types.hpp"

namespace neurodec {

/// Behavioral contract shared by every stage classifier: predict_proba returns
/// a nonnegative vector summing to 1 (within 1e-9) for every input.
class ProbClassifier {
public:
    virtual ~ProbClassifier() = default;

    virtual int n_classes() const = 0;
    virtual Index n_features() const = 0;
    virtual Vector predict_proba(const Eigen::Ref<const Vector>& x) const = 0;
    virtual std::unique_ptr<ProbClassifier> clone() const = 0;
    virtual Index parameter_count() const = 0;
    virtual std::string kind() const = 0;

    /// Row-wise probabilities; backends with a vectorized path override this.
    virtual Matrix predict_proba_batch(const Eigen::Ref<const Matrix>& x) const;
};

/// Argmax class per row.
IntVector predict_classes(const ProbClassifier& model, const Eigen::Ref<const Matrix>& x);

/// Fraction of rows whose argmax matches `labels`.
double accuracy(const ProbClassifier& model, const Eigen::Ref<const Matrix>& x,
                const IntVector& labels);

enum class Calibration { softmax, platt };

/// Linear multi-class scorer with either softmax or per-class Platt
/// calibration on top of the affine decision values.
class LinearProbModel final : public ProbClassifier {
public:
    Matrix weights;  // n_classes x n_features
    Vector biases;   // n_classes
    double c_regularization = 1.0;
    Calibration calibration = Calibration::softmax;
    Vector platt_slope;   // per class, platt only
    Vector platt_offset;  // per class, platt only

    /// Affine scores X * W^T + b, one row per sample.
    Matrix decision_values(const Eigen::Ref<const Matrix>& x) const;

    int n_classes() const override { return static_cast<int>(weights.rows()); }
    Index n_features() const override { return weights.cols(); }
    Vector predict_proba(const Eigen::Ref<const Vector>& x) const override;
    Matrix predict_proba_batch(const Eigen::Ref<const Matrix>& x) const override;
    std::unique_ptr<ProbClassifier> clone() const override {
        return std::make_unique<LinearProbModel>(*this);
    }
    Index parameter_count() const override {
        return weights.size() + biases.size() + platt_slope.size() + platt_offset.size();
    }
    std::string kind() const override { return "linear"; }
};

/// Multinomial logistic regression: mean cross-entropy + ||W||^2 / (2 C T),
/// minimized full-batch from zero initialization to gradient tolerance 1e-5.
LinearProbModel logistic_fit(const Eigen::Ref<const Matrix>& x, const IntVector& labels, double c);

/// One-vs-rest linear SVM (squared hinge, penalty 1/C), each class calibrated
/// by a Platt sigmoid fitted on held-out decision values; output renormalized.
LinearProbModel svm_platt_fit(const Eigen::Ref<const Matrix>& x, const IntVector& labels, double c);

enum class DistanceMetric { l1, l2, cosine };

/// Per-class template matching: probabilities are softmax(-distance/temperature).
class CentroidModel final : public ProbClassifier {
public:
    Matrix centroids;  // n_classes x n_features
    DistanceMetric metric = DistanceMetric::l2;
    double temperature = 1.0;

    Vector distances(const Eigen::Ref<const Vector>& x) const;

    int n_classes() const override { return static_cast<int>(centroids.rows()); }
    Index n_features() const override { return centroids.cols(); }
    Vector predict_proba(const Eigen::Ref<const Vector>& x) const override;
    std::unique_ptr<ProbClassifier> clone() const override {
        return std::make_unique<CentroidModel>(*this);
    }
    Index parameter_count() const override { return centroids.size() + 1; }
    std::string kind() const override { return "centroid"; }
};

/// Supervised centroids: per-class mean (l2/cosine) or coordinate-wise median (l1).
/// temperature <= 0 selects the scale-aware default (median centroid distance / 4).
CentroidModel centroid_fit(const Eigen::Ref<const Matrix>& x, const IntVector& labels,
                           DistanceMetric metric, double temperature = 0.0);

/// Lloyd's iterations from k-means++ style seeding until the assignment
/// fixpoint (or 300 iterations). Empty clusters are re-seeded from the point
/// farthest from its own center.
CentroidModel kmeans_fit(const Eigen::Ref<const Matrix>& x, int k, DistanceMetric metric,
                         std::uint64_t seed);

/// Per-class hyperrectangle; inputs contained by exactly one window get that
/// class, everything else is delegated to the fallback centroid model.
class WindowModel final : public ProbClassifier {
public:
    Matrix low;   // n_classes x n_features
    Matrix high;  // n_classes x n_features
    CentroidModel fallback;

    int n_classes() const override { return static_cast<int>(low.rows()); }
    Index n_features() const override { return low.cols(); }
    Vector predict_proba(const Eigen::Ref<const Vector>& x) const override;
    std::unique_ptr<ProbClassifier> clone() const override {
        return std::make_unique<WindowModel>(*this);
    }
    Index parameter_count() const override {
        return low.size() + high.size() + fallback.parameter_count();
    }
    std::string kind() const override { return "window"; }
};

/// Bounds at the [(1-coverage)/2, 1-(1-coverage)/2] empirical quantiles.
WindowModel window_fit(const Eigen::Ref<const Matrix>& x, const IntVector& labels, double coverage);

enum class TreeKind { axis, oblique };

/// Decision tree with axis-parallel or oblique (linear combination) splits;
/// leaves hold class-frequency vectors.
class TreeModel final : public ProbClassifier {
public:
    struct Node {
        bool leaf = true;
        int feature = -1;    // axis split
        Vector weights;      // oblique split; empty for axis nodes
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        Vector probs;  // leaf only
    };

    std::vector<Node> nodes;  // nodes[0] is the root
    TreeKind tree_kind = TreeKind::axis;
    int max_depth = 1;
    int min_leaf = 1;
    int classes = 0;
    Index features = 0;

    /// Leaf reached by descending from the root.
    const Node& leaf_for(const Eigen::Ref<const Vector>& x) const;

    int n_classes() const override { return classes; }
    Index n_features() const override { return features; }
    Vector predict_proba(const Eigen::Ref<const Vector>& x) const override;
    std::unique_ptr<ProbClassifier> clone() const override {
        return std::make_unique<TreeModel>(*this);
    }
    Index parameter_count() const override;
    std::string kind() const override { return "tree"; }
};

/// Greedy top-down Gini induction. Axis splits scan midpoints of sorted unique
/// values; oblique splits fit a class-vs-rest logistic separator per node and
/// threshold its score at zero.
TreeModel tree_fit(const Eigen::Ref<const Matrix>& x, const IntVector& labels, TreeKind kind,
                   int max_depth, int min_leaf);

/// Uniform per-row weight quantization to 2^bits levels over [-max|w|, +max|w|].
/// Biases and thresholds stay full precision.
LinearProbModel quantize_weights(const LinearProbModel& model, int bits);
TreeModel quantize_weights(const TreeModel& model, int bits);

/// Zero out the globally smallest-magnitude fraction of weights.
LinearProbModel prune_weights(const LinearProbModel& model, double sparsity);

/// Achieved fraction of exactly-zero weights.
double weight_sparsity(const LinearProbModel& model);

}  // namespace neurodec
