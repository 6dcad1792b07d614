#pragma once

#include "neurodec/types.hpp"

namespace neurodec {

/// How many principal components to keep.
struct PcSelector {
    enum class Kind { fixed, variance_fraction };
    Kind kind = Kind::variance_fraction;
    int fixed_count = 0;
    double fraction = 0.9;

    static PcSelector fixed(int p) {
        PcSelector s;
        s.kind = Kind::fixed;
        s.fixed_count = p;
        return s;
    }
    static PcSelector variance(double fraction) {
        PcSelector s;
        s.kind = Kind::variance_fraction;
        s.fraction = fraction;
        return s;
    }
};

struct PCAModel {
    Vector mean;
    Matrix components;          // D x P, orthonormal columns
    Vector explained_variance;  // descending, one per kept component
    double total_variance = 0.0;

    Index n_components() const { return components.cols(); }
    Index n_features() const { return components.rows(); }
};

/// Principal directions of the sample covariance (divisor T-1). Deterministic:
/// each component's largest-magnitude entry is made positive.
PCAModel pca_fit(const Eigen::Ref<const Matrix>& x, const PcSelector& selector);

/// Centered projection (x - mean) * components.
Matrix pca_transform(const PCAModel& model, const Eigen::Ref<const Matrix>& x);

}  // namespace neurodec
