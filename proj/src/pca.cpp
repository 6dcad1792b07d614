#include "neurodec/pca.hpp"

#include <Eigen/Eigenvalues>

#include "neurodec/errors.hpp"

namespace neurodec {

PCAModel pca_fit(const Eigen::Ref<const Matrix>& x, const PcSelector& selector) {
    const Index t = x.rows();
    const Index d = x.cols();
    if (t < 2) throw FitError("PCA requires at least two rows");
    if (selector.kind == PcSelector::Kind::fixed &&
        (selector.fixed_count < 1 || selector.fixed_count > d))
        throw ConfigError("fixed component count must lie in [1, n_features]");
    if (selector.kind == PcSelector::Kind::variance_fraction &&
        !(selector.fraction > 0.0 && selector.fraction <= 1.0))
        throw ConfigError("variance fraction must lie in (0, 1]");

    PCAModel model;
    model.mean = x.colwise().mean();
    Matrix centered = x.rowwise() - model.mean.transpose();
    Matrix cov = Matrix::Zero(d, d);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(),
                                                   1.0 / static_cast<double>(t - 1));

    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success) throw FitError("eigendecomposition did not converge");

    // Eigen returns eigenvalues ascending; reorder descending and clamp the
    // tiny negative values that arise from round-off on rank-deficient input.
    Vector eigenvalues(d);
    Matrix eigenvectors(d, d);
    for (Index i = 0; i < d; ++i) {
        eigenvalues[i] = std::max(0.0, solver.eigenvalues()[d - 1 - i]);
        eigenvectors.col(i) = solver.eigenvectors().col(d - 1 - i);
    }
    model.total_variance = eigenvalues.sum();

    const Index max_rank = std::min<Index>(d, t);
    Index p = 0;
    if (selector.kind == PcSelector::Kind::fixed) {
        p = std::min<Index>(selector.fixed_count, max_rank);
    } else {
        const double target = selector.fraction * model.total_variance;
        double cum = 0.0;
        while (p < max_rank) {
            cum += eigenvalues[p];
            ++p;
            if (cum >= target - 1e-12 * std::max(1.0, model.total_variance)) break;
        }
        p = std::max<Index>(p, 1);
    }

    model.components = eigenvectors.leftCols(p);
    model.explained_variance = eigenvalues.head(p);
    for (Index j = 0; j < p; ++j) {
        Index arg = 0;
        model.components.col(j).cwiseAbs().maxCoeff(&arg);
        if (model.components(arg, j) < 0.0) model.components.col(j) = -model.components.col(j);
    }
    return model;
}

Matrix pca_transform(const PCAModel& model, const Eigen::Ref<const Matrix>& x) {
    if (x.cols() != model.n_features())
        throw ShapeError("PCA fitted on " + std::to_string(model.n_features()) +
                         " features, got " + std::to_string(x.cols()));
    return (x.rowwise() - model.mean.transpose()) * model.components;
}

}  // namespace neurodec
