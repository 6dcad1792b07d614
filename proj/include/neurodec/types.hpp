#pragma once

#include <Eigen/Dense>

namespace neurodec {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using IntVector = Eigen::VectorXi;
using Index = Eigen::Index;

/// Half-open index interval [lo, hi) over the binned timeline.
struct IndexInterval {
    Index lo = 0;
    Index hi = 0;

    Index size() const { return hi - lo; }
    bool empty() const { return hi <= lo; }
    bool contains(Index i) const { return i >= lo && i < hi; }
};

/// Stack the rows of `m` addressed by `intervals`, in interval order.
template <typename Derived>
Matrix gather_rows(const Eigen::MatrixBase<Derived>& m,
                   const std::vector<IndexInterval>& intervals) {
    Index total = 0;
    for (const auto& iv : intervals) total += iv.size();
    Matrix out(total, m.cols());
    Index r = 0;
    for (const auto& iv : intervals) {
        if (iv.empty()) continue;
        out.middleRows(r, iv.size()) = m.middleRows(iv.lo, iv.size());
        r += iv.size();
    }
    return out;
}

template <typename Derived>
Matrix gather_rows(const Eigen::MatrixBase<Derived>& m, const IndexInterval& iv) {
    return m.middleRows(iv.lo, iv.size());
}

}  // namespace neurodec
