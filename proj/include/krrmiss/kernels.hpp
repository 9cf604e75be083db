#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "krrmiss/error.hpp"

namespace krrmiss {

using Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Bernoulli polynomial B_q(x) for q in 0..4.
[[nodiscard]] inline double bernoulli_polynomial(int q, double x) {
    switch (q) {
        case 0: return 1.0;
        case 1: return x - 0.5;
        case 2: return x * x - x + 1.0 / 6.0;
        case 3: return x * (x * (x - 1.5) + 0.5);
        case 4: return x * x * (x * (x - 2.0) + 1.0) - 1.0 / 30.0;
        default:
            throw InputError("bernoulli_polynomial: unsupported order " + std::to_string(q) +
                             " (supported: 0..4)");
    }
}

/// k_q(x) = B_q(x) / q!
[[nodiscard]] inline double scaled_bernoulli(int q, double x) {
    static constexpr double factorial[] = {1.0, 1.0, 2.0, 6.0, 24.0};
    const double b = bernoulli_polynomial(q, x);
    return b / factorial[q];
}

/// Sign carried by the k_{2l}(|x - y|) term of the Sobolev kernel.
///
/// `Reproducing` uses (-1)^(l-1), the reproducing kernel of the order-l
/// Sobolev space under the norm built from integrated derivatives; its Gram
/// matrices are positive semidefinite. `Flipped` uses (-1)^l, which yields
/// indefinite Gram matrices and is kept only for comparison.
enum class SobolevSign { Reproducing, Flipped };

/// Order-l Sobolev kernel on [0,1]:
///   sum_{q=0}^{l} k_q(x) k_q(y) +/- k_{2l}(|x - y|).
[[nodiscard]] inline double sobolev_kernel_1d(double x, double y, int order,
                                              SobolevSign sign = SobolevSign::Reproducing) {
    constexpr double slack = 1e-12;
    if (order != 1 && order != 2) {
        throw InputError("sobolev_kernel_1d: order must be 1 or 2, got " + std::to_string(order));
    }
    if (!(x >= -slack && x <= 1.0 + slack && y >= -slack && y <= 1.0 + slack)) {
        throw InputError("sobolev_kernel_1d: arguments must lie in [0,1] (rescale first); got (" +
                         std::to_string(x) + ", " + std::to_string(y) + ")");
    }
    x = std::clamp(x, 0.0, 1.0);
    y = std::clamp(y, 0.0, 1.0);

    double value = 0.0;
    for (int q = 0; q <= order; ++q) value += scaled_bernoulli(q, x) * scaled_bernoulli(q, y);

    const double tail = scaled_bernoulli(2 * order, std::abs(x - y));
    const bool odd_order = (order % 2) == 1;
    const bool positive = (sign == SobolevSign::Reproducing) ? odd_order : !odd_order;
    return positive ? value + tail : value - tail;
}

template <typename A, typename B>
[[nodiscard]] double gaussian_kernel(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y,
                                     double bandwidth) {
    if (x.size() != y.size()) {
        throw InputError("gaussian_kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
    }
    if (!(bandwidth > 0.0)) throw InputError("gaussian_kernel: bandwidth must be positive");
    const double sq = (x.derived().array() - y.derived().array()).square().sum();
    return std::exp(-sq / (2.0 * bandwidth * bandwidth));
}

struct SobolevFamily {
    int order = 2;
    SobolevSign sign = SobolevSign::Reproducing;
};

/// Gaussian family; an empty bandwidth means "median heuristic" and is
/// resolved against data by `KernelSpec::resolve`.
struct GaussianFamily {
    std::optional<double> bandwidth;
};

using KernelFamily = std::variant<SobolevFamily, GaussianFamily>;

/// Median of the nonzero pairwise Euclidean distances between rows of X.
[[nodiscard]] inline double median_pairwise_distance(const Matrix& X) {
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(X.rows() * (X.rows() - 1) / 2));
    for (Index i = 0; i < X.rows(); ++i) {
        for (Index j = i + 1; j < X.rows(); ++j) {
            const double d = (X.row(i) - X.row(j)).norm();
            if (d > 0.0) dist.push_back(d);
        }
    }
    if (dist.empty()) throw InputError("median heuristic: no nonzero pairwise distances");
    const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    if (dist.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(dist.begin(), mid);
    return 0.5 * (lower + upper);
}

/// Kernel family plus the covariate dimension it is composed over.
/// Dimension 1 is the univariate kernel; dimension d > 1 is the tensor
/// product of d copies of the univariate kernel.
class KernelSpec {
public:
    KernelSpec() = default;
    KernelSpec(KernelFamily family, Index dimension) : family_(family), dimension_(dimension) {
        validate();
    }

    static KernelSpec sobolev(int order, Index dimension = 1,
                              SobolevSign sign = SobolevSign::Reproducing) {
        return KernelSpec(SobolevFamily{order, sign}, dimension);
    }
    static KernelSpec gaussian(std::optional<double> bandwidth = std::nullopt, Index dimension = 1) {
        return KernelSpec(GaussianFamily{bandwidth}, dimension);
    }

    [[nodiscard]] const KernelFamily& family() const { return family_; }
    [[nodiscard]] Index dimension() const { return dimension_; }
    [[nodiscard]] bool is_sobolev() const { return std::holds_alternative<SobolevFamily>(family_); }
    [[nodiscard]] bool is_resolved() const {
        const auto* g = std::get_if<GaussianFamily>(&family_);
        return g == nullptr || g->bandwidth.has_value();
    }
    [[nodiscard]] std::optional<double> bandwidth() const {
        const auto* g = std::get_if<GaussianFamily>(&family_);
        return g ? g->bandwidth : std::nullopt;
    }

    [[nodiscard]] KernelSpec with_dimension(Index d) const { return KernelSpec(family_, d); }

    /// Fills in a median-heuristic bandwidth from the rows of X.
    [[nodiscard]] KernelSpec resolve(const Matrix& X) const {
        if (is_resolved()) return *this;
        return KernelSpec(GaussianFamily{median_pairwise_distance(X)}, dimension_);
    }

    [[nodiscard]] std::string name() const {
        if (const auto* s = std::get_if<SobolevFamily>(&family_)) return "sobolev" + std::to_string(s->order);
        return "gaussian";
    }

    /// Evaluates K(x, y); the spec must be resolved.
    template <typename A, typename B>
    [[nodiscard]] double operator()(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) const {
        if (x.size() != dimension_ || y.size() != dimension_) {
            throw InputError("kernel: expected " + std::to_string(dimension_) + "-dimensional points, got " +
                             std::to_string(x.size()) + " and " + std::to_string(y.size()));
        }
        if (const auto* s = std::get_if<SobolevFamily>(&family_)) {
            double value = 1.0;
            for (Index j = 0; j < dimension_; ++j) value *= sobolev_kernel_1d(x(j), y(j), s->order, s->sign);
            return value;
        }
        const auto& g = std::get<GaussianFamily>(family_);
        if (!g.bandwidth) throw InputError("kernel: Gaussian bandwidth not resolved");
        // A product of univariate Gaussians with a shared bandwidth is the
        // multivariate Gaussian on the squared Euclidean distance.
        return gaussian_kernel(x, y, *g.bandwidth);
    }

private:
    void validate() const {
        if (dimension_ < 1) throw InputError("kernel: dimension must be >= 1");
        if (const auto* s = std::get_if<SobolevFamily>(&family_)) {
            if (s->order < 1) throw InputError("kernel: Sobolev order must be >= 1");
            if (s->order > 2) throw InputError("kernel: Sobolev order " + std::to_string(s->order) +
                                               " unsupported (orders 1 and 2 only)");
        } else {
            const auto& g = std::get<GaussianFamily>(family_);
            if (g.bandwidth && !(*g.bandwidth > 0.0)) throw InputError("kernel: bandwidth must be positive");
        }
    }

    KernelFamily family_ = SobolevFamily{};
    Index dimension_ = 1;
};

/// prod_j K_base(x_j, y_j), with the base evaluated as a univariate kernel.
template <typename A, typename B>
[[nodiscard]] double tensor_product_kernel(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y,
                                           const KernelSpec& base) {
    if (x.size() != y.size()) {
        throw InputError("tensor_product_kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
    }
    const KernelSpec univariate = base.with_dimension(1);
    double value = 1.0;
    for (Index j = 0; j < x.size(); ++j) {
        value *= univariate(Vector::Constant(1, x(j)), Vector::Constant(1, y(j)));
    }
    return value;
}

/// Per-coordinate affine map onto [0,1] fitted on training ranges.
class UnitRescaler {
public:
    UnitRescaler() = default;

    static UnitRescaler fit(const Matrix& X) {
        if (X.rows() < 2) throw InputError("rescaler: need at least 2 rows");
        UnitRescaler r;
        r.min_ = X.colwise().minCoeff().transpose();
        r.max_ = X.colwise().maxCoeff().transpose();
        for (Index j = 0; j < X.cols(); ++j) {
            if (!std::isfinite(r.min_(j)) || !std::isfinite(r.max_(j))) {
                throw InputError("rescaler: column " + std::to_string(j) + " has non-finite values");
            }
            if (!(r.max_(j) > r.min_(j))) {
                throw InputError("rescaler: column " + std::to_string(j) + " is constant");
            }
        }
        return r;
    }

    [[nodiscard]] Index dimension() const { return min_.size(); }
    [[nodiscard]] const Vector& min() const { return min_; }
    [[nodiscard]] const Vector& max() const { return max_; }

    /// Out-of-range values are clipped to [0,1].
    [[nodiscard]] Matrix apply(const Matrix& X) const {
        check_columns(X.cols());
        Matrix Z(X.rows(), X.cols());
        for (Index j = 0; j < X.cols(); ++j) {
            const double span = max_(j) - min_(j);
            Z.col(j) = ((X.col(j).array() - min_(j)) / span).min(1.0).max(0.0).matrix();
        }
        return Z;
    }

    [[nodiscard]] Matrix invert(const Matrix& Z) const {
        check_columns(Z.cols());
        Matrix X(Z.rows(), Z.cols());
        for (Index j = 0; j < Z.cols(); ++j) {
            X.col(j) = (Z.col(j).array() * (max_(j) - min_(j)) + min_(j)).matrix();
        }
        return X;
    }

private:
    void check_columns(Index cols) const {
        if (cols != dimension()) {
            throw InputError("rescaler: expected " + std::to_string(dimension()) + " columns, got " +
                             std::to_string(cols));
        }
    }

    Vector min_;
    Vector max_;
};

namespace detail {

/// Rows of A against rows of B. When `symmetric`, A == B and only the upper
/// triangle is evaluated and then mirrored.
inline Matrix kernel_block(const Matrix& A, const Matrix& B, const KernelSpec& spec, bool symmetric) {
    if (A.cols() != spec.dimension() || B.cols() != spec.dimension()) {
        throw InputError("gram: points have " + std::to_string(A.cols()) + " columns, kernel expects " +
                         std::to_string(spec.dimension()));
    }
    // Transposed copies keep each point contiguous in memory.
    const Matrix At = A.transpose();
    const Matrix Bt = B.transpose();
    Matrix K(A.rows(), B.rows());
    for (Index j = 0; j < B.rows(); ++j) {
        const Index start = symmetric ? j : 0;
        for (Index i = start; i < A.rows(); ++i) K(i, j) = spec(At.col(i), Bt.col(j));
    }
    if (symmetric) K.triangularView<Eigen::StrictlyUpper>() = K.transpose().triangularView<Eigen::StrictlyUpper>();
    return K;
}

}  // namespace detail

/// Symmetric Gram matrix (K(x_i, x_j))_{ij}. A Gaussian spec with no
/// bandwidth is resolved on X by the median heuristic.
[[nodiscard]] inline Matrix gram_matrix(const Matrix& X, const KernelSpec& spec) {
    if (X.rows() == 0) throw InputError("gram_matrix: no points");
    return detail::kernel_block(X, X, spec.resolve(X), true);
}

/// (K(a_i, b_j))_{ij}; the spec must be resolved.
[[nodiscard]] inline Matrix cross_gram(const Matrix& A, const Matrix& B, const KernelSpec& spec) {
    if (!spec.is_resolved()) throw InputError("cross_gram: kernel bandwidth not resolved");
    return detail::kernel_block(A, B, spec, false);
}

/// Covariates prepared for kernel methods: the rescaler fitted on the raw
/// covariates, the rescaled training points, the resolved kernel and the
/// training Gram matrix. Shared by the regression and density-ratio fits.
class KernelDesign {
public:
    /// `bandwidth_rows` selects the rows used by the Gaussian median
    /// heuristic (all rows when empty).
    KernelDesign(const Matrix& X, const KernelSpec& spec, const std::vector<Index>& bandwidth_rows = {})
        : rescaler_(UnitRescaler::fit(X)), points_(rescaler_.apply(X)) {
        KernelSpec sized = spec.with_dimension(X.cols());
        if (!sized.is_resolved()) {
            if (bandwidth_rows.empty()) {
                sized = sized.resolve(points_);
            } else {
                sized = sized.resolve(points_(bandwidth_rows, Eigen::all));
            }
        }
        kernel_ = sized;
        gram_ = detail::kernel_block(points_, points_, kernel_, true);
    }

    [[nodiscard]] Index size() const { return points_.rows(); }
    [[nodiscard]] Index dimension() const { return points_.cols(); }
    [[nodiscard]] const UnitRescaler& rescaler() const { return rescaler_; }
    [[nodiscard]] const Matrix& points() const { return points_; }
    [[nodiscard]] const KernelSpec& kernel() const { return kernel_; }
    [[nodiscard]] const Matrix& gram() const { return gram_; }

    /// K(new_i, x_j) for raw (un-rescaled) query points.
    [[nodiscard]] Matrix cross(const Matrix& raw) const {
        return cross_gram(rescaler_.apply(raw), points_, kernel_);
    }

private:
    UnitRescaler rescaler_;
    Matrix points_;
    KernelSpec kernel_;
    Matrix gram_;
};

}  // namespace krrmiss
