#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace logme {

/**
 * Dense n x h matrix of frozen encoder features, row-major, double precision.
 *
 * Construction validates shape and finiteness; a FeatureMatrix that exists is
 * always well-formed. Scoring additionally requires at least two rows.
 */
class FeatureMatrix {
public:
    FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static FeatureMatrix zeros(std::size_t rows, std::size_t cols);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {values_.data() + i * cols_, cols_};
    }
    double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * cols_ + j]; }

    using RowMajorMap =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    RowMajorMap as_eigen() const noexcept {
        return RowMajorMap(values_.data(), static_cast<Eigen::Index>(rows_),
                           static_cast<Eigen::Index>(cols_));
    }

    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> values_;
};

enum class TargetKind { Classes, Scalars };

/// Per-instance labels: class indices in [0, K) or real-valued targets.
class TargetVector {
public:
    /// Every class in [0, num_classes) must occur at least once.
    static TargetVector classes(std::vector<std::uint32_t> labels, std::uint32_t num_classes);
    static TargetVector scalars(std::vector<double> values);

    TargetKind kind() const noexcept { return kind_; }
    std::size_t size() const noexcept;
    std::uint32_t num_classes() const noexcept { return num_classes_; }
    std::span<const std::uint32_t> class_labels() const noexcept { return labels_; }
    std::span<const double> scalar_values() const noexcept { return scalars_; }

    /// Number of regression columns the target expands to: K for classes, 1 for scalars.
    std::size_t num_columns() const noexcept;

    /// Column k as a real vector: the 0/1 indicator of class k, or the scalar targets.
    std::vector<double> column(std::size_t k) const;

    friend bool operator==(const TargetVector&, const TargetVector&) = default;

private:
    TargetKind kind_ = TargetKind::Scalars;
    std::uint32_t num_classes_ = 0;
    std::vector<std::uint32_t> labels_;
    std::vector<double> scalars_;
};

struct SolverConfig {
    double tol = 1e-9;                ///< relative change in log-evidence that stops iteration
    std::size_t max_iter = 1000;
    double precision_clamp = 1e12;    ///< ceiling for alpha and beta; the floor is its reciprocal
    double min_variance = 1e-12;      ///< floor for the update denominators

    /// Throws Error(InvalidConfig) when a bound is violated.
    void validate() const;
};

/// Squared singular values of F (descending) together with the projections of
/// one target column onto the corresponding left singular vectors.
struct SpectralDecomposition {
    std::vector<double> sigma;        ///< length min(n, h), descending, >= 0
    std::vector<double> projections;  ///< z_i = u_i^T y, zero where sigma_i == 0
    double residual_energy = 0.0;     ///< |y|^2 - |z|^2, clamped at 0
};

struct EvidenceTerms {
    double log_evidence = 0.0;
    double m_norm_sq = 0.0;
    double residual_sq = 0.0;
};

struct EvidenceResult {
    double alpha = 1.0;
    double beta = 1.0;
    double m_norm_sq = 0.0;
    double residual_sq = 0.0;
    double log_evidence = 0.0;
    double logme = 0.0;
    std::size_t iterations = 0;
    bool converged = false;

    friend bool operator==(const EvidenceResult&, const EvidenceResult&) = default;
};

/// One visited (alpha, beta) point of the fixed-point iteration.
struct EvidenceIterate {
    double alpha;
    double beta;
    double log_evidence;
};

/// Relative cutoff below which squared singular values are treated as exactly zero.
inline constexpr double kRankTolerance = 1e-12;

/**
 * Caches the spectrum of F so that any number of target columns can be
 * decomposed without refactorizing.
 *
 * Uses the eigendecomposition of the smaller Gram matrix (F^T F when n >= h,
 * F F^T otherwise); cost is O(n min(n,h)^2) once, O(n h) per target column.
 */
class SpectralFactorization {
public:
    explicit SpectralFactorization(const FeatureMatrix& features);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::span<const double> sigma() const noexcept { return sigma_; }

    SpectralDecomposition decompose(std::span<const double> target) const;

private:
    const FeatureMatrix* features_;
    std::size_t rows_;
    std::size_t cols_;
    bool tall_;                // n >= h: basis_ holds right singular vectors
    Eigen::MatrixXd basis_;    // columns ordered to match sigma_
    std::vector<double> sigma_;
    std::size_t rank_ = 0;
};

SpectralDecomposition spectral_decompose(const FeatureMatrix& features, std::span<const double> target);

/// Closed-form log p(y | F, alpha, beta) with the posterior-mean statistics.
EvidenceTerms log_evidence(const SpectralDecomposition& decomp, double alpha, double beta,
                           std::size_t n, std::size_t h);

EvidenceResult maximize_evidence(const SpectralDecomposition& decomp, const SolverConfig& cfg,
                                 std::size_t n, std::size_t h,
                                 std::vector<EvidenceIterate>* trace = nullptr);

struct LogmeScore {
    double score = 0.0;
    std::vector<EvidenceResult> per_target;
};

/**
 * LogME of features against targets. Scalar targets give a single evidence
 * maximization; class targets are one-hot encoded and the per-class LogME
 * values are averaged in class-index order. `threads` bounds the parallelism
 * across classes (0 = hardware concurrency) and never changes the result.
 */
LogmeScore logme_score(const FeatureMatrix& features, const TargetVector& targets,
                       const SolverConfig& cfg = {}, unsigned threads = 1);

}  // namespace logme
