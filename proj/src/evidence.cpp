#include "logme/evidence.hpp"

#include "logme/compensated_sum.hpp"
#include "logme/error.hpp"
#include "logme/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace logme {

namespace {

bool all_finite(std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows_ < 1 || cols_ < 1) {
        throw Error(ErrorCode::InvalidArgument, "feature matrix needs at least one row and one column");
    }
    if (values_.size() != rows_ * cols_) {
        throw Error(ErrorCode::LengthMismatch,
                    "feature matrix holds " + std::to_string(values_.size()) + " values, expected " +
                        std::to_string(rows_ * cols_));
    }
    if (!all_finite(values_)) {
        throw Error(ErrorCode::NonFinite, "feature matrix contains NaN or Inf");
    }
}

FeatureMatrix FeatureMatrix::zeros(std::size_t rows, std::size_t cols) {
    return FeatureMatrix(rows, cols, std::vector<double>(rows * cols, 0.0));
}

TargetVector TargetVector::classes(std::vector<std::uint32_t> labels, std::uint32_t num_classes) {
    if (num_classes < 2) {
        throw Error(ErrorCode::SingleClass, "class targets need at least two classes");
    }
    std::vector<std::size_t> counts(num_classes, 0);
    for (auto c : labels) {
        if (c >= num_classes) {
            throw Error(ErrorCode::ClassOutOfRange,
                        "label " + std::to_string(c) + " outside [0, " + std::to_string(num_classes) + ")");
        }
        ++counts[c];
    }
    for (std::uint32_t k = 0; k < num_classes; ++k) {
        if (counts[k] == 0) {
            throw Error(ErrorCode::EmptyClass, "class " + std::to_string(k) + " has no instances");
        }
    }
    TargetVector t;
    t.kind_ = TargetKind::Classes;
    t.num_classes_ = num_classes;
    t.labels_ = std::move(labels);
    return t;
}

TargetVector TargetVector::scalars(std::vector<double> values) {
    if (!all_finite(values)) {
        throw Error(ErrorCode::NonFinite, "scalar targets contain NaN or Inf");
    }
    TargetVector t;
    t.kind_ = TargetKind::Scalars;
    t.scalars_ = std::move(values);
    return t;
}

std::size_t TargetVector::size() const noexcept {
    return kind_ == TargetKind::Classes ? labels_.size() : scalars_.size();
}

std::size_t TargetVector::num_columns() const noexcept {
    return kind_ == TargetKind::Classes ? num_classes_ : 1;
}

std::vector<double> TargetVector::column(std::size_t k) const {
    if (kind_ == TargetKind::Scalars) return scalars_;
    std::vector<double> col(labels_.size());
    std::transform(labels_.begin(), labels_.end(), col.begin(),
                   [k](std::uint32_t c) { return c == k ? 1.0 : 0.0; });
    return col;
}

void SolverConfig::validate() const {
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "tol must be > 0");
    if (max_iter < 1) throw Error(ErrorCode::InvalidConfig, "max_iter must be >= 1");
    if (!(precision_clamp > 1.0) || !std::isfinite(precision_clamp)) {
        throw Error(ErrorCode::InvalidConfig, "precision_clamp must be finite and > 1");
    }
    if (!(min_variance > 0.0)) throw Error(ErrorCode::InvalidConfig, "min_variance must be > 0");
}

SpectralFactorization::SpectralFactorization(const FeatureMatrix& features)
    : features_(&features),
      rows_(features.rows()),
      cols_(features.cols()),
      tall_(features.rows() >= features.cols()) {
    const auto f = features.as_eigen();
    const Eigen::Index dim = tall_ ? f.cols() : f.rows();

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dim, dim);
    if (tall_) {
        gram.selfadjointView<Eigen::Lower>().rankUpdate(f.transpose());
    } else {
        gram.selfadjointView<Eigen::Lower>().rankUpdate(f);
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) {
        throw Error(ErrorCode::InvalidArgument, "eigendecomposition of the Gram matrix failed");
    }

    // Eigen returns ascending eigenvalues; store descending.
    const auto& values = eig.eigenvalues();
    basis_ = eig.eigenvectors().rowwise().reverse();
    sigma_.resize(static_cast<std::size_t>(dim));
    for (Eigen::Index i = 0; i < dim; ++i) {
        sigma_[static_cast<std::size_t>(i)] = std::max(0.0, values(dim - 1 - i));
    }

    const double cutoff = sigma_.empty() ? 0.0 : kRankTolerance * sigma_.front();
    for (auto& s : sigma_) {
        if (s <= cutoff) s = 0.0;
    }
    rank_ = static_cast<std::size_t>(std::count_if(sigma_.begin(), sigma_.end(), [](double s) { return s > 0.0; }));
}

SpectralDecomposition SpectralFactorization::decompose(std::span<const double> target) const {
    if (target.size() != rows_) {
        throw Error(ErrorCode::LengthMismatch, "target length " + std::to_string(target.size()) +
                                                   " does not match " + std::to_string(rows_) + " feature rows");
    }
    if (!all_finite(target)) {
        throw Error(ErrorCode::NonFinite, "target contains NaN or Inf");
    }

    const Eigen::Map<const Eigen::VectorXd> y(target.data(), static_cast<Eigen::Index>(target.size()));
    Eigen::VectorXd proj;
    if (tall_) {
        // u_i = F v_i / sqrt(sigma_i)  =>  z_i = v_i^T (F^T y) / sqrt(sigma_i)
        const Eigen::VectorXd fty = features_->as_eigen().transpose() * y;
        proj = basis_.transpose() * fty;
    } else {
        proj = basis_.transpose() * y;
    }

    SpectralDecomposition out;
    out.sigma = sigma_;
    out.projections.assign(sigma_.size(), 0.0);
    CompensatedSum explained;
    for (std::size_t i = 0; i < rank_; ++i) {
        const double p = proj(static_cast<Eigen::Index>(i));
        const double z = tall_ ? p / std::sqrt(sigma_[i]) : p;
        out.projections[i] = z;
        explained.add(z * z);
    }

    CompensatedSum norm;
    for (double v : target) norm.add(v * v);
    // Rounding can push the difference slightly negative when y lies in the span of F.
    out.residual_energy = std::max(0.0, norm.value() - explained.value());
    return out;
}

SpectralDecomposition spectral_decompose(const FeatureMatrix& features, std::span<const double> target) {
    return SpectralFactorization(features).decompose(target);
}

EvidenceTerms log_evidence(const SpectralDecomposition& decomp, double alpha, double beta,
                           std::size_t n, std::size_t h) {
    if (!(alpha > 0.0) || !(beta > 0.0)) {
        throw Error(ErrorCode::NonPositivePrecision, "alpha and beta must be positive");
    }
    const std::size_t r = decomp.sigma.size();
    CompensatedSum m_norm;
    CompensatedSum residual(decomp.residual_energy);
    CompensatedSum log_det;
    for (std::size_t i = 0; i < r; ++i) {
        const double s = decomp.sigma[i];
        const double z2 = decomp.projections[i] * decomp.projections[i];
        const double denom = alpha + beta * s;
        const double denom2 = denom * denom;
        m_norm.add(beta * beta * s * z2 / denom2);
        residual.add(alpha * alpha * z2 / denom2);
        log_det.add(std::log(denom));
    }
    // Directions beyond min(n, h) carry sigma = 0.
    if (h > r) log_det.add(static_cast<double>(h - r) * std::log(alpha));

    EvidenceTerms t;
    t.m_norm_sq = m_norm.value();
    t.residual_sq = residual.value();

    const double nd = static_cast<double>(n);
    const double hd = static_cast<double>(h);
    CompensatedSum total;
    total.add(0.5 * nd * std::log(beta));
    total.add(0.5 * hd * std::log(alpha));
    total.add(-0.5 * nd * std::log(2.0 * std::numbers::pi));
    total.add(-0.5 * beta * t.residual_sq);
    total.add(-0.5 * alpha * t.m_norm_sq);
    total.add(-0.5 * log_det.value());
    t.log_evidence = total.value();
    return t;
}

EvidenceResult maximize_evidence(const SpectralDecomposition& decomp, const SolverConfig& cfg,
                                 std::size_t n, std::size_t h, std::vector<EvidenceIterate>* trace) {
    cfg.validate();
    if (n < 2) throw Error(ErrorCode::TooFewRows, "evidence maximization needs at least two instances");

    const double ceiling = cfg.precision_clamp;
    const double floor = 1.0 / cfg.precision_clamp;
    const auto clamp = [&](double v) { return std::isfinite(v) ? std::clamp(v, floor, ceiling) : ceiling; };
    const auto at_bound = [&](double v) { return v <= floor || v >= ceiling; };

    double alpha = 1.0;
    double beta = 1.0;
    EvidenceTerms terms = log_evidence(decomp, alpha, beta, n, h);
    if (trace) trace->push_back({alpha, beta, terms.log_evidence});

    EvidenceResult best{alpha, beta, terms.m_norm_sq, terms.residual_sq, terms.log_evidence, 0.0, 0, false};
    bool tolerance_met = false;
    std::size_t it = 0;
    while (it < cfg.max_iter) {
        CompensatedSum gamma_acc;
        for (double s : decomp.sigma) gamma_acc.add(beta * s / (alpha + beta * s));
        const double gamma = gamma_acc.value();

        alpha = clamp(gamma / std::max(terms.m_norm_sq, cfg.min_variance));
        beta = clamp((static_cast<double>(n) - gamma) / std::max(terms.residual_sq, cfg.min_variance));

        const double previous = terms.log_evidence;
        terms = log_evidence(decomp, alpha, beta, n, h);
        ++it;
        if (trace) trace->push_back({alpha, beta, terms.log_evidence});

        if (terms.log_evidence > best.log_evidence) {
            best.alpha = alpha;
            best.beta = beta;
            best.m_norm_sq = terms.m_norm_sq;
            best.residual_sq = terms.residual_sq;
            best.log_evidence = terms.log_evidence;
        }
        const double change = std::abs(terms.log_evidence - previous) / std::max(std::abs(terms.log_evidence), 1.0);
        if (change < cfg.tol) {
            tolerance_met = true;
            break;
        }
    }

    best.iterations = it;
    best.converged = tolerance_met && !at_bound(alpha) && !at_bound(beta);
    best.logme = best.log_evidence / static_cast<double>(n);
    return best;
}

LogmeScore logme_score(const FeatureMatrix& features, const TargetVector& targets, const SolverConfig& cfg,
                       unsigned threads) {
    cfg.validate();
    if (features.rows() < 2) throw Error(ErrorCode::TooFewRows, "scoring needs at least two instances");
    if (targets.size() != features.rows()) {
        throw Error(ErrorCode::LengthMismatch, "targets hold " + std::to_string(targets.size()) +
                                                   " entries for " + std::to_string(features.rows()) + " feature rows");
    }

    const SpectralFactorization factorization(features);
    const std::size_t columns = targets.num_columns();
    LogmeScore out;
    out.per_target.resize(columns);
    parallel_for(columns, threads, [&](std::size_t k) {
        const auto y = targets.column(k);
        const auto decomp = factorization.decompose(y);
        out.per_target[k] = maximize_evidence(decomp, cfg, features.rows(), features.cols());
    });

    CompensatedSum mean;
    for (const auto& r : out.per_target) mean.add(r.logme);
    out.score = mean.value() / static_cast<double>(columns);
    return out;
}

}  // namespace logme
