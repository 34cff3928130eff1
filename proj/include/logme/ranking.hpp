#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace logme {

/// A model's transferability score and, when known, its observed task performance.
struct CandidateScore {
    std::string model_id;
    double score = 0.0;
    std::optional<double> performance;

    friend bool operator==(const CandidateScore&, const CandidateScore&) = default;
};

/// Experimental setting a report describes, e.g. {"frozen", "mean"}. Empty means unspecified.
struct Setting {
    std::string tuning;
    std::string repr;
};

/**
 * Which rank ordering drives the hyperbolic pair weights of the weighted tau.
 * Symmetric averages the orderings by (score, performance) and by
 * (performance, score); ByPerformance uses only the latter.
 */
enum class TauVariant { Symmetric, ByPerformance };

std::string_view tau_variant_name(TauVariant v) noexcept;

struct RankedCandidate {
    CandidateScore candidate;
    std::size_t rank = 0;  ///< 1-based position in descending score order
};

struct RankingReport {
    std::string dataset;
    Setting setting;
    std::vector<RankedCandidate> candidates;
    std::optional<double> pearson_rho;
    std::optional<double> weighted_tau;
    std::optional<double> prob_better;
    TauVariant tau_variant = TauVariant::Symmetric;

    std::size_t n_candidates() const noexcept { return candidates.size(); }
};

/// Descending by score; equal scores ordered by model_id.
std::vector<CandidateScore> rank_models(std::span<const CandidateScore> scores);

/// Product-moment correlation. Throws ZeroVariance rather than returning NaN.
double pearson(std::span<const double> x, std::span<const double> y);

/**
 * Vigna's weighted Kendall tau with additive hyperbolic weights
 * w(i, j) = 1/(r_i + 1) + 1/(r_j + 1), by direct enumeration of all pairs.
 * A pair tied in either argument adds its weight to the denominator only.
 */
double weighted_kendall_tau(std::span<const double> x, std::span<const double> y,
                            TauVariant variant = TauVariant::Symmetric);

/// Probability that the higher-ranked of two models performs better: (tau + 1) / 2.
double prob_better(double tau_w);

/// Full report; needs at least two candidates, each with a performance value.
RankingReport evaluate_ranking(std::span<const CandidateScore> candidates, std::string dataset = {},
                               Setting setting = {}, TauVariant variant = TauVariant::Symmetric);

/// Like evaluate_ranking, but leaves the correlation fields empty when fewer
/// than two candidates or any performance value is missing.
RankingReport summarize_ranking(std::span<const CandidateScore> candidates, std::string dataset = {},
                                Setting setting = {}, TauVariant variant = TauVariant::Symmetric);

/// Report JSON. A non-empty timestamp is written under "meta", the only
/// field that may differ between runs on identical inputs.
std::string report_to_json(const RankingReport& report, const std::string& timestamp = {});

/// Reads "model_id,score[,performance]" CSV.
std::vector<CandidateScore> read_scores_csv(const std::filesystem::path& path);

/// Reads "model_id,performance" CSV.
std::map<std::string, double> read_performance_csv(const std::filesystem::path& path);

}  // namespace logme
