#include "logme/ranking.hpp"

#include "logme/compensated_sum.hpp"
#include "logme/error.hpp"
#include "logme/store_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace logme {

namespace {

int sign(double v) { return (v > 0.0) - (v < 0.0); }

// Position of each element in the decreasing lexicographic order by (primary, secondary).
std::vector<std::size_t> lexicographic_ranks(std::span<const double> primary, std::span<const double> secondary) {
    std::vector<std::size_t> order(primary.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (primary[a] != primary[b]) return primary[a] > primary[b];
        return secondary[a] > secondary[b];
    });
    std::vector<std::size_t> rank(order.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = pos;
    return rank;
}

double tau_for_ranks(std::span<const double> x, std::span<const double> y, const std::vector<std::size_t>& rank) {
    CompensatedSum num;
    CompensatedSum den;
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double w = 1.0 / static_cast<double>(rank[i] + 1) + 1.0 / static_cast<double>(rank[j] + 1);
            num.add(w * sign(x[i] - x[j]) * sign(y[i] - y[j]));
            den.add(w);
        }
    }
    return num.value() / den.value();
}

void check_pair(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorCode::LengthMismatch,
                    "argument lengths differ (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
    }
    if (x.size() < 2) throw Error(ErrorCode::TooFewCandidates, "correlation needs at least two points");
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(x.begin(), x.end(), finite) || !std::all_of(y.begin(), y.end(), finite)) {
        throw Error(ErrorCode::NonFinite, "correlation inputs contain NaN or Inf");
    }
}

void check_candidates(std::span<const CandidateScore> candidates) {
    std::set<std::string> seen;
    for (const auto& c : candidates) {
        if (!std::isfinite(c.score)) throw Error(ErrorCode::NonFinite, "score of '" + c.model_id + "' is not finite");
        if (c.performance && !std::isfinite(*c.performance)) {
            throw Error(ErrorCode::NonFinite, "performance of '" + c.model_id + "' is not finite");
        }
        if (!seen.insert(c.model_id).second) {
            throw Error(ErrorCode::DuplicateModel, "model_id '" + c.model_id + "' appears more than once");
        }
    }
}

RankingReport base_report(std::span<const CandidateScore> candidates, std::string dataset, Setting setting,
                          TauVariant variant) {
    check_candidates(candidates);
    RankingReport report;
    report.dataset = std::move(dataset);
    report.setting = std::move(setting);
    report.tau_variant = variant;
    const auto ordered = rank_models(candidates);
    for (std::size_t i = 0; i < ordered.size(); ++i) report.candidates.push_back({ordered[i], i + 1});
    return report;
}

void fill_correlations(RankingReport& report) {
    std::vector<double> scores;
    std::vector<double> perf;
    for (const auto& rc : report.candidates) {
        scores.push_back(rc.candidate.score);
        perf.push_back(*rc.candidate.performance);
    }
    report.pearson_rho = pearson(scores, perf);
    report.weighted_tau = weighted_kendall_tau(scores, perf, report.tau_variant);
    report.prob_better = prob_better(*report.weighted_tau);
}

double parse_number(const std::string& field, const std::filesystem::path& path, std::size_t line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::ParseError,
                    path.string() + ":" + std::to_string(line) + ": '" + field + "' is not a finite number");
    }
    return v;
}

std::vector<std::vector<std::string>> read_simple_csv(const std::filesystem::path& path,
                                                      std::vector<std::string>& header) {
    std::istringstream in(read_text_file(path));
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) {
            const auto b = f.find_first_not_of(" \t");
            const auto e = f.find_last_not_of(" \t");
            fields.push_back(b == std::string::npos ? std::string{} : f.substr(b, e - b + 1));
        }
        if (first) {
            header = std::move(fields);
            first = false;
        } else {
            rows.push_back(std::move(fields));
        }
    }
    if (first) throw Error(ErrorCode::ParseError, "'" + path.string() + "' is empty");
    return rows;
}

}  // namespace

std::string_view tau_variant_name(TauVariant v) noexcept {
    return v == TauVariant::Symmetric ? "additive-hyperbolic-symmetric" : "additive-hyperbolic-by-performance";
}

std::vector<CandidateScore> rank_models(std::span<const CandidateScore> scores) {
    std::vector<CandidateScore> out(scores.begin(), scores.end());
    std::stable_sort(out.begin(), out.end(), [](const CandidateScore& a, const CandidateScore& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.model_id < b.model_id;
    });
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    const double n = static_cast<double>(x.size());
    const double mx = compensated_sum(x) / n;
    const double my = compensated_sum(y) / n;
    CompensatedSum sxy;
    CompensatedSum sxx;
    CompensatedSum syy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    if (sxx.value() == 0.0 || syy.value() == 0.0) {
        throw Error(ErrorCode::ZeroVariance, "correlation is undefined for a constant argument");
    }
    const double rho = sxy.value() / std::sqrt(sxx.value() * syy.value());
    return std::clamp(rho, -1.0, 1.0);
}

double weighted_kendall_tau(std::span<const double> x, std::span<const double> y, TauVariant variant) {
    check_pair(x, y);
    const double by_y = tau_for_ranks(x, y, lexicographic_ranks(y, x));
    if (variant == TauVariant::ByPerformance) return by_y;
    const double by_x = tau_for_ranks(x, y, lexicographic_ranks(x, y));
    return std::clamp((by_x + by_y) / 2.0, -1.0, 1.0);
}

double prob_better(double tau_w) {
    if (!(tau_w >= -1.0 && tau_w <= 1.0)) {
        throw Error(ErrorCode::OutOfRange, "weighted tau must lie in [-1, 1]");
    }
    return (tau_w + 1.0) / 2.0;
}

RankingReport evaluate_ranking(std::span<const CandidateScore> candidates, std::string dataset, Setting setting,
                               TauVariant variant) {
    if (candidates.size() < 2) {
        throw Error(ErrorCode::TooFewCandidates, "ranking evaluation needs at least two candidates");
    }
    std::vector<std::string> missing;
    for (const auto& c : candidates) {
        if (!c.performance) missing.push_back(c.model_id);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
        throw Error(ErrorCode::MissingPerformance, "no performance value for: " + list);
    }
    auto report = base_report(candidates, std::move(dataset), std::move(setting), variant);
    fill_correlations(report);
    return report;
}

RankingReport summarize_ranking(std::span<const CandidateScore> candidates, std::string dataset, Setting setting,
                                TauVariant variant) {
    auto report = base_report(candidates, std::move(dataset), std::move(setting), variant);
    const bool complete = std::all_of(candidates.begin(), candidates.end(),
                                      [](const CandidateScore& c) { return c.performance.has_value(); });
    if (candidates.size() >= 2 && complete) fill_correlations(report);
    return report;
}

std::string report_to_json(const RankingReport& report, const std::string& timestamp) {
    using nlohmann::json;
    const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json candidates = json::array();
    for (const auto& rc : report.candidates) {
        candidates.push_back({{"model_id", rc.candidate.model_id},
                              {"score", rc.candidate.score},
                              {"performance", opt(rc.candidate.performance)},
                              {"rank", rc.rank}});
    }
    json j;
    j["dataset"] = report.dataset;
    j["setting"] = {{"tuning", report.setting.tuning}, {"repr", report.setting.repr}};
    j["candidates"] = candidates;
    j["pearson_rho"] = opt(report.pearson_rho);
    j["weighted_tau"] = opt(report.weighted_tau);
    j["prob_better"] = opt(report.prob_better);
    json meta = {{"n_candidates", report.n_candidates()}, {"tau_variant", std::string(tau_variant_name(report.tau_variant))}};
    if (!timestamp.empty()) meta["timestamp"] = timestamp;
    j["meta"] = meta;
    return j.dump(2) + "\n";
}

std::vector<CandidateScore> read_scores_csv(const std::filesystem::path& path) {
    std::vector<std::string> header;
    const auto rows = read_simple_csv(path, header);
    const bool with_perf = header.size() == 3 && header[2] == "performance";
    if (header.size() < 2 || header[0] != "model_id" || header[1] != "score" || (header.size() == 3 && !with_perf) ||
        header.size() > 3) {
        throw Error(ErrorCode::ParseError, "'" + path.string() + "' must have header model_id,score[,performance]");
    }
    std::vector<CandidateScore> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const std::size_t line = i + 2;
        if (r.size() != header.size()) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line) + ": wrong field count");
        }
        CandidateScore c;
        c.model_id = r[0];
        c.score = parse_number(r[1], path, line);
        if (with_perf && !r[2].empty()) c.performance = parse_number(r[2], path, line);
        out.push_back(std::move(c));
    }
    return out;
}

std::map<std::string, double> read_performance_csv(const std::filesystem::path& path) {
    std::vector<std::string> header;
    const auto rows = read_simple_csv(path, header);
    if (header.size() != 2 || header[0] != "model_id" || header[1] != "performance") {
        throw Error(ErrorCode::ParseError, "'" + path.string() + "' must have header model_id,performance");
    }
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 2) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(i + 2) + ": wrong field count");
        }
        if (!out.emplace(r[0], parse_number(r[1], path, i + 2)).second) {
            throw Error(ErrorCode::DuplicateModel, "model_id '" + r[0] + "' appears twice in '" + path.string() + "'");
        }
    }
    return out;
}

}  // namespace logme
