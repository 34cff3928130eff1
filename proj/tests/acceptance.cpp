// Acceptance run: one PASS/FAIL line per criterion, details indented below it.
// Exit status is non-zero when any criterion fails.

#include "cli.hpp"
#include "logme/error.hpp"
#include "logme/evidence.hpp"
#include "logme/pooling.hpp"
#include "logme/ranking.hpp"
#include "logme/store_io.hpp"
#include "oracles.hpp"
#include "published.hpp"
#include "temp_dir.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace {

using namespace logme;
using nlohmann::json;
using testing::slurp;
using testing::TempDir;

constexpr double kRhoTolerance = 0.005;
constexpr double kTauTolerance = 0.01;
constexpr std::size_t kMinRhoMatches = 30;
constexpr double kProbBetterInput = 0.41;
constexpr double kProbBetterExpected = 0.705;
constexpr double kLogmeGridTolerance = 1e-6;
constexpr double kSpectralDenseTolerance = 1e-8;
constexpr double kInvarianceTolerance = 1e-8;
constexpr double kPoolingTolerance = 1e-12;
constexpr int kSolverInstances = 50;

constexpr double kBudgetCorrelations = 1.0;
constexpr double kBudgetSolver = 30.0;
constexpr double kBudgetInvariance = 60.0;
constexpr double kBudgetScoring = 60.0;
constexpr std::size_t kBudgetRows = 100'000;
constexpr std::size_t kBudgetDim = 768;
constexpr std::uint32_t kBudgetClasses = 4;

struct Outcome {
    bool pass = true;
    std::string summary;
    std::vector<std::string> details;

    void fail(std::string why) {
        pass = false;
        details.push_back(std::move(why));
    }
    void note(std::string what) { details.push_back(std::move(what)); }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string pair_name(const published::ColumnPair& p) { return p.dataset + "/" + p.repr + "/" + p.tuning; }

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr) {
    std::ostringstream o;
    std::ostringstream e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str();
    if (code != 0) std::cerr << e.str();
    return code;
}

// ---------------------------------------------------------------- criterion 1

Outcome golden_correlations() {
    Outcome r;
    TempDir dir;
    std::size_t matched = 0;
    std::size_t sign_checked = 0;
    std::size_t sign_agree = 0;
    const auto pairs = published::column_pairs();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        const auto scores = dir / fmt("s%zu.csv", i);
        const auto perf = dir / fmt("p%zu.csv", i);
        const auto report = dir / fmt("r%zu.json", i);
        std::ostringstream s;
        std::ostringstream q;
        s.precision(17);
        q.precision(17);
        s << "model_id,score\n";
        q << "model_id,performance\n";
        for (const auto& c : p.candidates) {
            s << c.model_id << ',' << c.score << '\n';
            q << c.model_id << ',' << *c.performance << '\n';
        }
        testing::spit(scores, s.str());
        testing::spit(perf, q.str());
        if (run_cli({"correlate", "--scores", scores.string(), "--perf", perf.string(), "--out", report.string(),
                     "--dataset", p.dataset, "--tuning", p.tuning, "--repr", p.repr}) != 0) {
            r.fail(pair_name(p) + ": correlate failed");
            continue;
        }
        const double rho = json::parse(slurp(report))["pearson_rho"].get<double>();
        const double diff = std::abs(rho - p.rho);
        if (diff <= kRhoTolerance) {
            ++matched;
        } else {
            r.fail(fmt("%s: rho %.4f vs printed %.3f (off by %.4f)", pair_name(p).c_str(), rho, p.rho, diff));
        }
        if (p.rho > 0.0) {
            ++sign_checked;
            if (rho > 0.0) ++sign_agree;
        }
        for (const auto& [name, expect] : {std::pair{"airline/mean/frozen", 0.982}, {"jobstack/mean/frozen", 0.981},
                                           {"crossner-news/mean/tuned", 0.897}}) {
            if (pair_name(p) == name) r.note(fmt("spot check %s: rho %.4f (printed %.3f)", name, rho, expect));
        }
    }
    r.summary = fmt("%zu/%zu column pairs reproduce the printed rho within %.3f", matched, pairs.size(), kRhoTolerance);
    r.note(fmt("at least %zu of %zu within tolerance: %s; sign agreement on printed-positive pairs: %zu/%zu", kMinRhoMatches,
               pairs.size(), matched >= kMinRhoMatches ? "yes" : "no", sign_agree, sign_checked));
    return r;
}

// ---------------------------------------------------------------- criterion 2

Outcome tau_fixtures() {
    Outcome r;
    const auto pairs = published::column_pairs();
    const auto tau = [](const published::ColumnPair& p, TauVariant v) {
        return weighted_kendall_tau(published::scores_of(p), published::performance_of(p), v);
    };

    for (const auto& name : {"qnli/cls/frozen", "jobstack/mean/frozen"}) {
        for (const auto& p : pairs) {
            if (pair_name(p) != name) continue;
            for (auto v : {TauVariant::Symmetric, TauVariant::ByPerformance}) {
                const double t = tau(p, v);
                if (t != 1.0) r.fail(fmt("%s: tau_w %.17g under %s, expected exactly 1", name, t,
                                         std::string(tau_variant_name(v)).c_str()));
            }
        }
    }

    // Variant selection: symmetric unless the by-performance ordering matches more printed values.
    const auto count_matches = [&](TauVariant v) {
        std::size_t n = 0;
        for (const auto& p : pairs) n += std::abs(tau(p, v) - p.tau_w) <= kTauTolerance;
        return n;
    };
    const std::size_t sym = count_matches(TauVariant::Symmetric);
    const std::size_t by_perf = sym == pairs.size() ? 0 : count_matches(TauVariant::ByPerformance);
    const TauVariant chosen = by_perf > sym ? TauVariant::ByPerformance : TauVariant::Symmetric;
    r.note(fmt("variant matches: symmetric %zu/%zu, by-performance %zu/%zu; selected %s", sym, pairs.size(), by_perf,
               pairs.size(), std::string(tau_variant_name(chosen)).c_str()));

    std::size_t matched = 0;
    for (const auto& p : pairs) {
        const double t = tau(p, chosen);
        if (std::abs(t - p.tau_w) <= kTauTolerance) {
            ++matched;
        } else {
            r.fail(fmt("%s: tau_w %.4f vs printed %.3f", pair_name(p).c_str(), t, p.tau_w));
        }
    }

    const double pb = prob_better(kProbBetterInput);
    if (std::abs(pb - kProbBetterExpected) > 1e-12) r.fail(fmt("prob_better(%.2f) = %.6f", kProbBetterInput, pb));
    r.summary = fmt("%zu/%zu printed tau_w within %.2f (%s); exact-agreement pairs give 1; prob_better(%.2f) = %.3f",
                    matched, pairs.size(), kTauTolerance, std::string(tau_variant_name(chosen)).c_str(),
                    kProbBetterInput, pb);
    return r;
}

// ---------------------------------------------------------------- criterion 3

// Log-evidence from an oracle eigendecomposition, evaluated term by term.
double oracle_log_evidence(const std::vector<double>& sigma, const std::vector<double>& z2, double y2, std::size_t n,
                           double alpha, double beta) {
    double m = 0.0;
    double res = y2;
    double logdet = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        const double s = std::max(sigma[i], 0.0);
        const double d = alpha + beta * s;
        m += beta * beta * s * z2[i] / (d * d);
        res += -z2[i] + alpha * alpha * z2[i] / (d * d);
        logdet += std::log(d);
    }
    const double nd = static_cast<double>(n);
    const double hd = static_cast<double>(sigma.size());
    return nd / 2 * std::log(beta) + hd / 2 * std::log(alpha) - nd / 2 * std::log(2 * std::numbers::pi) -
           beta / 2 * res - alpha / 2 * m - 0.5 * logdet;
}

Outcome solver_oracle() {
    Outcome r;
    std::mt19937_64 rng(20260401);
    std::uniform_int_distribution<std::size_t> rows(10, 50);
    std::uniform_int_distribution<std::size_t> cols(1, 8);
    std::uniform_int_distribution<std::uint32_t> classes(2, 4);
    std::normal_distribution<double> normal;
    std::size_t columns = 0;
    std::size_t grid_ok = 0;
    std::size_t dense_ok = 0;
    double worst_grid = 0.0;
    double worst_dense = 0.0;

    for (int inst = 0; inst < kSolverInstances; ++inst) {
        const std::size_t n = rows(rng);
        const std::size_t h = cols(rng);
        const auto fm = oracle::random_matrix(rng, n, h);
        const FeatureMatrix f(n, h, oracle::flatten(fm));
        std::vector<std::vector<double>> targets;
        if (inst % 2 == 0) {
            const auto w = oracle::random_matrix(rng, h, 1);
            std::vector<double> y(n);
            const double noise = 0.05 + 0.5 * (inst % 5);
            for (std::size_t i = 0; i < n; ++i) y[i] = oracle::multiply({fm[i]}, w)[0][0] + noise * normal(rng);
            targets.push_back(std::move(y));
        } else {
            const std::uint32_t k = classes(rng);
            const auto logits = oracle::multiply(fm, oracle::random_matrix(rng, h, k));
            std::vector<std::uint32_t> labels(n);
            for (std::size_t i = 0; i < n; ++i) {
                labels[i] = i < k ? static_cast<std::uint32_t>(i)
                                  : static_cast<std::uint32_t>(
                                        std::max_element(logits[i].begin(), logits[i].end()) - logits[i].begin());
            }
            const auto t = TargetVector::classes(labels, k);
            for (std::size_t c = 0; c < k; ++c) targets.push_back(t.column(c));
        }

        for (const auto& y : targets) {
            ++columns;
            const auto decomp = spectral_decompose(f, y);
            const auto fit = maximize_evidence(decomp, SolverConfig{}, n, h);

            const auto [sigma, z2] = oracle::spectrum_and_projections(fm, y);
            const double y2 = std::inner_product(y.begin(), y.end(), y.begin(), 0.0);
            const auto grid = oracle::grid_search(
                [&](double a, double b) { return oracle_log_evidence(sigma, z2, y2, n, a, b); });
            const double grid_logme = grid.log_evidence / static_cast<double>(n);
            const double gap = fit.logme - grid_logme;
            // On the search boundary the grid optimum is only a lower bound.
            const bool ok = grid.on_boundary ? gap >= -kLogmeGridTolerance : std::abs(gap) <= kLogmeGridTolerance;
            worst_grid = std::max(worst_grid, grid.on_boundary ? std::max(0.0, -gap) : std::abs(gap));
            if (ok) {
                ++grid_ok;
            } else {
                r.fail(fmt("instance %d (n=%zu, h=%zu): logme %.10f at ln alpha=%.3f ln beta=%.3f vs grid %.10f at %.3f %.3f", inst, n, h, fit.logme, std::log(fit.alpha), std::log(fit.beta), grid_logme, grid.log_alpha, grid.log_beta));
            }

            bool dense_match = true;
            for (const auto& [a, b] : {std::pair{fit.alpha, fit.beta}, {1.0, 1.0}, {0.3, 7.0}}) {
                const double spectral = log_evidence(decomp, a, b, n, h).log_evidence;
                const double dense = oracle::dense_log_evidence(fm, y, a, b).log_evidence;
                const double diff = std::abs(spectral - dense);
                worst_dense = std::max(worst_dense, diff);
                if (diff > kSpectralDenseTolerance) {
                    dense_match = false;
                    r.fail(fmt("instance %d: spectral %.12f vs dense %.12f at alpha=%g beta=%g", inst, spectral, dense,
                               a, b));
                }
            }
            dense_ok += dense_match;
        }
    }
    r.summary = fmt("%d instances, %zu target columns: %zu/%zu within %.0e of the grid optimum, %zu/%zu spectral = dense",
                    kSolverInstances, columns, grid_ok, columns, kLogmeGridTolerance, dense_ok, columns);
    r.note(fmt("worst grid gap %.2e per sample, worst spectral-dense gap %.2e", worst_grid, worst_dense));
    return r;
}

// ---------------------------------------------------------------- criterion 4

struct Corpus {
    std::vector<double> values;
    std::vector<std::size_t> offsets;
    std::size_t h;

    TokenEmbeddingStore store(bool has_cls) const {
        return TokenEmbeddingStore(FeatureMatrix(values.size() / h, h, values), offsets, has_cls);
    }
    std::size_t length(std::size_t s) const {
        return (s + 1 < offsets.size() ? offsets[s + 1] : values.size() / h) - offsets[s];
    }
};

Corpus random_corpus(std::mt19937_64& rng, std::size_t sequences, std::size_t h) {
    std::uniform_int_distribution<std::size_t> len(2, 10);
    std::normal_distribution<double> normal(0.0, 2.0);
    Corpus c{{}, {}, h};
    for (std::size_t s = 0; s < sequences; ++s) {
        c.offsets.push_back(c.values.size() / h);
        const std::size_t l = len(rng);
        for (std::size_t i = 0; i < l * h; ++i) c.values.push_back(normal(rng));
    }
    return c;
}

Corpus permute(const Corpus& c, const std::vector<std::size_t>& perm) {
    Corpus out{{}, {}, c.h};
    for (auto s : perm) {
        out.offsets.push_back(out.values.size() / c.h);
        const auto first = c.values.begin() + static_cast<std::ptrdiff_t>(c.offsets[s] * c.h);
        out.values.insert(out.values.end(), first, first + static_cast<std::ptrdiff_t>(c.length(s) * c.h));
    }
    return out;
}

SubwordAlignment random_alignment(std::mt19937_64& rng, const Corpus& c, std::uint32_t k) {
    SubwordAlignment a;
    a.num_classes = k;
    std::uniform_int_distribution<std::size_t> width(1, 2);
    std::uint32_t next = 0;
    for (std::size_t s = 0; s < c.offsets.size(); ++s) {
        SequenceAlignment seq;
        for (std::size_t at = 1; at < c.length(s);) {
            const std::size_t end = std::min(c.length(s), at + width(rng));
            seq.spans.push_back({at, end});
            seq.labels.push_back(next++ % k);
            at = end;
        }
        a.sequences.push_back(std::move(seq));
    }
    return a;
}

bool rows_match(const FeatureMatrix& a, std::size_t ra, const FeatureMatrix& b, std::size_t rb) {
    const auto x = a.row(ra);
    const auto y = b.row(rb);
    return std::equal(x.begin(), x.end(), y.begin(), y.end());
}

Outcome invariance_suite() {
    Outcome r;
    std::mt19937_64 rng(777);
    std::size_t checks = 0;
    const auto check = [&](bool ok, const std::string& what) {
        ++checks;
        if (!ok) r.fail(what);
    };

    // Scoring: row permutation and right-orthogonal rotation.
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 40 + static_cast<std::size_t>(trial) * 3;
        const std::size_t h = 2 + static_cast<std::size_t>(trial) % 9;
        const auto fm = oracle::random_matrix(rng, n, h);
        std::vector<std::uint32_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = i < 3 ? static_cast<std::uint32_t>(i) : (fm[i][0] > 0) + (fm[i][1 % h] > 0.5);
        const double base = logme_score(FeatureMatrix(n, h, oracle::flatten(fm)), TargetVector::classes(labels, 3)).score;

        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        oracle::Matrix fp;
        std::vector<std::uint32_t> lp;
        for (auto i : perm) {
            fp.push_back(fm[i]);
            lp.push_back(labels[i]);
        }
        const double permuted = logme_score(FeatureMatrix(n, h, oracle::flatten(fp)), TargetVector::classes(lp, 3)).score;
        const auto rotated_m = oracle::multiply(fm, oracle::random_orthogonal(rng, h));
        const double rotated =
            logme_score(FeatureMatrix(n, h, oracle::flatten(rotated_m)), TargetVector::classes(labels, 3)).score;
        worst = std::max({worst, std::abs(permuted - base), std::abs(rotated - base)});
        check(std::abs(permuted - base) <= kInvarianceTolerance, fmt("row permutation changed logme by %.2e", permuted - base));
        check(std::abs(rotated - base) <= kInvarianceTolerance, fmt("rotation changed logme by %.2e", rotated - base));
    }
    r.note(fmt("largest logme change under permutation/rotation: %.2e", worst));

    // Pooling: sequence permutation equivariance and scaling covariance.
    for (int trial = 0; trial < 10; ++trial) {
        const auto c = random_corpus(rng, 30, 6);
        std::vector<std::size_t> perm(30);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto p = permute(c, perm);
        const auto cls = pool_cls(c.store(true));
        const auto cls_p = pool_cls(p.store(true));
        const auto mean = pool_mean_sequence(c.store(true));
        const auto mean_p = pool_mean_sequence(p.store(true));
        const auto align = random_alignment(rng, c, 3);
        SubwordAlignment align_p{{}, 3};
        for (auto s : perm) align_p.sequences.push_back(align.sequences[s]);
        const auto [tok, lab] = pool_mean_token(c.store(true), align);
        const auto [tok_p, lab_p] = pool_mean_token(p.store(true), align_p);
        std::vector<std::size_t> first(30);
        for (std::size_t s = 0, at = 0; s < 30; at += align.sequences[s].spans.size(), ++s) first[s] = at;
        bool ok = true;
        std::size_t row = 0;
        for (std::size_t i = 0; i < 30; ++i) {
            ok = ok && rows_match(cls_p, i, cls, perm[i]) && rows_match(mean_p, i, mean, perm[i]);
            for (std::size_t k = 0; k < align.sequences[perm[i]].spans.size(); ++k, ++row) {
                ok = ok && rows_match(tok_p, row, tok, first[perm[i]] + k) &&
                     lab_p.class_labels()[row] == lab.class_labels()[first[perm[i]] + k];
            }
        }
        check(ok, "pooling is not permutation-equivariant");

        const double scale = trial % 2 ? -2.75 : 1e3;
        Corpus scaled = c;
        for (auto& v : scaled.values) v *= scale;
        const auto smean = pool_mean_sequence(scaled.store(true));
        const auto scls = pool_cls(scaled.store(true));
        const auto stok = pool_mean_token(scaled.store(true), align).first;
        bool cov = true;
        for (std::size_t i = 0; i < mean.values().size(); ++i) {
            cov = cov && std::abs(smean.values()[i] - scale * mean.values()[i]) <= kPoolingTolerance * std::abs(scale) &&
                  scls.values()[i] == scale * cls.values()[i];
        }
        for (std::size_t i = 0; i < tok.values().size(); ++i) {
            cov = cov && std::abs(stok.values()[i] - scale * tok.values()[i]) <= kPoolingTolerance * std::abs(scale);
        }
        check(cov, "pooling does not commute with scaling");
    }

    // Interchange round trips.
    TempDir dir;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial) * 7;
        const std::size_t h = 1 + static_cast<std::size_t>(trial) % 5;
        const auto fm = oracle::random_matrix(rng, n, h, 1e4);
        const FeatureMatrix m(n, h, oracle::flatten(fm));
        StoreManifest man;
        man.model_id = fmt("model-%d", trial);
        man.dataset_id = "synthetic";
        man.pooling = trial % 2 ? "cls" : "mean-seq";
        man.has_cls = trial % 2;
        man.pair_packed = trial % 3 == 0;
        man.dtype = trial % 4 == 0 ? DType::F32 : DType::F64;
        const auto path = dir / fmt("rt%d.lgfs", trial);
        write_feature_store(path, m, man);
        const auto back = read_feature_store(path);
        bool exact = back.matrix.rows() == n && back.matrix.cols() == h;
        for (std::size_t i = 0; exact && i < m.values().size(); ++i) {
            const double expect = man.dtype == DType::F32 ? static_cast<double>(static_cast<float>(m.values()[i]))
                                                          : m.values()[i];
            exact = std::bit_cast<std::uint64_t>(back.matrix.values()[i]) == std::bit_cast<std::uint64_t>(expect);
        }
        man.features = path.filename().string();
        man.n_rows = n;
        man.n_cols = h;
        man.checksum = payload_checksum(m, man.dtype);
        check(exact && back.manifest == man, fmt("feature store round trip %d is not exact", trial));
    }
    {
        std::vector<std::uint32_t> labels{0, 1, 2, 1, 0};
        write_label_store(dir / "l.lglb", TargetVector::classes(labels, 3));
        const auto back = read_label_store(dir / "l.lglb");
        check(std::equal(labels.begin(), labels.end(), back.class_labels().begin(), back.class_labels().end()),
              "label store round trip is not exact");
        const auto c = random_corpus(rng, 12, 4);
        write_token_store(dir / "tok.lgfs", c.store(true), {});
        const auto tback = read_token_store(dir / "tok.lgfs");
        check(tback.embeddings() == c.store(true).embeddings() && tback.sequence_offsets() == c.offsets,
              "token store round trip is not exact");
        const auto align = random_alignment(rng, c, 2);
        write_alignment(dir / "a.json", align);
        check(read_alignment(dir / "a.json") == align, "alignment round trip is not exact");
    }

    // Thread-count independence of every numeric output.
    {
        const auto fm = oracle::random_matrix(rng, 300, 12);
        std::vector<std::uint32_t> labels(300);
        for (std::size_t i = 0; i < 300; ++i) labels[i] = static_cast<std::uint32_t>(i % 5);
        const FeatureMatrix f(300, 12, oracle::flatten(fm));
        const auto t = TargetVector::classes(labels, 5);
        const auto ref = logme_score(f, t, {}, 1);
        const auto c = random_corpus(rng, 200, 8);
        const auto align = random_alignment(rng, c, 4);
        const auto mean_ref = pool_mean_sequence(c.store(true), false, 1);
        const auto tok_ref = pool_mean_token(c.store(true), align, 1).first;
        for (unsigned threads : {2u, 3u, 8u}) {
            const auto other = logme_score(f, t, {}, threads);
            check(other.score == ref.score && other.per_target == ref.per_target,
                  fmt("logme_score differs with %u threads", threads));
            check(pool_mean_sequence(c.store(true), false, threads) == mean_ref,
                  fmt("mean-seq pooling differs with %u threads", threads));
            check(pool_mean_token(c.store(true), align, threads).first == tok_ref,
                  fmt("mean-token pooling differs with %u threads", threads));
        }

        write_feature_store(dir / "f.lgfs", f, {});
        write_label_store(dir / "f.lglb", t);
        std::string first;
        for (const char* threads : {"1", "2", "7"}) {
            std::string out;
            const int code = run_cli({"score", "--features", (dir / "f.lgfs").string(), "--labels",
                                      (dir / "f.lglb").string(), "--threads", threads},
                                     &out);
            if (first.empty()) first = out;
            check(code == 0 && out == first, fmt("CLI score output differs with --threads %s", threads));
        }
    }

    std::size_t failed = 0;
    for (const auto& d : r.details) failed += d.rfind("largest", 0) != 0;
    r.summary = fmt("%zu checks over scoring, pooling, round trips and thread counts; %zu failed", checks, failed);
    return r;
}

// ---------------------------------------------------------------- criterion 5

Outcome scoring_budget(double& scoring_seconds) {
    Outcome r;
    TempDir dir;
    {
        std::mt19937_64 rng(4096);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        std::vector<double> values(kBudgetRows * kBudgetDim);
        for (auto& v : values) v = unit(rng);
        std::vector<double> w(kBudgetDim * kBudgetClasses);
        for (auto& v : w) v = unit(rng);
        std::vector<std::uint32_t> labels(kBudgetRows);
        for (std::size_t i = 0; i < kBudgetRows; ++i) {
            double best = -INFINITY;
            for (std::uint32_t k = 0; k < kBudgetClasses; ++k) {
                double s = 0.0;
                for (std::size_t j = 0; j < kBudgetDim; ++j) s += values[i * kBudgetDim + j] * w[j * kBudgetClasses + k];
                if (s > best) {
                    best = s;
                    labels[i] = k;
                }
            }
        }
        StoreManifest m;
        m.model_id = "synthetic";
        m.pooling = "mean-seq";
        m.dtype = DType::F32;
        write_feature_store(dir / "big.lgfs", FeatureMatrix(kBudgetRows, kBudgetDim, std::move(values)), m);
        write_label_store(dir / "big.lglb", TargetVector::classes(std::move(labels), kBudgetClasses));
    }

    std::string out;
    const auto start = std::chrono::steady_clock::now();
    const int code =
        run_cli({"score", "--features", (dir / "big.lgfs").string(), "--labels", (dir / "big.lglb").string()}, &out);
    scoring_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (code != 0) {
        r.fail(fmt("score exited with %d", code));
    } else {
        const auto j = json::parse(out);
        const double logme = j["logme"].get<double>();
        if (!std::isfinite(logme)) r.fail("score is not finite");
        r.note(fmt("logme %.6f over %zu classes, converged=%s", logme, j["per_class"].size(),
                   j["converged"].get<bool>() ? "true" : "false"));
    }
    if (scoring_seconds >= kBudgetScoring) r.fail(fmt("took %.1f s", scoring_seconds));
    r.summary = fmt("n=%zu, h=%zu, K=%u scored from disk through the CLI in %.1f s (budget %.0f s, %u hardware threads)",
                    kBudgetRows, kBudgetDim, kBudgetClasses, scoring_seconds, kBudgetScoring,
                    std::thread::hardware_concurrency());
    return r;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double budget;
        std::function<Outcome(double&)> body;
    };
    const std::vector<Criterion> criteria{
        {"golden-correlations", kBudgetCorrelations, [](double&) { return golden_correlations(); }},
        {"weighted-tau-fixtures", kBudgetCorrelations, [](double&) { return tau_fixtures(); }},
        {"evidence-solver-oracle", kBudgetSolver, [](double&) { return solver_oracle(); }},
        {"invariance-suite", kBudgetInvariance, [](double&) { return invariance_suite(); }},
        {"scoring-budget", kBudgetScoring, [](double& timed) { return scoring_budget(timed); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& c = criteria[i];
        double timed = -1.0;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.body(timed);
        } catch (const std::exception& e) {
            o.fail(std::string("unexpected exception: ") + e.what());
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        // The scoring budget times only the scoring run, not synthetic data generation.
        const double charged = timed >= 0.0 ? timed : elapsed;
        if (charged >= c.budget) o.fail(fmt("runtime %.2f s exceeds %.0f s", charged, c.budget));
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << i + 1 << "] " << c.name << ": " << o.summary
                  << fmt(" (%.2f s)", elapsed) << '\n';
        for (const auto& d : o.details) std::cout << "        " << d << '\n';
        std::cout.flush();
    }
    std::cout << (failures == 0 ? "all criteria passed" : fmt("%d of %zu criteria failed", failures, criteria.size()))
              << '\n';
    return failures == 0 ? 0 : 1;
}
