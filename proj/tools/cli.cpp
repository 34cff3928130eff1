#include "cli.hpp"

#include "logme/error.hpp"
#include "logme/evidence.hpp"
#include "logme/parallel.hpp"
#include "logme/pooling.hpp"
#include "logme/ranking.hpp"
#include "logme/store_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <optional>
#include <ostream>

namespace logme::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void report_error(std::ostream& err, std::string_view code, const std::string& message) {
    err << json{{"error", code}, {"message", message}}.dump() << '\n';
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Flag beats LOGME_THREADS beats hardware concurrency.
unsigned resolve_threads(const std::optional<unsigned>& flag) {
    if (flag) {
        if (*flag == 0) throw Error(ErrorCode::InvalidConfig, "--threads must be >= 1");
        return *flag;
    }
    if (const char* env = std::getenv("LOGME_THREADS"); env && *env) {
        unsigned v = 0;
        const std::string_view s(env);
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size() || v == 0) {
            throw Error(ErrorCode::InvalidConfig, "LOGME_THREADS must be a positive integer, got '" + std::string(s) + "'");
        }
        return v;
    }
    return default_thread_count();
}

struct SolverFlags {
    std::optional<double> tol;
    std::optional<std::size_t> max_iter;
    std::optional<double> precision_clamp;
    std::optional<double> min_variance;

    void attach(CLI::App* app) {
        app->add_option("--tol", tol, "Relative log-evidence change that stops the iteration");
        app->add_option("--max-iter", max_iter, "Iteration budget per target column");
        app->add_option("--precision-clamp", precision_clamp, "Ceiling for alpha and beta");
        app->add_option("--min-variance", min_variance, "Floor for update denominators");
    }

    SolverConfig config() const {
        SolverConfig cfg;
        if (tol) cfg.tol = *tol;
        if (max_iter) cfg.max_iter = *max_iter;
        if (precision_clamp) cfg.precision_clamp = *precision_clamp;
        if (min_variance) cfg.min_variance = *min_variance;
        cfg.validate();
        return cfg;
    }
};

json evidence_json(const EvidenceResult& r) {
    return {{"logme", r.logme},
            {"log_evidence", r.log_evidence},
            {"alpha", r.alpha},
            {"beta", r.beta},
            {"iterations", r.iterations},
            {"converged", r.converged}};
}

json score_json(const LogmeScore& s, std::size_t n, std::size_t h) {
    json per = json::array();
    bool converged = true;
    std::size_t iterations = 0;
    for (const auto& r : s.per_target) {
        per.push_back(evidence_json(r));
        converged = converged && r.converged;
        iterations = std::max(iterations, r.iterations);
    }
    return {{"logme", s.score}, {"per_class", per}, {"converged", converged},
            {"iterations", iterations}, {"n", n}, {"h", h}};
}

LabelMode parse_label_mode(const std::string& s) {
    if (s == "auto") return LabelMode::Auto;
    if (s == "classes") return LabelMode::Classes;
    if (s == "scalars") return LabelMode::Scalars;
    throw Error(ErrorCode::InvalidArgument, "--label-kind must be auto, classes or scalars");
}

bool is_csv(const fs::path& p) { return p.extension() == ".csv"; }

std::pair<FeatureMatrix, TargetVector> load_scoring_inputs(const fs::path& features, const fs::path& labels,
                                                           LabelMode mode) {
    if (is_csv(features)) {
        if (!labels.empty()) throw Error(ErrorCode::InvalidArgument, "CSV input carries its labels; omit --labels");
        auto data = read_csv_dataset(features, mode);
        if (data.first.rows() < 2) throw Error(ErrorCode::TooFewRows, "scoring needs at least two instances");
        return data;
    }
    if (labels.empty()) throw Error(ErrorCode::InvalidArgument, "--labels is required for binary feature stores");
    auto store = read_feature_store(features, 2);
    auto targets = read_label_store(labels);
    return {std::move(store.matrix), std::move(targets)};
}

// ---------------------------------------------------------------- pool

struct PoolArgs {
    std::string input;
    std::string alignment;
    std::string strategy;
    std::string out;
    std::string labels_out;
    bool include_cls = false;
    std::optional<unsigned> threads;
};

int cmd_pool(const PoolArgs& a, std::ostream& out) {
    const auto strategy = parse_pooling(a.strategy);
    const unsigned threads = resolve_threads(a.threads);
    if (strategy == PoolingStrategy::MeanToken && a.alignment.empty()) {
        throw Error(ErrorCode::InvalidArgument, "mean-token pooling requires --alignment");
    }
    const auto input_manifest = read_feature_store(a.input).manifest;
    const auto store = read_token_store(a.input);

    StoreManifest m;
    m.model_id = input_manifest.model_id;
    m.dataset_id = input_manifest.dataset_id;
    m.pair_packed = input_manifest.pair_packed;
    m.pooling = std::string(pooling_name(strategy));
    m.dtype = DType::F64;

    const fs::path out_path(a.out);
    if (strategy == PoolingStrategy::MeanToken) {
        auto [features, targets] = pool_mean_token(store, read_alignment(a.alignment), threads);
        fs::path labels_path = a.labels_out.empty() ? fs::path(out_path).replace_extension(".lglb") : fs::path(a.labels_out);
        m.granularity = Granularity::Token;
        m.labels = labels_path.filename().string();
        write_label_store(labels_path, targets);
        write_feature_store(out_path, features, m);
        out << "pooled " << features.rows() << " tokens x " << features.cols() << " dims (mean-token) -> "
            << out_path.string() << ", labels -> " << labels_path.string() << '\n';
        return kSuccess;
    }

    const auto features = strategy == PoolingStrategy::ClsToken ? pool_cls(store)
                                                                : pool_mean_sequence(store, a.include_cls, threads);
    write_feature_store(out_path, features, m);
    out << "pooled " << features.rows() << " sequences x " << features.cols() << " dims (" << m.pooling << ") -> "
        << out_path.string() << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------- score

struct ScoreArgs {
    std::string features;
    std::string labels;
    std::string label_kind = "auto";
    SolverFlags solver;
    std::optional<unsigned> threads;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
    const auto cfg = a.solver.config();
    const unsigned threads = resolve_threads(a.threads);
    const auto [features, targets] = load_scoring_inputs(a.features, a.labels, parse_label_mode(a.label_kind));
    const auto score = logme_score(features, targets, cfg, threads);
    out << score_json(score, features.rows(), features.cols()).dump() << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------- rank

struct RankArgs {
    std::string manifest;
    std::string out;
    SolverFlags solver;
    std::optional<unsigned> threads;
};

struct RankJob {
    std::string model_id;
    fs::path features;
    fs::path labels;
    std::optional<double> performance;
};

std::string safe_file_stem(const std::string& id) {
    std::string s = id;
    for (auto& c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        if (!ok) c = '_';
    }
    return s;
}

int cmd_rank(const RankArgs& a, std::ostream& out, std::ostream& err) {
    const auto cfg = a.solver.config();
    const unsigned threads = resolve_threads(a.threads);
    const fs::path manifest_path(a.manifest);
    json spec;
    try {
        spec = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("job manifest is not valid JSON: ") + e.what());
    }

    std::vector<RankJob> jobs;
    std::string dataset;
    Setting setting;
    try {
        dataset = spec.value("dataset", "");
        if (spec.contains("setting")) {
            setting.tuning = spec["setting"].value("tuning", "");
            setting.repr = spec["setting"].value("repr", "");
        }
        const fs::path base = manifest_path.parent_path();
        for (const auto& m : spec.at("models")) {
            RankJob job;
            job.model_id = m.at("model_id").get<std::string>();
            job.features = base / m.at("features").get<std::string>();
            if (m.contains("labels")) job.labels = base / m["labels"].get<std::string>();
            if (m.contains("performance") && !m["performance"].is_null()) job.performance = m["performance"].get<double>();
            jobs.push_back(std::move(job));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("malformed job manifest: ") + e.what());
    }
    if (jobs.empty()) throw Error(ErrorCode::InvalidArgument, "job manifest lists no models");
    {
        std::vector<std::string> ids;
        for (const auto& j : jobs) ids.push_back(j.model_id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
            throw Error(ErrorCode::DuplicateModel, "job manifest repeats a model_id");
        }
    }

    struct Outcome {
        std::optional<json> score;
        std::optional<CandidateScore> candidate;
        std::string error_code;
        std::string error_message;
    };
    std::vector<Outcome> outcomes(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
        const auto& job = jobs[i];
        try {
            const auto [features, targets] = load_scoring_inputs(job.features, job.labels, LabelMode::Auto);
            const auto s = logme_score(features, targets, cfg, 1);
            auto j = score_json(s, features.rows(), features.cols());
            j["model_id"] = job.model_id;
            outcomes[i].score = std::move(j);
            outcomes[i].candidate = CandidateScore{job.model_id, s.score, job.performance};
        } catch (const Error& e) {
            outcomes[i].error_code = code_name(e.code());
            outcomes[i].error_message = e.what();
        } catch (const std::exception& e) {
            outcomes[i].error_code = "InternalError";
            outcomes[i].error_message = e.what();
        }
    });

    const fs::path out_dir(a.out);
    std::error_code ec;
    fs::create_directories(out_dir / "scores", ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create '" + out_dir.string() + "': " + ec.message());

    std::vector<CandidateScore> candidates;
    json errors = json::array();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        auto& o = outcomes[i];
        if (o.candidate) {
            candidates.push_back(*o.candidate);
            char prefix[16];
            std::snprintf(prefix, sizeof prefix, "%03zu_", i);
            write_text_file(out_dir / "scores" / (prefix + safe_file_stem(jobs[i].model_id) + ".json"),
                            o.score->dump(2) + "\n");
        } else {
            errors.push_back({{"model_id", jobs[i].model_id}, {"error", o.error_code}, {"message", o.error_message}});
            report_error(err, o.error_code, jobs[i].model_id + ": " + o.error_message);
        }
    }

    if (candidates.empty()) {
        throw Error(ErrorCode::InvalidArgument, "every model in the job manifest failed to score");
    }
    const auto report = summarize_ranking(candidates, dataset, setting);
    auto j = json::parse(report_to_json(report, utc_timestamp()));
    j["errors"] = errors;
    write_text_file(out_dir / "report.json", j.dump(2) + "\n");

    out << "ranked " << candidates.size() << " of " << jobs.size() << " models -> " << (out_dir / "report.json").string()
        << '\n';
    for (const auto& rc : report.candidates) {
        out << "  " << rc.rank << ". " << rc.candidate.model_id << "  " << rc.candidate.score << '\n';
    }
    return errors.empty() ? kSuccess : kPartialFailure;
}

// ---------------------------------------------------------------- correlate

struct CorrelateArgs {
    std::string scores;
    std::string perf;
    std::string out;
    std::string dataset;
    std::string tuning;
    std::string repr;
    std::string tau_variant = "symmetric";
};

int cmd_correlate(const CorrelateArgs& a, std::ostream& out) {
    TauVariant variant = TauVariant::Symmetric;
    if (a.tau_variant == "by-performance") {
        variant = TauVariant::ByPerformance;
    } else if (a.tau_variant != "symmetric") {
        throw Error(ErrorCode::InvalidArgument, "--tau-variant must be symmetric or by-performance");
    }
    auto candidates = read_scores_csv(a.scores);
    if (!a.perf.empty()) {
        const auto perf = read_performance_csv(a.perf);
        for (auto& c : candidates) {
            if (const auto it = perf.find(c.model_id); it != perf.end()) c.performance = it->second;
        }
    }
    const auto report = evaluate_ranking(candidates, a.dataset, {a.tuning, a.repr}, variant);
    if (!a.out.empty()) write_text_file(a.out, report_to_json(report, utc_timestamp()));
    out << "rho=" << *report.pearson_rho << " tau_w=" << *report.weighted_tau << " prob_better=" << *report.prob_better
        << '\n';
    return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Transferability estimation of frozen encoder features with LogME", "logme"};
    app.require_subcommand(1);

    PoolArgs pool_args;
    auto* pool = app.add_subcommand("pool", "Pool subword embeddings into instance features");
    pool->add_option("--input", pool_args.input, "Raw token store (LGFS with offsets manifest)")->required();
    pool->add_option("--alignment", pool_args.alignment, "Word-to-subword alignment JSON (mean-token)");
    pool->add_option("--strategy", pool_args.strategy, "cls | mean-seq | mean-token")->required();
    pool->add_option("--out", pool_args.out, "Output feature store")->required();
    pool->add_option("--labels-out", pool_args.labels_out, "Output label store for mean-token");
    pool->add_flag("--include-cls", pool_args.include_cls, "Keep the CLS slot in sequence means");
    pool->add_option("--threads", pool_args.threads, "Worker threads");

    ScoreArgs score_args;
    auto* score = app.add_subcommand("score", "Compute LogME of a feature store against labels");
    score->add_option("--features", score_args.features, "Feature store or CSV")->required();
    score->add_option("--labels", score_args.labels, "Label store");
    score->add_option("--label-kind", score_args.label_kind, "CSV labels: auto | classes | scalars");
    score_args.solver.attach(score);
    score->add_option("--threads", score_args.threads, "Worker threads");

    RankArgs rank_args;
    auto* rank = app.add_subcommand("rank", "Score every model of a job manifest and rank them");
    rank->add_option("--manifest", rank_args.manifest, "Job manifest JSON")->required();
    rank->add_option("--out", rank_args.out, "Report directory")->required();
    rank_args.solver.attach(rank);
    rank->add_option("--threads", rank_args.threads, "Worker threads");

    CorrelateArgs corr_args;
    auto* correlate = app.add_subcommand("correlate", "Correlate precomputed scores with performances");
    correlate->add_option("--scores", corr_args.scores, "CSV model_id,score[,performance]")->required();
    correlate->add_option("--perf", corr_args.perf, "CSV model_id,performance");
    correlate->add_option("--out", corr_args.out, "Report JSON path");
    correlate->add_option("--dataset", corr_args.dataset, "Dataset name recorded in the report");
    correlate->add_option("--tuning", corr_args.tuning, "frozen | tuned");
    correlate->add_option("--repr", corr_args.repr, "cls | mean");
    correlate->add_option("--tau-variant", corr_args.tau_variant, "symmetric | by-performance");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        report_error(err, "InvalidArgument", e.what());
        return kInvalidInput;
    }

    try {
        if (pool->parsed()) return cmd_pool(pool_args, out);
        if (score->parsed()) return cmd_score(score_args, out);
        if (rank->parsed()) return cmd_rank(rank_args, out, err);
        if (correlate->parsed()) return cmd_correlate(corr_args, out);
    } catch (const Error& e) {
        report_error(err, code_name(e.code()), e.what());
        return kInvalidInput;
    } catch (const std::exception& e) {
        report_error(err, "InternalError", e.what());
        return kInvalidInput;
    }
    return kInvalidInput;
}

}  // namespace logme::cli
