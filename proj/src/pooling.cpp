#include "logme/pooling.hpp"

#include "logme/compensated_sum.hpp"
#include "logme/error.hpp"
#include "logme/parallel.hpp"

#include <algorithm>
#include <string>

namespace logme {

namespace {

// Mean of the listed rows, accumulated per column in the listed order.
void mean_of_rows(const FeatureMatrix& m, std::span<const std::size_t> rows, std::span<double> out) {
    std::vector<CompensatedSum> acc(m.cols());
    for (auto r : rows) {
        const auto row = m.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) acc[j].add(row[j]);
    }
    const double count = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = acc[j].value() / count;
}

}  // namespace

TokenEmbeddingStore::TokenEmbeddingStore(FeatureMatrix embeddings, std::vector<std::size_t> sequence_offsets,
                                         bool has_cls, std::vector<std::vector<std::size_t>> special_positions)
    : embeddings_(std::move(embeddings)),
      offsets_(std::move(sequence_offsets)),
      has_cls_(has_cls),
      special_(std::move(special_positions)) {
    if (offsets_.empty() || offsets_.front() != 0) {
        throw Error(ErrorCode::InvalidStore, "sequence offsets must be non-empty and start at 0");
    }
    for (std::size_t s = 1; s < offsets_.size(); ++s) {
        if (offsets_[s] <= offsets_[s - 1]) {
            throw Error(ErrorCode::InvalidStore, "sequence offsets must be strictly increasing (index " +
                                                     std::to_string(s) + ")");
        }
    }
    if (offsets_.back() >= embeddings_.rows()) {
        throw Error(ErrorCode::InvalidStore, "last sequence is empty or offsets exceed the subword count");
    }
    if (special_.empty()) special_.resize(offsets_.size());
    if (special_.size() != offsets_.size()) {
        throw Error(ErrorCode::InvalidStore, "special_positions must list one entry per sequence");
    }
    for (std::size_t s = 0; s < special_.size(); ++s) {
        auto& sp = special_[s];
        std::sort(sp.begin(), sp.end());
        sp.erase(std::unique(sp.begin(), sp.end()), sp.end());
        if (!sp.empty() && sp.back() >= sequence_length(s)) {
            throw Error(ErrorCode::InvalidStore, "special position outside sequence " + std::to_string(s));
        }
    }
}

std::size_t TokenEmbeddingStore::sequence_length(std::size_t s) const noexcept {
    const std::size_t end = s + 1 < offsets_.size() ? offsets_[s + 1] : embeddings_.rows();
    return end - offsets_[s];
}

std::size_t SubwordAlignment::total_tokens() const noexcept {
    std::size_t total = 0;
    for (const auto& seq : sequences) total += seq.spans.size();
    return total;
}

void SubwordAlignment::validate(const TokenEmbeddingStore& store) const {
    if (sequences.size() != store.num_sequences()) {
        throw Error(ErrorCode::LengthMismatch, "alignment covers " + std::to_string(sequences.size()) +
                                                   " sequences, store has " +
                                                   std::to_string(store.num_sequences()));
    }
    const std::size_t first_content = store.has_cls() ? 1 : 0;
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        const auto& seq = sequences[s];
        if (seq.spans.size() != seq.labels.size()) {
            throw Error(ErrorCode::LabelCountMismatch,
                        "sequence " + std::to_string(s) + " has " + std::to_string(seq.spans.size()) +
                            " tokens but " + std::to_string(seq.labels.size()) + " labels");
        }
        const std::size_t len = store.sequence_length(s);
        std::size_t cursor = first_content;
        for (std::size_t t = 0; t < seq.spans.size(); ++t) {
            const auto& sp = seq.spans[t];
            if (sp.begin < cursor || sp.end <= sp.begin || sp.end > len) {
                throw Error(ErrorCode::SpanOutOfBounds,
                            "token " + std::to_string(t) + " of sequence " + std::to_string(s) + " spans [" +
                                std::to_string(sp.begin) + ", " + std::to_string(sp.end) +
                                "), which is empty, overlapping, covers the CLS slot, or exceeds length " +
                                std::to_string(len));
            }
            cursor = sp.end;
        }
    }
}

std::string_view pooling_name(PoolingStrategy p) noexcept {
    switch (p) {
        case PoolingStrategy::ClsToken: return "cls";
        case PoolingStrategy::MeanSequence: return "mean-seq";
        case PoolingStrategy::MeanToken: return "mean-token";
    }
    return "unknown";
}

PoolingStrategy parse_pooling(std::string_view name) {
    if (name == "cls") return PoolingStrategy::ClsToken;
    if (name == "mean-seq") return PoolingStrategy::MeanSequence;
    if (name == "mean-token") return PoolingStrategy::MeanToken;
    throw Error(ErrorCode::InvalidArgument, "unknown pooling strategy '" + std::string(name) + "'");
}

FeatureMatrix pool_cls(const TokenEmbeddingStore& store) {
    if (!store.has_cls()) {
        throw Error(ErrorCode::MissingClsSlot, "store has no [CLS] slot; use a mean pooling strategy");
    }
    const auto& emb = store.embeddings();
    const std::size_t h = store.dim();
    std::vector<double> out(store.num_sequences() * h);
    for (std::size_t s = 0; s < store.num_sequences(); ++s) {
        const auto row = emb.row(store.sequence_begin(s));
        std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(s * h));
    }
    return FeatureMatrix(store.num_sequences(), h, std::move(out));
}

FeatureMatrix pool_mean_sequence(const TokenEmbeddingStore& store, bool include_cls, unsigned threads) {
    const std::size_t h = store.dim();
    const std::size_t n = store.num_sequences();
    const bool skip_cls = store.has_cls() && !include_cls;
    std::vector<double> out(n * h);

    parallel_for(n, threads, [&](std::size_t s) {
        const std::size_t begin = store.sequence_begin(s);
        const std::size_t len = store.sequence_length(s);
        const auto& special = store.special_positions()[s];
        std::vector<std::size_t> rows;
        rows.reserve(len);
        for (std::size_t p = skip_cls ? 1 : 0; p < len; ++p) {
            if (!std::binary_search(special.begin(), special.end(), p)) rows.push_back(begin + p);
        }
        if (rows.empty()) {
            throw Error(ErrorCode::EmptyAfterExclusion,
                        "sequence " + std::to_string(s) + " has no content subwords after exclusions");
        }
        mean_of_rows(store.embeddings(), rows, std::span<double>(out.data() + s * h, h));
    });
    return FeatureMatrix(n, h, std::move(out));
}

std::pair<FeatureMatrix, TargetVector> pool_mean_token(const TokenEmbeddingStore& store,
                                                       const SubwordAlignment& alignment, unsigned threads) {
    alignment.validate(store);
    const std::size_t h = store.dim();
    const std::size_t total = alignment.total_tokens();
    if (total == 0) throw Error(ErrorCode::EmptyAfterExclusion, "alignment contains no tokens");

    // First output row of each sequence.
    std::vector<std::size_t> first_row(alignment.sequences.size(), 0);
    for (std::size_t s = 1; s < first_row.size(); ++s) {
        first_row[s] = first_row[s - 1] + alignment.sequences[s - 1].spans.size();
    }

    std::vector<double> out(total * h);
    std::vector<std::uint32_t> labels(total);
    parallel_for(alignment.sequences.size(), threads, [&](std::size_t s) {
        const auto& seq = alignment.sequences[s];
        const std::size_t base = store.sequence_begin(s);
        std::vector<std::size_t> rows;
        for (std::size_t t = 0; t < seq.spans.size(); ++t) {
            rows.clear();
            for (std::size_t p = seq.spans[t].begin; p < seq.spans[t].end; ++p) rows.push_back(base + p);
            const std::size_t r = first_row[s] + t;
            mean_of_rows(store.embeddings(), rows, std::span<double>(out.data() + r * h, h));
            labels[r] = seq.labels[t];
        }
    });
    return {FeatureMatrix(total, h, std::move(out)), TargetVector::classes(std::move(labels), alignment.num_classes)};
}

}  // namespace logme
