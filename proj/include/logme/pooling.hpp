#pragma once

#include "logme/evidence.hpp"

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace logme {

/**
 * Subword-level encoder output for a corpus: one embedding row per subword
 * position, with sequences delimited by start offsets.
 *
 * When has_cls is set, position 0 of every sequence is the [CLS]/<s> slot.
 * special_positions optionally marks, per sequence, further in-sequence
 * positions (separators, padding markers) that sequence means skip.
 */
class TokenEmbeddingStore {
public:
    TokenEmbeddingStore(FeatureMatrix embeddings, std::vector<std::size_t> sequence_offsets, bool has_cls,
                        std::vector<std::vector<std::size_t>> special_positions = {});

    const FeatureMatrix& embeddings() const noexcept { return embeddings_; }
    const std::vector<std::size_t>& sequence_offsets() const noexcept { return offsets_; }
    const std::vector<std::vector<std::size_t>>& special_positions() const noexcept { return special_; }
    bool has_cls() const noexcept { return has_cls_; }
    std::size_t num_sequences() const noexcept { return offsets_.size(); }
    std::size_t dim() const noexcept { return embeddings_.cols(); }

    std::size_t sequence_begin(std::size_t s) const noexcept { return offsets_[s]; }
    std::size_t sequence_length(std::size_t s) const noexcept;

private:
    FeatureMatrix embeddings_;
    std::vector<std::size_t> offsets_;
    bool has_cls_;
    std::vector<std::vector<std::size_t>> special_;
};

/// Subword span [begin, end) of one word, relative to the start of its sequence.
struct TokenSpan {
    std::size_t begin;
    std::size_t end;

    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct SequenceAlignment {
    std::vector<TokenSpan> spans;
    std::vector<std::uint32_t> labels;

    friend bool operator==(const SequenceAlignment&, const SequenceAlignment&) = default;
};

/// Word-to-subword alignment with one class label per word.
struct SubwordAlignment {
    std::vector<SequenceAlignment> sequences;
    std::uint32_t num_classes = 0;

    std::size_t total_tokens() const noexcept;

    /// Throws SpanOutOfBounds / LabelCountMismatch / LengthMismatch when the
    /// alignment does not fit the store.
    void validate(const TokenEmbeddingStore& store) const;

    friend bool operator==(const SubwordAlignment&, const SubwordAlignment&) = default;
};

enum class PoolingStrategy { ClsToken, MeanSequence, MeanToken };

std::string_view pooling_name(PoolingStrategy p) noexcept;
/// Accepts "cls", "mean-seq" and "mean-token"; throws InvalidArgument otherwise.
PoolingStrategy parse_pooling(std::string_view name);

FeatureMatrix pool_cls(const TokenEmbeddingStore& store);

FeatureMatrix pool_mean_sequence(const TokenEmbeddingStore& store, bool include_cls = false,
                                 unsigned threads = 1);

std::pair<FeatureMatrix, TargetVector> pool_mean_token(const TokenEmbeddingStore& store,
                                                       const SubwordAlignment& alignment,
                                                       unsigned threads = 1);

}  // namespace logme
