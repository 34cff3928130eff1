#pragma once

#include "logme/evidence.hpp"
#include "logme/pooling.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace logme {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

enum class Granularity { Sequence, Token };

/// Size of the fixed LGFS header in bytes.
inline constexpr std::size_t kFeatureHeaderSize = 64;
/// Size of the fixed LGLB header in bytes.
inline constexpr std::size_t kLabelHeaderSize = 20;
inline constexpr std::uint16_t kFormatVersion = 1;

/**
 * Sidecar metadata for a feature store, serialized as one JSON document
 * next to the binary (`<store>.json`).
 *
 * `pooling` is one of "raw", "cls", "mean-seq", "mean-token". Raw stores hold
 * subword rows and carry sequence_offsets (and optionally special_positions);
 * pooled stores hold one row per instance. Paths are relative to the
 * manifest's directory.
 */
struct StoreManifest {
    std::string model_id;
    std::string dataset_id;
    std::string pooling = "raw";
    Granularity granularity = Granularity::Sequence;
    bool has_cls = false;
    bool pair_packed = false;
    std::string features;
    std::string labels;
    DType dtype = DType::F64;
    std::uint64_t n_rows = 0;
    std::uint64_t n_cols = 0;
    std::string checksum;
    std::vector<std::size_t> sequence_offsets;
    std::vector<std::vector<std::size_t>> special_positions;

    friend bool operator==(const StoreManifest&, const StoreManifest&) = default;
};

struct FeatureStore {
    FeatureMatrix matrix;
    StoreManifest manifest;
};

std::string manifest_to_json(const StoreManifest& manifest);
StoreManifest manifest_from_json(const std::string& text);

/// Path of the JSON sidecar belonging to a binary store.
std::filesystem::path manifest_path_for(const std::filesystem::path& store);

/// Hex FNV-1a 64 of the serialized payload, prefixed "fnv1a64:".
std::string payload_checksum(const FeatureMatrix& matrix, DType dtype);

/**
 * Writes `path` (LGFS binary) and its JSON sidecar. The manifest's counts,
 * checksum and features fields are filled in from the data; everything else
 * is copied verbatim. Output bytes depend only on the inputs.
 */
void write_feature_store(const std::filesystem::path& path, const FeatureMatrix& matrix,
                         const StoreManifest& manifest);

/**
 * Reads a feature store. `path` may name the binary (sidecar optional) or the
 * JSON manifest. f32 payloads are widened to f64 exactly. Rejects stores with
 * fewer than `min_rows` rows.
 */
FeatureStore read_feature_store(const std::filesystem::path& path, std::size_t min_rows = 1);

/// Writes the subword rows plus offsets/special positions recorded in the manifest.
void write_token_store(const std::filesystem::path& path, const TokenEmbeddingStore& store,
                       StoreManifest manifest);
TokenEmbeddingStore read_token_store(const std::filesystem::path& path);

void write_label_store(const std::filesystem::path& path, const TargetVector& targets);
TargetVector read_label_store(const std::filesystem::path& path);

std::string alignment_to_json(const SubwordAlignment& alignment);
SubwordAlignment alignment_from_json(const std::string& text);
SubwordAlignment read_alignment(const std::filesystem::path& path);
void write_alignment(const std::filesystem::path& path, const SubwordAlignment& alignment);

enum class LabelMode { Auto, Classes, Scalars };

/// Largest matrix (rows x feature columns) accepted through CSV ingestion.
inline constexpr std::size_t kMaxCsvCells = 1'000'000;

/**
 * CSV with a header row and one instance per line; the last column is the
 * label. In Auto mode, labels that are all non-negative integers are treated
 * as classes (K = max + 1), anything else as scalars.
 */
std::pair<FeatureMatrix, TargetVector> read_csv_dataset(const std::filesystem::path& path,
                                                        LabelMode mode = LabelMode::Auto);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename so readers never see partial output.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace logme
