#include "logme/store_io.hpp"

#include "logme/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

namespace logme {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 4> kFeatureMagic{'L', 'G', 'F', 'S'};
constexpr std::array<char, 4> kLabelMagic{'L', 'G', 'L', 'B'};
constexpr std::size_t kChunkValues = 1 << 16;

template <typename UInt>
void put_le(unsigned char* dst, UInt v) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) dst[i] = static_cast<unsigned char>(v >> (8 * i));
}

template <typename UInt>
UInt get_le(const unsigned char* src) {
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(src[i]) << (8 * i);
    return v;
}

class Fnv1a64 {
public:
    void update(const unsigned char* data, std::size_t size) noexcept {
        for (std::size_t i = 0; i < size; ++i) {
            hash_ ^= data[i];
            hash_ *= 0x100000001b3ULL;
        }
    }
    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
        return std::string("fnv1a64:") + buf;
    }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

std::string dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& s) {
    if (s == "f32") return DType::F32;
    if (s == "f64") return DType::F64;
    throw Error(ErrorCode::InvalidStore, "unknown dtype '" + s + "'");
}

std::string granularity_name(Granularity g) { return g == Granularity::Token ? "token" : "sequence"; }

Granularity parse_granularity(const std::string& s) {
    if (s == "sequence") return Granularity::Sequence;
    if (s == "token") return Granularity::Token;
    throw Error(ErrorCode::InvalidStore, "unknown granularity '" + s + "'");
}

// Encodes values[first, first+count) into LE bytes of the given dtype.
void encode_values(std::span<const double> values, DType dtype, std::vector<unsigned char>& out) {
    const std::size_t width = dtype_size(dtype);
    out.resize(values.size() * width);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (dtype == DType::F32) {
            put_le(out.data() + i * 4, std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
        } else {
            put_le(out.data() + i * 8, std::bit_cast<std::uint64_t>(values[i]));
        }
    }
}

void decode_values(const unsigned char* src, std::size_t count, DType dtype, double* dst) {
    for (std::size_t i = 0; i < count; ++i) {
        if (dtype == DType::F32) {
            dst[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(src + i * 4)));
        } else {
            dst[i] = std::bit_cast<double>(get_le<std::uint64_t>(src + i * 8));
        }
    }
}

std::ofstream open_for_write(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
    return out;
}

void finish_write(std::ofstream& out, const fs::path& tmp, const fs::path& path) {
    out.close();
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + tmp.string() + "'");
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot move '" + tmp.string() + "' into place: " + ec.message());
}

fs::path temp_path_for(const fs::path& path) { return fs::path(path.string() + ".tmp"); }

struct FeaturePayload {
    std::vector<double> values;
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    DType dtype = DType::F64;
    bool has_cls = false;
    std::string checksum;
};

std::string write_lgfs(const fs::path& path, const FeatureMatrix& m, DType dtype, bool has_cls) {
    std::array<unsigned char, kFeatureHeaderSize> header{};
    std::memcpy(header.data(), kFeatureMagic.data(), 4);
    put_le<std::uint16_t>(header.data() + 4, kFormatVersion);
    header[6] = static_cast<unsigned char>(dtype);
    header[7] = has_cls ? 1 : 0;
    put_le<std::uint64_t>(header.data() + 8, m.rows());
    put_le<std::uint64_t>(header.data() + 16, m.cols());

    const auto tmp = temp_path_for(path);
    auto out = open_for_write(tmp);
    out.write(reinterpret_cast<const char*>(header.data()), header.size());

    Fnv1a64 hash;
    std::vector<unsigned char> buf;
    const auto values = m.values();
    for (std::size_t first = 0; first < values.size(); first += kChunkValues) {
        const auto count = std::min(kChunkValues, values.size() - first);
        encode_values(values.subspan(first, count), dtype, buf);
        hash.update(buf.data(), buf.size());
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    finish_write(out, tmp, path);
    return hash.hex();
}

FeaturePayload read_lgfs(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    std::error_code ec;
    const auto file_size = fs::file_size(path, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot stat '" + path.string() + "'");

    std::array<unsigned char, kFeatureHeaderSize> header{};
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got < 4) throw Error(ErrorCode::TruncatedFile, "'" + path.string() + "' is shorter than the magic");
    if (std::memcmp(header.data(), kFeatureMagic.data(), 4) != 0) {
        throw Error(ErrorCode::BadMagic, "'" + path.string() + "' is not an LGFS feature store");
    }
    if (got < kFeatureHeaderSize) {
        throw Error(ErrorCode::TruncatedFile, "'" + path.string() + "' has an incomplete header");
    }
    const auto version = get_le<std::uint16_t>(header.data() + 4);
    if (version != kFormatVersion) {
        throw Error(ErrorCode::VersionUnsupported, "LGFS version " + std::to_string(version) + " is not supported");
    }
    if (header[6] > 1) throw Error(ErrorCode::InvalidStore, "unknown dtype code " + std::to_string(header[6]));

    FeaturePayload p;
    p.dtype = static_cast<DType>(header[6]);
    p.has_cls = header[7] != 0;
    p.rows = get_le<std::uint64_t>(header.data() + 8);
    p.cols = get_le<std::uint64_t>(header.data() + 16);
    if (p.rows == 0 || p.cols == 0) throw Error(ErrorCode::InvalidStore, "feature store has an empty dimension");

    const std::size_t width = dtype_size(p.dtype);
    if (p.cols > (UINT64_MAX / width) / p.rows) throw Error(ErrorCode::InvalidStore, "dimensions overflow");
    const std::uint64_t expected = kFeatureHeaderSize + p.rows * p.cols * width;
    if (file_size < expected) {
        throw Error(ErrorCode::TruncatedFile, "'" + path.string() + "' holds " + std::to_string(file_size) +
                                                  " bytes, header implies " + std::to_string(expected));
    }
    if (file_size > expected) {
        throw Error(ErrorCode::TrailingData, "'" + path.string() + "' has " + std::to_string(file_size - expected) +
                                                 " bytes after the payload");
    }

    const std::size_t total = p.rows * p.cols;
    p.values.resize(total);
    Fnv1a64 hash;
    std::vector<unsigned char> buf(kChunkValues * width);
    for (std::size_t first = 0; first < total; first += kChunkValues) {
        const auto count = std::min(kChunkValues, total - first);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * width));
        if (static_cast<std::size_t>(in.gcount()) != count * width) {
            throw Error(ErrorCode::TruncatedFile, "'" + path.string() + "' ended early");
        }
        hash.update(buf.data(), count * width);
        decode_values(buf.data(), count, p.dtype, p.values.data() + first);
    }
    p.checksum = hash.hex();
    return p;
}

void check_field(bool ok, const std::string& field, const std::string& detail) {
    if (!ok) throw Error(ErrorCode::ManifestMismatch, "manifest field '" + field + "' disagrees with the data: " + detail);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

}  // namespace

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    const auto tmp = temp_path_for(path);
    auto out = open_for_write(tmp);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    finish_write(out, tmp, path);
}

fs::path manifest_path_for(const fs::path& store) { return fs::path(store.string() + ".json"); }

std::string manifest_to_json(const StoreManifest& m) {
    json j;
    j["model_id"] = m.model_id;
    j["dataset_id"] = m.dataset_id;
    j["pooling"] = m.pooling;
    j["granularity"] = granularity_name(m.granularity);
    j["has_cls"] = m.has_cls;
    j["pair_packed"] = m.pair_packed;
    j["features"] = m.features;
    j["labels"] = m.labels;
    j["dtype"] = dtype_name(m.dtype);
    j["n_rows"] = m.n_rows;
    j["n_cols"] = m.n_cols;
    j["checksum"] = m.checksum;
    if (!m.sequence_offsets.empty()) j["sequence_offsets"] = m.sequence_offsets;
    if (!m.special_positions.empty()) j["special_positions"] = m.special_positions;
    return j.dump(2) + "\n";
}

StoreManifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "manifest must be a JSON object");
    try {
        StoreManifest m;
        m.model_id = j.value("model_id", "");
        m.dataset_id = j.value("dataset_id", "");
        m.pooling = j.value("pooling", "raw");
        if (m.pooling != "raw" && m.pooling != "cls" && m.pooling != "mean-seq" && m.pooling != "mean-token") {
            throw Error(ErrorCode::InvalidStore, "unknown pooling '" + m.pooling + "'");
        }
        m.granularity = parse_granularity(j.value("granularity", "sequence"));
        m.has_cls = j.value("has_cls", false);
        m.pair_packed = j.value("pair_packed", false);
        m.features = j.value("features", "");
        m.labels = j.value("labels", "");
        m.dtype = parse_dtype(j.value("dtype", "f64"));
        m.n_rows = j.value("n_rows", std::uint64_t{0});
        m.n_cols = j.value("n_cols", std::uint64_t{0});
        m.checksum = j.value("checksum", "");
        if (j.contains("sequence_offsets")) m.sequence_offsets = j["sequence_offsets"].get<std::vector<std::size_t>>();
        if (j.contains("special_positions")) {
            m.special_positions = j["special_positions"].get<std::vector<std::vector<std::size_t>>>();
        }
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("malformed manifest field: ") + e.what());
    }
}

std::string payload_checksum(const FeatureMatrix& matrix, DType dtype) {
    Fnv1a64 hash;
    std::vector<unsigned char> buf;
    const auto values = matrix.values();
    for (std::size_t first = 0; first < values.size(); first += kChunkValues) {
        encode_values(values.subspan(first, std::min(kChunkValues, values.size() - first)), dtype, buf);
        hash.update(buf.data(), buf.size());
    }
    return hash.hex();
}

void write_feature_store(const fs::path& path, const FeatureMatrix& matrix, const StoreManifest& manifest) {
    StoreManifest m = manifest;
    m.features = path.filename().string();
    m.n_rows = matrix.rows();
    m.n_cols = matrix.cols();
    m.checksum = write_lgfs(path, matrix, m.dtype, m.has_cls);
    write_text_file(manifest_path_for(path), manifest_to_json(m));
}

FeatureStore read_feature_store(const fs::path& path, std::size_t min_rows) {
    fs::path binary = path;
    std::optional<StoreManifest> manifest;
    if (path.extension() == ".json") {
        manifest = manifest_from_json(read_text_file(path));
        if (manifest->features.empty()) {
            throw Error(ErrorCode::InvalidStore, "manifest '" + path.string() + "' names no feature file");
        }
        binary = path.parent_path() / manifest->features;
    } else if (const auto side = manifest_path_for(path); fs::exists(side)) {
        manifest = manifest_from_json(read_text_file(side));
    }

    auto payload = read_lgfs(binary);
    if (manifest) {
        check_field(manifest->n_rows == payload.rows, "n_rows",
                    std::to_string(manifest->n_rows) + " vs " + std::to_string(payload.rows));
        check_field(manifest->n_cols == payload.cols, "n_cols",
                    std::to_string(manifest->n_cols) + " vs " + std::to_string(payload.cols));
        check_field(manifest->dtype == payload.dtype, "dtype", dtype_name(manifest->dtype) + " vs " + dtype_name(payload.dtype));
        check_field(manifest->has_cls == payload.has_cls, "has_cls", "flag differs from header");
        if (!manifest->checksum.empty() && manifest->checksum != payload.checksum) {
            throw Error(ErrorCode::ChecksumMismatch, "payload of '" + binary.string() + "' hashes to " +
                                                         payload.checksum + ", manifest records " + manifest->checksum);
        }
    } else {
        StoreManifest m;
        m.features = binary.filename().string();
        m.has_cls = payload.has_cls;
        m.dtype = payload.dtype;
        m.n_rows = payload.rows;
        m.n_cols = payload.cols;
        m.checksum = payload.checksum;
        manifest = std::move(m);
    }
    if (payload.rows < min_rows) {
        throw Error(ErrorCode::TooFewRows, "store has " + std::to_string(payload.rows) + " rows, at least " +
                                               std::to_string(min_rows) + " required");
    }
    return {FeatureMatrix(payload.rows, payload.cols, std::move(payload.values)), std::move(*manifest)};
}

void write_token_store(const fs::path& path, const TokenEmbeddingStore& store, StoreManifest manifest) {
    manifest.pooling = "raw";
    manifest.has_cls = store.has_cls();
    manifest.sequence_offsets = store.sequence_offsets();
    const auto& special = store.special_positions();
    const bool any_special = std::any_of(special.begin(), special.end(), [](const auto& s) { return !s.empty(); });
    manifest.special_positions = any_special ? special : std::vector<std::vector<std::size_t>>{};
    write_feature_store(path, store.embeddings(), manifest);
}

TokenEmbeddingStore read_token_store(const fs::path& path) {
    auto fsd = read_feature_store(path);
    auto& m = fsd.manifest;
    if (m.sequence_offsets.empty()) {
        throw Error(ErrorCode::InvalidStore, "token store '" + path.string() + "' has no sequence_offsets in its manifest");
    }
    return TokenEmbeddingStore(std::move(fsd.matrix), m.sequence_offsets, m.has_cls, m.special_positions);
}

void write_label_store(const fs::path& path, const TargetVector& targets) {
    std::array<unsigned char, kLabelHeaderSize> header{};
    std::memcpy(header.data(), kLabelMagic.data(), 4);
    put_le<std::uint16_t>(header.data() + 4, kFormatVersion);
    const bool classes = targets.kind() == TargetKind::Classes;
    header[6] = classes ? 0 : 1;
    put_le<std::uint32_t>(header.data() + 8, classes ? targets.num_classes() : 0);
    put_le<std::uint64_t>(header.data() + 12, targets.size());

    std::vector<unsigned char> payload;
    if (classes) {
        const auto labels = targets.class_labels();
        payload.resize(labels.size() * 4);
        for (std::size_t i = 0; i < labels.size(); ++i) put_le<std::uint32_t>(payload.data() + i * 4, labels[i]);
    } else {
        encode_values(targets.scalar_values(), DType::F64, payload);
    }
    const auto tmp = temp_path_for(path);
    auto out = open_for_write(tmp);
    out.write(reinterpret_cast<const char*>(header.data()), header.size());
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    finish_write(out, tmp, path);
}

TargetVector read_label_store(const fs::path& path) {
    const std::string bytes = read_text_file(path);
    const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFile, "'" + path.string() + "' is shorter than the magic");
    if (std::memcmp(data, kLabelMagic.data(), 4) != 0) {
        throw Error(ErrorCode::BadMagic, "'" + path.string() + "' is not an LGLB label store");
    }
    if (bytes.size() < kLabelHeaderSize) throw Error(ErrorCode::TruncatedFile, "'" + path.string() + "' has an incomplete header");
    const auto version = get_le<std::uint16_t>(data + 4);
    if (version != kFormatVersion) {
        throw Error(ErrorCode::VersionUnsupported, "LGLB version " + std::to_string(version) + " is not supported");
    }
    const auto kind = data[6];
    if (kind > 1) throw Error(ErrorCode::InvalidStore, "unknown label kind " + std::to_string(kind));
    const auto num_classes = get_le<std::uint32_t>(data + 8);
    const auto n = get_le<std::uint64_t>(data + 12);
    const std::size_t width = kind == 0 ? 4 : 8;
    if (n > (UINT64_MAX - kLabelHeaderSize) / width) throw Error(ErrorCode::InvalidStore, "label count overflows");
    const std::uint64_t expected = kLabelHeaderSize + n * width;
    if (bytes.size() < expected) throw Error(ErrorCode::TruncatedFile, "'" + path.string() + "' ended early");
    if (bytes.size() > expected) throw Error(ErrorCode::TrailingData, "'" + path.string() + "' has bytes after the payload");

    const unsigned char* payload = data + kLabelHeaderSize;
    if (kind == 0) {
        std::vector<std::uint32_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = get_le<std::uint32_t>(payload + i * 4);
        return TargetVector::classes(std::move(labels), num_classes);
    }
    std::vector<double> values(n);
    decode_values(payload, n, DType::F64, values.data());
    return TargetVector::scalars(std::move(values));
}

std::string alignment_to_json(const SubwordAlignment& a) {
    json seqs = json::array();
    for (const auto& s : a.sequences) {
        json spans = json::array();
        for (const auto& sp : s.spans) spans.push_back({sp.begin, sp.end});
        seqs.push_back({{"spans", spans}, {"labels", s.labels}});
    }
    json j;
    j["num_classes"] = a.num_classes;
    j["sequences"] = seqs;
    return j.dump(2) + "\n";
}

SubwordAlignment alignment_from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        SubwordAlignment a;
        a.num_classes = j.at("num_classes").get<std::uint32_t>();
        for (const auto& s : j.at("sequences")) {
            SequenceAlignment seq;
            for (const auto& sp : s.at("spans")) {
                if (!sp.is_array() || sp.size() != 2) throw Error(ErrorCode::ParseError, "span must be [begin, end]");
                seq.spans.push_back({sp[0].get<std::size_t>(), sp[1].get<std::size_t>()});
            }
            seq.labels = s.at("labels").get<std::vector<std::uint32_t>>();
            a.sequences.push_back(std::move(seq));
        }
        return a;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("malformed alignment: ") + e.what());
    }
}

SubwordAlignment read_alignment(const fs::path& path) { return alignment_from_json(read_text_file(path)); }

void write_alignment(const fs::path& path, const SubwordAlignment& alignment) {
    write_text_file(path, alignment_to_json(alignment));
}

std::pair<FeatureMatrix, TargetVector> read_csv_dataset(const fs::path& path, LabelMode mode) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "'" + path.string() + "' is empty");
    const std::size_t columns = split_csv_line(line).size();
    if (columns < 2) throw Error(ErrorCode::ParseError, "CSV needs at least one feature column and a label column");
    const std::size_t h = columns - 1;

    std::vector<double> features;
    std::vector<double> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != columns) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + " has " +
                                                   std::to_string(fields.size()) + " fields, header has " +
                                                   std::to_string(columns));
        }
        for (std::size_t c = 0; c < columns; ++c) {
            double v = 0.0;
            const auto& f = fields[c];
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc{} || ptr != f.data() + f.size()) {
                throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": '" + f + "' is not a number");
            }
            (c + 1 == columns ? labels : features).push_back(v);
        }
        if (features.size() > kMaxCsvCells) {
            throw Error(ErrorCode::InvalidArgument, "CSV ingestion is limited to " + std::to_string(kMaxCsvCells) +
                                                        " feature cells; use a binary store");
        }
    }
    const std::size_t n = labels.size();
    if (n == 0) throw Error(ErrorCode::ParseError, "'" + path.string() + "' has no data rows");
    FeatureMatrix matrix(n, h, std::move(features));

    const bool integral = std::all_of(labels.begin(), labels.end(), [](double v) {
        return std::isfinite(v) && v >= 0.0 && v == std::floor(v) && v < 4294967296.0;
    });
    if (mode == LabelMode::Scalars || (mode == LabelMode::Auto && !integral)) {
        return {std::move(matrix), TargetVector::scalars(std::move(labels))};
    }
    if (!integral) throw Error(ErrorCode::ParseError, "class labels must be non-negative integers");
    std::vector<std::uint32_t> classes(n);
    std::uint32_t max_class = 0;
    for (std::size_t i = 0; i < n; ++i) {
        classes[i] = static_cast<std::uint32_t>(labels[i]);
        max_class = std::max(max_class, classes[i]);
    }
    return {std::move(matrix), TargetVector::classes(std::move(classes), max_class + 1)};
}

}  // namespace logme
