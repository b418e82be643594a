#include "hdgmm/io.hpp"

#include <Eigen/QR>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <vector>

#include "hdgmm/rng.hpp"

// On-disk numbers are little-endian; the implementation writes native
// representations directly.
static_assert(std::endian::native == std::endian::little,
              "file formats require a little-endian host");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559,
              "file formats require IEEE-754 binary64");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559,
              "file formats require IEEE-754 binary32");

namespace hdgmm {

namespace {

constexpr char kDictMagic[4] = {'H', 'D', 'G', 'F'};
constexpr char kModelMagic[4] = {'H', 'D', 'G', 'M'};
constexpr char kCompressedMagic[4] = {'H', 'D', 'G', 'C'};
constexpr char kCheckpointMagic[4] = {'H', 'D', 'G', 'K'};

// Sanity caps against corrupt headers requesting absurd allocations. The
// payload-size check catches truncation; these catch overflow.
constexpr std::uint64_t kMaxRecords = std::uint64_t{1} << 40;
constexpr std::uint32_t kMaxDim = std::uint32_t{1} << 24;
constexpr std::uint32_t kMaxComponents = std::uint32_t{1} << 20;

void write_raw(std::ostream& out, const void* data, std::size_t bytes) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw IoError("write failed");
}

template <typename T>
void write_scalar(std::ostream& out, T value) {
    write_raw(out, &value, sizeof(T));
}

void read_raw(std::istream& in, void* data, std::size_t bytes) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes) {
        throw FormatError("unexpected end of file");
    }
}

template <typename T>
T read_scalar(std::istream& in) {
    T value;
    read_raw(in, &value, sizeof(T));
    return value;
}

void write_string(std::ostream& out, const std::string& s) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
        throw std::invalid_argument("string too long for length-prefixed encoding");
    }
    write_scalar<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
    write_raw(out, s.data(), s.size());
}

std::string read_string(std::istream& in) {
    const auto length = read_scalar<std::uint16_t>(in);
    std::string s(length, '\0');
    if (length > 0) read_raw(in, s.data(), length);
    return s;
}

void write_magic(std::ostream& out, const char (&magic)[4]) {
    write_raw(out, magic, 4);
}

void expect_magic(std::istream& in, const char (&magic)[4], const char* what) {
    char got[4];
    read_raw(in, got, 4);
    if (std::memcmp(got, magic, 4) != 0) {
        throw FormatError(std::string("not a ") + what + " file (bad magic)");
    }
}

void expect_version(std::istream& in) {
    const auto version = read_scalar<std::uint16_t>(in);
    if (version != kFormatVersion) {
        throw FormatError("unsupported format version " + std::to_string(version));
    }
}

void check_sample_width(int width, const char* what) {
    if (width != 4 && width != 8) {
        throw std::invalid_argument(std::string(what) + ": sample width must be 4 or 8, got " +
                                    std::to_string(width));
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return in;
}

std::uint64_t file_size(std::ifstream& in) {
    const auto here = in.tellg();
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    in.seekg(here);
    if (end < 0) throw IoError("cannot determine file size");
    return static_cast<std::uint64_t>(end);
}

// Writes `rows` as row-major f64 or f32, buffering a bounded number of rows
// at a time. Refuses values that are non-finite or (at width 4) fall
// outside the single-precision range.
void write_matrix_rows(std::ostream& out, const Matrix& m, int width) {
    const Index buffer_rows = std::max<Index>(1, 65536 / std::max<Index>(1, m.cols()));
    if (width == 8) {
        std::vector<double> buf;
        for (Index r0 = 0; r0 < m.rows(); r0 += buffer_rows) {
            const Index rows = std::min(buffer_rows, m.rows() - r0);
            buf.resize(static_cast<std::size_t>(rows * m.cols()));
            for (Index r = 0; r < rows; ++r) {
                for (Index c = 0; c < m.cols(); ++c) {
                    const double v = m(r0 + r, c);
                    if (!std::isfinite(v)) {
                        throw std::invalid_argument("refusing to write non-finite value");
                    }
                    buf[static_cast<std::size_t>(r * m.cols() + c)] = v;
                }
            }
            write_raw(out, buf.data(), buf.size() * sizeof(double));
        }
    } else {
        std::vector<float> buf;
        for (Index r0 = 0; r0 < m.rows(); r0 += buffer_rows) {
            const Index rows = std::min(buffer_rows, m.rows() - r0);
            buf.resize(static_cast<std::size_t>(rows * m.cols()));
            for (Index r = 0; r < rows; ++r) {
                for (Index c = 0; c < m.cols(); ++c) {
                    const double v = m(r0 + r, c);
                    const float narrow = static_cast<float>(v);
                    if (!std::isfinite(v) || !std::isfinite(narrow)) {
                        throw std::invalid_argument(
                            "refusing to write value not representable at sample width 4");
                    }
                    buf[static_cast<std::size_t>(r * m.cols() + c)] = narrow;
                }
            }
            write_raw(out, buf.data(), buf.size() * sizeof(float));
        }
    }
}

Matrix read_matrix_rows(std::istream& in, Index rows, Index cols, int width) {
    Matrix m(rows, cols);
    if (rows == 0 || cols == 0) return m;
    if (width == 8) {
        std::vector<double> buf(static_cast<std::size_t>(rows * cols));
        read_raw(in, buf.data(), buf.size() * sizeof(double));
        for (Index r = 0; r < rows; ++r) {
            for (Index c = 0; c < cols; ++c) {
                m(r, c) = buf[static_cast<std::size_t>(r * cols + c)];
            }
        }
    } else {
        std::vector<float> buf(static_cast<std::size_t>(rows * cols));
        read_raw(in, buf.data(), buf.size() * sizeof(float));
        for (Index r = 0; r < rows; ++r) {
            for (Index c = 0; c < cols; ++c) {
                m(r, c) = static_cast<double>(buf[static_cast<std::size_t>(r * cols + c)]);
            }
        }
    }
    return m;
}

void write_vector(std::ostream& out, const Vector& v) {
    write_raw(out, v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
}

Vector read_vector(std::istream& in, Index size) {
    Vector v(size);
    read_raw(in, v.data(), static_cast<std::size_t>(size) * sizeof(double));
    return v;
}

void write_matrix_cols(std::ostream& out, const Matrix& m) {
    write_raw(out, m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

Matrix read_matrix_cols(std::istream& in, Index rows, Index cols) {
    Matrix m(rows, cols);
    read_raw(in, m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    return m;
}

// Header shared by write_dictionary and DictionaryWriter. The record count
// sits at a fixed offset right after magic and version so the incremental
// writer can patch it.
constexpr std::uint64_t kCountOffset = 6;

void write_dictionary_header(std::ostream& out, std::uint64_t count, Index signal_dim,
                             const std::vector<std::string>& label_names,
                             int sample_width) {
    write_magic(out, kDictMagic);
    write_scalar<std::uint16_t>(out, kFormatVersion);
    write_scalar<std::uint64_t>(out, count);
    write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(signal_dim));
    write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(label_names.size()));
    for (const auto& name : label_names) write_string(out, name);
    write_scalar<std::uint8_t>(out, static_cast<std::uint8_t>(sample_width));
}

DictionaryInfo read_dictionary_header(std::istream& in) {
    expect_magic(in, kDictMagic, "dictionary");
    expect_version(in);
    DictionaryInfo info;
    info.count = read_scalar<std::uint64_t>(in);
    info.signal_dim = read_scalar<std::uint32_t>(in);
    info.param_dim = read_scalar<std::uint32_t>(in);
    if (info.count > kMaxRecords || info.signal_dim == 0 || info.signal_dim > kMaxDim ||
        info.param_dim > kMaxDim) {
        throw FormatError("dictionary header out of range");
    }
    info.label_names.reserve(info.param_dim);
    for (std::uint32_t p = 0; p < info.param_dim; ++p) {
        info.label_names.push_back(read_string(in));
    }
    info.sample_width = read_scalar<std::uint8_t>(in);
    if (info.sample_width != 4 && info.sample_width != 8) {
        throw FormatError("dictionary sample width must be 4 or 8, got " +
                          std::to_string(info.sample_width));
    }
    info.payload_offset = static_cast<std::uint64_t>(in.tellg());
    return info;
}

// Payload must hold exactly N * (M + P) samples at the declared width.
void check_dictionary_payload(std::ifstream& in, const DictionaryInfo& info) {
    const std::uint64_t per_record =
        (static_cast<std::uint64_t>(info.signal_dim) + info.param_dim) * info.sample_width;
    if (per_record != 0 &&
        info.count > std::numeric_limits<std::uint64_t>::max() / per_record) {
        throw FormatError("dictionary header out of range");
    }
    const std::uint64_t expected = info.payload_offset + info.count * per_record;
    const std::uint64_t actual = file_size(in);
    if (actual != expected) {
        throw FormatError("dictionary payload has " + std::to_string(actual) +
                          " bytes, expected " + std::to_string(expected));
    }
}

void write_model_body(std::ostream& out, const HdGmmModel& model) {
    write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(model.component_count()));
    write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(model.ambient_dim()));
    write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(model.reduced_dim()));
    for (const Component& comp : model.components()) {
        write_scalar<double>(out, comp.weight());
        write_vector(out, comp.mean());
        write_vector(out, comp.signal_variances());
        write_scalar<double>(out, comp.noise_variance());
        write_matrix_cols(out, comp.basis());
    }
}

// A basis stored by this library reads back bitwise orthonormal; foreign
// files get a small repair window before rejection.
constexpr double kReadOrthoTol = 1e-8;

HdGmmModel read_model_body(std::istream& in) {
    const auto K = read_scalar<std::uint32_t>(in);
    const auto M = read_scalar<std::uint32_t>(in);
    const auto d = read_scalar<std::uint32_t>(in);
    if (K == 0 || K > kMaxComponents || M < 2 || M > kMaxDim || d == 0 || d >= M) {
        throw FormatError("model header out of range");
    }
    std::vector<Component> components;
    components.reserve(K);
    for (std::uint32_t k = 0; k < K; ++k) {
        const double weight = read_scalar<double>(in);
        Vector mean = read_vector(in, M);
        Vector a = read_vector(in, d);
        const double b = read_scalar<double>(in);
        Matrix basis = read_matrix_cols(in, M, d);
        const double ortho_err =
            (basis.transpose() * basis - Matrix::Identity(d, d)).norm();
        if (!std::isfinite(ortho_err) || ortho_err > kReadOrthoTol) {
            throw FormatError("component " + std::to_string(k) +
                              ": basis is not orthonormal");
        }
        if (ortho_err > Component::kOrthoTol / 10.0) {
            // Re-orthonormalize, keeping each column's direction.
            Eigen::HouseholderQR<Matrix> qr(basis);
            Matrix q = qr.householderQ() * Matrix::Identity(M, d);
            const Matrix r = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
            for (std::uint32_t j = 0; j < d; ++j) {
                if (r(j, j) < 0.0) q.col(j) = -q.col(j);
            }
            basis = std::move(q);
        }
        try {
            components.emplace_back(weight, std::move(mean), std::move(a), b,
                                    std::move(basis));
        } catch (const std::invalid_argument& e) {
            throw FormatError("component " + std::to_string(k) + ": " + e.what());
        }
    }
    try {
        return HdGmmModel(std::move(components));
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
}

void check_at_end(std::istream& in, const char* what) {
    in.peek();
    if (!in.eof()) throw FormatError(std::string(what) + ": trailing bytes after payload");
}

void write_suffstats_body(std::ostream& out, const SuffStats& stats, Index M) {
    write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(stats.component_count()));
    write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(M));
    write_scalar<std::uint64_t>(out, stats.step);
    for (Index k = 0; k < stats.component_count(); ++k) {
        write_scalar<double>(out, stats.s0[static_cast<std::size_t>(k)]);
        write_vector(out, stats.s1[static_cast<std::size_t>(k)]);
        write_matrix_cols(out, stats.S2[static_cast<std::size_t>(k)]);
    }
}

SuffStats read_suffstats_body(std::istream& in) {
    const auto K = read_scalar<std::uint32_t>(in);
    const auto M = read_scalar<std::uint32_t>(in);
    if (K == 0 || K > kMaxComponents || M == 0 || M > kMaxDim) {
        throw FormatError("checkpoint statistics header out of range");
    }
    SuffStats stats(K, M);
    stats.step = read_scalar<std::uint64_t>(in);
    for (std::uint32_t k = 0; k < K; ++k) {
        stats.s0[k] = read_scalar<double>(in);
        if (!std::isfinite(stats.s0[k]) || stats.s0[k] < 0.0) {
            throw FormatError("checkpoint statistics: negative or non-finite mass");
        }
        stats.s1[k] = read_vector(in, M);
        stats.S2[k] = read_matrix_cols(in, M, M);
        if (!stats.s1[k].allFinite() || !stats.S2[k].allFinite()) {
            throw FormatError("checkpoint statistics: non-finite moment");
        }
    }
    return stats;
}

void peek_magic(std::ifstream& in, char (&magic)[4]) {
    read_raw(in, magic, 4);
    in.seekg(0);
}

} // namespace

void write_dictionary(const std::string& path, const Dictionary& dict, int sample_width) {
    check_sample_width(sample_width, "write_dictionary");
    validate(dict);
    std::ofstream out = open_out(path);
    write_dictionary_header(out, static_cast<std::uint64_t>(dict.count()),
                            dict.signal_dim(), dict.label_names, sample_width);
    write_matrix_rows(out, dict.signals, sample_width);
    write_matrix_rows(out, dict.labels, sample_width);
    out.flush();
    if (!out) throw IoError("write failed for '" + path + "'");
}

Dictionary read_dictionary(const std::string& path) {
    std::ifstream in = open_in(path);
    DictionaryInfo info;
    try {
        info = read_dictionary_header(in);
        check_dictionary_payload(in, info);
        Dictionary dict;
        dict.signals = read_matrix_rows(in, static_cast<Index>(info.count),
                                        info.signal_dim, info.sample_width);
        dict.labels = read_matrix_rows(in, static_cast<Index>(info.count),
                                       info.param_dim, info.sample_width);
        dict.label_names = info.label_names;
        validate(dict);
        return dict;
    } catch (const std::invalid_argument& e) {
        throw FormatError("'" + path + "': " + e.what());
    } catch (const FormatError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

DictionaryInfo read_dictionary_info(const std::string& path) {
    std::ifstream in = open_in(path);
    try {
        DictionaryInfo info = read_dictionary_header(in);
        check_dictionary_payload(in, info);
        return info;
    } catch (const FormatError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

std::pair<Matrix, std::vector<std::string>> read_labels(const std::string& path) {
    std::ifstream in = open_in(path);
    try {
        const DictionaryInfo info = read_dictionary_header(in);
        check_dictionary_payload(in, info);
        const std::uint64_t signal_bytes =
            info.count * info.signal_dim * static_cast<std::uint64_t>(info.sample_width);
        in.seekg(static_cast<std::streamoff>(info.payload_offset + signal_bytes));
        Matrix labels = read_matrix_rows(in, static_cast<Index>(info.count),
                                         info.param_dim, info.sample_width);
        return {std::move(labels), info.label_names};
    } catch (const FormatError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

ChunkReader::ChunkReader(const std::string& path, Index chunk_records, bool with_labels)
    : stream_(open_in(path)), chunk_records_(chunk_records), with_labels_(with_labels) {
    if (chunk_records < 1) {
        throw std::invalid_argument("ChunkReader: chunk_records must be positive");
    }
    try {
        info_ = read_dictionary_header(stream_);
        check_dictionary_payload(stream_, info_);
    } catch (const FormatError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

std::optional<std::pair<Matrix, Matrix>> ChunkReader::next(Index max_rows) {
    if (cursor_ >= info_.count) return std::nullopt;
    Index rows = std::min<Index>(chunk_records_, static_cast<Index>(info_.count - cursor_));
    if (max_rows > 0) rows = std::min(rows, max_rows);

    const auto width = static_cast<std::uint64_t>(info_.sample_width);
    const std::uint64_t signal_offset =
        info_.payload_offset + cursor_ * info_.signal_dim * width;
    stream_.seekg(static_cast<std::streamoff>(signal_offset));
    Matrix signals = read_matrix_rows(stream_, rows, info_.signal_dim, info_.sample_width);

    Matrix labels(rows, 0);
    if (with_labels_ && info_.param_dim > 0) {
        const std::uint64_t label_offset = info_.payload_offset +
                                           info_.count * info_.signal_dim * width +
                                           cursor_ * info_.param_dim * width;
        stream_.seekg(static_cast<std::streamoff>(label_offset));
        labels = read_matrix_rows(stream_, rows, info_.param_dim, info_.sample_width);
    }
    cursor_ += static_cast<std::uint64_t>(rows);
    return std::make_pair(std::move(signals), std::move(labels));
}

void ChunkReader::reset() {
    stream_.clear();
    cursor_ = 0;
}

FileChunkSource::FileChunkSource(const std::string& path, Index chunk_records)
    : reader_(path, chunk_records, /*with_labels=*/false) {}

std::optional<Matrix> FileChunkSource::next(Index max_records) {
    auto block = reader_.next(max_records);
    if (!block) return std::nullopt;
    return std::move(block->first);
}

DictionaryWriter::DictionaryWriter(const std::string& path, Index signal_dim,
                                   std::vector<std::string> label_names, int sample_width)
    : stream_(open_out(path)),
      path_(path),
      signal_dim_(signal_dim),
      param_dim_(static_cast<Index>(label_names.size())),
      sample_width_(sample_width) {
    check_sample_width(sample_width, "DictionaryWriter");
    if (signal_dim < 1) {
        throw std::invalid_argument("DictionaryWriter: signal dimension must be positive");
    }
    // Count is patched in finish() once it is known.
    write_dictionary_header(stream_, 0, signal_dim_, label_names, sample_width_);
}

DictionaryWriter::~DictionaryWriter() {
    // Abandoned writers leave a header with count 0 and a mismatched
    // payload, which readers reject; finish() must be called explicitly.
}

void DictionaryWriter::append(const Matrix& signals, const Matrix& labels) {
    if (finished_) throw std::logic_error("DictionaryWriter: append after finish");
    if (signals.cols() != signal_dim_ || labels.cols() != param_dim_ ||
        signals.rows() != labels.rows()) {
        throw std::invalid_argument("DictionaryWriter: block shape mismatch");
    }
    write_matrix_rows(stream_, signals, sample_width_);
    for (Index r = 0; r < labels.rows(); ++r) {
        for (Index c = 0; c < labels.cols(); ++c) {
            const double v = labels(r, c);
            if (!std::isfinite(v)) {
                throw std::invalid_argument("refusing to write non-finite value");
            }
            label_buffer_.push_back(v);
        }
    }
    count_ += static_cast<std::uint64_t>(signals.rows());
}

void DictionaryWriter::finish() {
    if (finished_) return;
    finished_ = true;
    if (count_ == 0) throw std::invalid_argument("DictionaryWriter: no records appended");
    Matrix labels(static_cast<Index>(count_), param_dim_);
    for (Index r = 0; r < labels.rows(); ++r) {
        for (Index c = 0; c < param_dim_; ++c) {
            labels(r, c) = label_buffer_[static_cast<std::size_t>(r * param_dim_ + c)];
        }
    }
    write_matrix_rows(stream_, labels, sample_width_);
    stream_.seekp(static_cast<std::streamoff>(kCountOffset));
    write_scalar<std::uint64_t>(stream_, count_);
    stream_.flush();
    if (!stream_) throw IoError("write failed for '" + path_ + "'");
    stream_.close();
}

void write_model(const std::string& path, const HdGmmModel& model) {
    std::ofstream out = open_out(path);
    write_magic(out, kModelMagic);
    write_scalar<std::uint16_t>(out, kFormatVersion);
    write_model_body(out, model);
    out.flush();
    if (!out) throw IoError("write failed for '" + path + "'");
}

HdGmmModel read_model(const std::string& path) {
    std::ifstream in = open_in(path);
    try {
        expect_magic(in, kModelMagic, "model");
        expect_version(in);
        HdGmmModel model = read_model_body(in);
        check_at_end(in, "model");
        return model;
    } catch (const FormatError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

void write_compressed(const std::string& path, const CompressedDataset& cds,
                      int coord_width) {
    check_sample_width(coord_width, "write_compressed");
    validate(cds);
    if (cds.model.component_count() >
        static_cast<Index>(std::numeric_limits<std::uint16_t>::max()) + 1) {
        throw std::invalid_argument("write_compressed: component count exceeds u16 ids");
    }
    std::ofstream out = open_out(path);
    write_magic(out, kCompressedMagic);
    write_scalar<std::uint16_t>(out, kFormatVersion);
    write_model_body(out, cds.model);
    write_scalar<std::uint64_t>(out, static_cast<std::uint64_t>(cds.count()));
    write_scalar<std::uint8_t>(out, static_cast<std::uint8_t>(coord_width));
    for (const CompressedRecord& rec : cds.records) {
        write_scalar<std::uint16_t>(out, rec.cluster_id);
        Matrix row(1, rec.coords.size());
        row.row(0) = rec.coords.transpose();
        write_matrix_rows(out, row, coord_width);
    }
    out.flush();
    if (!out) throw IoError("write failed for '" + path + "'");
}

CompressedDataset read_compressed(const std::string& path) {
    std::ifstream in = open_in(path);
    try {
        expect_magic(in, kCompressedMagic, "compressed dataset");
        expect_version(in);
        HdGmmModel model = read_model_body(in);
        const auto count = read_scalar<std::uint64_t>(in);
        const auto width = read_scalar<std::uint8_t>(in);
        if (count > kMaxRecords) throw FormatError("record count out of range");
        if (width != 4 && width != 8) {
            throw FormatError("coordinate width must be 4 or 8, got " + std::to_string(width));
        }
        const Index d = model.reduced_dim();
        const Index K = model.component_count();
        std::vector<CompressedRecord> records;
        records.reserve(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            CompressedRecord rec;
            rec.cluster_id = read_scalar<std::uint16_t>(in);
            if (static_cast<Index>(rec.cluster_id) >= K) {
                throw FormatError("record " + std::to_string(i) +
                                  " references component " + std::to_string(rec.cluster_id) +
                                  " of " + std::to_string(K));
            }
            rec.coords = read_matrix_rows(in, 1, d, width).row(0).transpose();
            records.push_back(std::move(rec));
        }
        check_at_end(in, "compressed dataset");
        return CompressedDataset{std::move(model), std::move(records)};
    } catch (const FormatError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

void write_checkpoint(const std::string& path, const HdGmmModel& model,
                      const SuffStats& stats) {
    if (stats.component_count() != model.component_count()) {
        throw std::invalid_argument("write_checkpoint: component count mismatch");
    }
    for (Index k = 0; k < stats.component_count(); ++k) {
        if (stats.s1[static_cast<std::size_t>(k)].size() != model.ambient_dim()) {
            throw std::invalid_argument("write_checkpoint: statistics dimension mismatch");
        }
    }
    std::ofstream out = open_out(path);
    write_magic(out, kCheckpointMagic);
    write_scalar<std::uint16_t>(out, kFormatVersion);
    write_model_body(out, model);
    write_suffstats_body(out, stats, model.ambient_dim());
    out.flush();
    if (!out) throw IoError("write failed for '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in = open_in(path);
    try {
        expect_magic(in, kCheckpointMagic, "checkpoint");
        expect_version(in);
        HdGmmModel model = read_model_body(in);
        SuffStats stats = read_suffstats_body(in);
        if (stats.component_count() != model.component_count() ||
            stats.s1.front().size() != model.ambient_dim()) {
            throw FormatError("checkpoint statistics do not match the model");
        }
        check_at_end(in, "checkpoint");
        return Checkpoint{std::move(model), std::move(stats)};
    } catch (const FormatError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

std::string describe_file(const std::string& path) {
    std::ifstream in = open_in(path);
    char magic[4];
    try {
        peek_magic(in, magic);
        std::ostringstream text;
        if (std::memcmp(magic, kDictMagic, 4) == 0) {
            in.seekg(0);
            const DictionaryInfo info = read_dictionary_header(in);
            check_dictionary_payload(in, info);
            text << "dictionary: " << info.count << " records, signal dim "
                 << info.signal_dim << ", " << info.param_dim << " labels";
            if (!info.label_names.empty()) {
                text << " (";
                for (std::size_t p = 0; p < info.label_names.size(); ++p) {
                    if (p > 0) text << ", ";
                    text << info.label_names[p];
                }
                text << ")";
            }
            text << ", " << static_cast<int>(info.sample_width) << "-byte samples";
        } else if (std::memcmp(magic, kModelMagic, 4) == 0) {
            const HdGmmModel model = read_model(path);
            text << "model: K=" << model.component_count() << ", M=" << model.ambient_dim()
                 << ", d=" << model.reduced_dim();
        } else if (std::memcmp(magic, kCompressedMagic, 4) == 0) {
            const CompressedDataset cds = read_compressed(path);
            text << "compressed dataset: " << cds.count() << " records, model K="
                 << cds.model.component_count() << ", M=" << cds.model.ambient_dim()
                 << ", d=" << cds.model.reduced_dim();
        } else if (std::memcmp(magic, kCheckpointMagic, 4) == 0) {
            const Checkpoint ckpt = read_checkpoint(path);
            text << "checkpoint: step " << ckpt.stats.step << ", model K="
                 << ckpt.model.component_count() << ", M=" << ckpt.model.ambient_dim()
                 << ", d=" << ckpt.model.reduced_dim();
        } else {
            throw FormatError("unrecognized file magic");
        }
        return text.str();
    } catch (const FormatError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

Matrix add_noise(const Matrix& signals, double snr_db, std::uint64_t seed) {
    if (!std::isfinite(snr_db)) {
        throw std::invalid_argument("add_noise: snr must be finite");
    }
    Rng rng(seed);
    Matrix noisy = signals;
    const double m = static_cast<double>(signals.cols());
    for (Index r = 0; r < signals.rows(); ++r) {
        const double rms = signals.row(r).norm() / std::sqrt(m);
        const double sigma = rms * std::pow(10.0, -snr_db / 20.0);
        for (Index c = 0; c < signals.cols(); ++c) {
            noisy(r, c) += sigma * rng.normal();
        }
    }
    return noisy;
}

} // namespace hdgmm
