#ifndef HDGMM_IO_HPP
#define HDGMM_IO_HPP

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "hdgmm/dictionary.hpp"
#include "hdgmm/em_online.hpp"
#include "hdgmm/model.hpp"
#include "hdgmm/reduction.hpp"

namespace hdgmm {

// All formats are little-endian IEEE-754 with length-prefixed (u16) UTF-8
// strings. Magics: HDGF dictionary, HDGM model, HDGC compressed dataset,
// HDGK checkpoint.

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed content: bad magic, version, truncation, invariant violations.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr std::uint16_t kFormatVersion = 1;

struct DictionaryInfo {
    std::uint64_t count = 0;
    std::uint32_t signal_dim = 0;
    std::uint32_t param_dim = 0;
    std::vector<std::string> label_names;
    std::uint8_t sample_width = 8;
    std::uint64_t payload_offset = 0;
};

// Dictionary file: header, then row-major signals, then row-major labels,
// both at the declared sample width (4 or 8 bytes). Writing refuses
// non-finite values.
void write_dictionary(const std::string& path, const Dictionary& dict, int sample_width = 8);
Dictionary read_dictionary(const std::string& path);
DictionaryInfo read_dictionary_info(const std::string& path);

// Labels and names only; skips the signal block.
std::pair<Matrix, std::vector<std::string>> read_labels(const std::string& path);

// Streams a dictionary file in blocks of at most `chunk_records` rows.
// Peak memory is O(B (M + P)) regardless of file size. Single-cursor: not
// safe to share across workers, but several readers may open one file.
class ChunkReader {
public:
    // with_labels = false skips the label block entirely; next() then
    // returns empty B x 0 label matrices.
    ChunkReader(const std::string& path, Index chunk_records, bool with_labels = true);

    const DictionaryInfo& info() const { return info_; }

    // Next block of (signals, labels) in file order, at most
    // min(chunk_records, max_rows) rows (max_rows <= 0 means no extra cap);
    // nullopt at end.
    std::optional<std::pair<Matrix, Matrix>> next(Index max_rows = 0);
    void reset();

private:
    std::ifstream stream_;
    DictionaryInfo info_;
    Index chunk_records_;
    bool with_labels_;
    std::uint64_t cursor_ = 0;
};

// ChunkSource over the signal block of a dictionary file, for streaming fits.
class FileChunkSource : public ChunkSource {
public:
    FileChunkSource(const std::string& path, Index chunk_records);
    std::optional<Matrix> next(Index max_records) override;
    const DictionaryInfo& info() const { return reader_.info(); }
    void reset() { reader_.reset(); }

private:
    ChunkReader reader_;
};

// Incremental dictionary writer for generators that produce records in
// blocks: signal rows are appended as they arrive, labels are buffered
// (they are small next to the signals) and flushed on finish(), when the
// record count in the header is patched.
class DictionaryWriter {
public:
    DictionaryWriter(const std::string& path, Index signal_dim,
                     std::vector<std::string> label_names, int sample_width = 8);
    ~DictionaryWriter();

    DictionaryWriter(const DictionaryWriter&) = delete;
    DictionaryWriter& operator=(const DictionaryWriter&) = delete;

    void append(const Matrix& signals, const Matrix& labels);
    void finish();

    std::uint64_t count() const { return count_; }

private:
    std::ofstream stream_;
    std::string path_;
    Index signal_dim_;
    Index param_dim_;
    int sample_width_;
    std::uint64_t count_ = 0;
    std::vector<double> label_buffer_; // row-major
    bool finished_ = false;
};

// Model file: header (K, M, d) then per component pi, mu, a, b and the
// column-major basis, all f64. Reading re-validates the model invariants.
void write_model(const std::string& path, const HdGmmModel& model);
HdGmmModel read_model(const std::string& path);

// Compressed dataset: embedded model followed by per-record cluster id
// (u16) and d coordinates at the declared width.
void write_compressed(const std::string& path, const CompressedDataset& cds,
                      int coord_width = 8);
CompressedDataset read_compressed(const std::string& path);

struct Checkpoint {
    HdGmmModel model;
    SuffStats stats;
};

void write_checkpoint(const std::string& path, const HdGmmModel& model,
                      const SuffStats& stats);
Checkpoint read_checkpoint(const std::string& path);

// Header summary of any recognized file, for diagnostics.
std::string describe_file(const std::string& path);

// Additive white Gaussian noise per signal with sigma_i chosen so that
// 20 log10(rms_i / sigma_i) = snr_db, rms_i = |y_i| / sqrt(M).
Matrix add_noise(const Matrix& signals, double snr_db, std::uint64_t seed);

} // namespace hdgmm

#endif
