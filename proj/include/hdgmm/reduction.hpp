#ifndef HDGMM_REDUCTION_HPP
#define HDGMM_REDUCTION_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hdgmm/model.hpp"

namespace hdgmm {

// One record after cluster-wise reduction: the most probable component and
// the d coordinates of the record in that component's centered basis.
struct CompressedRecord {
    std::uint16_t cluster_id = 0;
    Vector coords;
};

struct CompressedDataset {
    HdGmmModel model;
    std::vector<CompressedRecord> records;

    Index count() const { return static_cast<Index>(records.size()); }
};

// Throws if any record references a component outside the model or has the
// wrong number of coordinates.
void validate(const CompressedDataset& cds);

// y_hat = W^T (y - mu).
Vector project(const Component& comp, const Vector& y);

// y_tilde = W coords + mu.
Vector reconstruct(const Component& comp, const Vector& coords);

// Assigns y to its highest-responsibility component (ties toward the lowest
// index) and projects onto that component's subspace.
CompressedRecord reduce_record(const HdGmmModel& model, const Vector& y);

Vector reconstruct_record(const HdGmmModel& model, const CompressedRecord& rec);

// Row-wise reduction of a full data matrix.
CompressedDataset reduce_dataset(const HdGmmModel& model, const Matrix& data,
                                 int threads = 1);

// Mean absolute entrywise error between data rows and their reconstructions.
double reconstruction_mae(const Matrix& data, const CompressedDataset& compressed,
                          int threads = 1);

// Payload size of the reduced coordinates: count * d * coord_bytes, plus
// count * 2 for the cluster ids when include_ids is set. Matches the record
// layout of the compressed file format.
std::uint64_t compressed_size_bytes(std::uint64_t count, Index d, int coord_bytes,
                                    bool include_ids);

// Compression accounting for a dictionary of `count` signals in dimension
// `ambient_dim`, reduced to d coordinates per signal.
struct CompressionReport {
    std::uint64_t compressed_bytes = 0;
    std::uint64_t raw_original_bytes = 0;     // count * ambient_dim * coord_bytes
    double ratio_vs_raw = 0.0;                // 1 - compressed/raw
    std::optional<double> ratio_vs_stated;    // against a caller-supplied original size
    std::string note;                         // set when the stated size disagrees with raw
};

CompressionReport compression_report(std::uint64_t count, Index ambient_dim, Index d,
                                     int coord_bytes,
                                     std::optional<double> stated_original_bytes = std::nullopt);

} // namespace hdgmm

#endif
