#include "hdgmm/reduction.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "hdgmm/parallel.hpp"

namespace hdgmm {

void validate(const CompressedDataset& cds) {
    const Index k_count = cds.model.component_count();
    const Index d = cds.model.reduced_dim();
    for (std::size_t i = 0; i < cds.records.size(); ++i) {
        const auto& rec = cds.records[i];
        if (rec.cluster_id >= k_count) {
            throw std::invalid_argument("CompressedDataset: record " + std::to_string(i) +
                                        " references component " + std::to_string(rec.cluster_id));
        }
        if (rec.coords.size() != d) {
            throw std::invalid_argument("CompressedDataset: record " + std::to_string(i) +
                                        " has " + std::to_string(rec.coords.size()) +
                                        " coordinates, expected " + std::to_string(d));
        }
    }
}

Vector project(const Component& comp, const Vector& y) {
    if (y.size() != comp.ambient_dim()) {
        throw std::invalid_argument("project: dimension mismatch");
    }
    return comp.basis().transpose() * (y - comp.mean());
}

Vector reconstruct(const Component& comp, const Vector& coords) {
    if (coords.size() != comp.reduced_dim()) {
        throw std::invalid_argument("reconstruct: coordinate dimension mismatch");
    }
    return comp.basis() * coords + comp.mean();
}

CompressedRecord reduce_record(const HdGmmModel& model, const Vector& y) {
    const Vector r = responsibilities(model, y);
    Index best = 0;
    for (Index k = 1; k < r.size(); ++k) {
        if (r[k] > r[best]) best = k; // ties keep the lowest index
    }
    CompressedRecord rec;
    rec.cluster_id = static_cast<std::uint16_t>(best);
    rec.coords = project(model.component(best), y);
    return rec;
}

Vector reconstruct_record(const HdGmmModel& model, const CompressedRecord& rec) {
    if (rec.cluster_id >= model.component_count()) {
        throw std::invalid_argument("reconstruct_record: cluster id out of range");
    }
    return reconstruct(model.component(rec.cluster_id), rec.coords);
}

CompressedDataset reduce_dataset(const HdGmmModel& model, const Matrix& data, int threads) {
    if (data.cols() != model.ambient_dim()) {
        throw std::invalid_argument("reduce_dataset: data dimension mismatch");
    }
    CompressedDataset cds{model, std::vector<CompressedRecord>(static_cast<std::size_t>(data.rows()))};
    parallel_chunks(data.rows(), threads, [&](Index begin, Index end) {
        for (Index i = begin; i < end; ++i) {
            cds.records[static_cast<std::size_t>(i)] = reduce_record(model, data.row(i).transpose());
        }
    });
    return cds;
}

double reconstruction_mae(const Matrix& data, const CompressedDataset& compressed, int threads) {
    if (data.rows() != compressed.count()) {
        throw std::invalid_argument("reconstruction_mae: record count mismatch (" +
                                    std::to_string(data.rows()) + " vs " +
                                    std::to_string(compressed.count()) + ")");
    }
    if (data.cols() != compressed.model.ambient_dim()) {
        throw std::invalid_argument("reconstruction_mae: dimension mismatch");
    }
    const Index n = data.rows();
    Vector per_row(n);
    parallel_chunks(n, threads, [&](Index begin, Index end) {
        for (Index i = begin; i < end; ++i) {
            const Vector recon =
                reconstruct_record(compressed.model, compressed.records[static_cast<std::size_t>(i)]);
            per_row[i] = (data.row(i).transpose() - recon).cwiseAbs().sum();
        }
    });
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += per_row[i];
    return total / (static_cast<double>(n) * static_cast<double>(data.cols()));
}

std::uint64_t compressed_size_bytes(std::uint64_t count, Index d, int coord_bytes,
                                    bool include_ids) {
    if (d <= 0 || (coord_bytes != 4 && coord_bytes != 8)) {
        throw std::invalid_argument("compressed_size_bytes: d must be positive and coord_bytes 4 or 8");
    }
    std::uint64_t bytes = count * static_cast<std::uint64_t>(d) *
                          static_cast<std::uint64_t>(coord_bytes);
    if (include_ids) bytes += count * 2;
    return bytes;
}

CompressionReport compression_report(std::uint64_t count, Index ambient_dim, Index d,
                                     int coord_bytes,
                                     std::optional<double> stated_original_bytes) {
    CompressionReport rep;
    rep.compressed_bytes = compressed_size_bytes(count, d, coord_bytes, false);
    rep.raw_original_bytes = count * static_cast<std::uint64_t>(ambient_dim) *
                             static_cast<std::uint64_t>(coord_bytes);
    rep.ratio_vs_raw = 1.0 - static_cast<double>(rep.compressed_bytes) /
                                 static_cast<double>(rep.raw_original_bytes);
    if (stated_original_bytes) {
        rep.ratio_vs_stated = 1.0 - static_cast<double>(rep.compressed_bytes) /
                                        *stated_original_bytes;
        const double raw = static_cast<double>(rep.raw_original_bytes);
        if (std::abs(*stated_original_bytes - raw) > 0.05 * raw) {
            rep.note = "stated original size differs from count*M*" +
                       std::to_string(coord_bytes) +
                       " bytes; both ratios reported";
        }
    }
    return rep;
}

} // namespace hdgmm
