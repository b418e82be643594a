#ifndef HDGMM_MATCHING_HPP
#define HDGMM_MATCHING_HPP

#include <vector>

#include "hdgmm/dictionary.hpp"
#include "hdgmm/model.hpp"
#include "hdgmm/reduction.hpp"

namespace hdgmm {

// Best-matching dictionary row for one query. `score` is the signed inner
// product for the full and SVD paths, and the coordinate-space Euclidean
// distance for the cluster-routed path.
struct MatchResult {
    Index index = 0;
    double score = 0.0;
    Vector params;
};

// Each row scaled to unit Euclidean norm; throws naming the row on a
// zero-norm row.
Matrix normalize_signals(const Matrix& signals);
Vector normalize_signal(const Vector& signal);

// argmax_i <normalize(query), normalize(signal_i)>, ties toward the lowest
// index.
MatchResult full_match(const Dictionary& dict, const Vector& query);

// Rank-d truncated SVD of the row-normalized signal matrix, no column
// centering; coordinates are rows of normalized_signals * basis.
struct SvdCompressed {
    Matrix basis;       // M x d, orthonormal columns
    Matrix coords;      // N x d
    Vector column_mean; // kept for layout documentation; always zero here
    std::vector<double> singular_values;
};

SvdCompressed svd_compress(const Dictionary& dict, Index d);

// Rank-d approximation of normalized signal i.
Vector svd_reconstruct(const SvdCompressed& sc, Index i);

// argmax of inner products between the record coordinates and the projected
// normalized query.
MatchResult svd_match(const SvdCompressed& sc, const Matrix& labels, const Vector& query);

// Cluster-routed matching: ranks components by responsibility of the
// normalized query, scans records of the top_n most responsible clusters
// and returns the record whose stored coordinates are nearest (Euclidean)
// to the query's projection in the same cluster. Holds references only;
// both arguments must outlive the matcher.
class HdgmmMatcher {
public:
    HdgmmMatcher(const CompressedDataset& compressed, const Matrix& labels);

    MatchResult match(const Vector& query, Index top_n = 1) const;

private:
    const CompressedDataset& compressed_;
    const Matrix& labels_;
    std::vector<std::vector<Index>> buckets_; // record indices per cluster
};

// One-shot convenience wrapper around HdgmmMatcher.
MatchResult hdgmm_match(const CompressedDataset& compressed, const Matrix& labels,
                        const Vector& query, Index top_n = 1);

// Per-parameter mean absolute difference between two Q x P label matrices.
Vector param_mae(const Matrix& estimated, const Matrix& reference);

} // namespace hdgmm

#endif
