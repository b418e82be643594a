#include "hdgmm/matching.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace hdgmm {

namespace {

void check_query_dim(Index got, Index want, const char* where) {
    if (got != want) {
        throw std::invalid_argument(std::string(where) + ": query has dimension " +
                                    std::to_string(got) + ", expected " +
                                    std::to_string(want));
    }
}

} // namespace

Matrix normalize_signals(const Matrix& signals) {
    Matrix out(signals.rows(), signals.cols());
    for (Index i = 0; i < signals.rows(); ++i) {
        const double norm = signals.row(i).norm();
        if (norm == 0.0 || !std::isfinite(norm)) {
            throw std::invalid_argument("normalize_signals: row " + std::to_string(i) +
                                        " has zero or non-finite norm");
        }
        out.row(i) = signals.row(i) / norm;
    }
    return out;
}

Vector normalize_signal(const Vector& signal) {
    const double norm = signal.norm();
    if (norm == 0.0 || !std::isfinite(norm)) {
        throw std::invalid_argument("normalize_signal: zero or non-finite norm");
    }
    return signal / norm;
}

MatchResult full_match(const Dictionary& dict, const Vector& query) {
    if (dict.count() == 0) throw std::invalid_argument("full_match: empty dictionary");
    check_query_dim(query.size(), dict.signal_dim(), "full_match");
    const Vector q = normalize_signal(query);

    Index best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < dict.count(); ++i) {
        const double norm = dict.signals.row(i).norm();
        if (norm == 0.0) {
            throw std::invalid_argument("full_match: dictionary row " + std::to_string(i) +
                                        " has zero norm");
        }
        const double score = dict.signals.row(i).dot(q) / norm;
        if (score > best_score) { // strict: ties keep the lowest index
            best_score = score;
            best = i;
        }
    }
    return MatchResult{best, best_score, dict.labels.row(best).transpose()};
}

SvdCompressed svd_compress(const Dictionary& dict, Index d) {
    validate(dict);
    if (d < 1 || d > std::min(dict.count(), dict.signal_dim())) {
        throw std::invalid_argument("svd_compress: need 1 <= d <= min(N, M), got d=" +
                                    std::to_string(d));
    }
    const Matrix normalized = normalize_signals(dict.signals);
    Eigen::BDCSVD<Matrix> svd(normalized, Eigen::ComputeThinV);

    SvdCompressed sc;
    sc.basis = svd.matrixV().leftCols(d);
    // Sign convention: largest-magnitude entry of each direction positive.
    for (Index c = 0; c < d; ++c) {
        Index arg = 0;
        sc.basis.col(c).cwiseAbs().maxCoeff(&arg);
        if (sc.basis(arg, c) < 0.0) sc.basis.col(c) = -sc.basis.col(c);
    }
    sc.coords = normalized * sc.basis;
    sc.column_mean = Vector::Zero(dict.signal_dim());
    sc.singular_values.assign(svd.singularValues().data(),
                              svd.singularValues().data() + svd.singularValues().size());
    return sc;
}

Vector svd_reconstruct(const SvdCompressed& sc, Index i) {
    if (i < 0 || i >= sc.coords.rows()) {
        throw std::invalid_argument("svd_reconstruct: record index out of range");
    }
    return sc.basis * sc.coords.row(i).transpose() + sc.column_mean;
}

MatchResult svd_match(const SvdCompressed& sc, const Matrix& labels, const Vector& query) {
    if (sc.coords.rows() == 0) throw std::invalid_argument("svd_match: empty coordinates");
    if (labels.rows() != sc.coords.rows()) {
        throw std::invalid_argument("svd_match: label rows do not match coordinate rows");
    }
    check_query_dim(query.size(), sc.basis.rows(), "svd_match");
    const Vector qc = sc.basis.transpose() * normalize_signal(query);

    Index best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < sc.coords.rows(); ++i) {
        const double score = sc.coords.row(i).dot(qc);
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return MatchResult{best, best_score, labels.row(best).transpose()};
}

HdgmmMatcher::HdgmmMatcher(const CompressedDataset& compressed, const Matrix& labels)
    : compressed_(compressed), labels_(labels) {
    validate(compressed);
    if (labels.rows() != compressed.count()) {
        throw std::invalid_argument("HdgmmMatcher: label rows (" +
                                    std::to_string(labels.rows()) +
                                    ") do not match record count (" +
                                    std::to_string(compressed.count()) + ")");
    }
    buckets_.resize(static_cast<std::size_t>(compressed.model.component_count()));
    for (Index i = 0; i < compressed.count(); ++i) {
        buckets_[compressed.records[static_cast<std::size_t>(i)].cluster_id].push_back(i);
    }
}

MatchResult HdgmmMatcher::match(const Vector& query, Index top_n) const {
    const HdGmmModel& model = compressed_.model;
    if (top_n < 1) throw std::invalid_argument("hdgmm_match: top_n must be positive");
    check_query_dim(query.size(), model.ambient_dim(), "hdgmm_match");

    const Vector q = normalize_signal(query);
    const Vector resp = responsibilities(model, q);

    // Clusters ranked by responsibility, ties toward the lower index.
    const Index K = model.component_count();
    std::vector<Index> order(static_cast<std::size_t>(K));
    for (Index k = 0; k < K; ++k) order[static_cast<std::size_t>(k)] = k;
    std::stable_sort(order.begin(), order.end(),
                     [&](Index lhs, Index rhs) { return resp(lhs) > resp(rhs); });

    const Index fan_out = std::min(top_n, K);
    Index best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Index rank = 0; rank < fan_out; ++rank) {
        const Index k = order[static_cast<std::size_t>(rank)];
        const auto& bucket = buckets_[static_cast<std::size_t>(k)];
        if (bucket.empty()) continue;
        const Vector qc = project(model.component(k), q);
        for (Index i : bucket) {
            const double dist =
                (compressed_.records[static_cast<std::size_t>(i)].coords - qc).norm();
            // Strict comparisons keep the lowest dictionary index on ties;
            // buckets are scanned in ascending record order but a later
            // cluster may hold a smaller index, hence the second clause.
            if (dist < best_dist || (dist == best_dist && i < best)) {
                best_dist = dist;
                best = i;
            }
        }
    }
    if (best < 0) {
        throw std::runtime_error("hdgmm_match: all " + std::to_string(fan_out) +
                                 " scanned clusters are empty");
    }
    return MatchResult{best, best_dist, labels_.row(best).transpose()};
}

MatchResult hdgmm_match(const CompressedDataset& compressed, const Matrix& labels,
                        const Vector& query, Index top_n) {
    return HdgmmMatcher(compressed, labels).match(query, top_n);
}

Vector param_mae(const Matrix& estimated, const Matrix& reference) {
    if (estimated.rows() != reference.rows() || estimated.cols() != reference.cols()) {
        throw std::invalid_argument("param_mae: shape mismatch");
    }
    if (estimated.rows() == 0) {
        throw std::invalid_argument("param_mae: need at least one row");
    }
    return (estimated - reference).cwiseAbs().colwise().mean().transpose();
}

} // namespace hdgmm
