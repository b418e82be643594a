#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "hdgmm/dictionary.hpp"
#include "hdgmm/em_batch.hpp"
#include "hdgmm/io.hpp"
#include "hdgmm/matching.hpp"
#include "hdgmm/reduction.hpp"
#include "hdgmm/rng.hpp"
#include "hdgmm/synthetic.hpp"
#include "oracles.hpp"

using hdgmm::Dictionary;
using hdgmm::Index;
using hdgmm::Matrix;
using hdgmm::Vector;

namespace {

Dictionary labelled_dictionary(const Matrix& signals) {
    Dictionary dict;
    dict.signals = signals;
    dict.labels = Matrix(signals.rows(), 1);
    for (Index i = 0; i < signals.rows(); ++i) dict.labels(i, 0) = static_cast<double>(i);
    dict.label_names = {"row"};
    return dict;
}

Dictionary random_unit_dictionary(hdgmm::Rng& rng, Index n, Index m) {
    return labelled_dictionary(hdgmm::normalize_signals(oracle::random_gaussian(rng, n, m)));
}

} // namespace

TEST_SUITE("matching") {

TEST_CASE("normalization: hand value, idempotence, zero-row diagnostics") {
    Matrix signals(2, 2);
    signals << 3.0, 4.0, 0.0, 2.0;
    const Matrix unit = hdgmm::normalize_signals(signals);
    CHECK(unit(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(unit(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(unit(1, 1) == doctest::Approx(1.0).epsilon(1e-15));

    // Normalizing twice changes nothing beyond rounding.
    const Matrix twice = hdgmm::normalize_signals(unit);
    CHECK((twice - unit).cwiseAbs().maxCoeff() <= 1e-15);

    Matrix with_zero(3, 2);
    with_zero << 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
    try {
        hdgmm::normalize_signals(with_zero);
        FAIL("expected a throw for the zero row");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }

    const Vector v = hdgmm::normalize_signal((Vector(2) << 3.0, 4.0).finished());
    CHECK(v(0) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("full_match: self-queries, tie-break and sign convention") {
    hdgmm::Rng rng(120);
    const Dictionary dict = random_unit_dictionary(rng, 60, 12);
    for (Index i = 0; i < dict.count(); ++i) {
        const auto r = hdgmm::full_match(dict, dict.signals.row(i).transpose());
        CHECK(r.index == i);
        CHECK(r.score == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.params(0) == static_cast<double>(i));
    }

    // Duplicate rows tie; the lower index wins.
    Matrix dup(3, 2);
    dup << 1.0, 0.0, 0.0, 1.0, 1.0, 0.0;
    const Dictionary ties = labelled_dictionary(dup);
    CHECK(hdgmm::full_match(ties, (Vector(2) << 2.0, 0.0).finished()).index == 0);

    // Signed inner product: the negated first axis matches row 1 (the
    // second axis) better than its own mirror image.
    Matrix axes(3, 3);
    axes << 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0;
    const Dictionary basis_dict = labelled_dictionary(axes);
    Vector query(3);
    query << -1.0, 0.3, 0.0;
    const auto flipped = hdgmm::full_match(basis_dict, query);
    CHECK(flipped.index == 1);
}

TEST_CASE("full_match is invariant to positive query rescaling") {
    hdgmm::Rng rng(121);
    const Dictionary dict = random_unit_dictionary(rng, 40, 8);
    const Vector query = oracle::random_gaussian(rng, 8, 1).col(0);
    const auto base = hdgmm::full_match(dict, query);
    const auto scaled = hdgmm::full_match(dict, Vector(1e6 * query));
    const auto shrunk = hdgmm::full_match(dict, Vector(1e-6 * query));
    CHECK(scaled.index == base.index);
    CHECK(shrunk.index == base.index);
}

TEST_CASE("full_match recovers noisy signals at moderate SNR") {
    hdgmm::Rng rng(122);
    const Dictionary dict = random_unit_dictionary(rng, 500, 32);
    const Matrix noisy = hdgmm::add_noise(dict.signals, 20.0, 5);
    int hits = 0;
    for (Index i = 0; i < 100; ++i) {
        if (hdgmm::full_match(dict, noisy.row(i).transpose()).index == i) ++hits;
    }
    // Random 32-dim unit vectors are nearly orthogonal, so SNR 20 leaves
    // the true row dominant almost always.
    CHECK(hits >= 95);
}

TEST_CASE("svd_compress: exactness at full rank and spectral error formula") {
    hdgmm::Rng rng(123);
    const Dictionary dict = random_unit_dictionary(rng, 50, 10);
    const Matrix unit = dict.signals;

    // Rank min(N, M) reproduces every normalized signal.
    const auto full = hdgmm::svd_compress(dict, 10);
    for (Index i = 0; i < dict.count(); ++i) {
        CHECK((hdgmm::svd_reconstruct(full, i) - unit.row(i).transpose()).norm() <= 1e-9);
    }
    CHECK((full.basis.transpose() * full.basis - Matrix::Identity(10, 10)).norm() <= 1e-10);
    CHECK(full.column_mean.norm() == 0.0);

    // Frobenius reconstruction error at rank d equals the tail singular
    // values: sqrt(sum_{j>d} s_j^2).
    const Index d = 4;
    const auto sc = hdgmm::svd_compress(dict, d);
    Matrix recon(unit.rows(), unit.cols());
    for (Index i = 0; i < unit.rows(); ++i) {
        recon.row(i) = hdgmm::svd_reconstruct(sc, i).transpose();
    }
    double tail = 0.0;
    for (std::size_t j = static_cast<std::size_t>(d); j < full.singular_values.size(); ++j) {
        tail += full.singular_values[j] * full.singular_values[j];
    }
    CHECK((unit - recon).norm() == doctest::Approx(std::sqrt(tail)).epsilon(1e-8));

    // Singular values are reported in descending order.
    for (std::size_t j = 1; j < sc.singular_values.size(); ++j) {
        CHECK(sc.singular_values[j - 1] >= sc.singular_values[j]);
    }
}

TEST_CASE("svd_match equals full_match at saturated rank") {
    hdgmm::Rng rng(124);
    const Dictionary dict = random_unit_dictionary(rng, 80, 9);
    const auto sc = hdgmm::svd_compress(dict, 9);
    for (int q = 0; q < 20; ++q) {
        const Vector query = oracle::random_gaussian(rng, 9, 1).col(0);
        const auto by_svd = hdgmm::svd_match(sc, dict.labels, query);
        const auto by_full = hdgmm::full_match(dict, query);
        CHECK(by_svd.index == by_full.index);
        CHECK(by_svd.params(0) == by_full.params(0));
    }
}

TEST_CASE("hdgmm_match: exact self-matching on in-subspace data") {
    // Zero-mean model so the component subspaces are linear: records built
    // inside them stay inside after row normalization, the compressed
    // coordinates capture them losslessly, and every self-query must return
    // its own row. (The matcher normalizes queries, hence the zero mean.)
    const hdgmm::HdGmmModel model = hdgmm::random_model(3, 16, 4, 125, {0.0, 4.0, 0.6, 0.1});
    hdgmm::Rng rng(126);
    const Index per_k = 30;
    Matrix signals(3 * per_k, 16);
    for (Index k = 0; k < 3; ++k) {
        const auto& comp = model.component(k);
        for (Index i = 0; i < per_k; ++i) {
            const Vector coords = 0.5 * oracle::random_gaussian(rng, 4, 1).col(0);
            signals.row(k * per_k + i) = hdgmm::reconstruct(comp, coords).transpose();
        }
    }
    const Matrix unit = hdgmm::normalize_signals(signals);
    const Dictionary dict = labelled_dictionary(unit);
    const hdgmm::CompressedDataset cds = hdgmm::reduce_dataset(model, unit);

    int exact = 0;
    for (Index i = 0; i < dict.count(); ++i) {
        const auto r = hdgmm::hdgmm_match(cds, dict.labels, unit.row(i).transpose(),
                                          model.component_count());
        if (r.index == i) ++exact;
        CHECK(r.score <= 1e-8); // its own coordinates sit at distance ~0
    }
    CHECK(exact == dict.count());
}

TEST_CASE("hdgmm_match: top_n=1 scans only the routed cluster") {
    const hdgmm::HdGmmModel model = hdgmm::random_model(2, 12, 3, 127, {0.0, 4.0, 0.6, 0.1});
    hdgmm::Rng rng(128);
    Matrix signals(40, 12);
    for (Index i = 0; i < 40; ++i) {
        const auto& comp = model.component(i < 20 ? 0 : 1);
        const Vector coords = 0.4 * oracle::random_gaussian(rng, 3, 1).col(0);
        signals.row(i) = hdgmm::reconstruct(comp, coords).transpose();
    }
    const Matrix unit = hdgmm::normalize_signals(signals);
    const Dictionary dict = labelled_dictionary(unit);
    const hdgmm::CompressedDataset cds = hdgmm::reduce_dataset(model, unit);
    hdgmm::HdgmmMatcher matcher(cds, dict.labels);
    for (Index i = 0; i < 40; ++i) {
        const auto narrow = matcher.match(unit.row(i).transpose(), 1);
        // With well-separated subspaces the single routed cluster contains
        // the true record, so widening the scan cannot change the answer.
        const auto wide = matcher.match(unit.row(i).transpose(), 2);
        CHECK(narrow.index == i);
        CHECK(wide.index == i);
    }
}

TEST_CASE("hdgmm_match fan-out raises agreement with full_match on a grid dictionary") {
    // On a dictionary that lives on a smooth low-dimensional manifold the
    // cluster subspaces cover disjoint regions tightly. Disagreements with
    // the exhaustive reference then come from routing the query to the wrong
    // cluster, which a wider scan repairs.
    hdgmm::GridSpec grid;
    grid.t1 = {1.0, 1.0, 1};
    grid.t2 = {0.02, 0.3, 20};
    grid.df = {0.0, 50.0, 21};
    Dictionary dict = hdgmm::gen_synthetic_dictionary(grid, 64);
    dict.signals = hdgmm::normalize_signals(dict.signals);

    hdgmm::BatchConfig cfg;
    cfg.max_iter = 100;
    cfg.rel_tol = 1e-6;
    cfg.seed = 1;
    cfg.threads = 2;
    const auto fit = hdgmm::fit_batch(dict.signals, 4, 8, cfg);
    const hdgmm::CompressedDataset cds = hdgmm::reduce_dataset(fit.first, dict.signals, 2);
    hdgmm::HdgmmMatcher matcher(cds, dict.labels);

    const Matrix queries = hdgmm::add_noise(dict.signals, 15.0, 55);
    std::vector<Index> ref(static_cast<std::size_t>(queries.rows()));
    for (Index i = 0; i < queries.rows(); ++i) {
        ref[static_cast<std::size_t>(i)] = hdgmm::full_match(dict, queries.row(i).transpose()).index;
    }
    std::vector<int> agree(static_cast<std::size_t>(4) + 1, 0);
    for (Index n = 1; n <= 4; ++n) {
        for (Index i = 0; i < queries.rows(); ++i) {
            const auto got = matcher.match(queries.row(i).transpose(), n);
            if (got.index == ref[static_cast<std::size_t>(i)]) ++agree[static_cast<std::size_t>(n)];
        }
    }
    for (Index n = 2; n <= 4; ++n) {
        CHECK(agree[static_cast<std::size_t>(n)] >= agree[static_cast<std::size_t>(n) - 1]);
    }
    // Widening the scan past the first cluster must buy real agreement, and
    // the exhaustive fan-out should track the reference for most queries.
    CHECK(agree[2] > agree[1]);
    CHECK(agree[4] >= 350);
}

TEST_CASE("hdgmm_match fan-out of three beats fan-out of one at scale") {
    // Dictionary of 20,000 signals with 64 samples each; noisy queries at
    // 15 dB. Agreement with the exhaustive reference may not climb at every
    // step, but scanning three clusters never loses to scanning one.
    Dictionary dict = hdgmm::gen_synthetic_dictionary(hdgmm::default_grid(), 64);
    dict.signals = hdgmm::normalize_signals(dict.signals);

    hdgmm::BatchConfig cfg;
    cfg.max_iter = 100;
    cfg.rel_tol = 1e-6;
    cfg.seed = 1;
    cfg.threads = 4;
    const auto fit = hdgmm::fit_batch(dict.signals, 8, 6, cfg);
    const hdgmm::CompressedDataset cds = hdgmm::reduce_dataset(fit.first, dict.signals, 4);
    hdgmm::HdgmmMatcher matcher(cds, dict.labels);

    Matrix queries(200, dict.signal_dim());
    for (Index q = 0; q < queries.rows(); ++q) queries.row(q) = dict.signals.row(q * 100);
    queries = hdgmm::add_noise(queries, 15.0, 7);

    int agree1 = 0, agree3 = 0;
    for (Index i = 0; i < queries.rows(); ++i) {
        const Index ref = hdgmm::full_match(dict, queries.row(i).transpose()).index;
        if (matcher.match(queries.row(i).transpose(), 1).index == ref) ++agree1;
        if (matcher.match(queries.row(i).transpose(), 3).index == ref) ++agree3;
    }
    CHECK(agree3 >= agree1);
}

TEST_CASE("hdgmm_match skips empty clusters and rejects an empty scan") {
    const hdgmm::HdGmmModel model = hdgmm::random_model(3, 10, 2, 132, {0.0, 4.0, 0.6, 0.1});
    hdgmm::Rng rng(133);
    // All records in component 0's subspace: clusters 1 and 2 end up empty.
    Matrix signals(25, 10);
    for (Index i = 0; i < 25; ++i) {
        const Vector coords = 0.3 * oracle::random_gaussian(rng, 2, 1).col(0);
        signals.row(i) = hdgmm::reconstruct(model.component(0), coords).transpose();
    }
    const Matrix unit = hdgmm::normalize_signals(signals);
    const Dictionary dict = labelled_dictionary(unit);
    const hdgmm::CompressedDataset cds = hdgmm::reduce_dataset(model, unit);
    for (const auto& rec : cds.records) CHECK(rec.cluster_id == 0);

    // Scanning all three clusters must skip the two empty ones and find the
    // record in the populated one.
    const auto r = hdgmm::hdgmm_match(cds, dict.labels, unit.row(3).transpose(), 3);
    CHECK(r.index == 3);

    // A dataset with no records at all cannot be matched.
    const hdgmm::CompressedDataset empty{model, {}};
    CHECK_THROWS(hdgmm::hdgmm_match(empty, Matrix(0, 1), unit.row(0).transpose(), 3));
}

TEST_CASE("param_mae: zero on identical labels, hand value otherwise") {
    Matrix a(2, 2);
    a << 1.0, 2.0, 3.0, 4.0;
    CHECK(hdgmm::param_mae(a, a).norm() == 0.0);

    Matrix b = a;
    b(0, 0) = 3.0; // |3 - 1| = 2 averaged over two rows
    b(1, 1) = 6.0; // |6 - 4| = 2 averaged over two rows
    const Vector mae = hdgmm::param_mae(b, a);
    CHECK(mae(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(mae(1) == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS(hdgmm::param_mae(a, Matrix(3, 2)));
}

} // TEST_SUITE
