#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "hdgmm/em_batch.hpp"
#include "hdgmm/em_online.hpp"
#include "hdgmm/model.hpp"
#include "hdgmm/rng.hpp"
#include "hdgmm/synthetic.hpp"
#include "oracles.hpp"

using hdgmm::Component;
using hdgmm::HdGmmModel;
using hdgmm::Index;
using hdgmm::Matrix;
using hdgmm::OnlineConfig;
using hdgmm::SuffStats;
using hdgmm::Vector;

namespace {

bool models_close(const HdGmmModel& a, const HdGmmModel& b, double tol) {
    if (a.component_count() != b.component_count()) return false;
    for (Index k = 0; k < a.component_count(); ++k) {
        const Component& ca = a.component(k);
        const Component& cb = b.component(k);
        if (std::abs(ca.weight() - cb.weight()) > tol) return false;
        if ((ca.mean() - cb.mean()).lpNorm<Eigen::Infinity>() > tol) return false;
        if ((ca.signal_variances() - cb.signal_variances()).lpNorm<Eigen::Infinity>() > tol)
            return false;
        if (std::abs(ca.noise_variance() - cb.noise_variance()) > tol) return false;
        if ((ca.basis() - cb.basis()).lpNorm<Eigen::Infinity>() > tol) return false;
    }
    return true;
}

bool models_identical(const HdGmmModel& a, const HdGmmModel& b) {
    for (Index k = 0; k < a.component_count(); ++k) {
        const Component& ca = a.component(k);
        const Component& cb = b.component(k);
        if (ca.weight() != cb.weight() || ca.mean() != cb.mean() ||
            ca.signal_variances() != cb.signal_variances() ||
            ca.noise_variance() != cb.noise_variance() || ca.basis() != cb.basis()) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_SUITE("em_online") {

TEST_CASE("expected_stats: one point, averaging, batch-moment agreement") {
    hdgmm::Rng rng(61);
    const Index m = 7;
    std::vector<Component> one;
    {
        const Component c = oracle::random_component(rng, m, 2);
        one.emplace_back(1.0, c.mean(), c.signal_variances(), c.noise_variance(), c.basis());
    }
    const HdGmmModel single(std::move(one));

    Matrix point(1, m);
    point = oracle::random_gaussian(rng, 1, m);
    const SuffStats s1 = hdgmm::expected_stats(single, point);
    CHECK(s1.s0[0] == doctest::Approx(1.0).epsilon(1e-14));
    const Vector y = point.row(0).transpose();
    CHECK((s1.s1[0] - y).norm() <= 1e-14);
    CHECK((s1.S2[0] - y * y.transpose()).norm() <= 1e-14);

    // A batch of two copies of the same point averages to the 1-point stats.
    Matrix twice(2, m);
    twice << point, point;
    const SuffStats s2 = hdgmm::expected_stats(single, twice);
    CHECK(std::abs(s2.s0[0] - s1.s0[0]) <= 1e-14);
    CHECK((s2.s1[0] - s1.s1[0]).norm() <= 1e-14);

    // Against the batch-EM moments divided by the batch size.
    const HdGmmModel mixture = hdgmm::random_model(3, m, 2, 62);
    const Matrix batch = oracle::random_gaussian(rng, 50, m);
    const SuffStats stats = hdgmm::expected_stats(mixture, batch);
    const auto [resp, ll] = hdgmm::e_step(mixture, batch);
    const auto moments = hdgmm::accumulate_moments(batch, resp);
    double mass_total = 0.0;
    for (Index k = 0; k < 3; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        mass_total += stats.s0[ks];
        CHECK(std::abs(stats.s0[ks] - moments.mass[ks] / 50.0) <= 1e-12);
        CHECK((stats.s1[ks] - moments.first_moment[ks] / 50.0).norm() <= 1e-12);
        CHECK((stats.S2[ks] - moments.scatter[ks] / 50.0).norm() <= 1e-12);
        CHECK((stats.S2[ks] - stats.S2[ks].transpose()).norm() <= 1e-12);
    }
    CHECK(mass_total == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("step_size schedule and the Robbins-Monro sums") {
    OnlineConfig config;
    config.alpha = 0.6;
    config.t0 = 0.0;
    CHECK(hdgmm::step_size(1, config) == 1.0);

    OnlineConfig avg;
    avg.alpha = 1.0;
    for (std::uint64_t t : {1ull, 2ull, 7ull, 100ull}) {
        CHECK(hdgmm::step_size(t, avg) == doctest::Approx(1.0 / static_cast<double>(t)));
    }

    // Per-decade partial sums: for alpha in (0.5, 1] the sums of gamma_t over
    // successive decades grow (so sum gamma_t diverges) while the sums of
    // gamma_t^2 shrink by a fixed factor (so sum gamma_t^2 converges).
    double decade1_g = 0.0, decade2_g = 0.0, decade1_g2 = 0.0, decade2_g2 = 0.0;
    for (std::uint64_t t = 1001; t <= 100000; ++t) {
        const double g = hdgmm::step_size(t, config);
        if (t <= 10000) {
            decade1_g += g;
            decade1_g2 += g * g;
        } else {
            decade2_g += g;
            decade2_g2 += g * g;
        }
    }
    CHECK(decade2_g > 2.0 * decade1_g);          // divergent drift
    CHECK(decade2_g2 < 0.7 * decade1_g2);        // convergent tail
}

TEST_CASE("sa_update: replacement, fixed point, running average") {
    hdgmm::Rng rng(63);
    const Index m = 5;
    SuffStats stats(1, m);
    stats.s0[0] = 1.0;
    SuffStats inc(1, m);
    inc.s0[0] = 1.0;
    inc.s1[0] = oracle::random_gaussian(rng, m, 1).col(0);
    inc.S2[0] = oracle::random_spd(rng, m, Vector::LinSpaced(m, 0.5, 2.0));

    hdgmm::sa_update(stats, inc, 1.0);
    CHECK(stats.s1[0] == inc.s1[0]);
    CHECK(stats.S2[0] == inc.S2[0]);
    CHECK(stats.step == 1);

    SuffStats before = stats;
    hdgmm::sa_update(stats, before, 0.37);
    CHECK((stats.s1[0] - before.s1[0]).norm() <= 1e-15);
    CHECK((stats.S2[0] - before.S2[0]).norm() <= 1e-15);

    // gamma_t = 1/t turns the recursion into a plain average.
    SuffStats run(1, m);
    Vector mean_of_incs = Vector::Zero(m);
    for (int t = 1; t <= 25; ++t) {
        SuffStats step(1, m);
        step.s0[0] = 1.0;
        step.s1[0] = oracle::random_gaussian(rng, m, 1).col(0);
        mean_of_incs += step.s1[0];
        hdgmm::sa_update(run, step, 1.0 / static_cast<double>(t));
    }
    mean_of_incs /= 25.0;
    CHECK((run.s1[0] - mean_of_incs).norm() <= 1e-10);
}

TEST_CASE("m_step_online in eigen mode equals the batch M-step") {
    hdgmm::Rng rng(64);
    const HdGmmModel model = hdgmm::random_model(3, 9, 2, 65);
    const Matrix data = oracle::random_gaussian(rng, 80, 9).rowwise() +
                        Eigen::RowVectorXd::Constant(9, 0.5);

    // One dense pass under a fixed model, expressed both ways.
    const auto [resp, ll] = hdgmm::e_step(model, data);
    const auto moments = hdgmm::accumulate_moments(data, resp);
    const HdGmmModel batch = hdgmm::m_step(moments, 80.0, 2);

    SuffStats stats = hdgmm::expected_stats(model, data);
    OnlineConfig config;
    config.mode = hdgmm::BasisUpdate::Eigen;
    const HdGmmModel online = hdgmm::m_step_online(stats, model, config);
    CHECK(models_close(batch, online, 1e-10));
}

TEST_CASE("m_step_online in stiefel mode recovers a diagonal eigenbasis") {
    // Fixed covariance diag(9, 4, 1), d = 1, warm start on the middle axis.
    const Index m = 3;
    Matrix s(m, m);
    s.setZero();
    s.diagonal() << 9.0, 4.0, 1.0;
    SuffStats stats(1, m);
    stats.s0[0] = 1.0;
    stats.s1[0] = Vector::Zero(m);
    stats.S2[0] = s;

    Vector warm_a(1);
    warm_a << 4.0;
    Matrix warm_w = Matrix::Zero(m, 1);
    warm_w(1, 0) = 1.0;
    const HdGmmModel previous(
        std::vector<Component>{Component(1.0, Vector::Zero(m), warm_a, 1.0, warm_w)});

    OnlineConfig config;
    config.mode = hdgmm::BasisUpdate::Stiefel;
    config.stiefel.max_iter = 2000;
    const HdGmmModel updated = hdgmm::m_step_online(stats, previous, config);
    const Component& c = updated.component(0);
    CHECK(std::abs(c.basis()(0, 0)) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(c.signal_variances()(0) == doctest::Approx(9.0).epsilon(1e-6));
    CHECK(c.noise_variance() == doctest::Approx(2.5).epsilon(1e-5));
}

TEST_CASE("starved components keep their parameters bitwise") {
    hdgmm::Rng rng(66);
    const HdGmmModel previous = hdgmm::random_model(2, 6, 2, 67);
    SuffStats stats(2, 6);
    // Component 0 well fed, component 1 starved.
    stats.s0 = {1.0 - 1e-9, 1e-9};
    stats.s1[0] = Vector::Zero(6);
    stats.S2[0] = oracle::random_spd(rng, 6, Vector::LinSpaced(6, 0.5, 4.0));
    stats.s1[1] = Vector::Zero(6);
    stats.S2[1] = Matrix::Zero(6, 6);

    OnlineConfig config;
    hdgmm::OnlineDiagnostics diag;
    const HdGmmModel updated = hdgmm::m_step_online(stats, previous, config, &diag);
    CHECK(diag.starvation_events == 1);
    const Component& kept = updated.component(1);
    const Component& old = previous.component(1);
    CHECK(kept.mean() == old.mean());
    CHECK(kept.signal_variances() == old.signal_variances());
    CHECK(kept.noise_variance() == old.noise_variance());
    CHECK(kept.basis() == old.basis());
    // Weights are renormalized even for frozen components.
    CHECK(updated.component(0).weight() + updated.component(1).weight() ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("phi and psi: zero mean and the hand-computed case") {
    hdgmm::Rng rng(68);
    const Index m = 6;
    const Index d = 2;
    Vector a(d);
    a << 3.0, 2.0;
    const double b = 0.5;
    const Component zero_mean(1.0, Vector::Zero(m), a, b,
                              oracle::random_orthonormal(rng, m, d));
    CHECK(hdgmm::phi(zero_mean).linear.norm() == 0.0);
    const double expected_psi = 0.5 * (std::log(3.0) + std::log(2.0)) +
                                0.5 * static_cast<double>(m - d) * std::log(b);
    CHECK(hdgmm::psi(zero_mean) == doctest::Approx(expected_psi).epsilon(1e-12));

    // M=2, d=1, a=2, b=1, mu = W = e1: psi = 1/2 log 2 + 1/4.
    Vector a1(1);
    a1 << 2.0;
    Vector e1 = Vector::Zero(2);
    e1(0) = 1.0;
    const Component hand(1.0, e1, a1, 1.0, e1);
    CHECK(hdgmm::psi(hand) == doctest::Approx(0.5 * std::log(2.0) + 0.25).epsilon(1e-14));
}

TEST_CASE("exponential-family identity against the log density") {
    hdgmm::Rng rng(69);
    for (int trial = 0; trial < 200; ++trial) {
        const Index m = 3 + static_cast<Index>(rng.uniform_index(28));
        const Index d = 1 + static_cast<Index>(rng.uniform_index(
            static_cast<std::uint64_t>(std::min<Index>(m - 1, 6))));
        const Component c = oracle::random_component(rng, m, d);
        const Vector y = c.mean() + 2.0 * oracle::random_gaussian(rng, m, 1).col(0);
        const hdgmm::NaturalParams params = hdgmm::phi(c);
        const double via_family = -0.5 * static_cast<double>(m) * std::log(2.0 * M_PI) +
                                  hdgmm::suffstat_dot(params, y) - hdgmm::psi(c);
        CHECK(std::abs(via_family - hdgmm::log_component_density(c, y)) <= 1e-9);
    }
}

TEST_CASE("one full-batch step with gamma = 1 equals one batch EM iteration") {
    const HdGmmModel truth = hdgmm::random_model(2, 10, 2, 70);
    const auto sample = hdgmm::sample_hdgmm(truth, 500, 71);
    const HdGmmModel init = hdgmm::init_model(sample.data, 2, 2, 72);

    // Batch: one E-step + M-step.
    const auto [resp, ll] = hdgmm::e_step(init, sample.data);
    const HdGmmModel batch =
        hdgmm::m_step(hdgmm::accumulate_moments(sample.data, resp), 500.0, 2);

    // Online: the whole data set as one batch, gamma_1 = 1, no burn-in.
    hdgmm::MatrixSource source(sample.data);
    OnlineConfig config;
    config.batch_size = 500;
    config.alpha = 1.0;
    config.t0 = 0.0;
    config.n_burn = 0;
    const auto result = hdgmm::fit_online(source, config, init);
    CHECK(result.batches == 1);
    CHECK(models_close(batch, result.model, 1e-10));
}

TEST_CASE("fit_online recovers a separated mixture from a stream") {
    const HdGmmModel truth = hdgmm::random_model(2, 20, 3, 73);
    const auto sample = hdgmm::sample_hdgmm(truth, 20000, 74);
    const HdGmmModel init = hdgmm::init_model(sample.data.topRows(2000), 2, 3, 75);

    hdgmm::MatrixSource source(sample.data);
    OnlineConfig config;
    config.batch_size = 256;
    const auto result = hdgmm::fit_online(source, config, init);

    // Weights within 0.02 and subspaces within 5 degrees, up to the
    // component matching (separated means make it unambiguous).
    for (Index k = 0; k < 2; ++k) {
        double best_dist = 1e300;
        Index match = 0;
        for (Index j = 0; j < 2; ++j) {
            const double dist =
                (result.model.component(j).mean() - truth.component(k).mean()).norm();
            if (dist < best_dist) {
                best_dist = dist;
                match = j;
            }
        }
        CHECK(std::abs(result.model.component(match).weight() - truth.component(k).weight()) <=
              0.02);
        const double angle = oracle::max_principal_angle(
            result.model.component(match).basis(), truth.component(k).basis());
        CHECK(angle <= 5.0 * M_PI / 180.0);
    }
}

TEST_CASE("fit_online is deterministic for a replayed stream") {
    const HdGmmModel truth = hdgmm::random_model(2, 8, 2, 76);
    const auto sample = hdgmm::sample_hdgmm(truth, 3000, 77);
    const HdGmmModel init = hdgmm::init_model(sample.data, 2, 2, 78);

    OnlineConfig config;
    config.batch_size = 128;
    hdgmm::MatrixSource first(sample.data);
    const auto run1 = hdgmm::fit_online(first, config, init);
    hdgmm::MatrixSource second(sample.data);
    const auto run2 = hdgmm::fit_online(second, config, init);
    CHECK(models_identical(run1.model, run2.model));
    CHECK(run1.batches == run2.batches);
}

TEST_CASE("fit_online throws when the stream ends before burn-in") {
    const HdGmmModel truth = hdgmm::random_model(2, 8, 2, 79);
    const auto sample = hdgmm::sample_hdgmm(truth, 100, 80);
    const HdGmmModel init = hdgmm::init_model(sample.data, 2, 2, 81);
    hdgmm::MatrixSource source(sample.data);
    OnlineConfig config;
    config.n_burn = 5000; // longer than the stream
    CHECK_THROWS_AS(hdgmm::fit_online(source, config, init), std::runtime_error);
}

TEST_CASE("held-out trace trends upward on a stationary stream") {
    const HdGmmModel truth = hdgmm::random_model(3, 12, 2, 82);
    const auto sample = hdgmm::sample_hdgmm(truth, 30000, 83);
    const auto holdout_sample = hdgmm::sample_hdgmm(truth, 1000, 84);
    const HdGmmModel init = hdgmm::init_model(sample.data.topRows(1000), 3, 2, 85);

    hdgmm::MatrixSource source(sample.data);
    OnlineConfig config;
    config.batch_size = 128;
    config.eval_every = 10;
    config.holdout = &holdout_sample.data;
    const auto result = hdgmm::fit_online(source, config, init);
    REQUIRE(result.trace.log_likelihood.size() >= 20);
    const auto& ll = result.trace.log_likelihood;
    const std::size_t w = 10;
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        head += ll[i];
        tail += ll[ll.size() - 1 - i];
    }
    CHECK(tail / static_cast<double>(w) >= head / static_cast<double>(w) - 1e-9);
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run") {
    const HdGmmModel truth = hdgmm::random_model(2, 10, 2, 86);
    const auto sample = hdgmm::sample_hdgmm(truth, 4096, 87);
    const HdGmmModel init = hdgmm::init_model(sample.data.topRows(1000), 2, 2, 88);

    OnlineConfig config;
    config.batch_size = 256;
    config.n_burn = 0;

    // Uninterrupted run over the full stream.
    hdgmm::MatrixSource whole(sample.data);
    const auto full = hdgmm::fit_online(whole, config, init);

    // First half, then resume on the second half from the carried stats.
    const Matrix head = sample.data.topRows(2048);
    const Matrix tail = sample.data.bottomRows(2048);
    hdgmm::MatrixSource first(head);
    const auto part1 = hdgmm::fit_online(first, config, init);
    hdgmm::MatrixSource second(tail);
    const auto part2 = hdgmm::fit_online(second, config, part1.model, &part1.stats);
    CHECK(models_identical(full.model, part2.model));
}

} // TEST_SUITE
