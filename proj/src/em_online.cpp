#include "hdgmm/em_online.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hdgmm {

SuffStats::SuffStats(Index K, Index M) {
    s0.assign(static_cast<std::size_t>(K), 0.0);
    s1.assign(static_cast<std::size_t>(K), Vector::Zero(M));
    S2.assign(static_cast<std::size_t>(K), Matrix::Zero(M, M));
}

std::optional<Matrix> MatrixSource::next(Index max_records) {
    if (cursor_ >= data_.rows()) return std::nullopt;
    const Index take = std::min(max_records, data_.rows() - cursor_);
    Matrix chunk = data_.middleRows(cursor_, take);
    cursor_ += take;
    return chunk;
}

SuffStats expected_stats(const HdGmmModel& model, const Matrix& batch, int threads) {
    const auto [resp, ll] = e_step(model, batch, threads);
    (void)ll;
    WeightedMoments moments = accumulate_moments(batch, resp, threads);
    const double inv_b = 1.0 / static_cast<double>(batch.rows());
    SuffStats stats(model.component_count(), model.ambient_dim());
    for (Index k = 0; k < model.component_count(); ++k) {
        const auto idx = static_cast<std::size_t>(k);
        stats.s0[idx] = moments.mass[idx] * inv_b;
        stats.s1[idx] = moments.first_moment[idx] * inv_b;
        stats.S2[idx] = moments.scatter[idx] * inv_b;
    }
    return stats;
}

double step_size(std::uint64_t t, const OnlineConfig& config) {
    if (t < 1) throw std::invalid_argument("step_size: t must be >= 1");
    if (!(config.alpha > 0.5 && config.alpha <= 1.0)) {
        throw std::invalid_argument("step_size: alpha must lie in (0.5, 1]");
    }
    if (config.t0 < 0.0) throw std::invalid_argument("step_size: t0 must be >= 0");
    return std::pow(static_cast<double>(t) + config.t0, -config.alpha);
}

void sa_update(SuffStats& stats, const SuffStats& increment, double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("sa_update: gamma must lie in (0, 1]");
    }
    if (stats.component_count() != increment.component_count()) {
        throw std::invalid_argument("sa_update: component count mismatch");
    }
    for (std::size_t k = 0; k < stats.s0.size(); ++k) {
        stats.s0[k] += gamma * (increment.s0[k] - stats.s0[k]);
        stats.s1[k] += gamma * (increment.s1[k] - stats.s1[k]);
        stats.S2[k] += gamma * (increment.S2[k] - stats.S2[k]);
    }
    ++stats.step;
}

namespace {

// Rayleigh spectrum along the columns of X, sorted descending with the
// columns permuted to match, then the tail variance from the trace rule.
void rayleigh_spectrum(const Matrix& S, double floor_b, Matrix& X, Vector& a, double& b) {
    const Index d = X.cols();
    const Index m = X.rows();
    Vector raw(d);
    for (Index j = 0; j < d; ++j) raw[j] = X.col(j).dot(S * X.col(j));

    std::vector<Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index lhs, Index rhs) { return raw[lhs] > raw[rhs]; });

    Matrix permuted(m, d);
    a.resize(d);
    for (Index j = 0; j < d; ++j) {
        permuted.col(j) = X.col(order[static_cast<std::size_t>(j)]);
        a[j] = std::max(raw[order[static_cast<std::size_t>(j)]], 2.0 * floor_b);
    }
    X = permuted;

    b = (S.trace() - a.sum()) / static_cast<double>(m - d);
    b = std::max(floor_b, std::min(b, a[d - 1] - floor_b));
}

Matrix reorthonormalize_if_needed(const Matrix& X) {
    const Index d = X.cols();
    const double err = (X.transpose() * X - Matrix::Identity(d, d)).norm();
    if (err <= 1e-12) return X;
    Eigen::HouseholderQR<Matrix> qr(X);
    Matrix q = qr.householderQ() * Matrix::Identity(X.rows(), d);
    // Keep column directions aligned with the input.
    for (Index j = 0; j < d; ++j) {
        if (q.col(j).dot(X.col(j)) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
}

void sign_normalize_columns(Matrix& X) {
    for (Index j = 0; j < X.cols(); ++j) {
        Index arg_max = 0;
        X.col(j).cwiseAbs().maxCoeff(&arg_max);
        if (X(arg_max, j) < 0.0) X.col(j) = -X.col(j);
    }
}

} // namespace

HdGmmModel m_step_online(const SuffStats& stats, const HdGmmModel& previous,
                         const OnlineConfig& config, OnlineDiagnostics* diagnostics) {
    const Index k_count = previous.component_count();
    const Index d = previous.reduced_dim();
    const Index m = previous.ambient_dim();
    if (stats.component_count() != k_count) {
        throw std::invalid_argument("m_step_online: component count mismatch");
    }
    const double total_mass = std::accumulate(stats.s0.begin(), stats.s0.end(), 0.0);
    if (!(total_mass > 0.0)) {
        throw std::runtime_error("m_step_online: total statistic mass is zero");
    }

    std::vector<Component> components;
    components.reserve(static_cast<std::size_t>(k_count));
    for (Index k = 0; k < k_count; ++k) {
        const auto idx = static_cast<std::size_t>(k);
        const double mass = stats.s0[idx];
        const double weight = mass / total_mass;
        const Component& prev = previous.component(k);

        if (mass < config.s0_floor) {
            // Starved component: shape parameters stay frozen.
            if (diagnostics) ++diagnostics->starvation_events;
            components.emplace_back(weight, prev.mean(), prev.signal_variances(),
                                    prev.noise_variance(), prev.basis());
            continue;
        }

        const Vector mean = stats.s1[idx] / mass;
        Matrix cov = stats.S2[idx] / mass;
        cov.noalias() -= mean * mean.transpose();
        cov = 0.5 * (cov + cov.transpose());

        if (config.mode == BasisUpdate::Eigen) {
            SpikedSpectrum spec = spectral_from_scatter(cov, d, config.floor_b);
            components.emplace_back(weight, mean, std::move(spec.signal_variances),
                                    spec.noise_variance, std::move(spec.basis));
        } else {
            Matrix basis = reorthonormalize_if_needed(prev.basis());
            Vector a = prev.signal_variances();
            double b = prev.noise_variance();
            // Two passes of the basis/spectrum alternation.
            for (int pass = 0; pass < 2; ++pass) {
                StiefelResult solved = stiefel_optimize(cov, a, b, basis, config.stiefel);
                basis = std::move(solved.basis);
                rayleigh_spectrum(cov, config.floor_b, basis, a, b);
            }
            sign_normalize_columns(basis);
            components.emplace_back(weight, mean, std::move(a), b, std::move(basis));
        }
    }
    return HdGmmModel(std::move(components));
}

NaturalParams phi(const Component& comp) {
    const Index d = comp.reduced_dim();
    const double inv_b = 1.0 / comp.noise_variance();
    NaturalParams params;
    params.quad_coeffs.resize(d);
    Vector projections = comp.basis().transpose() * comp.mean();
    params.linear = comp.mean() * inv_b;
    for (Index j = 0; j < d; ++j) {
        const double diff = 1.0 / comp.signal_variances()[j] - inv_b;
        params.linear += diff * projections[j] * comp.basis().col(j);
        params.quad_coeffs[j] = -0.5 * diff; // 1/2 (1/b - 1/a_j)
    }
    params.quad_basis = comp.basis();
    params.quad_scalar = -0.5 * inv_b;
    return params;
}

double psi(const Component& comp) {
    const Index m = comp.ambient_dim();
    const Index d = comp.reduced_dim();
    const double inv_b = 1.0 / comp.noise_variance();
    const Vector projections = comp.basis().transpose() * comp.mean();
    double acc = 0.0;
    for (Index j = 0; j < d; ++j) {
        const double diff = 1.0 / comp.signal_variances()[j] - inv_b;
        acc += diff * projections[j] * projections[j] + std::log(comp.signal_variances()[j]);
    }
    acc *= 0.5;
    acc += 0.5 * inv_b * comp.mean().squaredNorm();
    acc += 0.5 * static_cast<double>(m - d) * std::log(comp.noise_variance());
    return acc;
}

double suffstat_dot(const NaturalParams& params, const Vector& y) {
    double acc = params.linear.dot(y) + params.quad_scalar * y.squaredNorm();
    for (Index j = 0; j < params.quad_coeffs.size(); ++j) {
        const double z = params.quad_basis.col(j).dot(y);
        acc += params.quad_coeffs[j] * z * z;
    }
    return acc;
}

OnlineFitResult fit_online(ChunkSource& source, const OnlineConfig& config,
                           const HdGmmModel& init, const SuffStats* resume) {
    if (config.batch_size < 1) {
        throw std::invalid_argument("fit_online: batch_size must be >= 1");
    }
    const Index k_count = init.component_count();
    const Index d = init.reduced_dim();
    const Index m = init.ambient_dim();
    const Index n_burn = config.n_burn >= 0 ? config.n_burn : 10 * k_count * d;

    SuffStats stats = resume ? *resume : SuffStats(k_count, m);
    OnlineFitResult result{init, {}, 0, 0, 0};
    OnlineDiagnostics diagnostics;
    bool stepped = resume != nullptr && resume->step > 0;

    while (auto chunk = source.next(config.batch_size)) {
        if (chunk->rows() == 0) continue;
        if (chunk->cols() != m) {
            throw std::invalid_argument("fit_online: chunk dimension mismatch");
        }
        const SuffStats increment = expected_stats(result.model, *chunk, config.threads);
        const double gamma = step_size(stats.step + 1, config);
        sa_update(stats, increment, gamma);
        result.records += static_cast<std::uint64_t>(chunk->rows());
        ++result.batches;

        if (result.records >= static_cast<std::uint64_t>(n_burn)) {
            result.model = m_step_online(stats, result.model, config, &diagnostics);
            stepped = true;
        }
        if (config.eval_every > 0 && config.holdout != nullptr &&
            result.batches % static_cast<std::uint64_t>(config.eval_every) == 0) {
            result.trace.log_likelihood.push_back(
                log_likelihood(result.model, *config.holdout, config.threads));
        }
        if (config.checkpoint_every > 0 && config.checkpoint_sink &&
            result.batches % static_cast<std::uint64_t>(config.checkpoint_every) == 0) {
            config.checkpoint_sink(result.batches, result.model, stats);
        }
    }

    if (!stepped) {
        throw std::runtime_error("fit_online: stream exhausted after " +
                                 std::to_string(result.records) +
                                 " records, before the burn-in of " +
                                 std::to_string(n_burn));
    }
    result.trace.iterations = static_cast<int>(result.batches);
    result.trace.converged = true;
    result.starvation_events = diagnostics.starvation_events;
    result.stats = std::move(stats);
    return result;
}

} // namespace hdgmm
