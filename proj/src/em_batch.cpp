#include "hdgmm/em_batch.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hdgmm/parallel.hpp"
#include "hdgmm/rng.hpp"

namespace hdgmm {

std::pair<Matrix, double> e_step(const HdGmmModel& model, const Matrix& data, int threads) {
    if (data.cols() != model.ambient_dim()) {
        throw std::invalid_argument("e_step: data dimension mismatch");
    }
    const Index n = data.rows();
    const Index k_count = model.component_count();
    Matrix resp(n, k_count);
    Vector per_row_ll(n);
    parallel_chunks(n, threads, [&](Index begin, Index end) {
        Vector logs;
        for (Index i = begin; i < end; ++i) {
            log_weighted_densities(model, data.row(i).transpose(), logs);
            const double lse = log_sum_exp(logs);
            per_row_ll[i] = lse;
            for (Index k = 0; k < k_count; ++k) resp(i, k) = std::exp(logs[k] - lse);
        }
    });
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) ll += per_row_ll[i];
    return {std::move(resp), ll};
}

WeightedMoments accumulate_moments(const Matrix& data, const Matrix& responsibilities,
                                   int threads) {
    if (data.rows() != responsibilities.rows()) {
        throw std::invalid_argument("accumulate_moments: row count mismatch");
    }
    const Index k_count = responsibilities.cols();
    const Index m = data.cols();
    WeightedMoments moments;
    moments.mass.assign(static_cast<std::size_t>(k_count), 0.0);
    moments.first_moment.assign(static_cast<std::size_t>(k_count), Vector::Zero(m));
    moments.scatter.assign(static_cast<std::size_t>(k_count), Matrix::Zero(m, m));

    // Each component is handled by exactly one worker, so results do not
    // depend on the thread count.
    parallel_chunks(k_count, threads, [&](Index begin, Index end) {
        for (Index k = begin; k < end; ++k) {
            const Vector r = responsibilities.col(k);
            moments.mass[static_cast<std::size_t>(k)] = r.sum();
            moments.first_moment[static_cast<std::size_t>(k)].noalias() =
                data.transpose() * r;
            const Matrix weighted = r.cwiseSqrt().asDiagonal() * data;
            moments.scatter[static_cast<std::size_t>(k)].noalias() =
                weighted.transpose() * weighted;
        }
    });
    return moments;
}

SpikedSpectrum spectral_from_scatter(const Matrix& covariance, Index d, double floor_b) {
    const Index m = covariance.rows();
    if (d < 1 || d > m - 1) {
        throw std::invalid_argument("spectral_from_scatter: need 1 <= d <= M-1");
    }
    const Matrix sym = 0.5 * (covariance + covariance.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    if (eig.info() != Eigen::Success) {
        throw std::runtime_error("spectral_from_scatter: eigendecomposition failed");
    }

    SpikedSpectrum spec;
    spec.basis.resize(m, d);
    spec.signal_variances.resize(d);
    // Eigen returns ascending order; take the top d, descending.
    for (Index j = 0; j < d; ++j) {
        const Index src = m - 1 - j;
        spec.signal_variances[j] = eig.eigenvalues()[src];
        spec.basis.col(j) = eig.eigenvectors().col(src);
        // Sign convention: largest-magnitude entry positive.
        Index arg_max = 0;
        spec.basis.col(j).cwiseAbs().maxCoeff(&arg_max);
        if (spec.basis(arg_max, j) < 0.0) spec.basis.col(j) = -spec.basis.col(j);
    }

    // Guard against roundoff-negative leading eigenvalues.
    for (Index j = 0; j < d; ++j) {
        spec.signal_variances[j] = std::max(spec.signal_variances[j], 2.0 * floor_b);
    }

    const double tail = sym.trace() - spec.signal_variances.sum();
    double b = tail / static_cast<double>(m - d);
    const double hi = spec.signal_variances[d - 1] - floor_b;
    b = std::max(floor_b, std::min(b, hi));
    spec.noise_variance = b;
    return spec;
}

HdGmmModel m_step(const WeightedMoments& moments, double n_total, Index d, double floor_b) {
    const Index k_count = moments.component_count();
    std::vector<Component> components;
    components.reserve(static_cast<std::size_t>(k_count));
    for (Index k = 0; k < k_count; ++k) {
        const double mass = moments.mass[static_cast<std::size_t>(k)];
        if (mass < 1e-8 * n_total) {
            throw DegenerateComponentError(k, -1,
                "m_step: component " + std::to_string(k) + " has vanishing mass " +
                std::to_string(mass));
        }
        const Vector mean = moments.first_moment[static_cast<std::size_t>(k)] / mass;
        Matrix cov = moments.scatter[static_cast<std::size_t>(k)] / mass;
        cov.noalias() -= mean * mean.transpose();
        SpikedSpectrum spec = spectral_from_scatter(cov, d, floor_b);
        components.emplace_back(mass / n_total, mean, std::move(spec.signal_variances),
                                spec.noise_variance, std::move(spec.basis));
    }
    return HdGmmModel(std::move(components));
}

namespace {

constexpr int kLloydIterations = 10;

std::vector<Index> draw_subsample(Index n, Index cap, Rng& rng) {
    std::vector<Index> indices(static_cast<std::size_t>(n));
    std::iota(indices.begin(), indices.end(), Index{0});
    if (n <= cap) return indices;
    // Partial Fisher-Yates: the first `cap` entries end up a uniform draw
    // without replacement.
    for (Index i = 0; i < cap; ++i) {
        const Index j = i + static_cast<Index>(
            rng.uniform_index(static_cast<std::uint64_t>(n - i)));
        std::swap(indices[static_cast<std::size_t>(i)], indices[static_cast<std::size_t>(j)]);
    }
    indices.resize(static_cast<std::size_t>(cap));
    return indices;
}

Index nearest_center(const Matrix& centers, const Vector& y) {
    Index best = 0;
    double best_dist = (y - centers.row(0).transpose()).squaredNorm();
    for (Index k = 1; k < centers.rows(); ++k) {
        const double dist = (y - centers.row(k).transpose()).squaredNorm();
        if (dist < best_dist) {
            best_dist = dist;
            best = k;
        }
    }
    return best;
}

Matrix kmeans_pp_seed(const Matrix& sample, Index K, Rng& rng) {
    const Index n = sample.rows();
    Matrix centers(K, sample.cols());
    centers.row(0) = sample.row(static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(n))));
    Vector min_dist(n);
    for (Index i = 0; i < n; ++i) {
        min_dist[i] = (sample.row(i) - centers.row(0)).squaredNorm();
    }
    for (Index k = 1; k < K; ++k) {
        const double total = min_dist.sum();
        Index pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Index i = 0; i < n; ++i) {
                acc += min_dist[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
        }
        centers.row(k) = sample.row(pick);
        for (Index i = 0; i < n; ++i) {
            min_dist[i] = std::min(min_dist[i], (sample.row(i) - centers.row(k)).squaredNorm());
        }
    }
    return centers;
}

} // namespace

HdGmmModel init_model(const Matrix& data, Index K, Index d, std::uint64_t seed,
                      Index subsample_cap, double floor_b) {
    const Index m = data.cols();
    if (K < 1) throw std::invalid_argument("init_model: K must be positive");
    if (d < 1 || d > m - 1) throw std::invalid_argument("init_model: need 1 <= d <= M-1");

    Rng rng(seed);
    const std::vector<Index> subsample_idx = draw_subsample(data.rows(), subsample_cap, rng);
    const Index n = static_cast<Index>(subsample_idx.size());
    if (n < K * (d + 2)) {
        throw std::invalid_argument("init_model: need at least K*(d+2) = " +
                                    std::to_string(K * (d + 2)) + " records, have " +
                                    std::to_string(n));
    }
    Matrix sample(n, m);
    for (Index i = 0; i < n; ++i) sample.row(i) = data.row(subsample_idx[static_cast<std::size_t>(i)]);

    Matrix centers = kmeans_pp_seed(sample, K, rng);
    std::vector<Index> assign(static_cast<std::size_t>(n), 0);

    for (int it = 0; it < kLloydIterations; ++it) {
        for (Index i = 0; i < n; ++i) {
            assign[static_cast<std::size_t>(i)] = nearest_center(centers, sample.row(i).transpose());
        }
        Matrix sums = Matrix::Zero(K, m);
        std::vector<Index> counts(static_cast<std::size_t>(K), 0);
        for (Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += sample.row(i);
            ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
        }
        for (Index k = 0; k < K; ++k) {
            if (counts[static_cast<std::size_t>(k)] > 0) {
                centers.row(k) = sums.row(k) / static_cast<double>(counts[static_cast<std::size_t>(k)]);
            } else {
                // Re-seed an empty cluster with the farthest member of the
                // largest one.
                Index largest = static_cast<Index>(std::distance(
                    counts.begin(), std::max_element(counts.begin(), counts.end())));
                Index far_idx = -1;
                double far_dist = -1.0;
                for (Index i = 0; i < n; ++i) {
                    if (assign[static_cast<std::size_t>(i)] != largest) continue;
                    const double dist = (sample.row(i) - centers.row(largest)).squaredNorm();
                    if (dist > far_dist) {
                        far_dist = dist;
                        far_idx = i;
                    }
                }
                centers.row(k) = sample.row(far_idx);
                assign[static_cast<std::size_t>(far_idx)] = k;
                ++counts[static_cast<std::size_t>(k)];
                --counts[static_cast<std::size_t>(largest)];
            }
        }
    }

    for (Index i = 0; i < n; ++i) {
        assign[static_cast<std::size_t>(i)] = nearest_center(centers, sample.row(i).transpose());
    }
    std::vector<Index> counts(static_cast<std::size_t>(K), 0);
    for (Index i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];

    // Components too small to support a d-dimensional covariance borrow the
    // farthest points of the largest cluster.
    const Index min_members = d + 2;
    for (Index k = 0; k < K; ++k) {
        while (counts[static_cast<std::size_t>(k)] < min_members) {
            const Index largest = static_cast<Index>(std::distance(
                counts.begin(), std::max_element(counts.begin(), counts.end())));
            if (largest == k || counts[static_cast<std::size_t>(largest)] <= min_members) {
                throw std::invalid_argument("init_model: cannot populate component " +
                                            std::to_string(k));
            }
            Vector center = Vector::Zero(m);
            for (Index i = 0; i < n; ++i) {
                if (assign[static_cast<std::size_t>(i)] == largest) center += sample.row(i).transpose();
            }
            center /= static_cast<double>(counts[static_cast<std::size_t>(largest)]);
            Index far_idx = -1;
            double far_dist = -1.0;
            for (Index i = 0; i < n; ++i) {
                if (assign[static_cast<std::size_t>(i)] != largest) continue;
                const double dist = (sample.row(i).transpose() - center).squaredNorm();
                if (dist > far_dist) {
                    far_dist = dist;
                    far_idx = i;
                }
            }
            assign[static_cast<std::size_t>(far_idx)] = k;
            ++counts[static_cast<std::size_t>(k)];
            --counts[static_cast<std::size_t>(largest)];
        }
    }

    Matrix hard = Matrix::Zero(n, K);
    for (Index i = 0; i < n; ++i) hard(i, assign[static_cast<std::size_t>(i)]) = 1.0;
    const WeightedMoments moments = accumulate_moments(sample, hard);
    return m_step(moments, static_cast<double>(n), d, floor_b);
}

std::pair<HdGmmModel, FitTrace> fit_batch(const Matrix& data, Index K, Index d,
                                          const BatchConfig& config) {
    const Index n = data.rows();
    if (n <= K * (d + 2)) {
        throw std::invalid_argument("fit_batch: needs more than K*(d+2) records");
    }
    HdGmmModel model = init_model(data, K, d, config.seed, config.subsample_cap, config.floor_b);
    FitTrace trace;
    double prev_ll = -std::numeric_limits<double>::infinity();

    for (int it = 0; it < config.max_iter; ++it) {
        auto [resp, ll] = e_step(model, data, config.threads);
        trace.log_likelihood.push_back(ll);
        if (it > 0) {
            const double gain = ll - prev_ll;
            if (gain <= config.rel_tol * std::max(1.0, std::abs(prev_ll))) {
                trace.converged = true;
                break;
            }
        }
        prev_ll = ll;
        const WeightedMoments moments = accumulate_moments(data, resp, config.threads);
        try {
            model = m_step(moments, static_cast<double>(n), d, config.floor_b);
        } catch (const DegenerateComponentError& err) {
            throw DegenerateComponentError(err.component, it, err.what());
        }
        trace.iterations = it + 1;
    }
    return {std::move(model), std::move(trace)};
}

std::uint64_t param_count(Index K, Index M, Index d) {
    if (d < 1 || d > M - 1) throw std::invalid_argument("param_count: need 1 <= d <= M-1");
    const std::uint64_t k = static_cast<std::uint64_t>(K);
    const std::uint64_t m = static_cast<std::uint64_t>(M);
    const std::uint64_t dd = static_cast<std::uint64_t>(d);
    const std::uint64_t orientation = dd * m - dd * (dd + 1) / 2; // per component
    return (k - 1) + k * m + k * orientation + k * (dd + 1);
}

double bic(const HdGmmModel& model, const Matrix& data, int threads) {
    const double ll = log_likelihood(model, data, threads);
    const auto params = param_count(model.component_count(), model.ambient_dim(),
                                    model.reduced_dim());
    return -2.0 * ll + static_cast<double>(params) * std::log(static_cast<double>(data.rows()));
}

BicScanResult bic_scan(const Matrix& data, const std::vector<Index>& k_grid,
                       const std::vector<Index>& d_grid, const BatchConfig& config) {
    if (k_grid.empty() || d_grid.empty()) {
        throw std::invalid_argument("bic_scan: grids must be nonempty");
    }
    BicScanResult result;
    double best = std::numeric_limits<double>::infinity();
    for (Index k : k_grid) {
        for (Index d : d_grid) {
            BicCell cell;
            cell.K = k;
            cell.d = d;
            try {
                auto [model, trace] = fit_batch(data, k, d, config);
                cell.log_likelihood = trace.log_likelihood.back();
                cell.params = param_count(k, data.cols(), d);
                cell.bic = -2.0 * cell.log_likelihood +
                           static_cast<double>(cell.params) *
                               std::log(static_cast<double>(data.rows()));
                cell.ok = true;
                if (cell.bic < best) {
                    best = cell.bic;
                    result.best_K = k;
                    result.best_d = d;
                    result.has_best = true;
                }
            } catch (const std::exception& err) {
                cell.error = err.what();
            }
            result.cells.push_back(std::move(cell));
        }
    }
    return result;
}

} // namespace hdgmm
