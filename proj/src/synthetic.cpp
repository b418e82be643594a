#include "hdgmm/synthetic.hpp"

#include <Eigen/QR>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hdgmm/rng.hpp"

namespace hdgmm {

namespace {

void check_axis(const GridAxis& axis, const char* name) {
    if (axis.count < 1) {
        throw std::invalid_argument(std::string("grid axis ") + name +
                                    ": need at least one point");
    }
    if (!(axis.lo <= axis.hi)) {
        throw std::invalid_argument(std::string("grid axis ") + name +
                                    ": lo must not exceed hi");
    }
    if (axis.count > 1 && axis.lo == axis.hi) {
        throw std::invalid_argument(std::string("grid axis ") + name +
                                    ": repeated points (lo == hi with count > 1)");
    }
}

} // namespace

GridSpec default_grid() { return GridSpec{}; }

std::vector<double> grid_points(const GridAxis& axis) {
    check_axis(axis, "?");
    std::vector<double> points(static_cast<std::size_t>(axis.count));
    if (axis.count == 1) {
        points[0] = axis.lo;
        return points;
    }
    const double step = (axis.hi - axis.lo) / static_cast<double>(axis.count - 1);
    for (Index i = 0; i < axis.count; ++i) {
        points[static_cast<std::size_t>(i)] = axis.lo + step * static_cast<double>(i);
    }
    points.back() = axis.hi; // exact endpoint
    return points;
}

Dictionary gen_synthetic_dictionary(const GridSpec& grid, Index time_points, double dt,
                                    double tr) {
    check_axis(grid.t1, "T1");
    check_axis(grid.t2, "T2");
    check_axis(grid.df, "df");
    if (grid.t1.lo <= 0.0 || grid.t2.lo <= 0.0) {
        throw std::invalid_argument("gen_synthetic_dictionary: T1 and T2 must be positive");
    }
    if (time_points < 1 || dt <= 0.0 || tr <= 0.0) {
        throw std::invalid_argument(
            "gen_synthetic_dictionary: need positive time_points, dt and tr");
    }

    const auto t1s = grid_points(grid.t1);
    const auto t2s = grid_points(grid.t2);
    const auto dfs = grid_points(grid.df);

    const Index n = grid.count();
    Dictionary dict;
    dict.signals.resize(n, time_points);
    dict.labels.resize(n, 3);
    dict.label_names = {"T1", "T2", "df"};

    Index row = 0;
    for (double t1 : t1s) {
        const double amplitude = 1.0 - std::exp(-tr / t1);
        for (double t2 : t2s) {
            for (double df : dfs) {
                for (Index j = 0; j < time_points; ++j) {
                    const double t = static_cast<double>(j + 1) * dt;
                    dict.signals(row, j) = amplitude * std::exp(-t / t2) *
                                           std::cos(2.0 * std::numbers::pi * df * t);
                }
                dict.labels(row, 0) = t1;
                dict.labels(row, 1) = t2;
                dict.labels(row, 2) = df;
                ++row;
            }
        }
    }
    return dict;
}

HdgmmSampler::HdgmmSampler(const HdGmmModel& model, std::uint64_t seed)
    : model_(model), cdf_(static_cast<std::size_t>(model.component_count())), rng_(seed) {
    // Weight CDF for inverse-transform component draws.
    double acc = 0.0;
    for (Index k = 0; k < model.component_count(); ++k) {
        acc += model.component(k).weight();
        cdf_[static_cast<std::size_t>(k)] = acc;
    }
    cdf_.back() = 1.0;
}

SampleResult HdgmmSampler::draw(Index n) {
    if (n < 1) throw std::invalid_argument("HdgmmSampler: need at least one draw");
    const Index K = model_.component_count();
    const Index M = model_.ambient_dim();
    const Index d = model_.reduced_dim();

    SampleResult out;
    out.data.resize(n, M);
    out.component.resize(static_cast<std::size_t>(n));

    Vector eps_d(d), eps_m(M);
    for (Index i = 0; i < n; ++i) {
        const double u = rng_.uniform();
        Index k = 0;
        while (k + 1 < K && u >= cdf_[static_cast<std::size_t>(k)]) ++k;
        const Component& comp = model_.component(k);

        for (Index j = 0; j < d; ++j) eps_d(j) = rng_.normal();
        for (Index j = 0; j < M; ++j) eps_m(j) = rng_.normal();

        const Vector scaled =
            ((comp.signal_variances().array() - comp.noise_variance()).sqrt() *
             eps_d.array())
                .matrix();
        out.data.row(i) = (comp.mean() + comp.basis() * scaled +
                           std::sqrt(comp.noise_variance()) * eps_m)
                              .transpose();
        out.component[static_cast<std::size_t>(i)] = k;
    }
    return out;
}

SampleResult sample_hdgmm(const HdGmmModel& model, Index n, std::uint64_t seed) {
    HdgmmSampler sampler(model, seed);
    return sampler.draw(n);
}

HdGmmModel random_model(Index K, Index M, Index d, std::uint64_t seed,
                        const RandomModelConfig& config) {
    if (K < 1) throw std::invalid_argument("random_model: need K >= 1");
    if (d < 1 || d > M - 1) throw std::invalid_argument("random_model: need 1 <= d <= M-1");
    if (config.separation < 0.0 || config.top_variance <= 0.0 || config.decay <= 0.0 ||
        config.decay > 1.0 || config.noise_variance <= 0.0) {
        throw std::invalid_argument("random_model: invalid shape configuration");
    }

    Vector a(d);
    for (Index j = 0; j < d; ++j) {
        a(j) = config.top_variance * std::pow(config.decay, static_cast<double>(j));
    }
    if (a(d - 1) <= config.noise_variance) {
        throw std::invalid_argument("random_model: spectrum tail a_d must exceed b");
    }

    Rng rng(seed);
    std::vector<double> raw_weights(static_cast<std::size_t>(K));
    double total = 0.0;
    for (auto& w : raw_weights) {
        w = 0.8 + 0.4 * rng.uniform(); // near-uniform weights
        total += w;
    }

    std::vector<Component> components;
    components.reserve(static_cast<std::size_t>(K));
    for (Index k = 0; k < K; ++k) {
        Vector direction(M);
        for (Index j = 0; j < M; ++j) direction(j) = rng.normal();
        Vector mean = Vector::Zero(M);
        if (config.separation > 0.0) {
            mean = config.separation * direction / direction.norm();
        }

        Matrix gaussian(M, d);
        for (Index c = 0; c < d; ++c) {
            for (Index r = 0; r < M; ++r) gaussian(r, c) = rng.normal();
        }
        Eigen::HouseholderQR<Matrix> qr(gaussian);
        Matrix basis = qr.householderQ() * Matrix::Identity(M, d);
        for (Index c = 0; c < d; ++c) {
            Index arg = 0;
            basis.col(c).cwiseAbs().maxCoeff(&arg);
            if (basis(arg, c) < 0.0) basis.col(c) = -basis.col(c);
        }

        components.emplace_back(raw_weights[static_cast<std::size_t>(k)] / total,
                                std::move(mean), a, config.noise_variance,
                                std::move(basis));
    }
    return HdGmmModel(std::move(components));
}

} // namespace hdgmm
