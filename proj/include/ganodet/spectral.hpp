#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "ganodet/autodiff.hpp"
#include "ganodet/common.hpp"
#include "ganodet/tensor.hpp"

namespace ganodet {

// Power-iteration state for one weight. u tracks the left singular vector of
// the weight flattened to (out_channels, rest); it persists across training
// steps and advances one iteration per parameter update.
struct SpectralState {
    std::vector<double> u;
    int n_power_iterations = 1;
    double last_sigma = 0.0;

    static SpectralState init(int rows, Rng& rng) {
        SpectralState s;
        s.u.resize(rows);
        std::normal_distribution<double> nd(0.0, 1.0);
        double norm = 0.0;
        while (norm < 1e-12) {
            for (auto& v : s.u) v = nd(rng);
            norm = 0.0;
            for (double v : s.u) norm += v * v;
            norm = std::sqrt(norm);
        }
        for (auto& v : s.u) v /= norm;
        return s;
    }
};

namespace detail {

inline std::pair<int, int> flat_dims(const Tensor& w) {
    check_shape(!w.shape.empty(), "spectral weight");
    int rows = w.shape[0];
    int cols = static_cast<int>(w.numel()) / rows;
    return {rows, cols};
}

}  // namespace detail

// One power-iteration update: v <- W^T u / ||.||, u <- W v / ||.||,
// sigma = u^T W v. Returns the sigma estimate; updates state.u in place.
inline double power_iteration_step(const Tensor& weight, SpectralState& state) {
    auto [rows, cols] = detail::flat_dims(weight);
    if (static_cast<int>(state.u.size()) != rows)
        throw ConfigError("power_iteration_step: u has length " + std::to_string(state.u.size()) +
                          ", weight has " + std::to_string(rows) + " rows");
    if (!weight.all_finite()) throw DivergenceError("power_iteration_step: non-finite weight");

    CMapM W(weight.data.data(), rows, cols);
    Eigen::Map<Eigen::VectorXd> u(state.u.data(), rows);
    double sigma = 0.0;
    for (int it = 0; it < state.n_power_iterations; ++it) {
        Eigen::VectorXd v = W.transpose() * u;
        double vn = v.norm();
        if (vn < 1e-12) {  // zero weight matrix: sigma 0, leave u untouched
            state.last_sigma = 0.0;
            return 0.0;
        }
        v /= vn;
        Eigen::VectorXd wu = W * v;
        double un = wu.norm();
        if (un < 1e-12) {
            state.last_sigma = 0.0;
            return 0.0;
        }
        u = wu / un;
        sigma = u.dot(W * v);
    }
    state.last_sigma = sigma;
    return sigma;
}

// sigma as a deterministic function of (weight, state.u) without advancing
// the state: sigma = ||W^T u||. Used by the differentiable normalization.
inline double sigma_from_state(const Tensor& weight, const SpectralState& state) {
    auto [rows, cols] = detail::flat_dims(weight);
    check_shape(static_cast<int>(state.u.size()) == rows, "sigma_from_state u length");
    CMapM W(weight.data.data(), rows, cols);
    Eigen::Map<const Eigen::VectorXd> u(state.u.data(), rows);
    return (W.transpose() * u).norm();
}

// Non-differentiable form, shape-preserving: weight / sigma.
inline Tensor spectral_normalize(const Tensor& weight, SpectralState& state) {
    double sigma = power_iteration_step(weight, state);
    Tensor out = weight;
    if (sigma < 1e-12) {
        warn("spectral_normalize: sigma below 1e-12, weight left unchanged");
        return out;
    }
    for (auto& v : out.data) v /= sigma;
    return out;
}

// Differentiable normalization for the training graph. The caller advances
// the power iteration explicitly (once per update); here u is a constant and
// sigma(W) = ||W^T u|| is differentiated exactly:
//   d sigma / d W = u v^T with v = W^T u / sigma.
inline Var spectral_normalize_var(const Var& w, SpectralState& state) {
    auto [rows, cols] = detail::flat_dims(w->value);
    check_shape(static_cast<int>(state.u.size()) == rows, "spectral_normalize_var u length");
    CMapM W(w->value.data.data(), rows, cols);
    Eigen::Map<const Eigen::VectorXd> u(state.u.data(), rows);
    Eigen::VectorXd wtu = W.transpose() * u;
    const double sigma = wtu.norm();
    state.last_sigma = sigma;
    if (sigma < 1e-12) {
        warn("spectral_normalize: sigma below 1e-12, weight left unchanged");
        return w;
    }
    Eigen::VectorXd v = wtu / sigma;
    Tensor out = w->value;
    for (auto& x : out.data) x /= sigma;
    auto uvec = std::make_shared<Eigen::VectorXd>(u);
    auto vvec = std::make_shared<Eigen::VectorXd>(std::move(v));
    return detail::make_op(std::move(out), {w}, [w, uvec, vvec, sigma, rows, cols](Node& n) {
        if (!w->requires_grad) return;
        // d(W/sigma) pullback: g/sigma - (sum g.W / sigma^2) * dsigma/dW
        auto& gw = w->grad_buf();
        const std::size_t N = gw.numel();
        double gdotw = 0.0;
        for (std::size_t i = 0; i < N; ++i) gdotw += n.grad[i] * w->value[i];
        const double coeff = gdotw / (sigma * sigma);
        for (std::size_t i = 0; i < N; ++i) gw[i] += n.grad[i] / sigma;
        MapM GW(gw.data.data(), rows, cols);
        GW.noalias() -= coeff * (*uvec) * vvec->transpose();
    });
}

}  // namespace ganodet
