#pragma once

#include <vector>

#include "ganodet/autodiff.hpp"

namespace ganodet {

struct LossWeights {
    double w_adv = 1.0;
    double w_con = 40.0;
    double w_lat = 1.0;

    void validate() const {
        if (w_adv < 0 || w_con < 0 || w_lat < 0) throw ConfigError("loss weights must be non-negative");
        if (w_adv == 0 && w_con == 0 && w_lat == 0) throw ConfigError("loss weights are all zero");
    }
};

struct LossBundle {
    double l_adv = 0.0;
    double l_con = 0.0;
    double l_lat = 0.0;
    double total = 0.0;
};

constexpr double kLogEps = 1e-7;

// D maximizes E[log D(x)] + E[log(1 - D(x_hat))]; its loss is the negation.
// G minimizes either the non-saturating -E[log D(x_hat)] (default) or the
// literal minimax E[log(1 - D(x_hat))].
inline Var discriminator_adv_loss(const std::vector<Var>& p_real, const std::vector<Var>& p_fake) {
    check_shape(!p_real.empty() && p_real.size() == p_fake.size(), "adversarial loss batch");
    std::vector<Var> terms;
    for (std::size_t i = 0; i < p_real.size(); ++i) {
        Var t = add(log_clamped(p_real[i], kLogEps),
                    log_clamped(affine(p_fake[i], -1.0, 1.0), kLogEps));
        terms.push_back(t);
    }
    return scale(mean_scalars(terms), -1.0);
}

inline Var generator_adv_loss(const std::vector<Var>& p_fake, bool non_saturating = true) {
    check_shape(!p_fake.empty(), "generator adversarial loss batch");
    std::vector<Var> terms;
    for (const auto& p : p_fake)
        terms.push_back(non_saturating ? log_clamped(p, kLogEps)
                                       : scale(log_clamped(affine(p, -1.0, 1.0), kLogEps), -1.0));
    return scale(mean_scalars(terms), -1.0);
}

inline std::pair<double, double> adversarial_loss(const std::vector<double>& p_real,
                                                  const std::vector<double>& p_fake,
                                                  bool non_saturating = true) {
    std::vector<Var> pr, pf;
    for (double p : p_real) pr.push_back(make_const(Tensor::scalar(p)));
    for (double p : p_fake) pf.push_back(make_const(Tensor::scalar(p)));
    return {discriminator_adv_loss(pr, pf)->value[0],
            generator_adv_loss(pf, non_saturating)->value[0]};
}

// mean |x - x_hat| over all elements
inline Var contextual_loss(const Var& x, const Var& x_hat) { return mean_abs_diff(x, x_hat); }

inline double contextual_loss(const Tensor& x, const Tensor& x_hat) {
    check_shape(x.same_shape(x_hat), "contextual_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) s += std::abs(x[i] - x_hat[i]);
    return s / static_cast<double>(x.numel());
}

// mean |f(x) - f(x_hat)| over the flattened feature vectors
inline Var latent_loss(const Var& f_x, const Var& f_xhat) { return mean_abs_diff(f_x, f_xhat); }

inline double latent_loss(const Tensor& f_x, const Tensor& f_xhat) {
    return contextual_loss(f_x, f_xhat);
}

inline Var total_loss_var(const Var& l_adv, const Var& l_con, const Var& l_lat,
                          const LossWeights& w) {
    return add(add(scale(l_adv, w.w_adv), scale(l_con, w.w_con)), scale(l_lat, w.w_lat));
}

inline LossBundle total_loss(double l_adv, double l_con, double l_lat, const LossWeights& w) {
    LossBundle b;
    b.l_adv = l_adv;
    b.l_con = l_con;
    b.l_lat = l_lat;
    b.total = w.w_adv * l_adv + w.w_con * l_con + w.w_lat * l_lat;
    return b;
}

// Blended anomaly score: eta * reconstruction term + (1 - eta) * latent term.
// Higher means more anomalous.
inline double anomaly_score(double a_g, double a_d, double eta) {
    if (eta < 0.0 || eta > 1.0) throw ConfigError("eta must lie in [0, 1]");
    return eta * a_g + (1.0 - eta) * a_d;
}

// Min-max scaling of a raw score vector into [0, 1]. A constant vector maps
// to all zeros with a warning.
inline std::vector<double> normalize_scores(const std::vector<double>& v) {
    if (v.empty()) throw ConfigError("normalize_scores: empty score vector");
    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi <= lo) {
        warn("normalize_scores: degenerate score set (max == min), returning zeros");
        return std::vector<double>(v.size(), 0.0);
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / (hi - lo);
    return out;
}

// Fixed-reference variant: normalizes against externally supplied statistics
// (e.g. from a reference test set) and clips to [0, 1], so a single image's
// score no longer depends on the batch it was scored with.
inline std::vector<double> normalize_scores(const std::vector<double>& v, double ref_min,
                                            double ref_max) {
    if (v.empty()) throw ConfigError("normalize_scores: empty score vector");
    if (ref_max <= ref_min) throw ConfigError("normalize_scores: reference max must exceed min");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = std::clamp((v[i] - ref_min) / (ref_max - ref_min), 0.0, 1.0);
    return out;
}

}  // namespace ganodet
