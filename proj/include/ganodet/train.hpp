#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ganodet/checkpoint.hpp"
#include "ganodet/eval.hpp"

namespace ganodet {

// One bias-corrected Adam update over the whole parameter list. A positive
// grad_clip rescales the global gradient norm; it is off by default.
inline void adam_step(const std::vector<Var>& params, AdamState& st, double lr, double beta1,
                      double beta2, double grad_clip = 0.0, double eps = 1e-8) {
    check_shape(params.size() == st.m.size(), "adam_step parameter count");
    if (grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& p : params)
            for (double g : p->grad.data) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > grad_clip) {
            const double s = grad_clip / norm;
            for (auto& p : params)
                for (double& g : p->grad.data) g *= s;
        }
    }
    st.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        for (std::size_t k = 0; k < p->value.data.size(); ++k) {
            const double g = p->grad.data[k];
            st.m[i].data[k] = beta1 * st.m[i].data[k] + (1 - beta1) * g;
            st.v[i].data[k] = beta2 * st.v[i].data[k] + (1 - beta2) * g * g;
            p->value.data[k] -= lr * (st.m[i].data[k] / bc1) / (std::sqrt(st.v[i].data[k] / bc2) + eps);
        }
    }
}

struct TrainStepStats {
    double l_adv = 0.0;
    double l_con = 0.0;
    double l_lat = 0.0;
    double total = 0.0;
    double d_loss = 0.0;
};

namespace detail {

inline void require_finite(double v, const std::string& term) {
    if (!std::isfinite(v)) throw DivergenceError("non-finite " + term + " during training");
}

}  // namespace detail

// One alternating update on a batch: the discriminator sees real inputs and
// detached reconstructions, then the generator backpropagates through the
// frozen discriminator. The generator update never touches D parameters.
inline TrainStepStats train_step(ModelBundle& b, const std::vector<Tensor>& batch) {
    check_shape(!batch.empty(), "train_step batch");
    const auto& w = b.cfg.train.weights;
    const auto& tc = b.cfg.train;
    TrainStepStats stats;

    // reconstructions, detached for the discriminator update
    std::vector<Tensor> xhat_detached;
    for (const auto& x : batch) xhat_detached.push_back(b.g.forward(make_const(x))->value);

    // --- discriminator update ---
    std::vector<Var> p_real, p_fake;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        p_real.push_back(b.d.forward(make_const(batch[i])).p_real);
        p_fake.push_back(b.d.forward(make_const(xhat_detached[i])).p_real);
    }
    Var d_loss = discriminator_adv_loss(p_real, p_fake);
    stats.d_loss = d_loss->value.data[0];
    detail::require_finite(stats.d_loss, "discriminator loss");
    backward(d_loss);
    adam_step(b.d.parameters(), b.adam_d, tc.learning_rate, tc.beta1, tc.beta2, tc.grad_clip);
    for (auto& p : b.d.parameters()) p->grad = Tensor::zeros(p->value.shape);
    for (auto& p : b.g.parameters()) p->grad = Tensor::zeros(p->value.shape);

    // --- generator update (through the freshly updated, frozen D) ---
    std::vector<Var> p_fake_g, con_terms, lat_terms;
    for (const auto& x : batch) {
        Var xv = make_const(x);
        Var xhat = b.g.forward(xv);
        p_fake_g.push_back(b.d.forward(xhat).p_real);
        con_terms.push_back(contextual_loss(xv, xhat));
        lat_terms.push_back(latent_loss(b.d.forward(xv).features, b.d.forward(xhat).features));
    }
    Var l_adv = generator_adv_loss(p_fake_g, tc.non_saturating_g_loss);
    Var l_con = mean_scalars(con_terms);
    Var l_lat = mean_scalars(lat_terms);
    Var total = total_loss_var(l_adv, l_con, l_lat, w);
    stats.l_adv = l_adv->value.data[0];
    stats.l_con = l_con->value.data[0];
    stats.l_lat = l_lat->value.data[0];
    stats.total = total->value.data[0];
    detail::require_finite(stats.l_adv, "adversarial loss");
    detail::require_finite(stats.l_con, "contextual loss");
    detail::require_finite(stats.l_lat, "latent loss");
    backward(total);
    adam_step(b.g.parameters(), b.adam_g, tc.learning_rate, tc.beta1, tc.beta2, tc.grad_clip);
    for (auto& p : b.g.parameters()) p->grad = Tensor::zeros(p->value.shape);
    for (auto& p : b.d.parameters()) p->grad = Tensor::zeros(p->value.shape);

    // one power iteration per network per update, outside the gradient path
    b.g.advance_spectral_states();
    b.d.advance_spectral_states();
    return stats;
}

struct EpochCallbackInfo {
    int epoch = 0;
    TrainStepStats mean_stats;
    double val_auc = 0.0;
};

// Seeded subset of the test manifest used for per-epoch validation AUC.
inline DatasetManifest validation_slice(const DatasetManifest& test, double fraction, Rng& rng) {
    DatasetManifest val;
    val.split = Split::Test;
    std::vector<std::size_t> idx(test.records.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n = std::max<std::size_t>(2, static_cast<std::size_t>(fraction * idx.size()));
    n = std::min(n, idx.size());
    for (std::size_t i = 0; i < n; ++i) val.records.push_back(test.records[idx[i]]);
    return val;
}

namespace detail {

// fit a decoded image to the network input: center-crop oversized images
// (training sees one aligned tile), upscale undersized ones
inline Tensor fit_to_input(Tensor t, int size) {
    const int H = t.shape[1], W = t.shape[2];
    if (H == size && W == size) return t;
    if (H >= size && W >= size) {
        const int y0 = (H - size) / 2, x0 = (W - size) / 2;
        Tensor out({t.shape[0], size, size});
        for (int c = 0; c < t.shape[0]; ++c)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) out.at3(c, y, x) = t.at3(c, y0 + y, x0 + x);
        return out;
    }
    return resize_bilinear(t, size, size);
}

}  // namespace detail

struct TrainResult {
    double best_val_auc = 0.0;
    int best_epoch = 0;
    std::vector<std::string> metric_lines;
};

// Full training loop: seeded shuffling, per-epoch validation AUC on a held
// slice of the test set, best/last checkpoints, append-only metrics CSV.
template <class Callback = std::nullptr_t>
inline TrainResult train(ModelBundle& b, const DatasetManifest& train_set, const DatasetManifest& test_set,
                         Callback&& on_epoch = nullptr) {
    train_set.validate();
    const auto& tc = b.cfg.train;
    const int size = b.cfg.generator.input_size;
    const int channels = b.cfg.generator.input_channels;
    std::filesystem::create_directories(b.cfg.out_dir);

    Rng rng(tc.seed);
    DatasetManifest val = validation_slice(test_set, tc.val_fraction, rng);

    const std::string metrics_path = b.cfg.out_dir + "/metrics.csv";
    std::ofstream metrics(metrics_path, std::ios::app);
    if (!metrics) throw IoError("cannot write " + metrics_path);
    if (b.metric_history.empty()) metrics << "epoch,l_adv,l_con,l_lat,total,d_loss,val_auc\n";

    TrainResult result;
    result.best_val_auc = -1.0;
    for (const auto& line : b.metric_history) {  // resumed run: recover the running best
        std::istringstream ss(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        if (cols.size() == 7) {
            const double auc = std::stod(cols[6]);
            if (auc > result.best_val_auc) {
                result.best_val_auc = auc;
                result.best_epoch = std::stoi(cols[0]);
            }
        }
    }

    std::vector<std::size_t> order(train_set.records.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = b.epoch + 1; epoch <= tc.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        TrainStepStats sum;
        int n_steps = 0;
        for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(tc.batch_size)) {
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(off),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                             off + tc.batch_size, order.size())));
            std::vector<Tensor> batch = load_batch(train_set, idx, channels, tc.augment, rng);
            for (auto& t : batch) t = detail::fit_to_input(std::move(t), size);
            TrainStepStats s = train_step(b, batch);
            sum.l_adv += s.l_adv;
            sum.l_con += s.l_con;
            sum.l_lat += s.l_lat;
            sum.total += s.total;
            sum.d_loss += s.d_loss;
            ++n_steps;
        }
        TrainStepStats mean{sum.l_adv / n_steps, sum.l_con / n_steps, sum.l_lat / n_steps,
                            sum.total / n_steps, sum.d_loss / n_steps};

        AnomalyScoreVector val_scores = score_dataset(b, val, b.cfg.eta);
        double val_auc;
        try {
            std::vector<double> s;
            std::vector<Label> l;
            for (const auto& v : val_scores) {
                s.push_back(v.normalized);
                l.push_back(v.label);
            }
            val_auc = roc_auc(s, l);
        } catch (const MetricError&) {
            warn("validation slice is single-label, val_auc reported as 0.5");
            val_auc = 0.5;
        }

        std::ostringstream line;
        line.precision(10);
        line << epoch << ',' << mean.l_adv << ',' << mean.l_con << ',' << mean.l_lat << ','
             << mean.total << ',' << mean.d_loss << ',' << val_auc;
        b.metric_history.push_back(line.str());
        result.metric_lines.push_back(line.str());
        metrics << line.str() << '\n';
        metrics.flush();

        b.epoch = epoch;
        save_checkpoint(b, b.cfg.out_dir + "/last.ckpt");
        if (val_auc > result.best_val_auc) {
            result.best_val_auc = val_auc;
            result.best_epoch = epoch;
            save_checkpoint(b, b.cfg.out_dir + "/best.ckpt");
        }
        if constexpr (!std::is_same_v<std::decay_t<Callback>, std::nullptr_t>)
            on_epoch(EpochCallbackInfo{epoch, mean, val_auc});
    }
    return result;
}

}  // namespace ganodet
