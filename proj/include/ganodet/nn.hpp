#pragma once

#include <string>
#include <vector>

#include "ganodet/autodiff.hpp"
#include "ganodet/spectral.hpp"

namespace ganodet {

inline Tensor gaussian_init(std::vector<int> shape, Rng& rng, double stddev = 0.02) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> nd(0.0, stddev);
    for (auto& v : t.data) v = nd(rng);
    return t;
}

enum class Activation { ReLU, LeakyReLU, Tanh, None };
enum class Direction { Same, Down, Up };

inline Var apply_activation(const Var& x, Activation act) {
    switch (act) {
        case Activation::ReLU: return relu(x);
        case Activation::LeakyReLU: return leaky_relu(x, 0.2);
        case Activation::Tanh: return tanh_op(x);
        case Activation::None: return x;
    }
    return x;
}

// Convolution + spectral normalization + activation. Down blocks use a
// stride-2 convolution; up blocks upsample 2x then convolve.
struct ConvBlockParams {
    Var weight;  // (Cout, Cin, k, k)
    Var bias;    // (Cout)
    SpectralState sn;
    Activation act = Activation::ReLU;
    bool use_spectral_norm = true;
    Upsample upsample = Upsample::Nearest;
    std::string name;

    static ConvBlockParams make(int c_in, int c_out, int kernel, Rng& rng,
                                Activation act = Activation::ReLU, std::string name = "") {
        if (kernel % 2 == 0) throw ConfigError("conv block kernel must be odd: " + name);
        ConvBlockParams p;
        p.weight = make_param(gaussian_init({c_out, c_in, kernel, kernel}, rng), name + ".w");
        p.bias = make_param(Tensor::zeros({c_out}), name + ".b");
        p.sn = SpectralState::init(c_out, rng);
        p.act = act;
        p.name = std::move(name);
        return p;
    }

    void collect(std::vector<Var>& out) {
        out.push_back(weight);
        out.push_back(bias);
    }
};

// Advances the power iteration once; call exactly once per optimizer update.
inline void advance_spectral(ConvBlockParams& p) {
    if (p.use_spectral_norm) power_iteration_step(p.weight->value, p.sn);
}

inline Var conv_block(const Var& x, ConvBlockParams& p, Direction dir) {
    Var in = x;
    int stride = 1;
    if (dir == Direction::Down) {
        if (x->value.shape[1] % 2 != 0 || x->value.shape[2] % 2 != 0)
            throw ConfigError("down conv block needs even spatial dims, got " + x->value.shape_str());
        stride = 2;
    } else if (dir == Direction::Up) {
        in = upsample2x(x, p.upsample);
    }
    Var w = p.use_spectral_norm ? spectral_normalize_var(p.weight, p.sn) : p.weight;
    return apply_activation(conv2d(in, w, p.bias, stride), p.act);
}

// Multi-head self-attention over spatial positions, plus the parallel
// convolution whose output the attention maps are concatenated with.
struct AttentionParams {
    int n_heads = 4;
    int d_k = 0;
    int d_v = 0;
    std::vector<Var> wq, wk, wv;  // per head: (F_in, d_k/d_v)
    Var wo;                       // (n_heads*d_v, n_heads*d_v)
    ConvBlockParams conv;         // standard conv branch

    void collect(std::vector<Var>& out) {
        for (auto& w : wq) out.push_back(w);
        for (auto& w : wk) out.push_back(w);
        for (auto& w : wv) out.push_back(w);
        out.push_back(wo);
        conv.collect(out);
    }
};

// Channel accounting is fixed at build time: c_out = conv channels +
// n_heads*d_v. Defaults follow d_k = d_v = c_out / (2*n_heads), i.e. the
// attention branch supplies half of the declared output channels.
inline AttentionParams make_attention(int c_in, int c_out, int kernel, Rng& rng, int n_heads = 4,
                                      int d_k = 0, int d_v = 0, Activation conv_act = Activation::None,
                                      const std::string& name = "attn") {
    AttentionParams p;
    p.n_heads = n_heads;
    if (n_heads < 1) throw ConfigError("attention needs at least one head");
    p.d_v = d_v > 0 ? d_v : c_out / (2 * n_heads);
    p.d_k = d_k > 0 ? d_k : p.d_v;
    if (p.d_v < 1 || p.d_k < 1) throw ConfigError("attention depths must be positive: " + name);
    const int att_ch = n_heads * p.d_v;
    if (att_ch >= c_out)
        throw ConfigError("attention channels (" + std::to_string(att_ch) +
                          ") must leave room for the conv branch in c_out=" + std::to_string(c_out));
    for (int h = 0; h < n_heads; ++h) {
        p.wq.push_back(make_param(gaussian_init({c_in, p.d_k}, rng), name + ".wq" + std::to_string(h)));
        p.wk.push_back(make_param(gaussian_init({c_in, p.d_k}, rng), name + ".wk" + std::to_string(h)));
        p.wv.push_back(make_param(gaussian_init({c_in, p.d_v}, rng), name + ".wv" + std::to_string(h)));
    }
    p.wo = make_param(gaussian_init({att_ch, att_ch}, rng), name + ".wo");
    p.conv = ConvBlockParams::make(c_in, c_out - att_ch, kernel, rng, conv_act, name + ".conv");
    return p;
}

// x: (H*W, F_in) -> (H*W, n_heads*d_v). Per head: softmax(Q K^T / sqrt(d_k)) V,
// heads concatenated and mixed by wo.
inline Var multi_head_self_attention(const Var& x, const AttentionParams& p,
                                     std::vector<Var>* att_maps = nullptr) {
    check_shape(x->value.shape.size() == 2, "attention input must be (positions, features)");
    check_shape(x->value.shape[1] == p.wq[0]->value.shape[0], "attention feature dim");
    std::vector<Var> heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(p.d_k));
    for (int h = 0; h < p.n_heads; ++h) {
        Var q = matmul(x, p.wq[h]);
        Var k = matmul(x, p.wk[h]);
        Var v = matmul(x, p.wv[h]);
        Var logits = scale(matmul(q, transpose2d(k)), inv_sqrt_dk);
        Var att = softmax_rows(logits);
        if (att_maps) att_maps->push_back(att);
        heads.push_back(matmul(att, v));
    }
    Var cat = p.n_heads == 1 ? heads[0] : concat_cols(heads);
    return matmul(cat, p.wo);
}

// x: (C_in, H, W) -> (c_out, H, W): channel concatenation of the spectrally
// normalized conv branch and the self-attention branch reshaped to (., H, W).
inline Var attention_augmented_conv(const Var& x, AttentionParams& p) {
    check_shape(x->value.shape.size() == 3, "attention_augmented_conv input");
    const int H = x->value.shape[1], W = x->value.shape[2];
    Var conv_out = conv_block(x, p.conv, Direction::Same);
    Var att = multi_head_self_attention(chw_to_pc(x), p);
    Var att_chw = pc_to_chw(att, H, W);
    return concat_channels({conv_out, att_chw});
}

}  // namespace ganodet
