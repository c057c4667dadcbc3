#pragma once

#include <string>
#include <vector>

#include "ganodet/nn.hpp"

namespace ganodet {

struct DiscriminatorConfig {
    int input_size = 256;
    int input_channels = 3;
    int depth = 4;
    int base_channels = 64;
    int kernel = 3;
    bool use_attention = true;        // ablation flag
    bool use_spectral_norm = true;    // ablation flag
    int n_heads = 4;
    int d_k = 0;  // 0 = penultimate_channels / (2*n_heads)
    int d_v = 0;
    std::uint64_t seed = 2;

    static constexpr int kChannelCap = 512;

    int channels_at(int stage) const {  // stage 0..depth-1
        long c = static_cast<long>(base_channels) << stage;
        return static_cast<int>(std::min<long>(c, kChannelCap));
    }

    int feature_spatial() const { return input_size >> depth; }

    void validate() const {
        if (input_size < 8 || (input_size & (input_size - 1)) != 0)
            throw ConfigError("discriminator input_size must be a power of two >= 8");
        if (depth < 1) throw ConfigError("discriminator depth must be >= 1");
        if (feature_spatial() < 4)
            throw ConfigError("discriminator final feature map would be smaller than 4x4");
        if (base_channels < 1) throw ConfigError("discriminator base_channels must be positive");
    }
};

struct DiscriminatorOutput {
    Var p_real;    // (1), sigmoid of pooled logit, in (0, 1)
    Var features;  // f(x): activation before the final 1-channel conv, flattened
    Var logit;     // (1), pre-sigmoid
};

// Stack of spectrally normalized stride-2 conv blocks, an attention-augmented
// convolution as the penultimate stage, then a 1-channel conv whose global
// average is the real/fake logit. f(x) is the penultimate stage's output.
struct Discriminator {
    DiscriminatorConfig cfg;
    std::vector<ConvBlockParams> down;
    AttentionParams attn;            // used when cfg.use_attention
    ConvBlockParams penultimate;     // plain-conv replacement when attention is off
    ConvBlockParams final_conv;      // -> 1 channel

    std::vector<Var> parameters() {
        std::vector<Var> out;
        for (auto& d : down) d.collect(out);
        if (cfg.use_attention)
            attn.collect(out);
        else
            penultimate.collect(out);
        final_conv.collect(out);
        return out;
    }

    void for_each_block(const std::function<void(ConvBlockParams&)>& fn) {
        for (auto& d : down) fn(d);
        if (cfg.use_attention)
            fn(attn.conv);
        else
            fn(penultimate);
        fn(final_conv);
    }

    void advance_spectral_states() {
        for_each_block([](ConvBlockParams& b) { advance_spectral(b); });
    }

    int feature_dim() const {
        return cfg.channels_at(cfg.depth - 1) * cfg.feature_spatial() * cfg.feature_spatial();
    }

    DiscriminatorOutput forward(const Var& x) {
        if (x->value.shape !=
            std::vector<int>{cfg.input_channels, cfg.input_size, cfg.input_size})
            throw ConfigError("discriminator input shape " + x->value.shape_str() + ", expected (" +
                              std::to_string(cfg.input_channels) + ", " + std::to_string(cfg.input_size) +
                              ", " + std::to_string(cfg.input_size) + ")");
        if (!x->value.all_finite())
            throw DivergenceError("discriminator input contains non-finite values");
        auto check_finite = [](const Var& v, const std::string& stage) {
            if (!v->value.all_finite())
                throw DivergenceError("discriminator stage '" + stage + "' produced non-finite values");
        };
        Var h = x;
        for (std::size_t i = 0; i < down.size(); ++i) {
            h = conv_block(h, down[i], Direction::Down);
            check_finite(h, "down" + std::to_string(i));
        }
        Var feat_map;
        if (cfg.use_attention) {
            feat_map = leaky_relu(attention_augmented_conv(h, attn), 0.2);
            check_finite(feat_map, "attention");
        } else {
            feat_map = conv_block(h, penultimate, Direction::Same);
            check_finite(feat_map, "penultimate");
        }
        Var logit_map = conv_block(feat_map, final_conv, Direction::Same);
        check_finite(logit_map, "final_conv");
        Var logit = global_avg_pool(logit_map);  // (1)
        DiscriminatorOutput out;
        out.logit = logit;
        out.p_real = sigmoid_op(logit);
        out.features = reshape(feat_map, {static_cast<int>(feat_map->value.numel())});
        return out;
    }
};

inline Discriminator build_discriminator(const DiscriminatorConfig& cfg) {
    cfg.validate();
    Discriminator d;
    d.cfg = cfg;
    Rng rng(cfg.seed);
    int c_prev = cfg.input_channels;
    for (int i = 0; i < cfg.depth; ++i) {
        d.down.push_back(ConvBlockParams::make(c_prev, cfg.channels_at(i), cfg.kernel, rng,
                                               Activation::LeakyReLU, "d.down" + std::to_string(i)));
        c_prev = cfg.channels_at(i);
    }
    const int c_pen = cfg.channels_at(cfg.depth - 1);
    if (cfg.use_attention) {
        // activation applied after the concat, so the conv branch stays linear here
        d.attn = make_attention(c_prev, c_pen, cfg.kernel, rng, cfg.n_heads, cfg.d_k, cfg.d_v,
                                Activation::None, "d.attn");
        // keep rng state layout independent of the flag
        d.penultimate = ConvBlockParams::make(1, 1, 1, rng, Activation::LeakyReLU, "d.unused");
    } else {
        d.penultimate =
            ConvBlockParams::make(c_prev, c_pen, cfg.kernel, rng, Activation::LeakyReLU, "d.pen");
    }
    d.final_conv = ConvBlockParams::make(c_pen, 1, cfg.kernel, rng, Activation::None, "d.final");
    d.for_each_block([&](ConvBlockParams& b) { b.use_spectral_norm = cfg.use_spectral_norm; });
    return d;
}

}  // namespace ganodet
