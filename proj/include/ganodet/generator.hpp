#pragma once

#include <string>
#include <vector>

#include "ganodet/nn.hpp"

namespace ganodet {

struct GeneratorConfig {
    int input_size = 256;
    int input_channels = 3;
    int depth = 4;          // number of down levels L
    int base_channels = 64; // channels at level 0, doubling per level
    int latent_dim = 0;     // bottleneck channels; 0 = schedule value at level L
    int kernel = 3;
    Upsample upsample = Upsample::Nearest;
    bool use_spectral_norm = true;
    std::uint64_t seed = 1;

    static constexpr int kChannelCap = 512;

    int channels_at(int level) const {
        if (level == depth && latent_dim > 0) return latent_dim;
        long c = static_cast<long>(base_channels) << level;
        return static_cast<int>(std::min<long>(c, kChannelCap));
    }

    void validate() const {
        if (input_size < 8 || (input_size & (input_size - 1)) != 0)
            throw ConfigError("generator input_size must be a power of two >= 8, got " +
                              std::to_string(input_size));
        if (input_channels != 1 && input_channels != 3)
            throw ConfigError("generator input_channels must be 1 or 3");
        if (depth < 1) throw ConfigError("generator depth must be >= 1");
        if (input_size >> depth < 4)
            throw ConfigError("generator bottleneck would be smaller than 4x4: input_size " +
                              std::to_string(input_size) + ", depth " + std::to_string(depth));
        if (base_channels < 1) throw ConfigError("generator base_channels must be positive");
    }
};

// Per-node record of what the forward pass actually wired, for arity checks.
struct NodeWiring {
    int level = 0;
    int column = 0;
    int input_arity = 0;     // number of feature maps concatenated (j+1 for j>0, 1 for j=0)
    int concat_channels = 0; // channels entering H
    int spatial = 0;         // spatial extent at this node
};

struct GeneratorForwardStats {
    std::vector<NodeWiring> nodes;
};

// Skip-pathway node for j >= 1: concatenates the j same-level predecessor
// outputs with the upsampled output from one level below, then applies H.
inline Var dense_skip_node(int level, int column, const std::vector<Var>& same_level_outputs,
                           const Var& below_output, ConvBlockParams& h, Upsample mode,
                           GeneratorForwardStats* stats = nullptr) {
    if (column < 1 || static_cast<int>(same_level_outputs.size()) != column)
        throw WiringError("dense_skip_node (" + std::to_string(level) + "," + std::to_string(column) +
                          "): expected " + std::to_string(column) + " same-level inputs, got " +
                          std::to_string(same_level_outputs.size()));
    Var up = upsample2x(below_output, mode);
    for (const auto& s : same_level_outputs)
        if (s->value.shape[1] != up->value.shape[1] || s->value.shape[2] != up->value.shape[2])
            throw WiringError("dense_skip_node (" + std::to_string(level) + "," + std::to_string(column) +
                              "): spatial dims disagree, " + s->value.shape_str() + " vs upsampled " +
                              up->value.shape_str());
    std::vector<Var> inputs = same_level_outputs;
    inputs.push_back(up);
    Var cat = concat_channels(inputs);
    if (stats)
        stats->nodes.push_back({level, column, static_cast<int>(inputs.size()), cat->value.shape[0],
                                cat->value.shape[1]});
    return conv_block(cat, h, Direction::Same);
}

// Encoder-decoder generator joined by the triangular grid of dense skip
// nodes. Node (i, j) lives at level i (spatial input_size / 2^i), column j;
// the encoder fills column 0, the decoder fills columns in increasing j.
// The reconstruction is read from node (0, L) through a tanh head.
struct Generator {
    GeneratorConfig cfg;
    ConvBlockParams stem;                              // node (0,0)
    std::vector<ConvBlockParams> encoder;              // node (i,0), i = 1..L
    std::vector<std::vector<ConvBlockParams>> skip;    // skip[i][j-1] = node (i,j)
    ConvBlockParams head;                              // (0,L) -> input_channels, tanh

    std::vector<Var> parameters() {
        std::vector<Var> out;
        stem.collect(out);
        for (auto& e : encoder) e.collect(out);
        for (auto& row : skip)
            for (auto& n : row) n.collect(out);
        head.collect(out);
        return out;
    }

    void for_each_block(const std::function<void(ConvBlockParams&)>& fn) {
        fn(stem);
        for (auto& e : encoder) fn(e);
        for (auto& row : skip)
            for (auto& n : row) fn(n);
        fn(head);
    }

    void advance_spectral_states() {
        for_each_block([](ConvBlockParams& b) { advance_spectral(b); });
    }

    // Returns the reconstruction; optionally exposes the bottleneck x^{L,0}
    // and the wiring record of every node touched.
    Var forward(const Var& x, GeneratorForwardStats* stats = nullptr, Var* bottleneck = nullptr) {
        if (x->value.shape !=
            std::vector<int>{cfg.input_channels, cfg.input_size, cfg.input_size})
            throw ConfigError("generator input shape " + x->value.shape_str() + ", expected (" +
                              std::to_string(cfg.input_channels) + ", " + std::to_string(cfg.input_size) +
                              ", " + std::to_string(cfg.input_size) + ")");
        if (!x->value.all_finite()) throw DivergenceError("generator input contains non-finite values");
        const int L = cfg.depth;
        auto check_finite = [](const Var& v, int i, int j) {
            if (!v->value.all_finite())
                throw DivergenceError("generator node (" + std::to_string(i) + "," + std::to_string(j) +
                                      ") produced non-finite values");
        };
        // grid[i][j]
        std::vector<std::vector<Var>> grid(L + 1);
        for (int i = 0; i <= L; ++i) grid[i].resize(L - i + 1);

        grid[0][0] = conv_block(x, stem, Direction::Same);
        if (stats) stats->nodes.push_back({0, 0, 1, cfg.input_channels, cfg.input_size});
        check_finite(grid[0][0], 0, 0);
        for (int i = 1; i <= L; ++i) {
            grid[i][0] = conv_block(grid[i - 1][0], encoder[i - 1], Direction::Down);
            if (stats)
                stats->nodes.push_back({i, 0, 1, cfg.channels_at(i - 1), cfg.input_size >> i});
            check_finite(grid[i][0], i, 0);
        }
        if (bottleneck) *bottleneck = grid[L][0];

        for (int j = 1; j <= L; ++j) {
            for (int i = 0; i + j <= L; ++i) {
                std::vector<Var> same(grid[i].begin(), grid[i].begin() + j);
                grid[i][j] = dense_skip_node(i, j, same, grid[i + 1][j - 1], skip[i][j - 1],
                                             cfg.upsample, stats);
                check_finite(grid[i][j], i, j);
            }
        }
        Var out = conv_block(grid[0][L], head, Direction::Same);
        check_finite(out, 0, L + 1);
        return out;
    }
};

inline Generator build_generator(const GeneratorConfig& cfg) {
    cfg.validate();
    Generator g;
    g.cfg = cfg;
    Rng rng(cfg.seed);
    const int L = cfg.depth;
    g.stem = ConvBlockParams::make(cfg.input_channels, cfg.channels_at(0), cfg.kernel, rng,
                                   Activation::ReLU, "g.stem");
    for (int i = 1; i <= L; ++i)
        g.encoder.push_back(ConvBlockParams::make(cfg.channels_at(i - 1), cfg.channels_at(i), cfg.kernel,
                                                  rng, Activation::ReLU,
                                                  "g.enc" + std::to_string(i)));
    g.skip.resize(L);
    for (int i = 0; i < L; ++i)
        for (int j = 1; j + i <= L; ++j) {
            const int c_in = j * cfg.channels_at(i) + cfg.channels_at(i + 1);
            g.skip[i].push_back(ConvBlockParams::make(c_in, cfg.channels_at(i), cfg.kernel, rng,
                                                      Activation::ReLU,
                                                      "g.x" + std::to_string(i) + "_" + std::to_string(j)));
        }
    g.head = ConvBlockParams::make(cfg.channels_at(0), cfg.input_channels, cfg.kernel, rng,
                                   Activation::Tanh, "g.head");
    g.for_each_block([&](ConvBlockParams& b) {
        b.use_spectral_norm = cfg.use_spectral_norm;
        b.upsample = cfg.upsample;
    });
    return g;
}

}  // namespace ganodet
