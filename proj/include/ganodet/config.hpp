#pragma once

#include <json.hpp>
#include <string>

#include "ganodet/common.hpp"
#include "ganodet/data.hpp"
#include "ganodet/discriminator.hpp"
#include "ganodet/generator.hpp"
#include "ganodet/objectives.hpp"

namespace ganodet {

struct TrainConfig {
    double learning_rate = 8e-3;
    int batch_size = 64;
    int max_epochs = 20;
    LossWeights weights;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double grad_clip = 0.0;  // 0 = disabled; divergence guard of last resort
    bool non_saturating_g_loss = true;
    bool augment = true;
    double val_fraction = 0.1;
    std::uint64_t seed = 1;

    void validate() const {
        if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
        if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("val_fraction must be in [0, 1)");
        weights.validate();
    }
};

struct RunConfig {
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    TrainConfig train;
    PatchSpec patch;
    double eta = 0.9;
    std::string threshold_policy = "youden";  // or "fixed:<q>"
    std::string train_manifest;
    std::string test_manifest;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    bool deterministic = true;

    void apply_seed() {
        // one user-facing seed drives all sub-seeds
        generator.seed = seed * 2654435761u + 1;
        discriminator.seed = seed * 2654435761u + 2;
        train.seed = seed * 2654435761u + 3;
    }

    void validate(bool need_manifests = true) const {
        generator.validate();
        discriminator.validate();
        train.validate();
        patch.validate();
        if (eta < 0 || eta > 1) throw ConfigError("eta must lie in [0, 1]");
        if (generator.input_size != discriminator.input_size ||
            generator.input_channels != discriminator.input_channels)
            throw ConfigError("generator and discriminator input sizes/channels must agree");
        if (need_manifests) {
            if (train_manifest.empty()) throw ConfigError("train_manifest: path missing");
            if (test_manifest.empty()) throw ConfigError("test_manifest: path missing");
            if (!std::filesystem::exists(train_manifest))
                throw ConfigError("train_manifest: file not found: " + train_manifest);
            if (!std::filesystem::exists(test_manifest))
                throw ConfigError("test_manifest: file not found: " + test_manifest);
        }
    }
};

using nlohmann::json;

inline json to_json(const GeneratorConfig& c) {
    return json{{"input_size", c.input_size},     {"input_channels", c.input_channels},
                {"depth", c.depth},               {"base_channels", c.base_channels},
                {"latent_dim", c.latent_dim},     {"kernel", c.kernel},
                {"upsample", c.upsample == Upsample::Nearest ? "nearest" : "bilinear"},
                {"use_spectral_norm", c.use_spectral_norm}};
}

inline void from_json_into(const json& j, GeneratorConfig& c) {
    c.input_size = j.value("input_size", c.input_size);
    c.input_channels = j.value("input_channels", c.input_channels);
    c.depth = j.value("depth", c.depth);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.kernel = j.value("kernel", c.kernel);
    if (j.contains("upsample")) {
        const std::string u = j["upsample"];
        if (u == "nearest")
            c.upsample = Upsample::Nearest;
        else if (u == "bilinear")
            c.upsample = Upsample::Bilinear;
        else
            throw ConfigError("generator.upsample: unknown mode '" + u + "'");
    }
    c.use_spectral_norm = j.value("use_spectral_norm", c.use_spectral_norm);
}

inline json to_json(const DiscriminatorConfig& c) {
    return json{{"input_size", c.input_size}, {"input_channels", c.input_channels},
                {"depth", c.depth},           {"base_channels", c.base_channels},
                {"kernel", c.kernel},         {"use_attention", c.use_attention},
                {"use_spectral_norm", c.use_spectral_norm},
                {"n_heads", c.n_heads},       {"d_k", c.d_k},
                {"d_v", c.d_v}};
}

inline void from_json_into(const json& j, DiscriminatorConfig& c) {
    c.input_size = j.value("input_size", c.input_size);
    c.input_channels = j.value("input_channels", c.input_channels);
    c.depth = j.value("depth", c.depth);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.kernel = j.value("kernel", c.kernel);
    c.use_attention = j.value("use_attention", c.use_attention);
    c.use_spectral_norm = j.value("use_spectral_norm", c.use_spectral_norm);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_k = j.value("d_k", c.d_k);
    c.d_v = j.value("d_v", c.d_v);
}

inline json to_json(const TrainConfig& c) {
    return json{{"learning_rate", c.learning_rate},
                {"batch_size", c.batch_size},
                {"max_epochs", c.max_epochs},
                {"w_adv", c.weights.w_adv},
                {"w_con", c.weights.w_con},
                {"w_lat", c.weights.w_lat},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"grad_clip", c.grad_clip},
                {"non_saturating_g_loss", c.non_saturating_g_loss},
                {"augment", c.augment},
                {"val_fraction", c.val_fraction}};
}

inline void from_json_into(const json& j, TrainConfig& c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.weights.w_adv = j.value("w_adv", c.weights.w_adv);
    c.weights.w_con = j.value("w_con", c.weights.w_con);
    c.weights.w_lat = j.value("w_lat", c.weights.w_lat);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.non_saturating_g_loss = j.value("non_saturating_g_loss", c.non_saturating_g_loss);
    c.augment = j.value("augment", c.augment);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
}

inline json to_json(const RunConfig& c) {
    return json{{"generator", to_json(c.generator)},
                {"discriminator", to_json(c.discriminator)},
                {"train", to_json(c.train)},
                {"patch", json{{"patch_size", c.patch.patch_size}, {"stride", c.patch.stride}}},
                {"eta", c.eta},
                {"threshold_policy", c.threshold_policy},
                {"train_manifest", c.train_manifest},
                {"test_manifest", c.test_manifest},
                {"out_dir", c.out_dir},
                {"seed", c.seed},
                {"deterministic", c.deterministic}};
}

inline RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    if (j.contains("generator")) from_json_into(j["generator"], c.generator);
    if (j.contains("discriminator")) from_json_into(j["discriminator"], c.discriminator);
    if (j.contains("train")) from_json_into(j["train"], c.train);
    if (j.contains("patch")) {
        c.patch.patch_size = j["patch"].value("patch_size", c.patch.patch_size);
        c.patch.stride = j["patch"].value("stride", c.patch.stride);
    }
    c.eta = j.value("eta", c.eta);
    c.threshold_policy = j.value("threshold_policy", c.threshold_policy);
    c.train_manifest = j.value("train_manifest", c.train_manifest);
    c.test_manifest = j.value("test_manifest", c.test_manifest);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.apply_seed();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

// Hash over the model-defining parts of the config: architecture, training
// hyperparameters and seed. Paths, eta and report policies may differ
// between the training and evaluating run.
inline std::uint64_t config_hash(const RunConfig& c) {
    json j{{"generator", to_json(c.generator)},
           {"discriminator", to_json(c.discriminator)},
           {"train", to_json(c.train)},
           {"seed", c.seed}};
    return fnv1a(j.dump());
}

}  // namespace ganodet
