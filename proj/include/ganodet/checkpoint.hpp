#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ganodet/config.hpp"

namespace ganodet {

struct AdamState {
    std::int64_t t = 0;
    std::vector<Tensor> m, v;

    void init(const std::vector<Var>& params) {
        t = 0;
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.push_back(Tensor::zeros(p->value.shape));
            v.push_back(Tensor::zeros(p->value.shape));
        }
    }
};

// Everything a run owns: both networks, optimizer state, progress counters.
struct ModelBundle {
    RunConfig cfg;
    Generator g;
    Discriminator d;
    AdamState adam_g, adam_d;
    int epoch = 0;
    std::vector<std::string> metric_history;  // CSV lines, one per epoch
};

inline ModelBundle build_models(const RunConfig& cfg) {
    ModelBundle b;
    b.cfg = cfg;
    b.g = build_generator(cfg.generator);
    b.d = build_discriminator(cfg.discriminator);
    b.adam_g.init(b.g.parameters());
    b.adam_d.init(b.d.parameters());
    return b;
}

namespace detail {

struct NamedArray {
    std::string name;
    Tensor* tensor;
};

inline void enumerate_arrays(ModelBundle& b, std::vector<NamedArray>& out,
                             std::vector<std::pair<std::string, std::vector<double>*>>& uvecs) {
    auto add_params = [&](const std::string& prefix, std::vector<Var> params) {
        int i = 0;
        for (auto& p : params) out.push_back({prefix + ".p" + std::to_string(i++), &p->value});
    };
    add_params("g", b.g.parameters());
    add_params("d", b.d.parameters());
    int i = 0;
    b.g.for_each_block([&](ConvBlockParams& blk) { uvecs.push_back({"g.u" + std::to_string(i++), &blk.sn.u}); });
    i = 0;
    b.d.for_each_block([&](ConvBlockParams& blk) { uvecs.push_back({"d.u" + std::to_string(i++), &blk.sn.u}); });
    auto add_adam = [&](const std::string& prefix, AdamState& st) {
        for (std::size_t k = 0; k < st.m.size(); ++k) {
            out.push_back({prefix + ".m" + std::to_string(k), &st.m[k]});
            out.push_back({prefix + ".v" + std::to_string(k), &st.v[k]});
        }
    };
    add_adam("g.adam", b.adam_g);
    add_adam("d.adam", b.adam_d);
}

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::istream& is, T& v) {
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("checkpoint truncated");
}

inline void write_str(std::ostream& os, const std::string& s) {
    write_pod(os, static_cast<std::uint64_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& is) {
    std::uint64_t n;
    read_pod(is, n);
    std::string s(n, '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw IoError("checkpoint truncated");
    return s;
}

constexpr char kMagic[8] = {'G', 'D', 'E', 'T', 'C', 'K', 'P', '1'};

}  // namespace detail

inline void save_checkpoint(ModelBundle& b, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint " + path);
    os.write(detail::kMagic, 8);
    detail::write_pod(os, config_hash(b.cfg));
    detail::write_pod(os, static_cast<std::int32_t>(b.epoch));
    detail::write_pod(os, b.adam_g.t);
    detail::write_pod(os, b.adam_d.t);
    json meta{{"config", to_json(b.cfg)}, {"metric_history", b.metric_history}};
    detail::write_str(os, meta.dump());

    std::vector<detail::NamedArray> arrays;
    std::vector<std::pair<std::string, std::vector<double>*>> uvecs;
    detail::enumerate_arrays(b, arrays, uvecs);
    detail::write_pod(os, static_cast<std::uint32_t>(arrays.size() + uvecs.size()));
    for (const auto& a : arrays) {
        detail::write_str(os, a.name);
        detail::write_pod(os, static_cast<std::uint32_t>(a.tensor->shape.size()));
        for (int d : a.tensor->shape) detail::write_pod(os, static_cast<std::int32_t>(d));
        os.write(reinterpret_cast<const char*>(a.tensor->data.data()),
                 static_cast<std::streamsize>(a.tensor->data.size() * sizeof(double)));
    }
    for (const auto& [name, u] : uvecs) {
        detail::write_str(os, name);
        detail::write_pod(os, static_cast<std::uint32_t>(1));
        detail::write_pod(os, static_cast<std::int32_t>(u->size()));
        os.write(reinterpret_cast<const char*>(u->data()),
                 static_cast<std::streamsize>(u->size() * sizeof(double)));
    }
    if (!os) throw IoError("write failed for checkpoint " + path);
}

// Rebuilds the bundle from the config embedded in the file. When
// expected_hash is nonzero the stored hash must match it.
inline ModelBundle load_checkpoint(const std::string& path, std::uint64_t expected_hash = 0) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read checkpoint " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, detail::kMagic, 8) != 0)
        throw IoError("not a checkpoint file: " + path);
    std::uint64_t stored_hash;
    detail::read_pod(is, stored_hash);
    std::int32_t epoch;
    detail::read_pod(is, epoch);
    std::int64_t tg, td;
    detail::read_pod(is, tg);
    detail::read_pod(is, td);
    json meta = json::parse(detail::read_str(is));

    ModelBundle b = build_models(run_config_from_json(meta["config"]));
    b.epoch = epoch;
    b.adam_g.t = tg;
    b.adam_d.t = td;
    b.metric_history = meta["metric_history"].get<std::vector<std::string>>();
    if (config_hash(b.cfg) != stored_hash) throw IoError("checkpoint is internally inconsistent: " + path);
    if (expected_hash != 0 && stored_hash != expected_hash)
        throw ConfigError("checkpoint config hash mismatch: " + path);

    std::uint32_t n_arrays;
    detail::read_pod(is, n_arrays);
    std::map<std::string, Tensor> loaded;
    for (std::uint32_t i = 0; i < n_arrays; ++i) {
        std::string name = detail::read_str(is);
        std::uint32_t ndim;
        detail::read_pod(is, ndim);
        std::vector<int> shape(ndim);
        for (auto& d : shape) {
            std::int32_t e;
            detail::read_pod(is, e);
            d = e;
        }
        Tensor t(shape);
        if (!is.read(reinterpret_cast<char*>(t.data.data()),
                     static_cast<std::streamsize>(t.data.size() * sizeof(double))))
            throw IoError("checkpoint truncated: " + path);
        loaded.emplace(std::move(name), std::move(t));
    }

    std::vector<detail::NamedArray> arrays;
    std::vector<std::pair<std::string, std::vector<double>*>> uvecs;
    detail::enumerate_arrays(b, arrays, uvecs);
    for (auto& a : arrays) {
        auto it = loaded.find(a.name);
        if (it == loaded.end()) throw IoError("checkpoint missing array '" + a.name + "': " + path);
        if (it->second.shape != a.tensor->shape)
            throw IoError("checkpoint array '" + a.name + "' has shape " + it->second.shape_str() +
                          ", expected " + a.tensor->shape_str());
        *a.tensor = std::move(it->second);
    }
    for (auto& [name, u] : uvecs) {
        auto it = loaded.find(name);
        if (it == loaded.end()) throw IoError("checkpoint missing array '" + name + "': " + path);
        if (it->second.numel() != u->size())
            throw IoError("checkpoint array '" + name + "' has wrong length");
        *u = it->second.data;
    }
    return b;
}

}  // namespace ganodet
