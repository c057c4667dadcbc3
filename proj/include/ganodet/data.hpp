#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ganodet/common.hpp"
#include "ganodet/image_io.hpp"
#include "ganodet/tensor.hpp"

namespace ganodet {

enum class Label { Normal, Anomalous };

inline std::string to_string(Label l) { return l == Label::Normal ? "normal" : "anomalous"; }
inline Label label_from_string(const std::string& s) {
    if (s == "normal") return Label::Normal;
    if (s == "anomalous") return Label::Anomalous;
    throw ConfigError("unknown label '" + s + "'");
}

struct ManifestRecord {
    std::string image_path;
    Label label = Label::Normal;
    std::string mask_path;  // empty = none ('-' on disk)
    std::string class_tag;
};

enum class Split { Train, Test };

struct DatasetManifest {
    Split split = Split::Train;
    std::vector<ManifestRecord> records;

    // Train manifests must be normal-only; masks must exist.
    void validate() const {
        for (const auto& r : records) {
            if (split == Split::Train && r.label == Label::Anomalous)
                throw ConfigError("train manifest contains anomalous record: " + r.image_path);
            if (!r.mask_path.empty() && !std::filesystem::exists(r.mask_path))
                throw ConfigError("mask file missing: " + r.mask_path);
        }
    }
};

/// Line format: image_path \t label \t mask_path_or_dash \t class_tag
inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path);
    for (const auto& r : m.records)
        out << r.image_path << '\t' << to_string(r.label) << '\t'
            << (r.mask_path.empty() ? "-" : r.mask_path) << '\t' << r.class_tag << '\n';
}

inline DatasetManifest load_manifest(const std::string& path, Split split) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read manifest " + path);
    DatasetManifest m;
    m.split = split;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        ManifestRecord r;
        std::string label, mask;
        if (!std::getline(ss, r.image_path, '\t') || !std::getline(ss, label, '\t') ||
            !std::getline(ss, mask, '\t') || !std::getline(ss, r.class_tag, '\t'))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed manifest line");
        r.label = label_from_string(label);
        if (mask != "-") r.mask_path = mask;
        m.records.push_back(std::move(r));
    }
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Patch extraction
// ---------------------------------------------------------------------------

enum class PadMode { Reflect };

struct PatchSpec {
    int patch_size = 256;
    int stride = 0;  // 0 = patch_size (non-overlapping)
    PadMode pad_mode = PadMode::Reflect;

    int effective_stride() const { return stride > 0 ? stride : patch_size; }

    void validate() const {
        if (patch_size < 32) throw ConfigError("patch_size must be >= 32");
        if (stride < 0) throw ConfigError("stride must be >= 1 (or 0 for patch_size)");
    }
};

struct Patch {
    Tensor data;  // (C, ps, ps)
    int row = 0;  // grid row index
    int col = 0;
};

namespace detail {

inline int reflect_index(int i, int n) {
    // reflect without repeating the edge sample; degenerates to clamp at n=1
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

}  // namespace detail

// Pads (C, H, W) on the bottom/right with reflected samples.
inline Tensor reflect_pad(const Tensor& img, int new_h, int new_w) {
    const int C = img.shape[0], H = img.shape[1], W = img.shape[2];
    Tensor out({C, new_h, new_w});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < new_h; ++y) {
            const int sy = detail::reflect_index(y, H);
            for (int x = 0; x < new_w; ++x) out.at3(c, y, x) = img.at3(c, sy, detail::reflect_index(x, W));
        }
    return out;
}

inline Tensor resize_bilinear(const Tensor& img, int new_h, int new_w) {
    const int C = img.shape[0], H = img.shape[1], W = img.shape[2];
    Tensor out({C, new_h, new_w});
    for (int y = 0; y < new_h; ++y) {
        double sy = (y + 0.5) * H / new_h - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, H - 1);
        const double fy = sy - y0;
        for (int x = 0; x < new_w; ++x) {
            double sx = (x + 0.5) * W / new_w - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, W - 1);
            const double fx = sx - x0;
            for (int c = 0; c < C; ++c)
                out.at3(c, y, x) = (1 - fy) * ((1 - fx) * img.at3(c, y0, x0) + fx * img.at3(c, y0, x1)) +
                                   fy * ((1 - fx) * img.at3(c, y1, x0) + fx * img.at3(c, y1, x1));
        }
    }
    return out;
}

// Grid-wise tiling, left-to-right then top-to-bottom. The remainder is
// reflect-padded so the padded image is covered exactly once at the default
// stride. Images smaller than the patch in both dimensions are upscaled.
inline std::vector<Patch> extract_patches(const Tensor& image, const PatchSpec& spec) {
    // the >= 32 config invariant is enforced in PatchSpec::validate at config
    // time; internal callers may tile at smaller network input sizes
    check_shape(spec.patch_size >= 1 && spec.stride >= 0, "extract_patches spec");
    check_shape(image.shape.size() == 3, "extract_patches input");
    Tensor img = image;
    const int ps = spec.patch_size;
    if (img.shape[1] < ps && img.shape[2] < ps) {
        warn("image " + img.shape_str() + " smaller than patch size, upscaling");
        img = resize_bilinear(img, ps, ps);
    }
    const int stride = spec.effective_stride();
    const int rows = (img.shape[1] + stride - 1) / stride;
    const int cols = (img.shape[2] + stride - 1) / stride;
    const int need_h = (rows - 1) * stride + ps;
    const int need_w = (cols - 1) * stride + ps;
    if (need_h > img.shape[1] || need_w > img.shape[2]) img = reflect_pad(img, need_h, need_w);

    std::vector<Patch> patches;
    const int C = img.shape[0];
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            Patch p;
            p.row = r;
            p.col = c;
            p.data = Tensor({C, ps, ps});
            for (int ch = 0; ch < C; ++ch)
                for (int y = 0; y < ps; ++y)
                    for (int x = 0; x < ps; ++x)
                        p.data.at3(ch, y, x) = img.at3(ch, r * stride + y, c * stride + x);
            patches.push_back(std::move(p));
        }
    return patches;
}

// Inverse of extract_patches at the default stride; reproduces the padded image.
inline Tensor reassemble_patches(const std::vector<Patch>& patches, int ps) {
    check_shape(!patches.empty(), "reassemble_patches");
    int rows = 0, cols = 0;
    for (const auto& p : patches) {
        rows = std::max(rows, p.row + 1);
        cols = std::max(cols, p.col + 1);
    }
    const int C = patches[0].data.shape[0];
    Tensor out({C, rows * ps, cols * ps});
    for (const auto& p : patches)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < ps; ++y)
                for (int x = 0; x < ps; ++x)
                    out.at3(c, p.row * ps + y, p.col * ps + x) = p.data.at3(c, y, x);
    return out;
}

// ---------------------------------------------------------------------------
// ROI masking
// ---------------------------------------------------------------------------

// Tight bounding box of the nonzero mask region, expanded to a square
// (minimum 32 px), clipped to the image, cropped and resized to patch_size.
inline Tensor apply_roi_mask(const Tensor& image, const Tensor& mask, int patch_size,
                             const std::string& record_name = "") {
    check_shape(mask.shape.size() == 3 && mask.shape[0] == 1, "mask must be single-channel");
    check_shape(mask.shape[1] == image.shape[1] && mask.shape[2] == image.shape[2],
                "mask dimensions must match image");
    const int H = image.shape[1], W = image.shape[2];
    int y0 = H, y1 = -1, x0 = W, x1 = -1;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (mask.at3(0, y, x) != 0.0) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
    if (y1 < 0) throw ConfigError("empty ROI mask for record " + record_name);

    // expand to square with a minimum side, centered on the box
    constexpr int kMinSide = 32;
    int side = std::max({y1 - y0 + 1, x1 - x0 + 1, kMinSide});
    side = std::min({side, H, W});
    const double cy = (y0 + y1) / 2.0, cx = (x0 + x1) / 2.0;
    int sy = static_cast<int>(std::lround(cy - (side - 1) / 2.0));
    int sx = static_cast<int>(std::lround(cx - (side - 1) / 2.0));
    sy = std::clamp(sy, 0, H - side);
    sx = std::clamp(sx, 0, W - side);

    const int C = image.shape[0];
    Tensor crop({C, side, side});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) crop.at3(c, y, x) = image.at3(c, sy + y, sx + x);
    if (side == patch_size) return crop;
    return resize_bilinear(crop, patch_size, patch_size);
}

// ---------------------------------------------------------------------------
// Split protocols
// ---------------------------------------------------------------------------

struct LabeledImage {
    std::string path;
    std::string class_tag;
    Split source_split = Split::Train;  // original dataset split of the file
};

// One class is normal; its training images train the model, its test images
// are the normal test set and every other class's test images are anomalous.
inline std::pair<DatasetManifest, DatasetManifest> build_one_vs_all_split(
    const std::vector<LabeledImage>& dataset, const std::string& normal_class) {
    bool known = false;
    for (const auto& d : dataset)
        if (d.class_tag == normal_class) known = true;
    if (!known) throw ConfigError("unknown normal class '" + normal_class + "'");

    DatasetManifest train, test;
    train.split = Split::Train;
    test.split = Split::Test;
    for (const auto& d : dataset) {
        ManifestRecord r;
        r.image_path = d.path;
        r.class_tag = d.class_tag;
        if (d.class_tag == normal_class) {
            r.label = Label::Normal;
            (d.source_split == Split::Train ? train : test).records.push_back(std::move(r));
        } else if (d.source_split == Split::Test) {
            r.label = Label::Anomalous;
            test.records.push_back(std::move(r));
        }
    }
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Batch loading
// ---------------------------------------------------------------------------

struct BatchError {
    std::string image_path;
    std::string message;
};

// Decodes the indexed records into [-1, 1] tensors. Augmentation is a seeded
// horizontal flip, train-time only. Any failing record fails the batch; all
// failures are reported together.
inline std::vector<Tensor> load_batch(const DatasetManifest& manifest,
                                      const std::vector<std::size_t>& indices, int channels,
                                      bool augment, Rng& rng) {
    std::vector<Tensor> out;
    std::vector<BatchError> errors;
    std::bernoulli_distribution flip(0.5);
    for (std::size_t idx : indices) {
        if (idx >= manifest.records.size()) throw ConfigError("batch index out of range");
        const auto& rec = manifest.records[idx];
        const bool do_flip = augment && flip(rng);  // draw even on failure to keep the stream aligned
        try {
            Tensor t = image_to_tensor(load_image(rec.image_path), channels);
            if (do_flip) {
                const int C = t.shape[0], H = t.shape[1], W = t.shape[2];
                for (int c = 0; c < C; ++c)
                    for (int y = 0; y < H; ++y)
                        for (int x = 0; x < W / 2; ++x) std::swap(t.at3(c, y, x), t.at3(c, y, W - 1 - x));
            }
            out.push_back(std::move(t));
        } catch (const std::exception& e) {
            errors.push_back({rec.image_path, e.what()});
        }
    }
    if (!errors.empty()) {
        std::string msg = "batch failed on " + std::to_string(errors.size()) + " record(s):";
        for (const auto& e : errors) msg += "\n  " + e.image_path + ": " + e.message;
        throw IoError(msg);
    }
    return out;
}

inline Tensor load_mask(const std::string& path) {
    Image8 img = load_image(path);
    Tensor t({1, img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) t.at3(0, y, x) = img.at(y, x, 0) != 0 ? 1.0 : 0.0;
    return t;
}

}  // namespace ganodet
