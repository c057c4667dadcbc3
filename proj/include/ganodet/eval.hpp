#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ganodet/checkpoint.hpp"
#include "ganodet/data.hpp"
#include "ganodet/objectives.hpp"

namespace ganodet {

// Metric undefined on the given inputs (single-label sets and the like).
struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScoredSample {
    std::string sample_id;
    std::string class_tag;
    Label label = Label::Normal;
    double a_g = 0.0;       // contextual term of the winning patch
    double a_d = 0.0;       // latent term of the winning patch
    double raw = 0.0;       // blended score, aggregated over patches
    double normalized = 0.0;
};

using AnomalyScoreVector = std::vector<ScoredSample>;

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct EvalReport {
    double auc = 0.0;
    double patch_auc = -1.0;  // negative = dataset had no multi-patch samples
    double recall = 0.0;
    double threshold = 0.0;
    double eta = 0.0;
    std::string threshold_policy;
    std::vector<RocPoint> roc_points;
    std::vector<int> hist_normal;     // 50 uniform bins over [0, 1]
    std::vector<int> hist_anomalous;
    std::map<std::string, double> per_class_recall;
};

constexpr int kHistogramBins = 50;

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

struct SampleScore {
    double a_g = 0.0;
    double a_d = 0.0;
    double raw = 0.0;
};

inline SampleScore score_patch(Generator& g, Discriminator& d, const Tensor& x, double eta) {
    Var xv = make_const(x);
    Tensor xhat = g.forward(xv)->value;
    Tensor f_x = d.forward(xv).features->value;
    Tensor f_xhat = d.forward(make_const(xhat)).features->value;
    SampleScore s;
    s.a_g = contextual_loss(x, xhat);
    s.a_d = latent_loss(f_x, f_xhat);
    s.raw = anomaly_score(s.a_g, s.a_d, eta);
    return s;
}

enum class PatchAggregate { Max, Mean };

// An image is anomalous if any patch is; max is the default aggregation.
inline double aggregate_image_score(const std::vector<double>& patch_scores,
                                    PatchAggregate mode = PatchAggregate::Max) {
    if (patch_scores.empty()) throw ConfigError("aggregate_image_score: no patch scores");
    if (mode == PatchAggregate::Max) return *std::max_element(patch_scores.begin(), patch_scores.end());
    return std::accumulate(patch_scores.begin(), patch_scores.end(), 0.0) /
           static_cast<double>(patch_scores.size());
}

// Per-patch (a_g, a_d) terms for one test record; eta enters only at blend
// time, so an eta sweep reuses one set of forward passes.
struct SampleTerms {
    std::string sample_id;
    std::string class_tag;
    Label label = Label::Normal;
    std::vector<std::pair<double, double>> patch_terms;  // (a_g, a_d) per patch
};

// Forward-passes every record of a test manifest: ROI-masked records are
// cropped to the annotated region, oversized images are tiled grid-wise.
inline std::vector<SampleTerms> compute_dataset_terms(ModelBundle& model,
                                                      const DatasetManifest& manifest) {
    if (manifest.split != Split::Test) throw ConfigError("score_dataset expects a test manifest");
    const int size = model.cfg.generator.input_size;
    const int channels = model.cfg.generator.input_channels;
    PatchSpec spec;
    spec.patch_size = size;

    std::vector<SampleTerms> out;
    for (const auto& rec : manifest.records) {
        Tensor img = image_to_tensor(load_image(rec.image_path), channels);
        std::vector<Tensor> inputs;
        if (!rec.mask_path.empty()) {
            inputs.push_back(apply_roi_mask(img, load_mask(rec.mask_path), size, rec.image_path));
        } else if (img.shape[1] == size && img.shape[2] == size) {
            inputs.push_back(std::move(img));
        } else {
            for (auto& p : extract_patches(img, spec)) inputs.push_back(std::move(p.data));
        }
        SampleTerms st;
        st.sample_id = rec.image_path;
        st.class_tag = rec.class_tag;
        st.label = rec.label;
        for (const auto& in : inputs) {
            SampleScore s = score_patch(model.g, model.d, in, 0.5);  // eta irrelevant for terms
            st.patch_terms.emplace_back(s.a_g, s.a_d);
        }
        out.push_back(std::move(st));
    }
    return out;
}

// Blends precomputed terms at the given eta, aggregates patches to image
// scores and min-max normalizes the whole vector.
inline AnomalyScoreVector blend_scores(const std::vector<SampleTerms>& terms, double eta,
                                       PatchAggregate agg = PatchAggregate::Max) {
    AnomalyScoreVector out;
    for (const auto& st : terms) {
        std::vector<double> raws;
        std::size_t best = 0;
        for (std::size_t i = 0; i < st.patch_terms.size(); ++i) {
            const auto& [a_g, a_d] = st.patch_terms[i];
            raws.push_back(anomaly_score(a_g, a_d, eta));
            if (raws.back() > raws[best]) best = i;
        }
        ScoredSample ss;
        ss.sample_id = st.sample_id;
        ss.class_tag = st.class_tag;
        ss.label = st.label;
        ss.raw = aggregate_image_score(raws, agg);
        ss.a_g = st.patch_terms[best].first;  // terms of the max patch as representative
        ss.a_d = st.patch_terms[best].second;
        out.push_back(std::move(ss));
    }
    std::vector<double> raw(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) raw[i] = out[i].raw;
    std::vector<double> norm = normalize_scores(raw);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].normalized = norm[i];
    return out;
}

inline AnomalyScoreVector score_dataset(ModelBundle& model, const DatasetManifest& manifest,
                                        double eta, PatchAggregate agg = PatchAggregate::Max) {
    return blend_scores(compute_dataset_terms(model, manifest), eta, agg);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline void require_both_labels(const std::vector<Label>& labels) {
    bool has_pos = false, has_neg = false;
    for (Label l : labels) (l == Label::Anomalous ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw MetricError("metric undefined: need both labels present");
}

// Rank-based AUC: probability that a random anomalous score exceeds a random
// normal score, ties counted 0.5. Exactly matches pairwise brute force.
inline double roc_auc(const std::vector<double>& scores, const std::vector<Label>& labels,
                      std::vector<RocPoint>* roc_points = nullptr) {
    check_shape(scores.size() == labels.size(), "roc_auc inputs");
    require_both_labels(labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double n_pos = 0, n_neg = 0;
    for (Label l : labels) (l == Label::Anomalous ? n_pos : n_neg) += 1;

    // sum of anomalous ranks with midranks for ties -> Mann-Whitney U
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == Label::Anomalous) pos_rank_sum += midrank;
        i = j;
    }
    const double auc = (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);

    if (roc_points) {
        roc_points->clear();
        // finite "accept nothing" threshold so reports serialize cleanly
        roc_points->push_back({0.0, 0.0, scores[order[n - 1]] + 1.0});
        double tp = 0, fp = 0;
        // descending threshold sweep over distinct score values
        std::size_t k = n;
        while (k > 0) {
            std::size_t j = k;
            const double thr = scores[order[k - 1]];
            while (j > 0 && scores[order[j - 1]] == thr) {
                if (labels[order[j - 1]] == Label::Anomalous)
                    tp += 1;
                else
                    fp += 1;
                --j;
            }
            roc_points->push_back({fp / n_neg, tp / n_pos, thr});
            k = j;
        }
    }
    return auc;
}

// Patch-level AUC: every patch is its own sample carrying its image's label.
inline double patch_level_auc(const std::vector<SampleTerms>& terms, double eta) {
    std::vector<double> scores;
    std::vector<Label> labels;
    for (const auto& st : terms)
        for (const auto& [a_g, a_d] : st.patch_terms) {
            scores.push_back(anomaly_score(a_g, a_d, eta));
            labels.push_back(st.label);
        }
    return roc_auc(scores, labels);
}

// TP / (TP + FN), positive = anomalous, predicted positive = score >= threshold
inline double recall_at_threshold(const std::vector<double>& scores, const std::vector<Label>& labels,
                                  double threshold) {
    check_shape(scores.size() == labels.size(), "recall inputs");
    double tp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != Label::Anomalous) continue;
        (scores[i] >= threshold ? tp : fn) += 1;
    }
    if (tp + fn == 0) throw MetricError("recall undefined: no anomalous samples");
    return tp / (tp + fn);
}

struct ThresholdPolicy {
    enum class Kind { Youden, FixedQuantile } kind = Kind::Youden;
    double quantile = 0.95;

    static ThresholdPolicy parse(const std::string& s) {
        ThresholdPolicy p;
        if (s == "youden") return p;
        if (s.rfind("fixed:", 0) == 0) {
            p.kind = Kind::FixedQuantile;
            p.quantile = std::stod(s.substr(6));
            if (p.quantile < 0 || p.quantile > 1) throw ConfigError("threshold quantile must be in [0, 1]");
            return p;
        }
        throw ConfigError("unknown threshold policy '" + s + "'");
    }
};

inline double select_threshold(const std::vector<double>& scores, const std::vector<Label>& labels,
                               const ThresholdPolicy& policy = {}) {
    check_shape(scores.size() == labels.size(), "select_threshold inputs");
    require_both_labels(labels);

    if (policy.kind == ThresholdPolicy::Kind::FixedQuantile) {
        std::vector<double> normals;
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (labels[i] == Label::Normal) normals.push_back(scores[i]);
        std::sort(normals.begin(), normals.end());
        const double pos = policy.quantile * static_cast<double>(normals.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, normals.size() - 1);
        return normals[lo] + (pos - static_cast<double>(lo)) * (normals[hi] - normals[lo]);
    }

    std::vector<double> distinct = scores;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() == 1) {
        warn("select_threshold: degenerate score set, threshold = common value");
        return distinct[0];
    }
    // candidates are midpoints between adjacent distinct scores, so a
    // perfectly separating gap yields its midpoint
    double best_thr = distinct[0];
    double best_j = -2.0;
    auto youden = [&](double thr) {
        double tp = 0, fn = 0, fp = 0, tn = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const bool pred_pos = scores[i] >= thr;
            if (labels[i] == Label::Anomalous)
                (pred_pos ? tp : fn) += 1;
            else
                (pred_pos ? fp : tn) += 1;
        }
        return tp / (tp + fn) - fp / (fp + tn);
    };
    std::vector<double> candidates;
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i)
        candidates.push_back((distinct[i] + distinct[i + 1]) / 2.0);
    candidates.push_back(distinct.front());      // everything predicted anomalous
    candidates.push_back(distinct.back() + 1.0); // nothing predicted anomalous
    for (double thr : candidates) {
        const double j = youden(thr);
        if (j > best_j + 1e-12) {
            best_j = j;
            best_thr = thr;
        }
    }
    return best_thr;
}

// recall_at_threshold restricted to each class's anomalous records
inline std::map<std::string, double> per_class_recall(const AnomalyScoreVector& v, double threshold) {
    std::map<std::string, std::pair<double, double>> counts;  // class -> (tp, fn)
    for (const auto& s : v) {
        if (s.label != Label::Anomalous) continue;
        auto& [tp, fn] = counts[s.class_tag];
        (s.normalized >= threshold ? tp : fn) += 1;
    }
    std::map<std::string, double> out;
    for (auto& [cls, c] : counts) {
        if (c.first + c.second == 0) {
            warn("per_class_recall: class '" + cls + "' has no anomalous samples, omitted");
            continue;
        }
        out[cls] = c.first / (c.first + c.second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report assembly and emission
// ---------------------------------------------------------------------------

inline EvalReport make_report(const AnomalyScoreVector& v, double eta,
                              const ThresholdPolicy& policy = {},
                              const std::string& policy_name = "youden") {
    std::vector<double> scores;
    std::vector<Label> labels;
    for (const auto& s : v) {
        scores.push_back(s.normalized);
        labels.push_back(s.label);
    }
    EvalReport r;
    r.eta = eta;
    r.threshold_policy = policy_name;
    r.auc = roc_auc(scores, labels, &r.roc_points);
    r.threshold = select_threshold(scores, labels, policy);
    r.recall = recall_at_threshold(scores, labels, r.threshold);
    r.per_class_recall = per_class_recall(v, r.threshold);
    r.hist_normal.assign(kHistogramBins, 0);
    r.hist_anomalous.assign(kHistogramBins, 0);
    for (const auto& s : v) {
        int bin = std::min(static_cast<int>(s.normalized * kHistogramBins), kHistogramBins - 1);
        (s.label == Label::Normal ? r.hist_normal : r.hist_anomalous)[bin] += 1;
    }
    return r;
}

inline json report_to_json(const EvalReport& r) {
    json roc = json::array();
    for (const auto& p : r.roc_points) roc.push_back({p.fpr, p.tpr, p.threshold});
    return json{{"auc", r.auc},
                {"patch_auc", r.patch_auc},
                {"recall", r.recall},
                {"threshold", r.threshold},
                {"eta", r.eta},
                {"threshold_policy", r.threshold_policy},
                {"roc_points", roc},
                {"hist_normal", r.hist_normal},
                {"hist_anomalous", r.hist_anomalous},
                {"per_class_recall", r.per_class_recall}};
}

inline EvalReport report_from_json(const json& j) {
    EvalReport r;
    r.auc = j.at("auc");
    r.patch_auc = j.value("patch_auc", -1.0);
    r.recall = j.at("recall");
    r.threshold = j.at("threshold");
    r.eta = j.at("eta");
    r.threshold_policy = j.at("threshold_policy");
    for (const auto& p : j.at("roc_points")) r.roc_points.push_back({p[0], p[1], p[2]});
    r.hist_normal = j.at("hist_normal").get<std::vector<int>>();
    r.hist_anomalous = j.at("hist_anomalous").get<std::vector<int>>();
    r.per_class_recall = j.at("per_class_recall").get<std::map<std::string, double>>();
    return r;
}

namespace detail {

// minimal plot rasterizer for the score distribution and ROC figures
struct Canvas {
    Image8 img;
    Canvas(int w, int h) {
        img.width = w;
        img.height = h;
        img.channels = 3;
        img.pixels.assign(static_cast<std::size_t>(w) * h * 3, 255);
    }
    void set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
        img.at(y, x, 0) = r;
        img.at(y, x, 1) = g;
        img.at(y, x, 2) = b;
    }
    void line(int x0, int y0, int x1, int y1, unsigned char r, unsigned char g, unsigned char b) {
        const int steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
        for (int i = 0; i <= steps; ++i) {
            const double t = static_cast<double>(i) / steps;
            set(static_cast<int>(std::lround(x0 + t * (x1 - x0))),
                static_cast<int>(std::lround(y0 + t * (y1 - y0))), r, g, b);
        }
    }
};

inline void render_roc(const EvalReport& r, const std::string& path) {
    const int W = 420, H = 420, M = 10;
    Canvas cv(W, H);
    cv.line(M, H - M, W - M, H - M, 0, 0, 0);
    cv.line(M, M, M, H - M, 0, 0, 0);
    cv.line(M, H - M, W - M, M, 200, 200, 200);  // chance diagonal
    auto px = [&](double f) { return M + static_cast<int>(f * (W - 2 * M)); };
    auto py = [&](double t) { return H - M - static_cast<int>(t * (H - 2 * M)); };
    for (std::size_t i = 1; i < r.roc_points.size(); ++i)
        cv.line(px(r.roc_points[i - 1].fpr), py(r.roc_points[i - 1].tpr), px(r.roc_points[i].fpr),
                py(r.roc_points[i].tpr), 30, 60, 200);
    save_image(path, cv.img);
}

inline void render_histogram(const EvalReport& r, const std::string& path) {
    const int W = 520, H = 320, M = 10;
    Canvas cv(W, H);
    cv.line(M, H - M, W - M, H - M, 0, 0, 0);
    int peak = 1;
    for (int i = 0; i < kHistogramBins; ++i)
        peak = std::max({peak, r.hist_normal[i], r.hist_anomalous[i]});
    const double bw = static_cast<double>(W - 2 * M) / kHistogramBins;
    for (int i = 0; i < kHistogramBins; ++i) {
        const int x0 = M + static_cast<int>(i * bw);
        const int x1 = M + static_cast<int>((i + 1) * bw) - 1;
        const int hn = (H - 2 * M) * r.hist_normal[i] / peak;
        const int ha = (H - 2 * M) * r.hist_anomalous[i] / peak;
        for (int x = x0; x <= x1; ++x) {
            if (hn > 0) cv.line(x, H - M - 1, x, H - M - hn, 60, 160, 60);
            if (ha > 0) cv.line(x, H - M - 1, x, H - M - ha, 200, 60, 60);
        }
    }
    save_image(path, cv.img);
}

}  // namespace detail

// Writes report.json, scores.csv, roc.csv, histogram.csv plus rendered plots
// under out_dir.
inline void emit_report(const EvalReport& r, const AnomalyScoreVector& v, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto open = [&](const std::string& name) {
        std::ofstream f(out_dir + "/" + name);
        if (!f) throw IoError("cannot write " + out_dir + "/" + name);
        return f;
    };
    {
        auto f = open("report.json");
        f << report_to_json(r).dump(2) << "\n";
    }
    {
        auto f = open("scores.csv");
        f << "sample_id,class_tag,label,raw_score,normalized_score\n";
        f.precision(17);
        for (const auto& s : v)
            f << s.sample_id << ',' << s.class_tag << ',' << to_string(s.label) << ',' << s.raw << ','
              << s.normalized << '\n';
    }
    {
        auto f = open("roc.csv");
        f << "fpr,tpr,threshold\n";
        f.precision(17);
        for (const auto& p : r.roc_points) f << p.fpr << ',' << p.tpr << ',' << p.threshold << '\n';
    }
    {
        auto f = open("histogram.csv");
        f << "bin_low,bin_high,normal,anomalous\n";
        for (int i = 0; i < kHistogramBins; ++i)
            f << static_cast<double>(i) / kHistogramBins << ',' << static_cast<double>(i + 1) / kHistogramBins
              << ',' << r.hist_normal[i] << ',' << r.hist_anomalous[i] << '\n';
    }
    detail::render_roc(r, out_dir + "/roc.png");
    detail::render_histogram(r, out_dir + "/score_hist.png");
}

}  // namespace ganodet
