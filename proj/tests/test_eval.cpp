#include <doctest.h>

#include <filesystem>

#include "ganodet/eval.hpp"
#include "synthetic.hpp"
#include "testutil.hpp"

using namespace ganodet;
namespace fs = std::filesystem;

namespace {

// probability a random anomalous score beats a random normal one, ties 0.5
double auc_brute_force(const std::vector<double>& scores, const std::vector<Label>& labels) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != Label::Anomalous) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != Label::Normal) continue;
            pairs += 1;
            if (scores[i] > scores[j])
                wins += 1;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / pairs;
}

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.generator.input_size = 16;
    cfg.generator.input_channels = 1;
    cfg.generator.depth = 2;
    cfg.generator.base_channels = 2;
    cfg.discriminator.input_size = 16;
    cfg.discriminator.input_channels = 1;
    cfg.discriminator.depth = 2;
    cfg.discriminator.base_channels = 2;
    cfg.discriminator.n_heads = 1;
    cfg.seed = 11;
    cfg.apply_seed();
    return cfg;
}

}  // namespace

TEST_CASE("rank auc matches pairwise brute force on random small sets with ties") {
    Rng rng(101);
    std::uniform_int_distribution<int> n_dist(2, 12);
    std::uniform_int_distribution<int> quant(0, 4);  // coarse values force ties
    int valid_trials = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = n_dist(rng);
        std::vector<double> scores;
        std::vector<Label> labels;
        bool has_pos = false, has_neg = false;
        for (int i = 0; i < n; ++i) {
            scores.push_back(quant(rng) / 4.0);
            const bool anom = std::bernoulli_distribution(0.5)(rng);
            labels.push_back(anom ? Label::Anomalous : Label::Normal);
            (anom ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        ++valid_trials;
        CHECK(roc_auc(scores, labels) == doctest::Approx(auc_brute_force(scores, labels)).epsilon(1e-12));
    }
    CHECK(valid_trials > 800);
}

TEST_CASE("auc is exactly invariant under strictly monotone transforms") {
    Rng rng(7);
    std::vector<double> scores;
    std::vector<Label> labels;
    for (int i = 0; i < 30; ++i) {
        scores.push_back(std::uniform_int_distribution<int>(0, 9)(rng) / 9.0);
        labels.push_back(i % 3 == 0 ? Label::Anomalous : Label::Normal);
    }
    const double base = roc_auc(scores, labels);
    std::vector<double> warped;
    for (double s : scores) warped.push_back(std::exp(3.0 * s) - 0.5);
    CHECK(roc_auc(warped, labels) == base);  // ranks identical, so bitwise equal
}

TEST_CASE("perfect and inverted separations hit the auc extremes") {
    std::vector<double> s{0.1, 0.2, 0.8, 0.9};
    std::vector<Label> perfect{Label::Normal, Label::Normal, Label::Anomalous, Label::Anomalous};
    std::vector<Label> inverted{Label::Anomalous, Label::Anomalous, Label::Normal, Label::Normal};
    CHECK(roc_auc(s, perfect) == 1.0);
    CHECK(roc_auc(s, inverted) == 0.0);
}

TEST_CASE("single-label inputs raise a metric error") {
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {Label::Normal, Label::Normal}), MetricError);
    CHECK_THROWS_AS(select_threshold({0.1, 0.2}, {Label::Anomalous, Label::Anomalous}), MetricError);
    CHECK_THROWS_AS(recall_at_threshold({0.1}, {Label::Normal}, 0.5), MetricError);
}

TEST_CASE("roc curve starts at (0,0), ends at (1,1) and is monotone") {
    Rng rng(13);
    std::vector<double> scores;
    std::vector<Label> labels;
    for (int i = 0; i < 25; ++i) {
        scores.push_back(std::uniform_real_distribution<double>(0, 1)(rng));
        labels.push_back(i % 2 ? Label::Anomalous : Label::Normal);
    }
    std::vector<RocPoint> pts;
    roc_auc(scores, labels, &pts);
    REQUIRE(pts.size() >= 2);
    CHECK(pts.front().fpr == 0.0);
    CHECK(pts.front().tpr == 0.0);
    CHECK(pts.back().fpr == 1.0);
    CHECK(pts.back().tpr == 1.0);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        CHECK(pts[i].fpr >= pts[i - 1].fpr);
        CHECK(pts[i].tpr >= pts[i - 1].tpr);
    }
}

TEST_CASE("recall is non-increasing in the threshold") {
    std::vector<double> scores{0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<Label> labels(5, Label::Anomalous);
    labels[0] = Label::Normal;
    double prev = 2.0;
    for (double thr : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
        const double r = recall_at_threshold(scores, labels, thr);
        CHECK(r <= prev);
        prev = r;
    }
    CHECK(recall_at_threshold(scores, labels, 0.0) == 1.0);
    CHECK(recall_at_threshold(scores, labels, 0.95) == 0.0);
}

TEST_CASE("youden threshold matches a brute-force sweep and splits clean gaps at the midpoint") {
    // perfectly separated: normals up to 0.3, anomalies from 0.7
    std::vector<double> s{0.1, 0.2, 0.3, 0.7, 0.8, 0.9};
    std::vector<Label> l{Label::Normal, Label::Normal, Label::Normal,
                         Label::Anomalous, Label::Anomalous, Label::Anomalous};
    CHECK(select_threshold(s, l) == doctest::Approx(0.5).epsilon(1e-12));

    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> scores;
        std::vector<Label> labels;
        bool has_pos = false, has_neg = false;
        for (int i = 0; i < 10; ++i) {
            scores.push_back(std::uniform_int_distribution<int>(0, 6)(rng) / 6.0);
            const bool anom = std::bernoulli_distribution(0.5)(rng);
            labels.push_back(anom ? Label::Anomalous : Label::Normal);
            (anom ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        const double thr = select_threshold(scores, labels);
        const double j_star = recall_at_threshold(scores, labels, thr) -
                              (1.0 - [&] {
                                  double tn = 0, n = 0;
                                  for (std::size_t i = 0; i < scores.size(); ++i)
                                      if (labels[i] == Label::Normal) {
                                          n += 1;
                                          if (scores[i] < thr) tn += 1;
                                      }
                                  return tn / n;
                              }());
        // no candidate threshold does better
        for (double cand = -0.05; cand <= 1.1; cand += 0.01) {
            double tp = 0, fn = 0, fp = 0, tn = 0;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                const bool pred = scores[i] >= cand;
                if (labels[i] == Label::Anomalous)
                    (pred ? tp : fn) += 1;
                else
                    (pred ? fp : tn) += 1;
            }
            CHECK(tp / (tp + fn) - fp / (fp + tn) <= j_star + 1e-9);
        }
    }
}

TEST_CASE("degenerate all-equal scores warn and return the common value") {
    std::vector<std::string> warnings;
    auto saved = warning_sink();
    warning_sink() = [&](const std::string& m) { warnings.push_back(m); };
    const double thr =
        select_threshold({0.4, 0.4, 0.4}, {Label::Normal, Label::Anomalous, Label::Normal});
    warning_sink() = saved;
    CHECK(thr == 0.4);
    CHECK(warnings.size() == 1);
}

TEST_CASE("fixed-quantile policy takes the requested normal-score quantile") {
    ThresholdPolicy p = ThresholdPolicy::parse("fixed:1.0");
    std::vector<double> s{0.1, 0.5, 0.3, 0.9};
    std::vector<Label> l{Label::Normal, Label::Normal, Label::Normal, Label::Anomalous};
    CHECK(select_threshold(s, l, p) == 0.5);  // max normal score
    ThresholdPolicy p0 = ThresholdPolicy::parse("fixed:0.0");
    CHECK(select_threshold(s, l, p0) == 0.1);
    CHECK_THROWS_AS(ThresholdPolicy::parse("fixed:1.5"), ConfigError);
    CHECK_THROWS_AS(ThresholdPolicy::parse("otsu"), ConfigError);
}

TEST_CASE("per-class recall reproduces hand counts") {
    AnomalyScoreVector v;
    auto add = [&](const std::string& cls, Label lab, double norm) {
        ScoredSample s;
        s.class_tag = cls;
        s.label = lab;
        s.normalized = norm;
        v.push_back(s);
    };
    add("wood", Label::Anomalous, 0.9);
    add("wood", Label::Anomalous, 0.2);
    add("wood", Label::Normal, 0.1);
    add("carpet", Label::Anomalous, 0.8);
    add("carpet", Label::Anomalous, 0.7);
    auto rec = per_class_recall(v, 0.5);
    REQUIRE(rec.size() == 2);
    CHECK(rec["wood"] == doctest::Approx(0.5));
    CHECK(rec["carpet"] == doctest::Approx(1.0));
}

TEST_CASE("patch aggregation: max flags any anomalous tile, mean averages") {
    CHECK(aggregate_image_score({0.1, 0.9, 0.2}) == 0.9);
    CHECK(aggregate_image_score({0.1, 0.9, 0.2}, PatchAggregate::Mean) == doctest::Approx(0.4));
    CHECK_THROWS_AS(aggregate_image_score({}), ConfigError);
}

TEST_CASE("per-sample score recomputes from independent forward passes") {
    RunConfig cfg = tiny_config();
    ModelBundle b = build_models(cfg);
    Rng rng(23);
    Tensor x = testutil::random_tensor({1, 16, 16}, rng);
    SampleScore s = score_patch(b.g, b.d, x, 0.9);

    // oracle: rerun both networks and apply the definitions directly
    Tensor xhat = b.g.forward(make_const(x))->value;
    double a_g = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) a_g += std::abs(x[i] - xhat[i]);
    a_g /= static_cast<double>(x.numel());
    Tensor fx = b.d.forward(make_const(x)).features->value;
    Tensor fxhat = b.d.forward(make_const(xhat)).features->value;
    double a_d = 0.0;
    for (std::size_t i = 0; i < fx.numel(); ++i) a_d += std::abs(fx[i] - fxhat[i]);
    a_d /= static_cast<double>(fx.numel());

    CHECK(s.a_g == doctest::Approx(a_g).epsilon(1e-12));
    CHECK(s.a_d == doctest::Approx(a_d).epsilon(1e-12));
    CHECK(s.raw == doctest::Approx(0.9 * a_g + 0.1 * a_d).epsilon(1e-12));
}

TEST_CASE("dataset scoring normalizes to [0, 1] with the extremes attained") {
    const std::string dir = (fs::temp_directory_path() / "ganodet_score_ds").string();
    synth::SyntheticSpec spec;
    spec.n_train = 0;
    spec.n_test_normal = 4;
    spec.n_test_anomalous = 4;
    spec.size = 16;
    spec.dir = dir;
    auto ds = synth::make_synthetic_dataset(spec);
    DatasetManifest test = load_manifest(ds.test_manifest, Split::Test);

    ModelBundle b = build_models(tiny_config());
    AnomalyScoreVector v = score_dataset(b, test, 0.9);
    REQUIRE(v.size() == 8);
    double lo = 1e9, hi = -1e9;
    for (const auto& s : v) {
        CHECK(s.normalized >= 0.0);
        CHECK(s.normalized <= 1.0);
        lo = std::min(lo, s.normalized);
        hi = std::max(hi, s.normalized);
        CHECK(s.raw == doctest::Approx(0.9 * s.a_g + 0.1 * s.a_d).epsilon(1e-12));
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
}

TEST_CASE("oversized test images are tiled and aggregated by max") {
    const std::string dir = (fs::temp_directory_path() / "ganodet_tiled").string();
    fs::create_directories(dir);
    Rng rng(29);
    // 32x32 image against a 16 px network: 4 tiles
    synth::SyntheticSpec spec;
    spec.n_test_normal = 1;
    spec.n_test_anomalous = 1;
    spec.n_train = 0;
    spec.size = 32;
    spec.dir = dir;
    auto ds = synth::make_synthetic_dataset(spec);
    DatasetManifest test = load_manifest(ds.test_manifest, Split::Test);

    ModelBundle b = build_models(tiny_config());
    AnomalyScoreVector v = score_dataset(b, test, 0.9);
    REQUIRE(v.size() == 2);

    // oracle: score the 4 tiles directly and take the max
    for (const auto& s : v) {
        Tensor img = image_to_tensor(load_image(s.sample_id), 1);
        PatchSpec ps;
        ps.patch_size = 16;
        double expect = -1e9;
        for (const auto& p : extract_patches(img, ps))
            expect = std::max(expect, score_patch(b.g, b.d, p.data, 0.9).raw);
        CHECK(s.raw == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("eval report round-trips through json and emits all artifacts") {
    AnomalyScoreVector v;
    Rng rng(31);
    for (int i = 0; i < 20; ++i) {
        ScoredSample s;
        s.sample_id = "img_" + std::to_string(i) + ".png";
        s.class_tag = i % 2 ? "wood" : "grid";
        s.label = i < 10 ? Label::Normal : Label::Anomalous;
        s.raw = std::uniform_real_distribution<double>(0, 1)(rng) + (i < 10 ? 0.0 : 0.5);
        v.push_back(s);
    }
    std::vector<double> raw;
    for (const auto& s : v) raw.push_back(s.raw);
    auto norm = normalize_scores(raw);
    for (std::size_t i = 0; i < v.size(); ++i) v[i].normalized = norm[i];

    EvalReport r = make_report(v, 0.9);
    CHECK(r.auc > 0.5);
    int hist_total = 0;
    for (int i = 0; i < kHistogramBins; ++i) hist_total += r.hist_normal[i] + r.hist_anomalous[i];
    CHECK(hist_total == 20);

    EvalReport back = report_from_json(report_to_json(r));
    CHECK(back.auc == r.auc);
    CHECK(back.recall == r.recall);
    CHECK(back.threshold == r.threshold);
    CHECK(back.roc_points.size() == r.roc_points.size());
    CHECK(back.per_class_recall == r.per_class_recall);
    CHECK(back.hist_normal == r.hist_normal);

    const std::string dir = (fs::temp_directory_path() / "ganodet_report").string();
    emit_report(r, v, dir);
    for (const char* f : {"report.json", "scores.csv", "roc.csv", "histogram.csv", "roc.png",
                          "score_hist.png"})
        CHECK(fs::exists(dir + "/" + f));

    std::ifstream js(dir + "/report.json");
    json parsed;
    js >> parsed;
    EvalReport from_disk = report_from_json(parsed);
    CHECK(from_disk.auc == r.auc);

    std::ifstream sc(dir + "/scores.csv");
    std::string header;
    std::getline(sc, header);
    CHECK(header == "sample_id,class_tag,label,raw_score,normalized_score");
    int lines = 0;
    std::string line;
    while (std::getline(sc, line)) ++lines;
    CHECK(lines == 20);
}
