// ganodet command-line front end: prepare / train / eval / score / print-config.
//
// Exit codes: 0 success, 2 validation error, 3 runtime divergence, 4 I/O error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "ganodet/eval.hpp"
#include "ganodet/train.hpp"

using namespace ganodet;
namespace fs = std::filesystem;

namespace {

// optional CLI overrides applied on top of the config file (flags win)
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> eta;
    std::optional<int> max_epochs;
    std::optional<std::string> threshold_policy;
    std::optional<std::string> out_dir;
    std::optional<bool> deterministic;
};

// GANODET_OUT_ROOT reroots every relative output directory
std::string resolve_out_dir(const std::string& dir) {
    const char* root = std::getenv("GANODET_OUT_ROOT");
    if (root && *root && fs::path(dir).is_relative()) return (fs::path(root) / dir).string();
    return dir;
}

RunConfig load_effective_config(const std::string& config_path, const Overrides& ov) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.eta) cfg.eta = *ov.eta;
    if (ov.max_epochs) cfg.train.max_epochs = *ov.max_epochs;
    if (ov.threshold_policy) cfg.threshold_policy = *ov.threshold_policy;
    if (ov.out_dir) cfg.out_dir = *ov.out_dir;
    if (ov.deterministic) cfg.deterministic = *ov.deterministic;
    cfg.out_dir = resolve_out_dir(cfg.out_dir);
    cfg.apply_seed();
    return cfg;
}

// Scans  root/<class>/{train,test}/*.{png,jpg,jpeg,ppm,pgm}  into labeled
// records. For roi-masked datasets a test image's mask lives at
// root/<class>/test/masks/<same filename>.png.
std::vector<LabeledImage> scan_dataset_root(const std::string& root) {
    std::vector<LabeledImage> out;
    if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root);
    auto is_image = [](const fs::path& p) {
        const std::string e = p.extension().string();
        return e == ".png" || e == ".jpg" || e == ".jpeg" || e == ".ppm" || e == ".pgm";
    };
    std::vector<fs::path> classes;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) classes.push_back(e.path());
    std::sort(classes.begin(), classes.end());
    for (const auto& cls : classes) {
        for (const char* split : {"train", "test"}) {
            const fs::path dir = cls / split;
            if (!fs::is_directory(dir)) continue;
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(dir))
                if (e.is_regular_file() && is_image(e.path())) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files)
                out.push_back({f.string(), cls.filename().string(),
                               std::string(split) == "train" ? Split::Train : Split::Test});
        }
    }
    if (out.empty()) throw ConfigError("no images found under " + root);
    return out;
}

void attach_masks(DatasetManifest& test) {
    std::vector<std::string> missing;
    for (auto& r : test.records) {
        if (r.label != Label::Anomalous) continue;
        const fs::path img(r.image_path);
        const fs::path mask = img.parent_path() / "masks" / (img.stem().string() + ".png");
        if (fs::exists(mask))
            r.mask_path = mask.string();
        else
            missing.push_back(r.image_path);
    }
    if (!missing.empty()) {
        std::string msg = "roi-masked protocol: missing masks for " +
                          std::to_string(missing.size()) + " record(s):";
        for (const auto& m : missing) msg += "\n  " + m;
        throw ConfigError(msg);
    }
}

int cmd_prepare(const std::string& root, const std::string& protocol,
                const std::string& normal_class, const std::string& out_dir) {
    auto dataset = scan_dataset_root(root);
    DatasetManifest train, test;
    if (protocol == "one-vs-all") {
        if (normal_class.empty()) throw ConfigError("one-vs-all requires --normal-class");
        std::tie(train, test) = build_one_vs_all_split(dataset, normal_class);
    } else if (protocol == "normal-only" || protocol == "roi-masked") {
        // MVTec-style layouts name the defect-free class "good"
        const std::string cls = normal_class.empty() ? "good" : normal_class;
        std::tie(train, test) = build_one_vs_all_split(dataset, cls);
        if (protocol == "roi-masked") attach_masks(test);
    } else {
        throw ConfigError("unknown protocol '" + protocol +
                          "' (expected one-vs-all, normal-only or roi-masked)");
    }
    train.validate();
    test.validate();
    const std::string dir = resolve_out_dir(out_dir);
    fs::create_directories(dir);
    save_manifest(train, dir + "/train.tsv");
    save_manifest(test, dir + "/test.tsv");
    int anomalous = 0;
    for (const auto& r : test.records) anomalous += r.label == Label::Anomalous;
    std::cout << "train records: " << train.records.size() << "\n"
              << "test records:  " << test.records.size() << " (" << anomalous << " anomalous)\n"
              << "wrote " << dir << "/train.tsv and " << dir << "/test.tsv\n";
    return 0;
}

int cmd_train(RunConfig cfg, const std::string& resume_from) {
    cfg.validate();
    DatasetManifest train_set = load_manifest(cfg.train_manifest, Split::Train);
    DatasetManifest test_set = load_manifest(cfg.test_manifest, Split::Test);
    train_set.validate();
    test_set.validate();

    ModelBundle b = resume_from.empty() ? build_models(cfg)
                                        : load_checkpoint(resume_from, config_hash(cfg));
    if (!resume_from.empty()) b.cfg.out_dir = cfg.out_dir;  // resumed run may redirect output

    TrainResult r = train(b, train_set, test_set, [](const EpochCallbackInfo& e) {
        std::cout << "epoch " << e.epoch << "  l_con " << e.mean_stats.l_con << "  total "
                  << e.mean_stats.total << "  d_loss " << e.mean_stats.d_loss << "  val_auc "
                  << e.val_auc << "\n";
    });
    std::cout << "best val_auc " << r.best_val_auc << " at epoch " << r.best_epoch << "\n"
              << "checkpoints: " << cfg.out_dir << "/best.ckpt, " << cfg.out_dir << "/last.ckpt\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, bool eta_sweep,
             bool have_config_file) {
    cfg.validate(/*need_manifests=*/false);
    if (cfg.test_manifest.empty()) throw ConfigError("test_manifest: path missing");
    ThresholdPolicy policy = ThresholdPolicy::parse(cfg.threshold_policy);
    DatasetManifest test_set = load_manifest(cfg.test_manifest, Split::Test);
    test_set.validate();
    ModelBundle b = load_checkpoint(checkpoint);
    if (have_config_file && b.cfg.generator.input_size != cfg.generator.input_size)
        throw ConfigError("checkpoint input size " + std::to_string(b.cfg.generator.input_size) +
                          " differs from configured " + std::to_string(cfg.generator.input_size));

    auto terms = compute_dataset_terms(b, test_set);
    bool tiled = false;
    for (const auto& t : terms) tiled |= t.patch_terms.size() > 1;

    auto emit_one = [&](double eta, const std::string& dir) {
        AnomalyScoreVector v = blend_scores(terms, eta);
        EvalReport r = make_report(v, eta, policy, cfg.threshold_policy);
        if (tiled) r.patch_auc = patch_level_auc(terms, eta);
        emit_report(r, v, dir);
        std::cout << "eta " << eta << "  auc " << r.auc << "  recall " << r.recall
                  << "  threshold " << r.threshold << "  -> " << dir << "\n";
    };
    fs::create_directories(cfg.out_dir);
    emit_one(cfg.eta, cfg.out_dir);
    if (eta_sweep) {
        for (int i = 1; i <= 9; ++i) {
            const double eta = i / 10.0;
            std::ostringstream dir;
            dir << cfg.out_dir << "/eta_0." << i;
            emit_one(eta, dir.str());
        }
    }
    return 0;
}

int cmd_score(const RunConfig& cfg, const std::string& checkpoint) {
    cfg.validate(/*need_manifests=*/false);
    if (cfg.test_manifest.empty()) throw ConfigError("test_manifest: path missing");
    DatasetManifest test_set = load_manifest(cfg.test_manifest, Split::Test);
    test_set.validate();
    ModelBundle b = load_checkpoint(checkpoint);
    AnomalyScoreVector v = score_dataset(b, test_set, cfg.eta);
    fs::create_directories(cfg.out_dir);
    const std::string path = cfg.out_dir + "/scores.csv";
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "sample_id,class_tag,label,raw_score,normalized_score\n";
    f.precision(17);
    for (const auto& s : v)
        f << s.sample_id << ',' << s.class_tag << ',' << to_string(s.label) << ',' << s.raw << ','
          << s.normalized << '\n';
    std::cout << "wrote " << v.size() << " scores to " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GAN-based one-class image anomaly detection"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;
    bool det_on = false, det_off = false;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run config (json)");
        sub->add_option("--seed", ov.seed, "master seed override");
        sub->add_option("--eta", ov.eta, "anomaly score blend weight override");
        sub->add_option("--max-epochs", ov.max_epochs, "training epoch override");
        sub->add_option("--threshold-policy", ov.threshold_policy, "youden or fixed:<q>");
        sub->add_option("--out-dir", ov.out_dir, "output directory override");
        sub->add_flag("--deterministic", det_on, "force deterministic mode");
        sub->add_flag("--no-deterministic", det_off, "disable deterministic mode");
    };

    auto* prepare = app.add_subcommand("prepare", "scan a dataset root into train/test manifests");
    std::string dataset_root, protocol = "one-vs-all", normal_class, prepare_out = "manifests";
    prepare->add_option("--dataset-root", dataset_root, "root with <class>/{train,test}/ images")
        ->required();
    prepare->add_option("--protocol", protocol, "one-vs-all | normal-only | roi-masked");
    prepare->add_option("--normal-class", normal_class, "class treated as normal");
    prepare->add_option("--out-dir", prepare_out, "manifest output directory");

    auto* train_cmd = app.add_subcommand("train", "train a model from a run config");
    std::string resume_from;
    add_common(train_cmd);
    train_cmd->add_option("--resume", resume_from, "checkpoint to resume from");

    auto* eval_cmd = app.add_subcommand("eval", "score a test manifest and emit report artifacts");
    std::string checkpoint;
    bool eta_sweep = false;
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "trained model checkpoint")->required();
    eval_cmd->add_flag("--eta-sweep", eta_sweep, "emit one report per eta in {0.1, ..., 0.9}");

    auto* score_cmd = app.add_subcommand("score", "write raw/normalized scores only");
    add_common(score_cmd);
    score_cmd->add_option("--checkpoint", checkpoint, "trained model checkpoint")->required();

    auto* print_cmd = app.add_subcommand("print-config", "emit the merged effective config");
    add_common(print_cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) return cmd_prepare(dataset_root, protocol, normal_class, prepare_out);
        if (det_on) ov.deterministic = true;
        if (det_off) ov.deterministic = false;
        RunConfig cfg = load_effective_config(config_path, ov);
        if (print_cmd->parsed()) {
            std::cout << to_json(cfg).dump(2) << "\n";
            return 0;
        }
        if (train_cmd->parsed()) return cmd_train(cfg, resume_from);
        if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint, eta_sweep, !config_path.empty());
        if (score_cmd->parsed()) return cmd_score(cfg, checkpoint);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const MetricError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
