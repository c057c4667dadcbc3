#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ganodet/checkpoint.hpp"
#include "ganodet/eval.hpp"
#include "synthetic.hpp"

using namespace ganodet;
namespace fs = std::filesystem;

#ifndef GANODET_CLI_PATH
#error "GANODET_CLI_PATH must point at the built CLI binary"
#endif

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(GANODET_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return rc < 0 ? rc : WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct CliFixture {
    std::string root;
    std::string config_path;
    synth::SyntheticDataset ds;

    CliFixture() {
        root = (fs::temp_directory_path() / "ganodet_cli_fixture").string();
        fs::remove_all(root);
        fs::create_directories(root);
        synth::SyntheticSpec spec;
        spec.n_train = 8;
        spec.n_test_normal = 4;
        spec.n_test_anomalous = 4;
        spec.size = 16;
        spec.dir = root + "/ds";
        ds = synth::make_synthetic_dataset(spec);

        json cfg{{"generator", {{"input_size", 16}, {"input_channels", 1}, {"depth", 2},
                                {"base_channels", 2}}},
                 {"discriminator", {{"input_size", 16}, {"input_channels", 1}, {"depth", 2},
                                    {"base_channels", 2}, {"n_heads", 1}}},
                 {"train", {{"batch_size", 4}, {"max_epochs", 1}}},
                 {"eta", 0.9},
                 {"seed", 3},
                 {"train_manifest", ds.train_manifest},
                 {"test_manifest", ds.test_manifest},
                 {"out_dir", root + "/run"}};
        config_path = root + "/cfg.json";
        std::ofstream(config_path) << cfg.dump(2);
    }
};

}  // namespace

TEST_CASE("prepare builds one-vs-all manifests deterministically") {
    const std::string root = (fs::temp_directory_path() / "ganodet_cli_prep").string();
    fs::remove_all(root);
    Rng rng(41);
    for (const std::string& cls : {"alpha", "beta"})
        for (const std::string& split : {"train", "test"}) {
            fs::create_directories(root + "/data/" + cls + "/" + split);
            for (int i = 0; i < 3; ++i)
                save_image(root + "/data/" + cls + "/" + split + "/" + std::to_string(i) + ".png",
                           synth::texture(16, 1, rng));
        }

    const std::string args = "prepare --dataset-root " + root + "/data --protocol one-vs-all" +
                             " --normal-class alpha --out-dir " + root + "/m1";
    REQUIRE(run(args) == 0);
    DatasetManifest train = load_manifest(root + "/m1/train.tsv", Split::Train);
    DatasetManifest test = load_manifest(root + "/m1/test.tsv", Split::Test);
    CHECK(train.records.size() == 3);
    for (const auto& r : train.records) CHECK(r.class_tag == "alpha");
    CHECK(test.records.size() == 6);

    REQUIRE(run("prepare --dataset-root " + root + "/data --protocol one-vs-all" +
                " --normal-class alpha --out-dir " + root + "/m2") == 0);
    CHECK(slurp(root + "/m1/train.tsv") == slurp(root + "/m2/train.tsv"));
    CHECK(slurp(root + "/m1/test.tsv") == slurp(root + "/m2/test.tsv"));

    CHECK(run("prepare --dataset-root " + root + "/data --protocol one-vs-all" +
              " --normal-class gamma --out-dir " + root + "/m3") == 2);
    CHECK(run("prepare --dataset-root " + root + "/missing --out-dir " + root + "/m4 " +
              "--normal-class alpha") == 4);
}

TEST_CASE("train/eval/score pipeline through the CLI") {
    CliFixture fx;

    SUBCASE("invalid configs fail with exit 2 before any output") {
        json bad{{"train_manifest", "no_such_manifest.tsv"},
                 {"test_manifest", fx.ds.test_manifest},
                 {"out_dir", fx.root + "/bad_run"}};
        const std::string bad_path = fx.root + "/bad.json";
        std::ofstream(bad_path) << bad.dump();
        CHECK(run("train --config " + bad_path) == 2);
        CHECK_FALSE(fs::exists(fx.root + "/bad_run"));
    }

    SUBCASE("flag overrides beat config file values") {
        REQUIRE(run("train --config " + fx.config_path + " --max-epochs 2") == 0);
        ModelBundle last = load_checkpoint(fx.root + "/run/last.ckpt");
        CHECK(last.epoch == 2);  // config said 1
        CHECK(fs::exists(fx.root + "/run/best.ckpt"));
        CHECK(fs::exists(fx.root + "/run/metrics.csv"));

        // eval twice: identical artifacts
        REQUIRE(run("eval --config " + fx.config_path + " --checkpoint " + fx.root +
                    "/run/best.ckpt --out-dir " + fx.root + "/ev1") == 0);
        REQUIRE(run("eval --config " + fx.config_path + " --checkpoint " + fx.root +
                    "/run/best.ckpt --out-dir " + fx.root + "/ev2") == 0);
        CHECK(slurp(fx.root + "/ev1/report.json") == slurp(fx.root + "/ev2/report.json"));
        CHECK(slurp(fx.root + "/ev1/scores.csv") == slurp(fx.root + "/ev2/scores.csv"));

        json rep = json::parse(slurp(fx.root + "/ev1/report.json"));
        EvalReport r = report_from_json(rep);
        CHECK(r.auc >= 0.0);
        CHECK(r.auc <= 1.0);
        CHECK(r.eta == 0.9);

        // eta sweep emits one report per value
        REQUIRE(run("eval --config " + fx.config_path + " --checkpoint " + fx.root +
                    "/run/best.ckpt --out-dir " + fx.root + "/sweep --eta-sweep") == 0);
        for (int i = 1; i <= 9; ++i) {
            const std::string dir = fx.root + "/sweep/eta_0." + std::to_string(i);
            CHECK(fs::exists(dir + "/report.json"));
            EvalReport ri = report_from_json(json::parse(slurp(dir + "/report.json")));
            CHECK(ri.eta == doctest::Approx(i / 10.0));
        }

        // score writes the csv only
        REQUIRE(run("score --config " + fx.config_path + " --checkpoint " + fx.root +
                    "/run/best.ckpt --out-dir " + fx.root + "/sc") == 0);
        std::ifstream sc(fx.root + "/sc/scores.csv");
        std::string line;
        int lines = 0;
        while (std::getline(sc, line)) ++lines;
        CHECK(lines == 9);  // header + 8 samples
        CHECK_FALSE(fs::exists(fx.root + "/sc/report.json"));

        // bad eta fails validation
        CHECK(run("score --config " + fx.config_path + " --checkpoint " + fx.root +
                  "/run/best.ckpt --out-dir " + fx.root + "/sc2 --eta 1.5") == 2);
    }

    SUBCASE("output root environment variable reroots relative out dirs") {
        const std::string env_root = fx.root + "/envroot";
        const std::string cmd = "GANODET_OUT_ROOT=" + env_root + " " + GANODET_CLI_PATH +
                                " train --config " + fx.config_path +
                                " --out-dir relrun >/dev/null 2>&1";
        REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
        CHECK(fs::exists(env_root + "/relrun/last.ckpt"));
    }
}

TEST_CASE("print-config reflects overrides in the merged output") {
    CliFixture fx;
    const std::string out = fx.root + "/pc.json";
    const std::string cmd = std::string(GANODET_CLI_PATH) + " print-config --config " +
                            fx.config_path + " --seed 99 --eta 0.3 > " + out + " 2>/dev/null";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    json j = json::parse(slurp(out));
    CHECK(j["seed"] == 99);
    CHECK(j["eta"] == doctest::Approx(0.3));
    CHECK(j["generator"]["input_size"] == 16);
}
