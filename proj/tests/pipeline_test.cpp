#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "pcad/pipeline.hpp"
#include "test_support.hpp"

using namespace pcad;
namespace fs = std::filesystem;

namespace {

// A configuration small enough for fast end-to-end runs.
RunConfig tiny_config(const std::string& root) {
    RunConfig cfg;
    cfg.train_dir = root + "/train";
    cfg.out_dir = root + "/out";
    cfg.seed = 7;
    cfg.patch_count = 8;
    cfg.patch_size = 24;
    cfg.depth_height = 24;
    cfg.depth_width = 24;
    cfg.scales = {1, 2};
    cfg.d1 = 12;
    cfg.encoder_hidden = {8, 16};
    cfg.decoder_hidden = {16};
    cfg.sdf_train.epochs = 4;
    cfg.sdf_train.queries_per_patch = 8;
    cfg.retention_fraction = 0.5;
    cfg.k_retain_min = 2;
    cfg.n_samples = 8;
    cfg.max_rows_per_sample = 64;
    cfg.iaf.epochs = 6;
    cfg.iaf.batch_size = 16;
    return cfg;
}

void write_train_clouds(const std::string& dir, int count, std::uint64_t seed) {
    fs::create_directories(dir);
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        auto cloud = testsupport::sphere_cloud(160, rng);
        char name[32];
        std::snprintf(name, sizeof(name), "cloud_%02d.xyz", i);
        save_cloud(cloud, dir + "/" + name);
    }
}

std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct Workspace {
    std::string root;
    explicit Workspace(const std::string& name) {
        root = (fs::temp_directory_path() / ("pcad_" + name)).string();
        fs::remove_all(root);
        fs::create_directories(root);
    }
};

}  // namespace

TEST_CASE("train-experts writes artifacts deterministically") {
    Workspace ws("train_experts");
    write_train_clouds(ws.root + "/train", 3, 11);
    auto cfg = tiny_config(ws.root);

    pipe::run_train_experts(cfg);
    auto ckpt_path = ws.root + "/out/" + pipe::kSdfCheckpointFile;
    auto bank_path = ws.root + "/out/" + pipe::kBankFile;
    REQUIRE(fs::exists(ckpt_path));
    REQUIRE(fs::exists(bank_path));
    REQUIRE(fs::exists(ws.root + "/out/" + pipe::kExpertLogFile));

    // smoothed loss trend must not increase
    auto log = slurp_file(ws.root + "/out/" + pipe::kExpertLogFile);
    std::vector<double> losses;
    std::istringstream ls(log);
    std::string line;
    std::getline(ls, line);  // header
    while (std::getline(ls, line)) {
        auto comma = line.find(',');
        losses.push_back(std::stod(line.substr(comma + 1)));
    }
    REQUIRE(losses.size() == 4);
    double head = (losses[0] + losses[1]) / 2.0;
    double tail = (losses[losses.size() - 2] + losses.back()) / 2.0;
    CHECK(tail <= head);

    // identical rerun reproduces every artifact byte for byte
    auto ckpt_bytes = slurp_file(ckpt_path);
    auto bank_bytes = slurp_file(bank_path);
    auto side_bytes = slurp_file(bank_path + ".json");
    pipe::run_train_experts(cfg);
    CHECK(slurp_file(ckpt_path) == ckpt_bytes);
    CHECK(slurp_file(bank_path) == bank_bytes);
    CHECK(slurp_file(bank_path + ".json") == side_bytes);

    // artifacts load back and carry the config hash
    auto models = pipe::load_expert_artifacts(cfg);
    CHECK(models.encoder.feature_dim() == 12);
    CHECK(models.banks.bank3d.size() >= 2);

    // a different pipeline configuration must be refused
    auto other = cfg;
    other.seed = 8;
    CHECK_THROWS_AS(pipe::load_expert_artifacts(other), pipe::input_error);
}

TEST_CASE("train-experts rejects an empty training directory") {
    Workspace ws("empty_train");
    fs::create_directories(ws.root + "/train");
    auto cfg = tiny_config(ws.root);
    CHECK_THROWS_WITH(pipe::run_train_experts(cfg), "empty training set");
}

TEST_CASE("synthesize writes a reproducible dataset with a sound manifest") {
    Workspace ws("synthesize");
    write_train_clouds(ws.root + "/train", 3, 13);
    auto cfg = tiny_config(ws.root);

    pipe::run_synthesize(cfg);
    auto manifest_path = ws.root + "/out/" + pipe::kManifestFile;
    REQUIRE(fs::exists(manifest_path));
    auto manifest = nlohmann::json::parse(slurp_file(manifest_path));
    REQUIRE(manifest.at("samples").size() == 8);

    // label histogram recount: mask count in the manifest matches the files
    for (const auto& entry : manifest.at("samples")) {
        auto path = ws.root + "/out/" + entry.at("path").get<std::string>();
        REQUIRE(fs::exists(path));
        auto cloud = load_cloud(path);
        std::size_t ones = 0;
        for (auto l : cloud.labels) ones += l;
        if (entry.contains("mask"))
            CHECK(ones == entry.at("mask").at("count").get<std::size_t>());
        else
            CHECK(ones == 0);
    }

    // byte-identical regeneration under the same seed
    std::vector<std::string> bytes;
    for (const auto& entry : manifest.at("samples"))
        bytes.push_back(slurp_file(ws.root + "/out/" + entry.at("path").get<std::string>()));
    auto manifest_bytes = slurp_file(manifest_path);
    pipe::run_synthesize(cfg);
    CHECK(slurp_file(manifest_path) == manifest_bytes);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        auto path = ws.root + "/out/" +
                    manifest.at("samples")[i].at("path").get<std::string>();
        CHECK(slurp_file(path) == bytes[i]);
    }
}

TEST_CASE("full pipeline trains fusion, scores, and evaluates") {
    Workspace ws("full");
    write_train_clouds(ws.root + "/train", 3, 17);
    auto cfg = tiny_config(ws.root);

    pipe::run_train_experts(cfg);
    pipe::run_synthesize(cfg);
    pipe::run_train_iaf(cfg);

    auto bundle_path = ws.root + "/out/" + pipe::kFusionBundleFile;
    REQUIRE(fs::exists(bundle_path));
    auto bundle = nlohmann::json::parse(slurp_file(bundle_path));
    // paper defaults echoed in the bundle configuration
    RunConfig defaults;
    CHECK(defaults.iaf.margin == 0.1);
    CHECK(defaults.iaf.lambda == 1.0);
    CHECK(defaults.iaf.epochs == 150);
    CHECK(defaults.iaf.batch_size == 32);
    CHECK(defaults.n_samples == 800);
    CHECK(bundle.at("config").at("fusion").at("margin").get<double>() == cfg.iaf.margin);
    CHECK(bundle.contains("linear"));

    // bit-identical rerun
    auto bundle_bytes = slurp_file(bundle_path);
    pipe::run_train_iaf(cfg);
    CHECK(slurp_file(bundle_path) == bundle_bytes);

    // tampered hash refused
    {
        auto broken = bundle;
        broken["config_hash"] = "0000000000000000";
        std::ofstream out(bundle_path, std::ios::binary);
        out << broken.dump(2) << "\n";
    }
    CHECK_THROWS_AS(pipe::load_fusion_artifacts(cfg), pipe::input_error);
    {
        std::ofstream out(bundle_path, std::ios::binary);
        out << bundle_bytes;
    }

    // scoring a training cloud produces aligned outputs and no stray svg
    auto train_files = pipe::load_cloud_dir(cfg.train_dir);
    auto j = pipe::run_score(cfg, train_files[0].path, false);
    auto cloud = load_cloud(train_files[0].path);
    CHECK(j.at("point_scores").size() == cloud.size());
    CHECK(j.at("expert_scores").at("x1").size() == cloud.size());
    CHECK(j.at("expert_scores").at("x2").size() == cloud.size());
    CHECK(j.at("object_score").get<double>() >= 0.0);
    CHECK(j.at("object_score").get<double>() <= 1.0);
    CHECK(fs::exists(ws.root + "/out/score.json"));
    CHECK_FALSE(fs::exists(ws.root + "/out/score.svg"));
    pipe::run_score(cfg, train_files[0].path, true);
    CHECK(fs::exists(ws.root + "/out/score.svg"));

    // evaluation over the synthetic dataset itself: 4 strategy rows
    auto outcome = pipe::run_eval(cfg, ws.root + "/out/" + pipe::kManifestFile, true);
    REQUIRE(outcome.reports.size() == 4);
    CHECK(outcome.reports[0].category == "default/iaf");
    CHECK(outcome.reports[1].category == "default/max");
    CHECK(outcome.reports[2].category == "default/add");
    CHECK(outcome.reports[3].category == "default/linear");
    for (const auto& r : outcome.reports) CHECK(r.limits == metrics::kDefaultLimits);
    REQUIRE(fs::exists(ws.root + "/out/" + pipe::kReportCsvFile));
    auto csv = slurp_file(ws.root + "/out/" + pipe::kReportCsvFile);
    CHECK(csv.rfind("category,sample_count,o_auroc,p_auroc,aupro_30", 0) == 0);

    // single-class test set: error rows, not silence
    RunConfig normals_cfg = cfg;
    normals_cfg.out_dir = ws.root + "/normals_out";
    normals_cfg.dataset.normal_fraction = 1.0;
    pipe::run_synthesize(normals_cfg);
    // evaluate those all-normal samples using the trained artifacts
    auto normal_outcome =
        pipe::run_eval(cfg, ws.root + "/normals_out/" + pipe::kManifestFile, false);
    CHECK_FALSE(normal_outcome.ok);
    CHECK_FALSE(normal_outcome.reports[0].errors.empty());
}

TEST_CASE("cli maps errors to documented exit codes") {
    Workspace ws("cli");
    fs::create_directories(ws.root + "/train");
    auto cfg = tiny_config(ws.root);
    auto cfg_path = ws.root + "/config.json";
    {
        std::ofstream out(cfg_path);
        out << config_to_json(cfg).dump(2) << "\n";
    }
    std::string cli = PCAD_CLI_PATH;

    auto run = [&](const std::string& args) {
        std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };
    // empty training set -> input error
    CHECK(run("train-experts --config " + cfg_path) == 2);
    // missing artifacts -> input error
    CHECK(run("score --config " + cfg_path + " " + ws.root + "/nope.xyz") == 2);
    // unknown fusion strategy -> internal error from validation
    CHECK(run("eval --config " + cfg_path + " --fusion ocsvm " + ws.root + "/m.json") == 1);
    // no subcommand -> CLI11 usage error
    CHECK(run("") != 0);

    // happy path end to end through the binary
    write_train_clouds(ws.root + "/train", 2, 23);
    CHECK(run("train-experts --config " + cfg_path) == 0);
    CHECK(run("synthesize --config " + cfg_path) == 0);
    CHECK(run("train-iaf --config " + cfg_path) == 0);
    auto sample = ws.root + "/out/dataset/sample_0000.xyz";
    CHECK(run("score --config " + cfg_path + " --svg " + sample) == 0);
    CHECK(fs::exists(ws.root + "/out/score.svg"));
    CHECK(run("eval --config " + cfg_path + " --all-fusions " + ws.root + "/out/" +
              pipe::kManifestFile) == 0);

    // PCAD_CONFIG env var is the fallback config path
    std::string env_cmd = "PCAD_CONFIG=" + cfg_path + " " + cli +
                          " synthesize > /dev/null 2>&1";
    CHECK(WEXITSTATUS(std::system(env_cmd.c_str())) == 0);
}
