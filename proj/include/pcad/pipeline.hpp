#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcad/config.hpp"
#include "pcad/descriptors.hpp"
#include "pcad/fusion.hpp"
#include "pcad/geometry.hpp"
#include "pcad/memory_bank.hpp"
#include "pcad/metrics.hpp"
#include "pcad/nn.hpp"
#include "pcad/point_cloud.hpp"
#include "pcad/sdf.hpp"
#include "pcad/synthesis.hpp"

namespace pcad::pipe {

// Bad inputs or missing/mismatched artifacts (CLI exit code 2).
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Evaluation undefined on the given data (CLI exit code 3).
struct eval_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline const char* kSdfCheckpointFile = "sdf_checkpoint.json";
inline const char* kBankFile = "memory_bank.bin";
inline const char* kExpertLogFile = "expert_training_log.csv";
inline const char* kManifestFile = "dataset/manifest.json";
inline const char* kFusionBundleFile = "fusion_bundle.json";
inline const char* kFusionLogFile = "fusion_training_log.csv";
inline const char* kReportCsvFile = "report.csv";
inline const char* kReportJsonFile = "report.json";

// ---------------------------------------------------------------------------
// Cloud preparation and expert scoring, shared by every stage.
// ---------------------------------------------------------------------------

struct PreparedCloud {
    PointCloud cloud;  // normals guaranteed
    std::vector<Patch> patches;
    nn::Matrix f2;
};

inline double fpfh_radius_for(const RunConfig& cfg, const PointCloud& cloud) {
    if (cfg.fpfh_radius > 0.0) return cfg.fpfh_radius;
    return cfg.fpfh_radius_scale * median_nn_spacing(cloud);
}

inline PreparedCloud prepare_cloud(const PointCloud& input, const RunConfig& cfg) {
    PreparedCloud out;
    out.cloud = input;
    out.cloud.validate();
    if (!out.cloud.has_normals()) {
        if (!cfg.estimate_normals)
            throw input_error("cloud has no normals and normal estimation is disabled");
        auto k = std::min<std::size_t>(static_cast<std::size_t>(cfg.normal_k),
                                       out.cloud.size());
        if (k < 3) throw input_error("cloud too small for normal estimation");
        out.cloud = estimate_normals(out.cloud, static_cast<int>(k)).cloud;
    }

    auto n_centers = std::min<std::size_t>(static_cast<std::size_t>(cfg.patch_count),
                                           out.cloud.size());
    auto centers = farthest_point_sample(out.cloud, static_cast<int>(n_centers), cfg.seed);
    auto size = std::min<std::size_t>(static_cast<std::size_t>(cfg.patch_size),
                                      out.cloud.size());
    out.patches = extract_patches(out.cloud, centers, static_cast<int>(size));

    auto img = desc::render_depth(out.cloud, cfg.depth_height, cfg.depth_width);
    auto stats = desc::extract_2d_features(img, cfg.scales);
    auto fpfh = desc::compute_fpfh(out.cloud, fpfh_radius_for(cfg, out.cloud));
    out.f2 = desc::assemble_f2(stats.stats, fpfh.descriptors);
    return out;
}

struct ExpertModels {
    sdf::PointNetEncoder encoder;
    sdf::SdfDecoder decoder;
    bank::DualMemoryBank banks;
};

struct ExpertScores {
    std::vector<double> x1, x2;
    double s1 = 0.0, s2 = 0.0;
};

inline ExpertScores score_experts(const PreparedCloud& prepared, const ExpertModels& models,
                                  const RunConfig& cfg) {
    ExpertScores out;
    out.x1 = sdf::score_x1(models.encoder, models.decoder, prepared.cloud, prepared.patches,
                           models.banks, cfg.k1);
    out.x2 = bank::score_x2(models.banks.bank2d, prepared.f2, cfg.k2);
    auto [s1, s2] = bank::object_scores(out.x1, out.x2);
    out.s1 = s1;
    out.s2 = s2;
    return out;
}

// ---------------------------------------------------------------------------
// Training-set loading
// ---------------------------------------------------------------------------

struct NamedCloud {
    std::string path;
    PointCloud cloud;
};

inline std::vector<NamedCloud> load_cloud_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw input_error("not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        if (ext == ".xyz" || ext == ".txt" || ext == ".pts")
            paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    std::vector<NamedCloud> out;
    for (const auto& p : paths) out.push_back({p, load_cloud(p)});
    if (out.empty()) throw input_error("empty training set");
    return out;
}

// ---------------------------------------------------------------------------
// Stage: train-experts
// ---------------------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << text;
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline ExpertModels train_experts(const std::vector<PointCloud>& train_clouds,
                                  const RunConfig& cfg, std::vector<double>* loss_history) {
    if (train_clouds.empty()) throw input_error("empty training set");
    std::vector<PreparedCloud> prepared;
    prepared.reserve(train_clouds.size());
    for (const auto& c : train_clouds) prepared.push_back(prepare_cloud(c, cfg));

    Rng init_rng(cfg.seed);
    ExpertModels models{
        sdf::PointNetEncoder::make(cfg.encoder_hidden, static_cast<std::size_t>(cfg.d1),
                                   init_rng),
        sdf::SdfDecoder::make(static_cast<std::size_t>(cfg.d1), cfg.decoder_hidden, init_rng),
        {}};

    std::vector<sdf::SdfPatch> train_patches;
    for (const auto& p : prepared) {
        auto patches = sdf::make_sdf_patches(p.cloud, p.patches);
        train_patches.insert(train_patches.end(), patches.begin(), patches.end());
    }
    sdf::SdfTrainConfig sdf_cfg = cfg.sdf_train;
    sdf_cfg.seed = cfg.seed;
    auto result = sdf::pretrain_sdf(models.encoder, models.decoder, train_patches, sdf_cfg);
    if (loss_history) *loss_history = result.loss_history;

    std::size_t bank_count = cfg.bank_clouds > 0
                                 ? std::min<std::size_t>(
                                       static_cast<std::size_t>(cfg.bank_clouds), prepared.size())
                                 : prepared.size();
    std::vector<bank::CloudBankInput> inputs;
    for (std::size_t ci = 0; ci < bank_count; ++ci) {
        bank::CloudBankInput in;
        in.cloud_id = static_cast<int>(ci);
        for (const auto& patch : prepared[ci].patches) {
            in.patch_f1.push_back(sdf::encode_patch(models.encoder, patch));
            in.patch_members.push_back(patch.member_indices);
        }
        in.f2 = prepared[ci].f2;
        inputs.push_back(std::move(in));
    }
    models.banks = bank::build_dual_bank(inputs, cfg.retention_fraction, cfg.k_retain_min);
    return models;
}

inline void run_train_experts(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    auto named = load_cloud_dir(cfg.train_dir);
    std::vector<PointCloud> clouds;
    for (auto& n : named) clouds.push_back(std::move(n.cloud));

    std::vector<double> history;
    auto models = train_experts(clouds, cfg, &history);
    std::string hash = config_hash(cfg);

    fs::create_directories(cfg.out_dir);
    nlohmann::json ckpt;
    ckpt["pointnet"] = nn::mlp_to_json(models.encoder.net);
    ckpt["sdf_decoder"] = nn::mlp_to_json(models.decoder.net);
    ckpt["config_hash"] = hash;
    write_text_file((fs::path(cfg.out_dir) / kSdfCheckpointFile).string(), ckpt.dump(2) + "\n");
    bank::save_dual_bank(models.banks, (fs::path(cfg.out_dir) / kBankFile).string(), hash);

    std::string log = "epoch,sdf_loss\n";
    for (std::size_t e = 0; e < history.size(); ++e) {
        char line[64];
        std::snprintf(line, sizeof(line), "%zu,%.17g\n", e, history[e]);
        log += line;
    }
    write_text_file((fs::path(cfg.out_dir) / kExpertLogFile).string(), log);
}

inline ExpertModels load_expert_artifacts(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    auto ckpt_path = (fs::path(cfg.out_dir) / kSdfCheckpointFile).string();
    if (!fs::exists(ckpt_path)) throw input_error("missing artifact: " + ckpt_path);
    nlohmann::json ckpt = nlohmann::json::parse(slurp(ckpt_path));
    std::string hash = config_hash(cfg);
    if (ckpt.value("config_hash", "") != hash)
        throw input_error("config hash mismatch: " + ckpt_path +
                          " was trained under a different configuration");
    ExpertModels models{{nn::mlp_from_json(ckpt.at("pointnet"))},
                        {nn::mlp_from_json(ckpt.at("sdf_decoder"))},
                        {}};
    auto bank_path = (fs::path(cfg.out_dir) / kBankFile).string();
    if (!fs::exists(bank_path)) throw input_error("missing artifact: " + bank_path);
    auto loaded = bank::load_dual_bank(bank_path);
    if (loaded.config_hash != hash)
        throw input_error("config hash mismatch: " + bank_path +
                          " was built under a different configuration");
    models.banks = std::move(loaded.bank);
    return models;
}

// ---------------------------------------------------------------------------
// Stage: synthesize
// ---------------------------------------------------------------------------

inline void run_synthesize(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    auto named = load_cloud_dir(cfg.train_dir);
    std::vector<PointCloud> clouds;
    for (auto& n : named) clouds.push_back(std::move(n.cloud));
    // samples need normals so scoring stages can run without re-estimation
    for (auto& c : clouds)
        if (!c.has_normals()) {
            if (!cfg.estimate_normals)
                throw input_error("cloud has no normals and normal estimation is disabled");
            c = estimate_normals(c, static_cast<int>(std::min<std::size_t>(
                                         static_cast<std::size_t>(cfg.normal_k), c.size())))
                    .cloud;
        }

    auto samples = synth::generate_dataset(clouds, cfg.n_samples, cfg.seed, cfg.dataset);

    fs::path dataset_dir = fs::path(cfg.out_dir) / "dataset";
    fs::create_directories(dataset_dir);
    nlohmann::json manifest;
    manifest["config_hash"] = config_hash(cfg);
    manifest["samples"] = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04zu.xyz", i);
        fs::path sample_path = dataset_dir / name;
        save_cloud(samples[i].cloud, sample_path.string());
        nlohmann::json entry = synth::provenance_to_json(samples[i].provenance);
        entry["path"] = std::string("dataset/") + name;
        entry["sample_seed_index"] = i;
        manifest["samples"].push_back(entry);
    }
    write_text_file((fs::path(cfg.out_dir) / kManifestFile).string(),
                    manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Stage: train-iaf
// ---------------------------------------------------------------------------

struct LoadedSample {
    std::string path;
    PointCloud cloud;
};

inline std::vector<LoadedSample> load_manifest_samples(const std::string& manifest_path,
                                                       const std::string& base_dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(manifest_path)) throw input_error("missing manifest: " + manifest_path);
    nlohmann::json manifest = nlohmann::json::parse(slurp(manifest_path));
    std::vector<LoadedSample> out;
    for (const auto& entry : manifest.at("samples")) {
        std::string rel = entry.at("path").get<std::string>();
        fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : fs::path(base_dir) / rel;
        out.push_back({p.string(), load_cloud(p.string())});
    }
    if (out.empty()) throw input_error("manifest lists no samples");
    return out;
}

inline std::string manifest_hash(const std::string& manifest_path) {
    nlohmann::json manifest = nlohmann::json::parse(slurp(manifest_path));
    return manifest.value("config_hash", "");
}

struct PooledRows {
    nn::Matrix raw;  // N x 2
    std::vector<int> labels;
};

// Pool per-point expert scores across samples; an optional per-sample cap
// subsamples rows with a seed derived from the sample index.
inline PooledRows pool_fusion_rows(const std::vector<ExpertScores>& scores,
                                   const std::vector<const PointCloud*>& clouds,
                                   int max_rows_per_sample, std::uint64_t seed) {
    std::vector<double> x1, x2;
    std::vector<int> labels;
    for (std::size_t s = 0; s < scores.size(); ++s) {
        const auto& sc = scores[s];
        const auto& cloud = *clouds[s];
        if (!cloud.has_labels()) throw input_error("training sample without labels");
        std::vector<std::size_t> idx(sc.x1.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        if (max_rows_per_sample > 0 &&
            idx.size() > static_cast<std::size_t>(max_rows_per_sample)) {
            Rng rng = Rng::derive(seed ^ 0x5eedcafeULL, s);
            for (std::size_t i = 0; i < static_cast<std::size_t>(max_rows_per_sample); ++i) {
                std::size_t j = i + rng.uniform_index(idx.size() - i);
                std::swap(idx[i], idx[j]);
            }
            idx.resize(static_cast<std::size_t>(max_rows_per_sample));
            std::sort(idx.begin(), idx.end());
        }
        for (std::size_t i : idx) {
            x1.push_back(sc.x1[i]);
            x2.push_back(sc.x2[i]);
            labels.push_back(cloud.labels[i]);
        }
    }
    PooledRows out;
    out.raw = nn::Matrix(x1.size(), 2);
    for (std::size_t r = 0; r < x1.size(); ++r) {
        out.raw.at(r, 0) = x1[r];
        out.raw.at(r, 1) = x2[r];
    }
    out.labels = std::move(labels);
    return out;
}

struct FusionArtifacts {
    fusion::IafModel model;
    fusion::LinearFuser linear;
};

inline FusionArtifacts train_fusion(const std::vector<ExpertScores>& scores,
                                    const std::vector<const PointCloud*>& clouds,
                                    const RunConfig& cfg) {
    auto pooled = pool_fusion_rows(scores, clouds, cfg.max_rows_per_sample, cfg.seed);
    fusion::IafConfig iaf_cfg = cfg.iaf;
    iaf_cfg.seed = cfg.seed;
    FusionArtifacts out;
    out.model = fusion::train_iaf(pooled.raw, pooled.labels, iaf_cfg);
    auto batch = fusion::make_fusion_batch(pooled.raw, pooled.labels);
    out.linear = fusion::fit_linear_fuser(batch);
    return out;
}

inline void run_train_iaf(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    auto models = load_expert_artifacts(cfg);
    auto manifest_path = (fs::path(cfg.out_dir) / kManifestFile).string();
    std::string hash = config_hash(cfg);
    if (manifest_hash(manifest_path) != hash)
        throw input_error("config hash mismatch: " + manifest_path +
                          " was generated under a different configuration");
    auto samples = load_manifest_samples(manifest_path, cfg.out_dir);

    std::vector<ExpertScores> scores;
    std::vector<const PointCloud*> clouds;
    std::vector<PreparedCloud> prepared;
    prepared.reserve(samples.size());
    for (const auto& s : samples) prepared.push_back(prepare_cloud(s.cloud, cfg));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        scores.push_back(score_experts(prepared[i], models, cfg));
        clouds.push_back(&prepared[i].cloud);
    }

    auto artifacts = train_fusion(scores, clouds, cfg);

    nlohmann::json bundle =
        fusion::bundle_to_json(artifacts.model, config_to_json(cfg), hash);
    bundle["linear"] = {{"w1", artifacts.linear.w1},
                        {"w2", artifacts.linear.w2},
                        {"w0", artifacts.linear.w0}};
    write_text_file((fs::path(cfg.out_dir) / kFusionBundleFile).string(),
                    bundle.dump(2) + "\n");

    std::string log = "epoch,l_p,l_s,l_final\n";
    for (std::size_t e = 0; e < artifacts.model.history.size(); ++e) {
        const auto& h = artifacts.model.history[e];
        char line[128];
        std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g\n", e, h.l_p, h.l_s,
                      h.l_final);
        log += line;
    }
    write_text_file((fs::path(cfg.out_dir) / kFusionLogFile).string(), log);
}

inline FusionArtifacts load_fusion_artifacts(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    auto path = (fs::path(cfg.out_dir) / kFusionBundleFile).string();
    if (!fs::exists(path)) throw input_error("missing artifact: " + path);
    nlohmann::json j = nlohmann::json::parse(slurp(path));
    if (j.value("config_hash", "") != config_hash(cfg))
        throw input_error("config hash mismatch: " + path +
                          " was trained under a different configuration");
    auto loaded = fusion::bundle_from_json(j);
    FusionArtifacts out;
    out.model = std::move(loaded.model);
    if (j.contains("linear")) {
        out.linear.w1 = j["linear"].at("w1").get<double>();
        out.linear.w2 = j["linear"].at("w2").get<double>();
        out.linear.w0 = j["linear"].at("w0").get<double>();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage: score
// ---------------------------------------------------------------------------

// Blue-to-red score rendering of the frontal projection; A is in [0, 1].
inline std::string score_map_svg(const PointCloud& cloud, const std::vector<double>& a) {
    const int view = 512;
    double xmin = cloud.points[0].x, xmax = xmin, ymin = cloud.points[0].y, ymax = ymin;
    for (const auto& p : cloud.points) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    double ex = xmax - xmin, ey = ymax - ymin;
    if (ex == 0.0) { xmin -= 0.5; ex = 1.0; }
    if (ey == 0.0) { ymin -= 0.5; ey = 1.0; }
    double radius =
        std::max(1.5, view / std::sqrt(static_cast<double>(cloud.size())) / 2.2);

    std::vector<std::size_t> order(cloud.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t lhs, std::size_t rhs) {
        double zl = cloud.points[lhs].z, zr = cloud.points[rhs].z;
        return zl != zr ? zl < zr : lhs < rhs;  // far points painted first
    });

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << view << "\" height=\""
        << view << "\" viewBox=\"0 0 " << view << " " << view << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"#202020\"/>\n";
    svg.precision(2);
    svg << std::fixed;
    for (std::size_t i : order) {
        const auto& p = cloud.points[i];
        double cx = (p.x - xmin) / ex * (view - 16) + 8;
        double cy = (ymax - p.y) / ey * (view - 16) + 8;
        double t = std::min(std::max(a[i], 0.0), 1.0);
        int red = static_cast<int>(std::lround(40 + 215 * t));
        int blue = static_cast<int>(std::lround(255 - 215 * t));
        svg << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"" << radius
            << "\" fill=\"rgb(" << red << ",64," << blue << ")\"/>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

struct ScoreResult {
    std::vector<double> point_scores;
    double object_score = 0.0;
    ExpertScores experts;
};

inline ScoreResult score_cloud(const PointCloud& cloud, const ExpertModels& models,
                               const FusionArtifacts& fuser, const RunConfig& cfg) {
    auto prepared = prepare_cloud(cloud, cfg);
    ScoreResult out;
    out.experts = score_experts(prepared, models, cfg);
    out.point_scores = fusion::fuse_point_scores(fuser.model, out.experts.x1, out.experts.x2);
    out.object_score = fusion::fuse_object_scores(fuser.model, out.experts.s1, out.experts.s2);
    return out;
}

inline nlohmann::json score_result_to_json(const ScoreResult& r) {
    nlohmann::json j;
    j["point_scores"] = r.point_scores;
    j["object_score"] = r.object_score;
    j["expert_scores"] = {{"x1", r.experts.x1},
                          {"x2", r.experts.x2},
                          {"s1", r.experts.s1},
                          {"s2", r.experts.s2}};
    return j;
}

inline nlohmann::json run_score(const RunConfig& cfg, const std::string& cloud_path,
                                bool write_svg) {
    namespace fs = std::filesystem;
    if (!fs::exists(cloud_path)) throw input_error("missing input cloud: " + cloud_path);
    auto models = load_expert_artifacts(cfg);
    auto fuser = load_fusion_artifacts(cfg);
    auto cloud = load_cloud(cloud_path);
    auto result = score_cloud(cloud, models,fuser, cfg);

    fs::create_directories(cfg.out_dir);
    nlohmann::json j = score_result_to_json(result);
    write_text_file((fs::path(cfg.out_dir) / "score.json").string(), j.dump(2) + "\n");
    if (write_svg)
        write_text_file((fs::path(cfg.out_dir) / "score.svg").string(),
                        score_map_svg(cloud, result.point_scores));
    return j;
}

// ---------------------------------------------------------------------------
// Stage: eval
// ---------------------------------------------------------------------------

inline std::vector<std::vector<int>> ground_truth_regions(const PointCloud& cloud,
                                                          const RunConfig& cfg) {
    if (!cloud.has_labels()) return {};
    bool any = false;
    for (auto l : cloud.labels) any |= l != 0;
    if (!any) return {};
    double radius = cfg.region_radius_scale * median_nn_spacing(cloud);
    return radius_components(cloud, cloud.labels, radius);
}

struct EvalOutcome {
    std::vector<metrics::EvalReport> reports;  // one per strategy
    bool ok = true;
};

inline EvalOutcome run_eval(const RunConfig& cfg, const std::string& manifest_path,
                            bool all_fusions) {
    namespace fs = std::filesystem;
    auto models = load_expert_artifacts(cfg);
    auto fuser = load_fusion_artifacts(cfg);
    auto samples = load_manifest_samples(
        manifest_path, fs::path(manifest_path).parent_path().parent_path().string());

    std::vector<fusion::FusionStrategy> strategies;
    if (all_fusions)
        strategies = {fusion::FusionStrategy::Iaf, fusion::FusionStrategy::Max,
                      fusion::FusionStrategy::Add, fusion::FusionStrategy::Linear};
    else
        strategies = {fusion::parse_strategy(cfg.fusion_strategy)};

    // score experts once per sample, fuse per strategy
    std::vector<std::vector<metrics::SampleEval>> per_strategy(strategies.size());
    for (const auto& sample : samples) {
        if (!sample.cloud.has_labels())
            throw eval_error("test sample without labels: " + sample.path);
        auto prepared = prepare_cloud(sample.cloud, cfg);
        auto experts = score_experts(prepared, models, cfg);
        auto regions = ground_truth_regions(prepared.cloud, cfg);
        std::uint8_t object_label = 0;
        for (auto l : prepared.cloud.labels) object_label |= l;

        for (std::size_t si = 0; si < strategies.size(); ++si) {
            metrics::SampleEval ev;
            ev.id = sample.path;
            ev.point_labels = prepared.cloud.labels;
            ev.object_label = object_label;
            ev.regions = regions;
            switch (strategies[si]) {
                case fusion::FusionStrategy::Iaf:
                    ev.point_scores =
                        fusion::fuse_point_scores(fuser.model, experts.x1, experts.x2);
                    ev.object_score =
                        fusion::fuse_object_scores(fuser.model, experts.s1, experts.s2);
                    break;
                default: {
                    const fusion::LinearFuser* lin =
                        strategies[si] == fusion::FusionStrategy::Linear ? &fuser.linear
                                                                         : nullptr;
                    ev.point_scores = fusion::baseline_fuse(
                        experts.x1, experts.x2, fuser.model.stats, strategies[si], lin);
                    ev.object_score = fusion::baseline_fuse({experts.s1}, {experts.s2},
                                                            fuser.model.stats, strategies[si],
                                                            lin)[0];
                    break;
                }
            }
            per_strategy[si].push_back(std::move(ev));
        }
    }

    EvalOutcome out;
    std::string csv = metrics::report_csv_header(cfg.limits) + "\n";
    nlohmann::json mirror = nlohmann::json::array();
    for (std::size_t si = 0; si < strategies.size(); ++si) {
        auto report = metrics::evaluate_all(per_strategy[si], cfg.limits);
        report.category = all_fusions
                              ? cfg.category + "/" + fusion::strategy_name(strategies[si])
                              : cfg.category;
        out.ok = out.ok && report.ok();
        csv += metrics::report_csv_row(report) + "\n";
        mirror.push_back(metrics::report_to_json(report));
        out.reports.push_back(std::move(report));
    }
    fs::create_directories(cfg.out_dir);
    write_text_file((fs::path(cfg.out_dir) / kReportCsvFile).string(), csv);
    write_text_file((fs::path(cfg.out_dir) / kReportJsonFile).string(), mirror.dump(2) + "\n");
    return out;
}

}  // namespace pcad::pipe
