#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcad/fusion.hpp"
#include "pcad/metrics.hpp"
#include "pcad/sdf.hpp"
#include "pcad/synthesis.hpp"

namespace pcad {

// Everything a pipeline run needs. JSON file keys mirror the member names;
// absent keys keep their defaults, CLI flags override the file.
struct RunConfig {
    // paths
    std::string train_dir;
    std::string test_dir;
    std::string out_dir = "out";

    std::uint64_t seed = 0;
    std::string category = "default";

    // geometry / patching
    bool estimate_normals = true;
    int normal_k = 12;
    int patch_count = 64;
    int patch_size = 256;

    // descriptors
    int depth_height = 128;
    int depth_width = 128;
    std::vector<int> scales{1, 2, 4};
    double fpfh_radius = 0.0;        // 0 = auto
    double fpfh_radius_scale = 2.5;  // auto mode: times the median nn spacing

    // sdf expert
    int d1 = 128;
    std::vector<std::size_t> encoder_hidden{64, 128};
    std::vector<std::size_t> decoder_hidden{128, 64};
    sdf::SdfTrainConfig sdf_train;

    // memory bank
    double retention_fraction = 0.1;
    int k_retain_min = 8;
    int k1 = 3;
    int k2 = 3;
    int bank_clouds = 0;  // 0 = every training cloud feeds the bank

    // synthesis
    int n_samples = 800;
    synth::DatasetConfig dataset;

    // fusion
    fusion::IafConfig iaf;
    int max_rows_per_sample = 0;  // 0 = every point joins the fusion pool

    // evaluation
    std::vector<double> limits = metrics::kDefaultLimits;
    std::string fusion_strategy = "iaf";
    double region_radius_scale = 2.0;  // times the median nn spacing

    void validate() const {
        if (iaf.margin < 0.0) throw std::invalid_argument("margin must be >= 0");
        if (iaf.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
        if (!(retention_fraction > 0.0) || retention_fraction > 1.0)
            throw std::invalid_argument("retention fraction must be in (0, 1]");
        if (patch_count < 1 || patch_size < 1)
            throw std::invalid_argument("patching needs positive counts");
        for (double l : limits)
            if (!(l > 0.0) || l > 1.0)
                throw std::invalid_argument("integration limits must be in (0, 1]");
        fusion::parse_strategy(fusion_strategy);
    }
};

namespace detail {

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
    using detail::get_if;
    get_if(j, "train_dir", cfg.train_dir);
    get_if(j, "test_dir", cfg.test_dir);
    get_if(j, "out_dir", cfg.out_dir);
    get_if(j, "seed", cfg.seed);
    get_if(j, "category", cfg.category);

    if (j.contains("geometry")) {
        const auto& g = j.at("geometry");
        get_if(g, "estimate_normals", cfg.estimate_normals);
        get_if(g, "normal_k", cfg.normal_k);
        get_if(g, "patch_count", cfg.patch_count);
        get_if(g, "patch_size", cfg.patch_size);
    }
    if (j.contains("descriptors")) {
        const auto& d = j.at("descriptors");
        get_if(d, "depth_height", cfg.depth_height);
        get_if(d, "depth_width", cfg.depth_width);
        get_if(d, "scales", cfg.scales);
        get_if(d, "fpfh_radius", cfg.fpfh_radius);
        get_if(d, "fpfh_radius_scale", cfg.fpfh_radius_scale);
    }
    if (j.contains("sdf")) {
        const auto& s = j.at("sdf");
        get_if(s, "d1", cfg.d1);
        get_if(s, "encoder_hidden", cfg.encoder_hidden);
        get_if(s, "decoder_hidden", cfg.decoder_hidden);
        get_if(s, "epochs", cfg.sdf_train.epochs);
        get_if(s, "queries_per_patch", cfg.sdf_train.queries_per_patch);
        get_if(s, "off_surface_fraction", cfg.sdf_train.off_surface_fraction);
        get_if(s, "sigma", cfg.sdf_train.sigma);
        get_if(s, "lr", cfg.sdf_train.lr);
        get_if(s, "weight_decay", cfg.sdf_train.weight_decay);
    }
    if (j.contains("bank")) {
        const auto& b = j.at("bank");
        get_if(b, "retention_fraction", cfg.retention_fraction);
        get_if(b, "k_retain_min", cfg.k_retain_min);
        get_if(b, "k1", cfg.k1);
        get_if(b, "k2", cfg.k2);
        get_if(b, "bank_clouds", cfg.bank_clouds);
    }
    if (j.contains("synthesis")) {
        const auto& s = j.at("synthesis");
        get_if(s, "n_samples", cfg.n_samples);
        get_if(s, "normal_fraction", cfg.dataset.normal_fraction);
        get_if(s, "allow_same_source", cfg.dataset.allow_same_source);
        get_if(s, "fraction_min", cfg.dataset.mask.fraction_min);
        get_if(s, "fraction_max", cfg.dataset.mask.fraction_max);
        get_if(s, "radius_min_rel", cfg.dataset.mask.radius_min_rel);
        get_if(s, "radius_max_rel", cfg.dataset.mask.radius_max_rel);
        get_if(s, "max_rotation_deg", cfg.dataset.paste.max_rotation_deg);
        get_if(s, "scale_min", cfg.dataset.paste.scale_min);
        get_if(s, "scale_max", cfg.dataset.paste.scale_max);
        get_if(s, "offset_min", cfg.dataset.paste.offset_min);
        get_if(s, "offset_max", cfg.dataset.paste.offset_max);
        get_if(s, "merge_radius", cfg.dataset.paste.merge_radius);
        get_if(s, "insertion", cfg.dataset.paste.insertion);
    }
    if (j.contains("fusion")) {
        const auto& f = j.at("fusion");
        get_if(f, "margin", cfg.iaf.margin);
        get_if(f, "lambda", cfg.iaf.lambda);
        get_if(f, "epochs", cfg.iaf.epochs);
        get_if(f, "batch_size", cfg.iaf.batch_size);
        get_if(f, "lr", cfg.iaf.lr);
        get_if(f, "weight_decay", cfg.iaf.weight_decay);
        get_if(f, "selector_hidden", cfg.iaf.selector_hidden);
        get_if(f, "predictor_hidden", cfg.iaf.predictor_hidden);
        get_if(f, "zero_init_selector_head", cfg.iaf.zero_init_selector_head);
        get_if(f, "joint_routing", cfg.iaf.joint_routing);
        get_if(f, "max_rows_per_sample", cfg.max_rows_per_sample);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        get_if(e, "limits", cfg.limits);
        get_if(e, "fusion_strategy", cfg.fusion_strategy);
        get_if(e, "region_radius_scale", cfg.region_radius_scale);
    }
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["train_dir"] = cfg.train_dir;
    j["test_dir"] = cfg.test_dir;
    j["out_dir"] = cfg.out_dir;
    j["seed"] = cfg.seed;
    j["category"] = cfg.category;
    j["geometry"] = {{"estimate_normals", cfg.estimate_normals},
                     {"normal_k", cfg.normal_k},
                     {"patch_count", cfg.patch_count},
                     {"patch_size", cfg.patch_size}};
    j["descriptors"] = {{"depth_height", cfg.depth_height},
                        {"depth_width", cfg.depth_width},
                        {"scales", cfg.scales},
                        {"fpfh_radius", cfg.fpfh_radius},
                        {"fpfh_radius_scale", cfg.fpfh_radius_scale}};
    j["sdf"] = {{"d1", cfg.d1},
                {"encoder_hidden", cfg.encoder_hidden},
                {"decoder_hidden", cfg.decoder_hidden},
                {"epochs", cfg.sdf_train.epochs},
                {"queries_per_patch", cfg.sdf_train.queries_per_patch},
                {"off_surface_fraction", cfg.sdf_train.off_surface_fraction},
                {"sigma", cfg.sdf_train.sigma},
                {"lr", cfg.sdf_train.lr},
                {"weight_decay", cfg.sdf_train.weight_decay}};
    j["bank"] = {{"retention_fraction", cfg.retention_fraction},
                 {"k_retain_min", cfg.k_retain_min},
                 {"k1", cfg.k1},
                 {"k2", cfg.k2},
                 {"bank_clouds", cfg.bank_clouds}};
    j["synthesis"] = {{"n_samples", cfg.n_samples},
                      {"normal_fraction", cfg.dataset.normal_fraction},
                      {"allow_same_source", cfg.dataset.allow_same_source},
                      {"fraction_min", cfg.dataset.mask.fraction_min},
                      {"fraction_max", cfg.dataset.mask.fraction_max},
                      {"radius_min_rel", cfg.dataset.mask.radius_min_rel},
                      {"radius_max_rel", cfg.dataset.mask.radius_max_rel},
                      {"max_rotation_deg", cfg.dataset.paste.max_rotation_deg},
                      {"scale_min", cfg.dataset.paste.scale_min},
                      {"scale_max", cfg.dataset.paste.scale_max},
                      {"offset_min", cfg.dataset.paste.offset_min},
                      {"offset_max", cfg.dataset.paste.offset_max},
                      {"merge_radius", cfg.dataset.paste.merge_radius},
                      {"insertion", cfg.dataset.paste.insertion}};
    j["fusion"] = {{"margin", cfg.iaf.margin},
                   {"lambda", cfg.iaf.lambda},
                   {"epochs", cfg.iaf.epochs},
                   {"batch_size", cfg.iaf.batch_size},
                   {"lr", cfg.iaf.lr},
                   {"weight_decay", cfg.iaf.weight_decay},
                   {"selector_hidden", cfg.iaf.selector_hidden},
                   {"predictor_hidden", cfg.iaf.predictor_hidden},
                   {"zero_init_selector_head", cfg.iaf.zero_init_selector_head},
                   {"joint_routing", cfg.iaf.joint_routing},
                   {"max_rows_per_sample", cfg.max_rows_per_sample}};
    j["eval"] = {{"limits", cfg.limits},
                 {"fusion_strategy", cfg.fusion_strategy},
                 {"region_radius_scale", cfg.region_radius_scale}};
    return j;
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    RunConfig cfg;
    apply_config_json(cfg, nlohmann::json::parse(in));
    return cfg;
}

// FNV-1a over the canonical serialization of the pipeline-relevant fields.
// Paths, category, and evaluation options do not change what the artifacts
// contain, so they stay out of the hash.
inline std::string config_hash(const RunConfig& cfg) {
    nlohmann::json j = config_to_json(cfg);
    j.erase("train_dir");
    j.erase("test_dir");
    j.erase("out_dir");
    j.erase("category");
    j.erase("eval");
    std::string canon = j.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace pcad
