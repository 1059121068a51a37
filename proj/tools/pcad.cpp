// Command-line front end for the point-cloud anomaly detection pipeline:
// expert training, pseudo-anomaly synthesis, fusion training, scoring, and
// evaluation. Exit codes: 0 ok, 1 internal error, 2 input/artifact error,
// 3 evaluation undefined.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pcad/config.hpp"
#include "pcad/pipeline.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file path");
    cmd->add_option("--seed", flags.seed, "override the config seed");
    cmd->add_option("--out", flags.out_dir, "override the output directory");
}

pcad::RunConfig resolve_config(const CommonFlags& flags) {
    pcad::RunConfig cfg;
    std::string path = flags.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("PCAD_CONFIG")) path = env;
    }
    if (!path.empty()) cfg = pcad::load_config_file(path);
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.out_dir) cfg.out_dir = *flags.out_dir;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"point-cloud anomaly detection pipeline"};
    app.require_subcommand(1);

    CommonFlags train_flags, synth_flags, iaf_flags, score_flags, eval_flags;
    std::string train_dir_override, score_input, eval_manifest;
    bool write_svg = false, all_fusions = false;
    std::string fusion_override;

    auto* train_cmd =
        app.add_subcommand("train-experts", "pretrain the SDF expert and build the dual bank");
    add_common(train_cmd, train_flags);
    train_cmd->add_option("--train-dir", train_dir_override,
                          "directory of anomaly-free training clouds");

    auto* synth_cmd =
        app.add_subcommand("synthesize", "generate the cut-paste pseudo-anomaly dataset");
    add_common(synth_cmd, synth_flags);
    std::string synth_train_dir;
    synth_cmd->add_option("--train-dir", synth_train_dir,
                          "directory of anomaly-free source clouds");

    auto* iaf_cmd =
        app.add_subcommand("train-iaf", "train the importance-aware fusion module");
    add_common(iaf_cmd, iaf_flags);

    auto* score_cmd = app.add_subcommand("score", "score a single point cloud");
    add_common(score_cmd, score_flags);
    score_cmd->add_option("input", score_input, "point cloud file")->required();
    score_cmd->add_flag("--svg", write_svg, "also write a score-map SVG");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate on a labeled test manifest");
    add_common(eval_cmd, eval_flags);
    eval_cmd->add_option("manifest", eval_manifest, "test manifest JSON")->required();
    eval_cmd->add_option("--fusion", fusion_override, "fusion strategy: iaf, max, add, linear");
    eval_cmd->add_flag("--all-fusions", all_fusions, "one report row per fusion strategy");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) {
            auto cfg = resolve_config(train_flags);
            if (!train_dir_override.empty()) cfg.train_dir = train_dir_override;
            pcad::pipe::run_train_experts(cfg);
            std::cout << "wrote expert artifacts to " << cfg.out_dir << "\n";
        } else if (synth_cmd->parsed()) {
            auto cfg = resolve_config(synth_flags);
            if (!synth_train_dir.empty()) cfg.train_dir = synth_train_dir;
            pcad::pipe::run_synthesize(cfg);
            std::cout << "wrote " << cfg.n_samples << " samples and manifest to " << cfg.out_dir
                      << "/dataset\n";
        } else if (iaf_cmd->parsed()) {
            auto cfg = resolve_config(iaf_flags);
            pcad::pipe::run_train_iaf(cfg);
            std::cout << "wrote fusion bundle to " << cfg.out_dir << "\n";
        } else if (score_cmd->parsed()) {
            auto cfg = resolve_config(score_flags);
            auto j = pcad::pipe::run_score(cfg, score_input, write_svg);
            std::cout << "object_score " << j.at("object_score").get<double>() << "\n";
        } else if (eval_cmd->parsed()) {
            auto cfg = resolve_config(eval_flags);
            if (!fusion_override.empty()) cfg.fusion_strategy = fusion_override;
            cfg.validate();
            auto outcome = pcad::pipe::run_eval(cfg, eval_manifest, all_fusions);
            for (const auto& report : outcome.reports)
                std::cout << pcad::metrics::report_csv_row(report) << "\n";
            if (!outcome.ok) {
                std::cerr << "evaluation undefined on this test set\n";
                return 3;
            }
        }
    } catch (const pcad::pipe::eval_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const pcad::pipe::input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
