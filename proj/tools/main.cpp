#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "bdcn/errors.hpp"
#include "commands.hpp"

using namespace bdcn;

namespace {

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return 2;
    if (dynamic_cast<const ConfigError*>(&e)) return 3;
    if (dynamic_cast<const IoError*>(&e)) return 4;
    if (dynamic_cast<const IntegrityError*>(&e)) return 5;
    if (dynamic_cast<const IngestionError*>(&e)) return 6;
    if (dynamic_cast<const TrainingError*>(&e)) return 7;
    if (dynamic_cast<const EvaluationError*>(&e)) return 8;
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bi-directional cascade edge detector"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Train a network from a dataset manifest");
    std::string train_config;
    std::optional<std::uint64_t> train_seed;
    std::string train_out;
    std::string train_manifest;
    std::optional<int> train_iters;
    train->add_option("--config", train_config, "INI run configuration")->check(CLI::ExistingFile);
    train->add_option("--seed", train_seed, "Seed for initialization, sampling and augmentation");
    train->add_option("--out", train_out, "Output directory");
    train->add_option("--manifest", train_manifest, "Dataset manifest (overrides the config)");
    train->add_option("--iterations", train_iters, "Iteration count (overrides the config)");

    // predict
    auto* predict = app.add_subcommand("predict", "Write edge probability maps");
    cli::PredictOptions popts;
    std::string pred_ckpt;
    std::string pred_out = "pred";
    std::string pred_manifest;
    std::vector<std::string> pred_images;
    predict->add_option("--checkpoint", pred_ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
    predict->add_option("images", pred_images, "Input rasters");
    predict->add_option("--manifest", pred_manifest, "Predict every image of a manifest");
    predict->add_option("--scales", popts.scales, "Comma-separated input scales, averaged")->delimiter(',');
    predict->add_flag("--emit-side-maps", popts.emit_side_maps, "Also write all 2S side predictions");
    predict->add_option("--out", pred_out, "Output directory");

    // eval
    auto* ev = app.add_subcommand("eval", "Benchmark predictions against ground truth");
    cli::EvalOptions eopts;
    std::string ev_pred;
    std::string ev_manifest;
    std::string ev_out;
    bool ev_no_nms = false;
    ev->add_option("--pred", ev_pred, "Prediction directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--manifest", ev_manifest, "Ground-truth manifest")->required()->check(CLI::ExistingFile);
    ev->add_option("--tolerance", eopts.tolerance, "Match radius as a fraction of the image diagonal")
        ->capture_default_str();
    ev->add_option("--out", ev_out, "Directory for summary.txt, pr.csv, per_image.csv");
    ev->add_flag("--no-nms", ev_no_nms, "Skip non-maximum suppression");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "Report architecture of a config or checkpoint");
    std::string insp_path;
    std::int64_t insp_h = 320;
    std::int64_t insp_w = 320;
    inspect->add_option("input", insp_path, "Config (.ini) or checkpoint")->required()->check(CLI::ExistingFile);
    inspect->add_option("--height", insp_h, "Input height for the shape table")->capture_default_str();
    inspect->add_option("--width", insp_w, "Input width for the shape table")->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic shape dataset");
    cli::SynthOptions sopts;
    std::string synth_out = "synth";
    synth->add_option("--seed", sopts.seed, "Generator seed")->capture_default_str();
    synth->add_option("--count", sopts.count, "Number of images")->capture_default_str();
    synth->add_option("--size", sopts.size, "Image side in pixels")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            cli::RunConfig cfg = train_config.empty() ? cli::RunConfig{} : cli::load_run_config(train_config);
            if (train_seed) cfg.apply_seed(*train_seed);
            if (!train_out.empty()) cfg.out_dir = train_out;
            if (!train_manifest.empty()) cfg.manifest = train_manifest;
            if (train_iters) cfg.train.iterations = *train_iters;
            cli::cmd_train(cfg, std::cout);
        } else if (*predict) {
            popts.checkpoint = pred_ckpt;
            popts.out_dir = pred_out;
            popts.manifest = pred_manifest;
            for (const auto& p : pred_images) popts.images.emplace_back(p);
            cli::cmd_predict(popts, std::cout);
        } else if (*ev) {
            eopts.pred_dir = ev_pred;
            eopts.manifest = ev_manifest;
            eopts.out_dir = ev_out;
            eopts.thin = !ev_no_nms;
            cli::cmd_eval(eopts, std::cout);
        } else if (*inspect) {
            cli::cmd_inspect(insp_path, insp_h, insp_w, std::cout);
        } else if (*synth) {
            sopts.out_dir = synth_out;
            cli::cmd_synth(sopts, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return 0;
}
