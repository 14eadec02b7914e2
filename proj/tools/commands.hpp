#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bdcn/eval.hpp"
#include "bdcn/network.hpp"
#include "run_config.hpp"

namespace bdcn::cli {

/// Writes <out>/train.log (TSV with header), <out>/config.ini,
/// <out>/checkpoint_<iter>.bin every checkpoint_interval iterations and
/// <out>/final.bin. Log lines are echoed to `log`. Returns the final checkpoint path.
std::filesystem::path cmd_train(const RunConfig& config, std::ostream& log);

struct PredictOptions {
    std::filesystem::path checkpoint;
    std::vector<std::filesystem::path> images;
    std::filesystem::path manifest; // alternative to `images`
    std::vector<double> scales{1.0};
    bool emit_side_maps = false;
    std::filesystem::path out_dir = "pred";
};

/// Per image id: <id>_fused.png plus <id>_fused.bin, and with side maps
/// <id>_s2d_<s>.png/.bin and <id>_d2s_<s>.png/.bin for s = 1..S. Side maps
/// always come from the scale-1 pass. Returns the written raster paths.
std::vector<std::filesystem::path> cmd_predict(const PredictOptions& opts, std::ostream& log);

struct EvalOptions {
    std::filesystem::path pred_dir;
    std::filesystem::path manifest;
    double tolerance = eval::kBsdsTolerance;
    bool thin = true;
    std::filesystem::path out_dir; // empty: print only
};

/// Pairs predictions with manifest entries by id (<id>_fused.bin, then
/// <id>_fused.png, then <id>.png). Writes pr.csv, per_image.csv and
/// summary.txt into out_dir and prints the summary. Throws EvaluationError
/// listing every id without a prediction.
eval::EvalSummary cmd_eval(const EvalOptions& opts, std::ostream& out);

/// "4,8,12" for K=3, r0=4; "-" when K=0.
[[nodiscard]] std::string rate_schedule_line(const BdcnConfig& config);

/// Architecture report for a config file (.ini/.cfg/.conf) or a checkpoint
/// (anything else). Throws IntegrityError for a corrupt checkpoint.
void cmd_inspect(const std::filesystem::path& input, std::int64_t height, std::int64_t width, std::ostream& out);
void inspect_config(const BdcnConfig& config, std::int64_t height, std::int64_t width, std::ostream& out);

struct SynthOptions {
    std::uint64_t seed = 0;
    int count = 20;
    int size = 64;
    std::filesystem::path out_dir = "synth";
};

/// Generated dataset plus gt_small/ and gt_large/ per-regime rasters.
void cmd_synth(const SynthOptions& opts, std::ostream& log);

/// Loads a float dump written by cmd_predict.
[[nodiscard]] EdgeProbMap read_prob_dump(const std::filesystem::path& path);
void write_prob_dump(const std::filesystem::path& path, const EdgeProbMap& map, const std::string& id);

} // namespace bdcn::cli
