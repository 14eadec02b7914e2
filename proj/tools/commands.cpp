#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "bdcn/checkpoint.hpp"
#include "bdcn/data.hpp"
#include "bdcn/errors.hpp"
#include "bdcn/trainer.hpp"

namespace bdcn::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void save(const Network& net, int iterations, const fs::path& path) {
    Checkpoint ckpt = net.to_checkpoint();
    ckpt.metadata.emplace_back("train.iterations", std::to_string(iterations));
    write_checkpoint(path, ckpt);
}

void emit_map(const fs::path& dir, const std::string& stem, const std::string& id, const EdgeProbMap& map,
              std::vector<fs::path>& written) {
    const fs::path png = dir / (stem + ".png");
    write_image(png, to_image8(map));
    write_prob_dump(dir / (stem + ".bin"), map, id);
    written.push_back(png);
}

bool is_config_path(const fs::path& p) {
    const std::string e = p.extension().string();
    return e == ".ini" || e == ".cfg" || e == ".conf";
}

} // namespace

fs::path cmd_train(const RunConfig& config, std::ostream& log) {
    if (config.manifest.empty()) throw UsageError("train: no dataset manifest configured");
    const auto entries = read_manifest(config.manifest);
    if (entries.empty()) throw UsageError("train: manifest " + config.manifest.string() + " lists no samples");
    std::vector<Sample> samples;
    samples.reserve(entries.size());
    for (const auto& e : entries) samples.push_back(load_sample(e.image, e.gts, config.gamma));

    ensure_dir(config.out_dir);
    write_text(config.out_dir / "config.ini", format_run_config(config));

    Network net(config.net);
    Trainer trainer(net, config.train);
    std::ofstream tsv(config.out_dir / "train.log", std::ios::trunc);
    if (!tsv) throw IoError("cannot open " + (config.out_dir / "train.log").string());
    const char* header = "iter\ttotal\tside\tfuse\tlr";
    tsv << header << '\n';
    log << header << '\n';

    for (int i = 0; i < config.train.iterations; ++i) {
        const IterationLog it = trainer.step(samples);
        const std::string line = format_log_line(it);
        tsv << line << '\n';
        log << line << '\n';
        if (config.checkpoint_interval > 0 && (i + 1) % config.checkpoint_interval == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_%06d.bin", i + 1);
            save(net, i + 1, config.out_dir / name);
        }
    }
    const fs::path final_path = config.out_dir / "final.bin";
    save(net, config.train.iterations, final_path);
    log << "wrote " << final_path.string() << '\n';
    return final_path;
}

std::vector<fs::path> cmd_predict(const PredictOptions& opts, std::ostream& log) {
    if (opts.scales.empty()) throw UsageError("predict: at least one scale is required");
    for (double s : opts.scales) {
        if (!(s > 0.0)) throw UsageError("predict: scales must be positive");
    }
    std::vector<fs::path> images = opts.images;
    if (!opts.manifest.empty()) {
        for (const auto& e : read_manifest(opts.manifest)) images.push_back(e.image);
    }
    if (images.empty()) throw UsageError("predict: no input images");

    const Network net = Network::from_checkpoint(read_checkpoint(opts.checkpoint));
    ensure_dir(opts.out_dir);
    std::vector<fs::path> written;
    const bool single = opts.scales.size() == 1 && opts.scales[0] == 1.0;
    for (const auto& path : images) {
        const std::string id = path.stem().string();
        const Tensor image = image_to_tensor(read_image(path));
        NoGradGuard no_grad;
        EdgeProbMap fused;
        if (single || opts.emit_side_maps) {
            const BdcnOutputs out = net.forward(image);
            if (single) fused = plane_of(out.fused);
            if (opts.emit_side_maps) {
                for (std::size_t s = 0; s < out.num_blocks(); ++s) {
                    const std::string n = std::to_string(s + 1);
                    emit_map(opts.out_dir, id + "_s2d_" + n, id, plane_of(out.side_s2d[s]), written);
                    emit_map(opts.out_dir, id + "_d2s_" + n, id, plane_of(out.side_d2s[s]), written);
                }
            }
        }
        if (!single) fused = predict_multiscale(net, image, opts.scales);
        emit_map(opts.out_dir, id + "_fused", id, fused, written);
        log << id << '\n';
    }
    return written;
}

eval::EvalSummary cmd_eval(const EvalOptions& opts, std::ostream& out) {
    const auto entries = read_manifest(opts.manifest);
    if (entries.empty()) throw UsageError("eval: manifest " + opts.manifest.string() + " lists no samples");

    std::vector<EdgeProbMap> probs;
    std::vector<Map2D> masks;
    std::vector<std::string> ids;
    std::vector<std::string> missing;
    for (const auto& e : entries) {
        const fs::path bin = opts.pred_dir / (e.id + "_fused.bin");
        const fs::path png = opts.pred_dir / (e.id + "_fused.png");
        const fs::path plain = opts.pred_dir / (e.id + ".png");
        EdgeProbMap p;
        if (fs::exists(bin)) p = read_prob_dump(bin);
        else if (fs::exists(png)) p = gray_to_map(read_image(png));
        else if (fs::exists(plain)) p = gray_to_map(read_image(plain));
        else {
            missing.push_back(e.id);
            continue;
        }
        Map2D mask = eval::gt_mask(load_consensus(e.gts));
        if (!p.same_dims(mask)) {
            throw EvaluationError("prediction for '" + e.id + "' is " + std::to_string(p.height) + "x" +
                                  std::to_string(p.width) + ", ground truth is " + std::to_string(mask.height) +
                                  "x" + std::to_string(mask.width));
        }
        probs.push_back(std::move(p));
        masks.push_back(std::move(mask));
        ids.push_back(e.id);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
        throw EvaluationError("missing predictions for " + std::to_string(missing.size()) + " id(s): " + list);
    }

    const eval::EvalSummary summary = eval::evaluate(probs, masks, opts.tolerance, opts.thin);
    const std::string text = eval::summary_text(summary);
    out << text;
    if (!opts.out_dir.empty()) {
        ensure_dir(opts.out_dir);
        write_text(opts.out_dir / "summary.txt", text);
        write_text(opts.out_dir / "pr.csv", eval::pr_csv(summary));
        write_text(opts.out_dir / "per_image.csv", eval::per_image_csv(summary, ids));
    }
    return summary;
}

std::string rate_schedule_line(const BdcnConfig& config) {
    const auto rates = config.rates();
    if (rates.empty()) return "-";
    std::string s;
    for (int r : rates) s += (s.empty() ? "" : ",") + std::to_string(r);
    return s;
}

void inspect_config(const BdcnConfig& config, std::int64_t height, std::int64_t width, std::ostream& out) {
    const Network net(config);
    out << "blocks " << config.num_blocks << ", sem branches " << config.sem_branches << ", dilation factor "
        << config.dilation_factor << ", input " << config.input_channels << "x" << height << "x" << width << '\n';
    out << "layer\tweight\toutput\tdilation\tparams\n";
    for (const auto& row : net.layer_table(height, width)) {
        out << row.name << '\t' << row.weight_shape.str() << '\t' << row.output_shape.str() << '\t' << row.dilation
            << '\t' << row.params << '\n';
    }
    out << "sem rates\t" << rate_schedule_line(config) << '\n';
    const auto rf = net.receptive_fields();
    for (std::size_t b = 0; b < rf.size(); ++b) out << "receptive field block" << b + 1 << '\t' << rf[b] << '\n';
    const std::int64_t total = net.num_parameters();
    char mega[32];
    std::snprintf(mega, sizeof(mega), "%.2fM", static_cast<double>(total) / 1e6);
    out << "total params\t" << total << " (" << mega << ")\n";
}

void cmd_inspect(const fs::path& input, std::int64_t height, std::int64_t width, std::ostream& out) {
    if (is_config_path(input)) {
        inspect_config(load_run_config(input).net, height, width, out);
        return;
    }
    const Checkpoint ckpt = read_checkpoint(input);
    const Network net = Network::from_checkpoint(ckpt);
    out << "checkpoint " << input.string();
    if (const auto* it = ckpt.find_meta("train.iterations")) out << " (" << *it << " iterations)";
    out << '\n';
    for (const auto& [k, v] : net.config().to_metadata()) out << k << " = " << v << '\n';
    inspect_config(net.config(), height, width, out);
}

void cmd_synth(const SynthOptions& opts, std::ostream& log) {
    const auto samples = synth_shapes(opts.seed, opts.count, opts.size);
    write_dataset(opts.out_dir, samples);
    ensure_dir(opts.out_dir / "gt_small");
    ensure_dir(opts.out_dir / "gt_large");
    for (const auto& s : samples) {
        write_image(opts.out_dir / "gt_small" / (s.sample.id + ".png"), to_image8(s.gt_small));
        write_image(opts.out_dir / "gt_large" / (s.sample.id + ".png"), to_image8(s.gt_large));
    }
    log << "wrote " << samples.size() << " samples to " << opts.out_dir.string() << '\n';
}

EdgeProbMap read_prob_dump(const fs::path& path) {
    const Checkpoint c = read_checkpoint(path);
    const NamedTensor* rec = c.find_record("prob");
    if (!rec) throw IntegrityError(path.string() + ": no 'prob' record");
    const Shape& s = rec->tensor.shape();
    if (s.n != 1 || s.c != 1) throw IntegrityError(path.string() + ": 'prob' must be a single plane");
    return plane_of(rec->tensor);
}

void write_prob_dump(const fs::path& path, const EdgeProbMap& map, const std::string& id) {
    Checkpoint c;
    c.metadata.emplace_back("id", id);
    c.records.push_back({"prob", to_tensor(map)});
    write_checkpoint(path, c);
}

} // namespace bdcn::cli
