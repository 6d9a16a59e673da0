// Command-line front end: train / infer / eval / rateplan.
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "acpp/config.hpp"
#include "acpp/dataset.hpp"
#include "acpp/trainer.hpp"

namespace fs = std::filesystem;

namespace {

using namespace acpp;

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void require_seed(const AppConfig& cfg) {
    if (!cfg.seed_set)
        throw ConfigError("a seed is required: set [run] seed in the config or pass --seed");
}

void apply_overrides(AppConfig& cfg, const std::string& out_dir, bool seed_given, uint64_t seed) {
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (seed_given) {
        cfg.seed = seed;
        cfg.seed_set = true;
    }
}

std::vector<ImageBuffer> load_images(const std::vector<std::string>& paths) {
    std::vector<ImageBuffer> images;
    images.reserve(paths.size());
    for (const std::string& p : paths) images.push_back(load_image(p));
    return images;
}

// Degrade whole validation images once at the operating qp.
struct ValidationSet {
    std::vector<TrainingPair> pairs;
    std::vector<std::string> names;
    std::vector<double> bpps;
};

ValidationSet degrade_set(const std::vector<std::string>& paths, const CodecSpec& codec, int qp,
                          const std::string& workdir) {
    ValidationSet set;
    for (const std::string& path : paths) {
        DegradedResult r = run_codec(path, qp, codec, workdir);
        ImageBuffer original = load_image(path);
        set.bpps.push_back(bits_per_pixel(r.bits, original.pixel_count()));
        set.names.push_back(fs::path(path).filename().string());
        set.pairs.push_back(TrainingPair{std::move(r.decoded), std::move(original)});
    }
    return set;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, bool seed_given,
              uint64_t seed) {
    AppConfig cfg = load_app_config(config_path);
    apply_overrides(cfg, out_dir, seed_given, seed);
    require_seed(cfg);
    if (cfg.manifest.empty()) throw ConfigError("[dataset] manifest is required for training");

    const std::string tmp_dir = (fs::path(cfg.output_dir) / "tmp").string();
    fs::create_directories(cfg.output_dir);

    const std::vector<std::string> paths = read_manifest(cfg.manifest);
    const DatasetSplit split = split_dataset(paths, cfg.split_ratio, cfg.seed);
    std::fprintf(stderr, "dataset: %zu train / %zu validation images\n", split.train.size(),
                 split.validation.size());

    auto degrader = make_degrader(cfg.codec, tmp_dir);
    ProviderConfig pcfg;
    pcfg.patch_sizes = cfg.patch_sizes;
    pcfg.batch_size = cfg.batch_size;
    pcfg.qp = cfg.qp;
    pcfg.seed = derive_seed(cfg.seed, "data");
    const BatchProvider provider =
        make_training_provider(load_images(split.train), pcfg, *degrader);

    const ValidationSet val = degrade_set(split.validation, cfg.codec, cfg.qp, tmp_dir);

    ModelParams<float> params = init_model<float>(cfg.model, cfg.seed);
    TrainConfig tcfg;
    tcfg.total_iterations = cfg.iterations;
    tcfg.phase_switch_iteration = cfg.switch_iteration;
    tcfg.validation_interval = cfg.validation_interval;
    tcfg.checkpoint_dir = (fs::path(cfg.output_dir) / "checkpoints").string();
    tcfg.ensemble_validation = cfg.ensemble;
    tcfg.adam.lr = cfg.lr;
    tcfg.loss = cfg.loss;

    const TrainResult result = train(params, provider, val.pairs, tcfg);
    write_history_csv(result.history, (fs::path(cfg.output_dir) / "history.csv").string());

    for (auto it = result.history.rbegin(); it != result.history.rend(); ++it)
        if (it->has_validation) {
            std::fprintf(stderr, "final validation: psnr %s dB, ms-ssim %s\n",
                         fmt(it->val_psnr).c_str(), fmt(it->val_msssim).c_str());
            break;
        }
    std::printf("trained %llu iterations; checkpoints in %s\n",
                (unsigned long long)cfg.iterations, tcfg.checkpoint_dir.c_str());
    return 0;
}

int cmd_infer(const std::string& checkpoint, const std::vector<std::string>& inputs,
              const std::string& out_dir, bool ensemble) {
    ModelParams<float> params = load_checkpoint(checkpoint);
    fs::create_directories(out_dir);
    for (const std::string& in : inputs) {
        const ImageBuffer img = load_image(in);
        const ImageBuffer out =
            ensemble ? self_ensemble_infer(params, img) : run_model(params, img);
        const std::string out_path = (fs::path(out_dir) / fs::path(in).filename()).string();
        save_image(out, out_path);
        std::printf("%s -> %s\n", in.c_str(), out_path.c_str());
    }
    return 0;
}

ValidationSet load_pairs_manifest(const std::string& manifest) {
    std::ifstream f(manifest);
    if (!f) throw IoError("cannot open pairs manifest: " + manifest);
    const fs::path base = fs::path(manifest).parent_path();
    const auto resolve = [&base](const std::string& p) {
        return fs::path(p).is_absolute() ? p : (base / p).string();
    };
    ValidationSet set;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw ConfigError(manifest + ":" + std::to_string(lineno) +
                              ": expected 'degraded,ground_truth'");
        const std::string deg_path = resolve(line.substr(0, comma));
        const std::string gt_path = resolve(line.substr(comma + 1));
        TrainingPair pair{load_image(deg_path), load_image(gt_path)};
        // Coded artifacts are not available in pairs mode; report the
        // degraded file's own size.
        set.bpps.push_back(
            bits_per_pixel(int64_t(fs::file_size(deg_path)) * 8, pair.degraded.pixel_count()));
        set.names.push_back(fs::path(deg_path).filename().string());
        set.pairs.push_back(std::move(pair));
    }
    if (set.pairs.empty()) throw IoError("pairs manifest lists no pairs: " + manifest);
    return set;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& out_dir, bool seed_given, uint64_t seed, bool ensemble_flag) {
    AppConfig cfg = load_app_config(config_path);
    apply_overrides(cfg, out_dir, seed_given, seed);
    const bool ensemble = ensemble_flag || cfg.ensemble;
    fs::create_directories(cfg.output_dir);

    ValidationSet set;
    if (!cfg.pairs_manifest.empty()) {
        set = load_pairs_manifest(cfg.pairs_manifest);
    } else {
        if (cfg.manifest.empty())
            throw ConfigError("[dataset] manifest or pairs_manifest is required for eval");
        require_seed(cfg);
        const DatasetSplit split =
            split_dataset(read_manifest(cfg.manifest), cfg.split_ratio, cfg.seed);
        set = degrade_set(split.validation, cfg.codec, cfg.qp,
                          (fs::path(cfg.output_dir) / "tmp").string());
    }

    ModelParams<float> params = load_checkpoint(checkpoint);
    const std::vector<EvalRow> rows =
        evaluate(params, set.pairs, set.names, set.bpps, cfg.loss, ensemble, /*quantize=*/true);

    const std::string csv_path = (fs::path(cfg.output_dir) / "metrics.csv").string();
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write metrics: " + csv_path);
    csv << "image,variant,psnr_db,ms_ssim,bpp\n";
    std::printf("image,variant,psnr_db,ms_ssim,bpp\n");
    for (const EvalRow& row : rows) {
        for (int variant = 0; variant < 2; ++variant) {
            const char* tag = variant == 0 ? "baseline" : "post";
            const double p = variant == 0 ? row.base_psnr : row.post_psnr;
            const double m = variant == 0 ? row.base_msssim : row.post_msssim;
            const std::string text = row.name + "," + tag + "," + fmt(p) + "," + fmt(m) + "," +
                                     fmt(row.bpp) + "\n";
            csv << text;
            std::fputs(text.c_str(), stdout);
        }
    }
    csv.flush();
    if (!csv) throw IoError("short write: " + csv_path);
    return 0;
}

int cmd_rateplan(const std::string& config_path, const std::string& out_dir, bool seed_given,
                 uint64_t seed) {
    AppConfig cfg = load_app_config(config_path);
    apply_overrides(cfg, out_dir, seed_given, seed);
    if (cfg.manifest.empty()) throw ConfigError("[dataset] manifest is required for rateplan");
    fs::create_directories(cfg.output_dir);

    const std::vector<std::string> paths = read_manifest(cfg.manifest);
    const RatePlan plan =
        rate_target_plan(paths, cfg.codec, cfg.target_bpp, cfg.rate_qp_lo, cfg.rate_qp_hi,
                         (fs::path(cfg.output_dir) / "tmp").string());
    const std::string plan_path = (fs::path(cfg.output_dir) / "plan.txt").string();
    write_plan(plan, plan_path);
    std::printf("plan written to %s (target %s bpp, achieved %s bpp over %zu images)\n",
                plan_path.c_str(), fmt(plan.target_bpp).c_str(), fmt(plan.achieved_bpp).c_str(),
                plan.rows.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-based post-processing for compressed images"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, out_dir;
    std::vector<std::string> inputs;
    uint64_t seed = 0;
    bool ensemble = false;

    CLI::App* train_cmd = app.add_subcommand("train", "train a model from a config");
    train_cmd->add_option("--config", config_path, "config file")->required();
    train_cmd->add_option("--out", out_dir, "output directory (overrides config)");
    auto* train_seed = train_cmd->add_option("--seed", seed, "seed (overrides config)");

    CLI::App* infer_cmd = app.add_subcommand("infer", "restore images with a checkpoint");
    infer_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    infer_cmd->add_option("--input", inputs, "input image(s)")->required();
    infer_cmd->add_option("--out", out_dir, "output directory")->required();
    infer_cmd->add_flag("--ensemble", ensemble, "rotation self-ensemble");

    CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint");
    eval_cmd->add_option("--config", config_path, "config file")->required();
    eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--out", out_dir, "output directory (overrides config)");
    auto* eval_seed = eval_cmd->add_option("--seed", seed, "seed (overrides config)");
    eval_cmd->add_flag("--ensemble", ensemble, "rotation self-ensemble");

    CLI::App* rate_cmd = app.add_subcommand("rateplan", "plan per-image qps for a bpp target");
    rate_cmd->add_option("--config", config_path, "config file")->required();
    rate_cmd->add_option("--out", out_dir, "output directory (overrides config)");
    auto* rate_seed = rate_cmd->add_option("--seed", seed, "seed (overrides config)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(config_path, out_dir, !train_seed->empty(), seed);
        if (infer_cmd->parsed()) return cmd_infer(checkpoint, inputs, out_dir, ensemble);
        if (eval_cmd->parsed())
            return cmd_eval(config_path, checkpoint, out_dir, !eval_seed->empty(), seed, ensemble);
        if (rate_cmd->parsed()) return cmd_rateplan(config_path, out_dir, !rate_seed->empty(), seed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
