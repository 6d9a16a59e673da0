#include "acpp/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "acpp/metrics.hpp"

namespace fs = std::filesystem;

namespace acpp {

void validate(const AdamConfig& cfg) {
    if (!(cfg.lr > 0)) throw ConfigError("learning rate must be positive");
    if (cfg.beta1 < 0 || cfg.beta1 >= 1) throw ConfigError("beta1 must lie in [0,1)");
    if (cfg.beta2 < 0 || cfg.beta2 >= 1) throw ConfigError("beta2 must lie in [0,1)");
    if (!(cfg.epsilon > 0)) throw ConfigError("epsilon must be positive");
}

AdamState make_adam_state(const ModelParams<float>& params, const AdamConfig& cfg) {
    validate(cfg);
    AdamState state;
    state.cfg = cfg;
    state.m.reserve(params.tensors.size());
    state.v.reserve(params.tensors.size());
    for (const auto& [name, t] : params.tensors) {
        state.m.emplace_back(size_t(t.numel()), 0.f);
        state.v.emplace_back(size_t(t.numel()), 0.f);
    }
    return state;
}

void adam_step(ModelParams<float>& params, AdamState& state) {
    if (state.m.size() != params.tensors.size())
        throw Error("adam state does not match parameter list");
    state.t += 1;
    const AdamConfig& c = state.cfg;
    const double mc = 1.0 - std::pow(c.beta1, double(state.t));
    const double vc = 1.0 - std::pow(c.beta2, double(state.t));
    const float b1 = float(c.beta1), b2 = float(c.beta2);
    for (size_t i = 0; i < params.tensors.size(); ++i) {
        auto& [name, t] = params.tensors[i];
        if (t.grad.size() != t.data.size())
            throw Error("no gradient accumulated for " + name);
        std::vector<float>& m = state.m[i];
        std::vector<float>& v = state.v[i];
        for (size_t j = 0; j < t.data.size(); ++j) {
            const float g = t.grad[j];
            if (!std::isfinite(g))
                throw Error("non-finite gradient in " + name + " at element " + std::to_string(j));
            m[j] = b1 * m[j] + (1.f - b1) * g;
            v[j] = b2 * v[j] + (1.f - b2) * g * g;
            const double mhat = double(m[j]) / mc;
            const double vhat = double(v[j]) / vc;
            t.data[j] -= float(c.lr * mhat / (std::sqrt(vhat) + c.epsilon));
        }
    }
}

void validate(const TrainConfig& cfg) {
    if (cfg.total_iterations < 1) throw ConfigError("total_iterations must be positive");
    if (cfg.phase_switch_iteration < 1)
        throw ConfigError("phase_switch_iteration must be positive");
    validate(cfg.adam);
    validate(cfg.loss);
}

namespace {

std::string fmt_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

struct ValScore {
    double psnr = 0, msssim = 0;
};

ValScore score_validation(ModelParams<float>& params, const std::vector<TrainingPair>& pairs,
                          const LossConfig& loss, bool ensemble) {
    ValScore score;
    for (const TrainingPair& pair : pairs) {
        const ImageBuffer out = ensemble ? self_ensemble_infer(params, pair.degraded)
                                         : run_model(params, pair.degraded);
        score.psnr += psnr(out, pair.ground_truth);
        score.msssim += ms_ssim(out, pair.ground_truth, loss);
    }
    score.psnr /= double(pairs.size());
    score.msssim /= double(pairs.size());
    return score;
}

void save_checkpoint_to(const ModelParams<float>& params, const std::string& dir,
                        const std::string& name) {
    fs::create_directories(dir);
    save_checkpoint(params, (fs::path(dir) / name).string());
}

}  // namespace

void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write history: " + path);
    f << "iteration,phase,loss,val_psnr,val_msssim\n";
    for (const HistoryRow& row : history) {
        f << row.iteration << ',' << phase_name(row.phase) << ',' << fmt_double(row.loss) << ',';
        if (row.has_validation)
            f << fmt_double(row.val_psnr) << ',' << fmt_double(row.val_msssim);
        else
            f << ',';
        f << '\n';
    }
    f.flush();
    if (!f) throw IoError("short write: " + path);
}

TrainResult train(ModelParams<float>& params, const BatchProvider& provider,
                  const std::vector<TrainingPair>& validation, const TrainConfig& cfg) {
    validate(cfg);
    validate(params.config);
    params.set_requires_grad(true);
    AdamState adam = make_adam_state(params, cfg.adam);

    TrainResult result;
    result.history.reserve(size_t(cfg.total_iterations));
    char namebuf[64];

    for (uint64_t it = 1; it <= cfg.total_iterations; ++it) {
        const LossPhase phase =
            it < cfg.phase_switch_iteration ? LossPhase::mae_only : LossPhase::combined;
        const Batch batch = provider(it);

        GraphF g;
        const auto x = g.constant(batch.degraded);
        const auto y = g.constant(batch.ground_truth);
        const auto pred = model_forward(g, params, x);
        const LossTerms<float> terms = training_loss(g, pred, y, cfg.loss, phase);

        HistoryRow row;
        row.iteration = it;
        row.phase = phase;
        row.loss = double(g.value(terms.total).data[0]);
        row.mae = double(g.value(terms.mae).data[0]);
        row.msssim = terms.has_msssim ? double(g.value(terms.msssim).data[0]) : 0.0;

        if (!std::isfinite(row.loss)) {
            std::string note;
            if (!cfg.checkpoint_dir.empty()) {
                save_checkpoint_to(params, cfg.checkpoint_dir, "diagnostic.ckpt");
                note = " (diagnostic checkpoint saved to " + cfg.checkpoint_dir + ")";
            }
            throw Error("non-finite loss at iteration " + std::to_string(it) + note);
        }

        for (auto& [name, t] : params.tensors) t.zero_grad();
        g.backward(terms.total);
        adam_step(params, adam);

        const bool validate_now =
            !validation.empty() &&
            ((cfg.validation_interval != 0 && it % cfg.validation_interval == 0) ||
             it == cfg.total_iterations);
        if (validate_now) {
            const ValScore s =
                score_validation(params, validation, cfg.loss, cfg.ensemble_validation);
            row.has_validation = true;
            row.val_psnr = s.psnr;
            row.val_msssim = s.msssim;
            if (!cfg.checkpoint_dir.empty()) {
                std::snprintf(namebuf, sizeof namebuf, "ckpt_%06llu.ckpt",
                              (unsigned long long)it);
                save_checkpoint_to(params, cfg.checkpoint_dir, namebuf);
            }
        }
        result.history.push_back(row);
    }

    if (!cfg.checkpoint_dir.empty()) save_checkpoint_to(params, cfg.checkpoint_dir, "final.ckpt");
    return result;
}

std::vector<EvalRow> evaluate(ModelParams<float>& params, const std::vector<TrainingPair>& pairs,
                              const std::vector<std::string>& names,
                              const std::vector<double>& bpps, const LossConfig& loss,
                              bool ensemble, bool quantize) {
    if (pairs.empty()) throw Error("evaluate needs at least one pair");
    if (names.size() != pairs.size()) throw Error("evaluate names do not match pairs");
    if (!bpps.empty() && bpps.size() != pairs.size())
        throw Error("evaluate bpps do not match pairs");

    std::vector<EvalRow> rows;
    EvalRow mean;
    mean.name = "mean";
    for (size_t i = 0; i < pairs.size(); ++i) {
        const TrainingPair& pair = pairs[i];
        ImageBuffer out = ensemble ? self_ensemble_infer(params, pair.degraded)
                                   : run_model(params, pair.degraded);
        if (quantize) out = quantize_u8(out);
        EvalRow row;
        row.name = names[i];
        row.bpp = bpps.empty() ? 0.0 : bpps[i];
        row.base_psnr = psnr(pair.degraded, pair.ground_truth);
        row.base_msssim = ms_ssim(pair.degraded, pair.ground_truth, loss);
        row.post_psnr = psnr(out, pair.ground_truth);
        row.post_msssim = ms_ssim(out, pair.ground_truth, loss);
        mean.bpp += row.bpp;
        mean.base_psnr += row.base_psnr;
        mean.base_msssim += row.base_msssim;
        mean.post_psnr += row.post_psnr;
        mean.post_msssim += row.post_msssim;
        rows.push_back(std::move(row));
    }
    const double n = double(pairs.size());
    mean.bpp /= n;
    mean.base_psnr /= n;
    mean.base_msssim /= n;
    mean.post_psnr /= n;
    mean.post_msssim /= n;
    rows.push_back(std::move(mean));
    return rows;
}

}  // namespace acpp
