#pragma once

#include <string>
#include <vector>

#include "acpp/codec.hpp"
#include "acpp/metrics.hpp"
#include "acpp/model.hpp"
#include "acpp/trainer.hpp"

namespace acpp {

// Run configuration, parsed from an INI-style file. Sections and keys are a
// closed set: anything unrecognized is an error naming the line, so typos
// cannot silently fall back to defaults. The seed is mandatory; nothing in
// the pipeline ever seeds itself from the clock.
struct AppConfig {
    // [dataset]
    std::string manifest;        // clean images, one path per line (relative to the config file)
    std::string pairs_manifest;  // optional: "degraded,ground_truth" rows for eval (same anchoring)
    double split_ratio = 0.9;

    // [codec]
    CodecSpec codec;
    int qp = 4;  // operating point for training pairs and default eval

    // [model]
    ModelConfig model;

    // [train]
    uint64_t iterations = 2000;
    uint64_t switch_iteration = 10000;
    uint64_t validation_interval = 500;
    int batch_size = 16;
    std::vector<int> patch_sizes = {64, 128, 256};
    double lr = 1e-4;

    // [loss]
    LossConfig loss;

    // [rate]
    double target_bpp = 0.15;
    int rate_qp_lo = 0;
    int rate_qp_hi = 9;

    // [run]
    uint64_t seed = 0;
    bool seed_set = false;
    std::string output_dir = "out";
    bool ensemble = false;
};

AppConfig load_app_config(const std::string& path);

}  // namespace acpp
