#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "acpp/image.hpp"

namespace acpp {

// A lossy codec the pipeline can drive: either the built-in block-DCT
// degrader or an external encoder/decoder pair launched as child processes.
// Template placeholders: encode takes {input} {output} {qp}, decode takes
// {input} {output}, each exactly once. Commands are split on whitespace after
// substitution and launched directly (no shell).
struct CodecSpec {
    std::string name = "builtin";
    std::string encode_template;  // empty for builtin
    std::string decode_template;  // empty for builtin
    int qp_min = 0;
    int qp_max = 9;

    bool is_builtin() const { return name == "builtin"; }
    static CodecSpec builtin() { return CodecSpec{}; }
};

void validate(const CodecSpec& spec);

// Built-in degrader: 8x8 orthonormal block DCT per channel, uniform scalar
// quantization with a 10-step geometric ladder, entropy-coded to real bytes
// (DC prediction + zero-run/level codes, Exp-Golomb). Larger qp means a
// coarser step and fewer bits.
double builtin_step_size(int qp);
std::vector<uint8_t> builtin_encode(const ImageBuffer& img, int qp);
ImageBuffer builtin_decode(const std::vector<uint8_t>& bytes);

struct DegradedResult {
    ImageBuffer decoded;
    int64_t bits = 0;  // 8 x encoded size in bytes
};

// Encode+decode one image file at the given qp, leaving the encoded file in
// workdir. Errors from external commands carry the command line and a tail
// of its captured output.
DegradedResult run_codec(const std::string& image_path, int qp, const CodecSpec& spec,
                         const std::string& workdir);

// In-memory degradation hook for training-pair construction. The builtin
// implementation stays in memory; external codecs bounce through isolated
// temporary files in workdir.
class Degrader {
public:
    virtual ~Degrader() = default;
    virtual DegradedResult degrade(const ImageBuffer& img, int qp) = 0;
};

std::unique_ptr<Degrader> make_degrader(const CodecSpec& spec, const std::string& workdir);

double bits_per_pixel(int64_t bits, int64_t pixels);

// Per-image measurements over a qp window, in input order. Decoded images
// are not retained, only their size and fidelity.
struct RateTable {
    struct Obs {
        int64_t bits = 0;
        double psnr = 0;
    };
    struct Entry {
        std::string path;
        int64_t pixels = 0;
        std::map<int, Obs> by_qp;
    };
    std::vector<Entry> entries;
};

struct RatePlan {
    struct Row {
        std::string path;
        int qp = 0;
        int64_t bits = 0;
        int64_t pixels = 0;
    };
    std::vector<Row> rows;  // input order
    double target_bpp = 0;
    double achieved_bpp = 0;
    int64_t total_bits = 0;
    int64_t total_pixels = 0;
};

// Measure every image at every qp in [qp_lo, qp_hi] (file size and PSNR of
// the decode against the original).
RateTable measure_rate_table(const std::vector<std::string>& paths, const CodecSpec& spec,
                             int qp_lo, int qp_hi, const std::string& workdir);

// Choose per-image qps: start all images at the smallest qp whose uniform
// dataset bpp fits the target, then greedily upgrade individual images one
// step finer (best PSNR gain per added bit first) while the dataset stays
// under target. Assigned qps never differ by more than one step. Validates
// that measured bits are non-increasing in qp for every image.
RatePlan plan_from_table(const RateTable& table, double target_bpp);

RatePlan rate_target_plan(const std::vector<std::string>& paths, const CodecSpec& spec,
                          double target_bpp, int qp_lo, int qp_hi, const std::string& workdir);

// Plain-text plan: a summary header line, then one CSV row per image.
void write_plan(const RatePlan& plan, const std::string& path);

}  // namespace acpp
