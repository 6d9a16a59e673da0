#pragma once

#include <functional>
#include <string>
#include <vector>

#include "acpp/codec.hpp"
#include "acpp/common.hpp"
#include "acpp/image.hpp"
#include "acpp/tensor.hpp"

namespace acpp {

// Manifest: one image path per line; blank lines and lines starting with '#'
// are skipped. Relative paths resolve against the manifest's directory.
std::vector<std::string> read_manifest(const std::string& path);

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
};

// Deterministic shuffle-then-cut split. ratio is the training fraction;
// every image lands in exactly one side and both sides are non-empty.
DatasetSplit split_dataset(std::vector<std::string> paths, double ratio, uint64_t seed);

// Uniformly placed size x size crop; offsets drawn row-then-column.
ImageBuffer sample_patch(const ImageBuffer& img, int size, Rng& rng);

struct TrainingPair {
    ImageBuffer degraded;
    ImageBuffer ground_truth;
};

// Degrade one clean patch through the codec at qp.
TrainingPair make_pair(const ImageBuffer& gt_patch, Degrader& degrader, int qp);

struct Batch {
    Tensor<float> degraded;      // (N,3,P,P)
    Tensor<float> ground_truth;  // (N,3,P,P)
};

struct ProviderConfig {
    std::vector<int> patch_sizes = {64, 128, 256};
    int batch_size = 16;
    int qp = 4;
    uint64_t seed = 0;
};

// A pure function of the iteration number: batch(i) is the same tensor pair
// no matter when or how often it is called. Per iteration: one patch size
// (shared by the whole batch), then per sample an eligible image, a crop, a
// codec round trip, and one of four rotations applied to both sides.
using BatchProvider = std::function<Batch(uint64_t iteration)>;

// images are the decoded training images, kept in memory. Patch sizes that
// fit no image are dropped; if none fits any image, this throws.
BatchProvider make_training_provider(std::vector<ImageBuffer> images, const ProviderConfig& cfg,
                                     Degrader& degrader);

}  // namespace acpp
