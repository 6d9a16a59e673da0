#include "acpp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

namespace fs = std::filesystem;

namespace acpp {

std::vector<std::string> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest: " + path);
    const fs::path base = fs::path(path).parent_path();
    std::vector<std::string> out;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        const size_t end = line.find_last_not_of(" \t");
        const std::string entry = line.substr(start, end - start + 1);
        const fs::path p(entry);
        out.push_back(p.is_absolute() ? entry : (base / p).string());
    }
    if (out.empty()) throw IoError("manifest lists no images: " + path);
    return out;
}

DatasetSplit split_dataset(std::vector<std::string> paths, double ratio, uint64_t seed) {
    if (paths.size() < 2) throw ConfigError("dataset split needs at least two images");
    if (!(ratio > 0.0) || !(ratio < 1.0)) throw ConfigError("split ratio must lie in (0,1)");
    Rng rng(derive_seed(seed, "split"));
    shuffle(paths, rng);
    // Cut by rounding, but keep both sides non-empty.
    size_t n_train = size_t(std::llround(ratio * double(paths.size())));
    n_train = std::clamp(n_train, size_t(1), paths.size() - 1);
    DatasetSplit split;
    split.train.assign(paths.begin(), paths.begin() + ptrdiff_t(n_train));
    split.validation.assign(paths.begin() + ptrdiff_t(n_train), paths.end());
    return split;
}

ImageBuffer sample_patch(const ImageBuffer& img, int size, Rng& rng) {
    if (size < 1) throw ConfigError("patch size must be positive");
    if (img.height < size || img.width < size)
        throw ShapeError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                         " smaller than patch size " + std::to_string(size));
    const int r0 = int(rng.below(uint64_t(img.height - size + 1)));
    const int c0 = int(rng.below(uint64_t(img.width - size + 1)));
    ImageBuffer patch(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            for (int ch = 0; ch < 3; ++ch) patch.at(r, c, ch) = img.at(r0 + r, c0 + c, ch);
    return patch;
}

TrainingPair make_pair(const ImageBuffer& gt_patch, Degrader& degrader, int qp) {
    DegradedResult r = degrader.degrade(gt_patch, qp);
    if (r.decoded.height != gt_patch.height || r.decoded.width != gt_patch.width)
        throw CodecError("degraded patch size differs from source");
    return TrainingPair{std::move(r.decoded), gt_patch};
}

namespace {

void copy_into_batch(Tensor<float>& batch, int sample, const ImageBuffer& img) {
    const int h = img.height, w = img.width;
    const size_t plane = size_t(h) * w;
    float* base = batch.data.data() + size_t(sample) * 3 * plane;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                base[size_t(ch) * plane + size_t(r) * w + c] = img.at(r, c, ch);
}

}  // namespace

BatchProvider make_training_provider(std::vector<ImageBuffer> images, const ProviderConfig& cfg,
                                     Degrader& degrader) {
    if (images.empty()) throw ConfigError("training provider needs at least one image");
    if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");
    if (cfg.patch_sizes.empty()) throw ConfigError("at least one patch size is required");
    for (int p : cfg.patch_sizes)
        if (p < 1) throw ConfigError("patch sizes must be positive");

    // Keep only patch sizes that fit at least one image, with their eligible
    // image indices.
    auto shared = std::make_shared<std::vector<ImageBuffer>>(std::move(images));
    std::vector<int> sizes;
    std::vector<std::vector<size_t>> eligible;
    for (int p : cfg.patch_sizes) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < shared->size(); ++i)
            if ((*shared)[i].height >= p && (*shared)[i].width >= p) idx.push_back(i);
        if (!idx.empty()) {
            sizes.push_back(p);
            eligible.push_back(std::move(idx));
        }
    }
    if (sizes.empty()) throw ConfigError("no configured patch size fits any training image");

    auto degrader_ptr = &degrader;
    const ProviderConfig config = cfg;
    return [shared, sizes, eligible, config, degrader_ptr](uint64_t iteration) -> Batch {
        Rng rng(derive_seed(config.seed, "batch/" + std::to_string(iteration)));
        const size_t size_idx = size_t(rng.below(sizes.size()));
        const int p = sizes[size_idx];
        Batch batch{Tensor<float>(Shape{config.batch_size, 3, p, p}, 0.f),
                    Tensor<float>(Shape{config.batch_size, 3, p, p}, 0.f)};
        for (int s = 0; s < config.batch_size; ++s) {
            const auto& pool = eligible[size_idx];
            const ImageBuffer& img = (*shared)[pool[size_t(rng.below(pool.size()))]];
            ImageBuffer gt = sample_patch(img, p, rng);
            TrainingPair pair = make_pair(gt, *degrader_ptr, config.qp);
            const int rot = int(rng.below(4));
            if (rot != 0) {
                pair.degraded = rotate90(pair.degraded, rot);
                pair.ground_truth = rotate90(pair.ground_truth, rot);
            }
            copy_into_batch(batch.degraded, s, pair.degraded);
            copy_into_batch(batch.ground_truth, s, pair.ground_truth);
        }
        return batch;
    };
}

}  // namespace acpp
