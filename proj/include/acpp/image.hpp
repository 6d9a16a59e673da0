#pragma once

#include <string>
#include <vector>

#include "acpp/tensor.hpp"

namespace acpp {

// H x W x 3 interleaved RGB, components in [0,1]. The pixel-domain currency
// between codecs, the network, and the metrics.
struct ImageBuffer {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // size H*W*3, row-major, RGB interleaved

    static constexpr int channels = 3;

    ImageBuffer() = default;
    ImageBuffer(int h, int w, float fill = 0.f);

    float at(int r, int c, int ch) const { return pixels[(size_t(r) * width + c) * 3 + size_t(ch)]; }
    float& at(int r, int c, int ch) { return pixels[(size_t(r) * width + c) * 3 + size_t(ch)]; }
    int64_t pixel_count() const { return int64_t(height) * width; }
};

// Supported file formats: PNG (8-bit RGB) and PPM (P6, maxval 255).
// Samples map to [0,1] by /255 on load; saving rounds half away from zero.
ImageBuffer load_image(const std::string& path);
void save_image(const ImageBuffer& img, const std::string& path);

// The 8-bit sample for a unit-range component (clamp, scale, round half away
// from zero). Shared by the savers and the metric quantizer.
uint8_t to_u8(float v);

// Round-trips every component through the 8-bit grid without touching disk.
ImageBuffer quantize_u8(const ImageBuffer& img);

ImageBuffer clamp01(ImageBuffer img);

// Counter-clockwise 90-degree rotation, k times (k mod 4). Exact index
// permutation; same convention as rot90_nchw so the self-ensemble composes.
ImageBuffer rotate90(const ImageBuffer& img, int k);

// (1,3,H,W) planar tensor from interleaved pixels and back.
Tensor<float> image_to_tensor(const ImageBuffer& img);
ImageBuffer tensor_to_image(const Tensor<float>& t, bool clamp = false);

}  // namespace acpp
