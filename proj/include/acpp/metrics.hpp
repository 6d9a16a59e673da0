#pragma once

#include <vector>

#include "acpp/image.hpp"

namespace acpp {

// Knobs shared by the exact metric path and the differentiable loss path.
struct LossConfig {
    double lambda = 0.05;          // weight on the structural term of the combined loss
    int num_scales = 5;
    std::vector<double> scale_weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    double k1 = 0.01;
    double k2 = 0.03;
    int window_size = 11;
    double window_sigma = 1.5;
};

void validate(const LossConfig& cfg);

// 10*log10(peak^2 / MSE); +infinity when the images are identical.
// Summation is fixed left-to-right over interleaved components, in double.
double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak = 1.0);

double mse(const ImageBuffer& a, const ImageBuffer& b);

// size x size Gaussian kernel, normalized to sum to 1. Row-major.
std::vector<double> gaussian_window(int size, double sigma);

// Windowed single-scale statistics over one plane (usually one channel).
// luminance/contrast/structure are the spatial means of the classic
// per-window factors; mean_ssim is the spatial mean of the full SSIM map.
struct SsimComponents {
    double luminance = 0;
    double contrast = 0;
    double structure = 0;
    double mean_ssim = 0;
};

SsimComponents ssim_components(const std::vector<double>& a, const std::vector<double>& b,
                               int h, int w, const LossConfig& cfg, double peak = 1.0);

// Number of usable scales for an image: the largest M <= num_scales with
// window * 2^(M-1) <= min(h, w). Zero-feasible inputs throw.
int feasible_scales(int h, int w, const LossConfig& cfg);

// Scale weights for an M-scale evaluation: the first M defaults, renormalized
// to sum to 1 when M is less than the configured count.
std::vector<double> scale_weights_for(const LossConfig& cfg, int scales);

// Multi-scale structural similarity of one plane, valid-windowed, with 2x2
// mean-pool downsampling between scales (odd trailing row/column dropped).
double ms_ssim_plane(const std::vector<double>& a, const std::vector<double>& b,
                     int h, int w, const LossConfig& cfg, double peak = 1.0);

// Per-channel ms_ssim_plane, averaged over the three channels.
double ms_ssim(const ImageBuffer& a, const ImageBuffer& b, const LossConfig& cfg);

}  // namespace acpp
