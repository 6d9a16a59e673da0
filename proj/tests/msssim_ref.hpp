#pragma once

// Independent reference implementation of SSIM / MS-SSIM used to check the
// library. Brute force on purpose: explicit 2-D Gaussian window per position,
// means first, then centered second moments in a second pass. No separable
// filtering, no variance-from-raw-moments shortcut.

#include <algorithm>
#include <cmath>
#include <vector>

#include "acpp/common.hpp"
#include "acpp/image.hpp"
#include "acpp/metrics.hpp"

namespace acpp::testref {

inline std::vector<double> ref_window2d(int k, double sigma) {
    std::vector<double> w(size_t(k) * k, 0.0);
    const double c = (k - 1) / 2.0;
    double total = 0;
    for (int r = 0; r < k; ++r)
        for (int q = 0; q < k; ++q) {
            const double d2 = (r - c) * (r - c) + (q - c) * (q - c);
            w[size_t(r) * k + q] = std::exp(-d2 / (2.0 * sigma * sigma));
            total += w[size_t(r) * k + q];
        }
    for (double& v : w) v /= total;
    return w;
}

struct RefScale {
    double cs_mean = 0;
    double l_mean = 0;
    double c_mean = 0;     // contrast factored out of cs
    double s_mean = 0;     // structure factored out of cs
    double ssim_mean = 0;  // windowed mean of l * cs
};

inline RefScale ref_scale_stats(const std::vector<double>& a, const std::vector<double>& b,
                                int h, int w, const LossConfig& cfg, double peak) {
    const int k = cfg.window_size;
    const std::vector<double> win = ref_window2d(k, cfg.window_sigma);
    const double c1 = (cfg.k1 * peak) * (cfg.k1 * peak);
    const double c2 = (cfg.k2 * peak) * (cfg.k2 * peak);
    RefScale out;
    int count = 0;
    for (int r = 0; r + k <= h; ++r)
        for (int q = 0; q + k <= w; ++q) {
            double mu1 = 0, mu2 = 0;
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) {
                    const double wt = win[size_t(i) * k + j];
                    mu1 += wt * a[size_t(r + i) * w + (q + j)];
                    mu2 += wt * b[size_t(r + i) * w + (q + j)];
                }
            double v1 = 0, v2 = 0, cov = 0;
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) {
                    const double wt = win[size_t(i) * k + j];
                    const double da = a[size_t(r + i) * w + (q + j)] - mu1;
                    const double db = b[size_t(r + i) * w + (q + j)] - mu2;
                    v1 += wt * da * da;
                    v2 += wt * db * db;
                    cov += wt * da * db;
                }
            const double l = (2.0 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1);
            const double cs = (2.0 * cov + c2) / (v1 + v2 + c2);
            const double c3 = c2 / 2.0;
            const double sd1 = std::sqrt(v1), sd2 = std::sqrt(v2);
            out.l_mean += l;
            out.cs_mean += cs;
            out.c_mean += (2.0 * sd1 * sd2 + c2) / (v1 + v2 + c2);
            out.s_mean += (cov + c3) / (sd1 * sd2 + c3);
            out.ssim_mean += l * cs;
            ++count;
        }
    out.l_mean /= count;
    out.cs_mean /= count;
    out.c_mean /= count;
    out.s_mean /= count;
    out.ssim_mean /= count;
    return out;
}

inline std::vector<double> ref_halve(const std::vector<double>& src, int h, int w, int& oh,
                                     int& ow) {
    oh = h / 2;
    ow = w / 2;
    std::vector<double> out;
    out.reserve(size_t(oh) * ow);
    for (int r = 0; r < oh; ++r)
        for (int q = 0; q < ow; ++q) {
            double s = 0;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) s += src[size_t(2 * r + i) * w + (2 * q + j)];
            out.push_back(s / 4.0);
        }
    return out;
}

inline double ref_ms_ssim_plane(std::vector<double> a, std::vector<double> b, int h, int w,
                                const LossConfig& cfg, double peak = 1.0) {
    int m = 0;
    for (int j = 1; j <= cfg.num_scales; ++j)
        if (cfg.window_size * (1 << (j - 1)) <= std::min(h, w)) m = j;
    if (m < 1) throw Error("reference ms-ssim: image smaller than one window");
    std::vector<double> weights(cfg.scale_weights.begin(), cfg.scale_weights.begin() + m);
    if (m < cfg.num_scales) {
        double sum = 0;
        for (double x : weights) sum += x;
        for (double& x : weights) x /= sum;
    }
    double result = 1.0;
    for (int j = 0; j < m; ++j) {
        const RefScale st = ref_scale_stats(a, b, h, w, cfg, peak);
        result *= std::pow(std::max(st.cs_mean, 0.0), weights[size_t(j)]);
        if (j == m - 1) {
            result *= std::pow(std::max(st.l_mean, 0.0), weights[size_t(j)]);
        } else {
            int nh = 0, nw = 0;
            a = ref_halve(a, h, w, nh, nw);
            b = ref_halve(b, h, w, nh, nw);
            h = nh;
            w = nw;
        }
    }
    return result;
}

inline double ref_ms_ssim(const ImageBuffer& a, const ImageBuffer& b, const LossConfig& cfg) {
    const size_t n = size_t(a.height) * a.width;
    double acc = 0;
    for (int ch = 0; ch < 3; ++ch) {
        std::vector<double> pa(n), pb(n);
        for (size_t i = 0; i < n; ++i) {
            pa[i] = double(a.pixels[i * 3 + size_t(ch)]);
            pb[i] = double(b.pixels[i * 3 + size_t(ch)]);
        }
        acc += ref_ms_ssim_plane(std::move(pa), std::move(pb), a.height, a.width, cfg);
    }
    return acc / 3.0;
}

}  // namespace acpp::testref
