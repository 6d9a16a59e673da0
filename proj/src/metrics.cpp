#include "acpp/metrics.hpp"

#include <cmath>
#include <limits>

#include "acpp/common.hpp"

namespace acpp {

void validate(const LossConfig& cfg) {
    if (!(cfg.lambda >= 0)) throw ConfigError("loss lambda must be non-negative");
    if (cfg.num_scales < 1) throw ConfigError("num_scales must be at least 1");
    if (int(cfg.scale_weights.size()) != cfg.num_scales)
        throw ConfigError("scale_weights count must equal num_scales");
    for (double w : cfg.scale_weights)
        if (!(w > 0)) throw ConfigError("scale weights must be positive");
    if (!(cfg.k1 > 0) || !(cfg.k2 > 0)) throw ConfigError("k1 and k2 must be positive");
    if (cfg.window_size < 3 || cfg.window_size % 2 == 0)
        throw ConfigError("window_size must be odd and at least 3");
    if (!(cfg.window_sigma > 0)) throw ConfigError("window_sigma must be positive");
}

double mse(const ImageBuffer& a, const ImageBuffer& b) {
    if (a.height != b.height || a.width != b.width)
        throw ShapeError("psnr/mse operands differ in size");
    double acc = 0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = double(a.pixels[i]) - double(b.pixels[i]);
        acc += d * d;
    }
    return acc / double(a.pixels.size());
}

double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak) {
    const double m = mse(a, b);
    if (m == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

namespace {

std::vector<double> gaussian_1d(int size, double sigma) {
    std::vector<double> g(size_t(size), 0.0);
    const double center = (size - 1) / 2.0;
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        const double d = i - center;
        g[size_t(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += g[size_t(i)];
    }
    for (double& v : g) v /= sum;
    return g;
}

// Valid-mode separable filtering: horizontal then vertical pass with the
// normalized 1-D kernel, fixed left-to-right accumulation per tap.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& g1) {
    const int k = int(g1.size());
    const int ow = w - k + 1, oh = h - k + 1;
    std::vector<double> tmp(size_t(h) * ow);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < ow; ++c) {
            double acc = 0;
            for (int t = 0; t < k; ++t) acc += g1[size_t(t)] * src[size_t(r) * w + c + t];
            tmp[size_t(r) * ow + c] = acc;
        }
    std::vector<double> out(size_t(oh) * ow);
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
            double acc = 0;
            for (int t = 0; t < k; ++t) acc += g1[size_t(t)] * tmp[size_t(r + t) * ow + c];
            out[size_t(r) * ow + c] = acc;
        }
    return out;
}

struct PlaneStats {
    std::vector<double> mu1, mu2, s11, s22, s12;  // per valid window
    int h = 0, w = 0;                             // valid-map extents
};

PlaneStats window_stats(const std::vector<double>& a, const std::vector<double>& b,
                        int h, int w, const std::vector<double>& g1) {
    const int k = int(g1.size());
    if (h < k || w < k) throw ShapeError("plane smaller than SSIM window");
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    PlaneStats st;
    st.h = h - k + 1;
    st.w = w - k + 1;
    st.mu1 = filter_valid(a, h, w, g1);
    st.mu2 = filter_valid(b, h, w, g1);
    st.s11 = filter_valid(aa, h, w, g1);
    st.s22 = filter_valid(bb, h, w, g1);
    st.s12 = filter_valid(ab, h, w, g1);
    for (size_t i = 0; i < st.mu1.size(); ++i) {
        st.s11[i] -= st.mu1[i] * st.mu1[i];
        st.s22[i] -= st.mu2[i] * st.mu2[i];
        st.s12[i] -= st.mu1[i] * st.mu2[i];
    }
    return st;
}

double mean_of(const std::vector<double>& v) {
    double acc = 0;
    for (double x : v) acc += x;
    return acc / double(v.size());
}

std::vector<double> downsample2(const std::vector<double>& src, int h, int w, int& oh, int& ow) {
    oh = h / 2;
    ow = w / 2;
    std::vector<double> out(size_t(oh) * ow);
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
            const size_t base = size_t(2 * r) * w + size_t(2 * c);
            out[size_t(r) * ow + c] =
                (src[base] + src[base + 1] + src[base + w] + src[base + w + 1]) * 0.25;
        }
    return out;
}

}  // namespace

std::vector<double> gaussian_window(int size, double sigma) {
    if (size < 1 || size % 2 == 0) throw ConfigError("gaussian window size must be odd and positive");
    if (!(sigma > 0)) throw ConfigError("gaussian window sigma must be positive");
    const std::vector<double> g1 = gaussian_1d(size, sigma);
    std::vector<double> g2(size_t(size) * size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) g2[size_t(r) * size + c] = g1[size_t(r)] * g1[size_t(c)];
    return g2;
}

SsimComponents ssim_components(const std::vector<double>& a, const std::vector<double>& b,
                               int h, int w, const LossConfig& cfg, double peak) {
    if (a.size() != size_t(h) * w || b.size() != a.size())
        throw ShapeError("ssim plane size mismatch");
    const double c1 = (cfg.k1 * peak) * (cfg.k1 * peak);
    const double c2 = (cfg.k2 * peak) * (cfg.k2 * peak);
    const double c3 = c2 / 2.0;
    const std::vector<double> g1 = gaussian_1d(cfg.window_size, cfg.window_sigma);
    const PlaneStats st = window_stats(a, b, h, w, g1);

    double lsum = 0, csum = 0, ssum = 0, ssimsum = 0;
    for (size_t i = 0; i < st.mu1.size(); ++i) {
        const double mu1 = st.mu1[i], mu2 = st.mu2[i];
        const double v1 = std::max(st.s11[i], 0.0), v2 = std::max(st.s22[i], 0.0);
        const double sd1 = std::sqrt(v1), sd2 = std::sqrt(v2);
        const double l = (2.0 * (mu1 * mu2) + c1) / ((mu1 * mu1 + mu2 * mu2) + c1);
        lsum += l;
        csum += (2.0 * sd1 * sd2 + c2) / ((v1 + v2) + c2);
        ssum += (st.s12[i] + c3) / (sd1 * sd2 + c3);
        // Full map via the contrast*structure contraction (c3 = c2/2), which
        // avoids the square roots and keeps identical inputs at exactly 1.
        ssimsum += l * (2.0 * st.s12[i] + c2) / ((st.s11[i] + st.s22[i]) + c2);
    }
    const double n = double(st.mu1.size());
    return SsimComponents{lsum / n, csum / n, ssum / n, ssimsum / n};
}

int feasible_scales(int h, int w, const LossConfig& cfg) {
    const int side = std::min(h, w);
    int m = 0;
    for (int j = 1; j <= cfg.num_scales; ++j) {
        if (int64_t(cfg.window_size) << (j - 1) <= side) m = j;
        else break;
    }
    if (m == 0) throw ShapeError("image smaller than one SSIM window");
    return m;
}

std::vector<double> scale_weights_for(const LossConfig& cfg, int scales) {
    if (scales < 1 || scales > cfg.num_scales) throw ConfigError("bad scale count");
    std::vector<double> w(cfg.scale_weights.begin(), cfg.scale_weights.begin() + scales);
    if (scales < cfg.num_scales) {
        double sum = 0;
        for (double x : w) sum += x;
        for (double& x : w) x /= sum;
    }
    return w;
}

double ms_ssim_plane(const std::vector<double>& a, const std::vector<double>& b,
                     int h, int w, const LossConfig& cfg, double peak) {
    const double c1 = (cfg.k1 * peak) * (cfg.k1 * peak);
    const double c2 = (cfg.k2 * peak) * (cfg.k2 * peak);
    const std::vector<double> g1 = gaussian_1d(cfg.window_size, cfg.window_sigma);
    const int m = feasible_scales(h, w, cfg);
    const std::vector<double> weights = scale_weights_for(cfg, m);

    std::vector<double> ca = a, cb = b;
    int ch = h, cw = w;
    double result = 1.0;
    for (int j = 0; j < m; ++j) {
        const PlaneStats st = window_stats(ca, cb, ch, cw, g1);
        std::vector<double> cs(st.mu1.size());
        for (size_t i = 0; i < cs.size(); ++i)
            cs[i] = (2.0 * st.s12[i] + c2) / ((st.s11[i] + st.s22[i]) + c2);
        const double cs_mean = std::max(mean_of(cs), 0.0);
        result *= std::pow(cs_mean, weights[size_t(j)]);
        if (j == m - 1) {
            std::vector<double> l(st.mu1.size());
            for (size_t i = 0; i < l.size(); ++i) {
                const double mu1 = st.mu1[i], mu2 = st.mu2[i];
                l[i] = (2.0 * (mu1 * mu2) + c1) / ((mu1 * mu1 + mu2 * mu2) + c1);
            }
            result *= std::pow(std::max(mean_of(l), 0.0), weights[size_t(j)]);
        } else {
            int nh = 0, nw = 0;
            ca = downsample2(ca, ch, cw, nh, nw);
            cb = downsample2(cb, ch, cw, nh, nw);
            ch = nh;
            cw = nw;
        }
    }
    return result;
}

double ms_ssim(const ImageBuffer& a, const ImageBuffer& b, const LossConfig& cfg) {
    if (a.height != b.height || a.width != b.width)
        throw ShapeError("ms_ssim operands differ in size");
    validate(cfg);
    const size_t n = size_t(a.height) * a.width;
    std::vector<double> pa(n), pb(n);
    double acc = 0;
    for (int ch = 0; ch < 3; ++ch) {
        for (size_t i = 0; i < n; ++i) {
            pa[i] = double(a.pixels[i * 3 + size_t(ch)]);
            pb[i] = double(b.pixels[i * 3 + size_t(ch)]);
        }
        acc += ms_ssim_plane(pa, pb, a.height, a.width, cfg);
    }
    return acc / 3.0;
}

}  // namespace acpp
