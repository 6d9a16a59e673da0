#pragma once

#include <cmath>
#include <string>

#include "acpp/common.hpp"
#include "acpp/image.hpp"

namespace acpp::testutil {

// Procedural test image: smooth gradient base, a few low-frequency cosine
// plumes, and soft discs. Deterministic in (h, w, seed); values in [0,1].
inline ImageBuffer make_synthetic_image(int h, int w, uint64_t seed) {
    Rng rng(derive_seed(seed, "synthetic"));
    ImageBuffer img(h, w);
    const double gx = rng.uniform(0.2, 0.8), gy = rng.uniform(0.2, 0.8);
    double amp[3], fx[3], fy[3], ph[3];
    for (int i = 0; i < 3; ++i) {
        amp[i] = rng.uniform(0.05, 0.2);
        fx[i] = rng.uniform(1.0, 4.0);
        fy[i] = rng.uniform(1.0, 4.0);
        ph[i] = rng.uniform(0.0, 6.28);
    }
    struct Disc {
        double cr, cc, radius, strength;
    } discs[3];
    for (Disc& d : discs) {
        d.cr = rng.uniform(0.1, 0.9) * h;
        d.cc = rng.uniform(0.1, 0.9) * w;
        d.radius = rng.uniform(0.08, 0.22) * std::min(h, w);
        d.strength = rng.uniform(-0.3, 0.3);
    }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double u = double(c) / w, v = double(r) / h;
            double base = 0.35 + 0.3 * (gx * u + gy * v);
            for (const Disc& d : discs) {
                const double dist = std::hypot(r - d.cr, c - d.cc);
                base += d.strength / (1.0 + std::exp((dist - d.radius) * 0.5));
            }
            for (int ch = 0; ch < 3; ++ch) {
                const double wave =
                    amp[ch] * std::cos(6.28318 * (fx[ch] * u + fy[ch] * v) + ph[ch]);
                const double val = base + wave + 0.08 * ch;
                img.at(r, c, ch) = float(std::clamp(val, 0.0, 1.0));
            }
        }
    return img;
}

// Textured variant: plaid interference, sharp oriented edges, and soft discs
// over a gradient base. Unlike make_synthetic_image the AC energy is high, so
// a block-transform codec visibly damages it — yet every feature is smooth
// structure, not noise, so a denoiser can learn to undo the damage.
inline ImageBuffer make_textured_image(int h, int w, uint64_t seed) {
    Rng rng(derive_seed(seed, "textured"));
    ImageBuffer img(h, w);
    const double gx = rng.uniform(0.2, 0.8), gy = rng.uniform(0.2, 0.8);
    struct Plaid {
        double amp, fx, fy, ph;
    } plaids[4];
    for (Plaid& p : plaids) {
        p.amp = rng.uniform(0.04, 0.12);
        p.fx = rng.uniform(4.0, 22.0);
        p.fy = rng.uniform(4.0, 22.0);
        p.ph = rng.uniform(0.0, 6.28);
    }
    struct Edge {
        double nx, ny, off, strength, sharp;
    } edges[3];
    for (Edge& e : edges) {
        const double ang = rng.uniform(0.0, 6.28);
        e.nx = std::cos(ang);
        e.ny = std::sin(ang);
        e.off = rng.uniform(0.25, 0.75);
        e.strength = rng.uniform(-0.25, 0.25);
        e.sharp = rng.uniform(1.5, 4.0);
    }
    struct Disc {
        double cr, cc, radius, strength;
    } discs[2];
    for (Disc& d : discs) {
        d.cr = rng.uniform(0.1, 0.9) * h;
        d.cc = rng.uniform(0.1, 0.9) * w;
        d.radius = rng.uniform(0.08, 0.2) * std::min(h, w);
        d.strength = rng.uniform(-0.25, 0.25);
    }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double u = double(c) / w, v = double(r) / h;
            double base = 0.4 + 0.25 * (gx * u + gy * v);
            for (const Edge& e : edges) {
                const double t = (e.nx * u + e.ny * v - e.off) * std::min(h, w) * e.sharp;
                base += e.strength / (1.0 + std::exp(-t));
            }
            for (const Disc& d : discs) {
                const double dist = std::hypot(r - d.cr, c - d.cc);
                base += d.strength / (1.0 + std::exp((dist - d.radius) * 1.5));
            }
            double tex = 0.0;
            for (const Plaid& p : plaids)
                tex += p.amp * std::cos(6.28318 * (p.fx * u + p.fy * v) + p.ph);
            for (int ch = 0; ch < 3; ++ch) {
                const double val = base + tex * (0.7 + 0.15 * ch) + 0.05 * ch;
                img.at(r, c, ch) = float(std::clamp(val, 0.0, 1.0));
            }
        }
    return img;
}

inline std::string temp_dir(const std::string& tag) {
    const std::string dir = "acpp_test_" + tag;
    return dir;
}

}  // namespace acpp::testutil
