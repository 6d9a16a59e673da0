#include "acpp/losses.hpp"

#include <cmath>

#include "acpp/common.hpp"

namespace acpp {

const char* phase_name(LossPhase phase) {
    return phase == LossPhase::mae_only ? "mae" : "combined";
}

template <typename S>
typename Graph<S>::Var mae_term(Graph<S>& g, typename Graph<S>::Var pred,
                                typename Graph<S>::Var target) {
    return g.mean_all(g.abs(g.sub(pred, target)));
}

namespace {

// max(x, eps) built as relu(x - eps) + eps; keeps pow_scalar off zero where
// fractional exponents would blow up the backward pass.
template <typename S>
typename Graph<S>::Var floor_at(Graph<S>& g, typename Graph<S>::Var x, S eps) {
    return g.scale(g.relu(g.scale(x, S(1), -eps)), S(1), eps);
}

}  // namespace

template <typename S>
typename Graph<S>::Var ms_ssim_term(Graph<S>& g, typename Graph<S>::Var pred,
                                    typename Graph<S>::Var target, const LossConfig& cfg) {
    validate(cfg);
    const Shape in_shape = g.value(pred).shape;
    if (in_shape.size() != 4) throw ShapeError("ms_ssim_term expects (N,C,H,W)");
    if (g.value(target).shape != in_shape)
        throw ShapeError("ms_ssim_term operand shapes differ: " + shape_str(in_shape) + " vs " +
                         shape_str(g.value(target).shape));
    const int planes = in_shape[0] * in_shape[1];
    const int h = in_shape[2], w = in_shape[3];
    const int k = cfg.window_size;
    const int m = feasible_scales(h, w, cfg);
    const std::vector<double> weights = scale_weights_for(cfg, m);
    const double peak = 1.0;
    const S c1 = S((cfg.k1 * peak) * (cfg.k1 * peak));
    const S c2 = S((cfg.k2 * peak) * (cfg.k2 * peak));
    const S eps = S(1e-6);

    const std::vector<double> win2 = gaussian_window(k, cfg.window_sigma);
    Tensor<S> win_t(Shape{1, 1, k, k}, S(0));
    for (size_t i = 0; i < win2.size(); ++i) win_t.data[i] = S(win2[i]);
    const auto win = g.constant(std::move(win_t));
    const auto win_bias = g.constant(Tensor<S>(Shape{1}, S(0)));

    auto x = g.reshape(pred, Shape{planes, 1, h, w});
    auto y = g.reshape(target, Shape{planes, 1, h, w});

    typename Graph<S>::Var prod{};
    bool have_prod = false;
    for (int j = 0; j < m; ++j) {
        const auto mu1 = g.conv2d(x, win, win_bias, 1, PadMode::zero, 0);
        const auto mu2 = g.conv2d(y, win, win_bias, 1, PadMode::zero, 0);
        const auto s11 = g.sub(g.conv2d(g.mul(x, x), win, win_bias, 1, PadMode::zero, 0),
                               g.mul(mu1, mu1));
        const auto s22 = g.sub(g.conv2d(g.mul(y, y), win, win_bias, 1, PadMode::zero, 0),
                               g.mul(mu2, mu2));
        const auto s12 = g.sub(g.conv2d(g.mul(x, y), win, win_bias, 1, PadMode::zero, 0),
                               g.mul(mu1, mu2));
        // Per-window contrast*structure, averaged over the plane.
        const auto cs_map = g.div(g.scale(s12, S(2), c2), g.scale(g.add(s11, s22), S(1), c2));
        const auto cs = floor_at(g, g.global_avg_pool(cs_map), eps);
        auto term = g.pow_scalar(cs, S(weights[size_t(j)]));
        if (j == m - 1) {
            const auto l_map = g.div(g.scale(g.mul(mu1, mu2), S(2), c1),
                                     g.scale(g.add(g.mul(mu1, mu1), g.mul(mu2, mu2)), S(1), c1));
            const auto l = floor_at(g, g.global_avg_pool(l_map), eps);
            term = g.mul(term, g.pow_scalar(l, S(weights[size_t(j)])));
        } else {
            x = g.avg_pool2(x);
            y = g.avg_pool2(y);
        }
        prod = have_prod ? g.mul(prod, term) : term;
        have_prod = true;
    }
    return g.mean_all(prod);
}

template <typename S>
LossTerms<S> training_loss(Graph<S>& g, typename Graph<S>::Var pred,
                           typename Graph<S>::Var target, const LossConfig& cfg,
                           LossPhase phase) {
    LossTerms<S> terms;
    terms.mae = mae_term(g, pred, target);
    if (phase == LossPhase::mae_only) {
        terms.total = terms.mae;
        return terms;
    }
    terms.msssim = ms_ssim_term(g, pred, target, cfg);
    terms.has_msssim = true;
    // lambda * (1 - msssim) + mae
    terms.total = g.add(terms.mae, g.scale(terms.msssim, S(-cfg.lambda), S(cfg.lambda)));
    return terms;
}

template typename Graph<float>::Var mae_term<float>(Graph<float>&, Graph<float>::Var,
                                                    Graph<float>::Var);
template typename Graph<double>::Var mae_term<double>(Graph<double>&, Graph<double>::Var,
                                                      Graph<double>::Var);
template typename Graph<float>::Var ms_ssim_term<float>(Graph<float>&, Graph<float>::Var,
                                                        Graph<float>::Var, const LossConfig&);
template typename Graph<double>::Var ms_ssim_term<double>(Graph<double>&, Graph<double>::Var,
                                                          Graph<double>::Var, const LossConfig&);
template LossTerms<float> training_loss<float>(Graph<float>&, Graph<float>::Var,
                                               Graph<float>::Var, const LossConfig&, LossPhase);
template LossTerms<double> training_loss<double>(Graph<double>&, Graph<double>::Var,
                                                 Graph<double>::Var, const LossConfig&, LossPhase);

}  // namespace acpp
