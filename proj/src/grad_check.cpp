#include "acpp/grad_check.hpp"

#include <cmath>

namespace acpp {

namespace {

template <typename S>
S eval_loss(const LossBuilder<S>& builder) {
    Graph<S> g;
    auto loss = builder(g);
    const Tensor<S>& v = g.value(loss);
    if (v.numel() != 1) throw Error("gradient_check: builder must return a scalar loss");
    return v.data[0];
}

}  // namespace

template <typename S>
GradCheckReport<S> gradient_check(const LossBuilder<S>& builder, const std::vector<GradCheckLeaf<S>>& leaves,
                                  S step, S tolerance) {
    if (step <= S(0)) throw Error("gradient_check: step must be positive");

    const S f0 = eval_loss(builder);
    const S f0_again = eval_loss(builder);
    if (f0 != f0_again)
        throw Error("gradient_check: builder is not deterministic (" + std::to_string(double(f0)) + " vs " +
                    std::to_string(double(f0_again)) + ")");

    // One analytic pass.
    for (const auto& leaf : leaves) {
        leaf.tensor->requires_grad = true;
        leaf.tensor->zero_grad();
    }
    {
        Graph<S> g;
        auto loss = builder(g);
        g.backward(loss);
    }

    GradCheckReport<S> report;
    for (const auto& leaf : leaves) {
        typename GradCheckReport<S>::PerLeaf pl;
        pl.name = leaf.name;
        Tensor<S>& t = *leaf.tensor;
        t.ensure_grad();
        for (size_t i = 0; i < t.data.size(); ++i) {
            const S saved = t.data[i];
            t.data[i] = saved + step;
            const S fp = eval_loss(builder);
            t.data[i] = saved - step;
            const S fm = eval_loss(builder);
            t.data[i] = saved;

            const S central = (fp - fm) / (2 * step);
            const S fwd = (fp - f0) / step;
            const S bwd = (f0 - fm) / step;
            // One-sided slope disagreement marks a non-differentiable point.
            if (std::fabs(fwd - bwd) > S(0.25) * std::max({std::fabs(fwd), std::fabs(bwd), S(1e-30)})) {
                pl.skipped_kinks++;
                continue;
            }
            const S analytic = t.grad[i];
            const S denom = std::max({std::fabs(analytic), std::fabs(central), S(1e-6)});
            const S rel = std::fabs(analytic - central) / denom;
            pl.max_rel_err = std::max(pl.max_rel_err, rel);
            pl.checked++;
        }
        report.max_rel_err = std::max(report.max_rel_err, pl.max_rel_err);
        report.leaves.push_back(std::move(pl));
    }
    report.passed = report.max_rel_err < tolerance;
    return report;
}

template GradCheckReport<float> gradient_check(const LossBuilder<float>&, const std::vector<GradCheckLeaf<float>>&,
                                               float, float);
template GradCheckReport<double> gradient_check(const LossBuilder<double>&,
                                                const std::vector<GradCheckLeaf<double>>&, double, double);

}  // namespace acpp
