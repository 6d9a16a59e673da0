#pragma once

#include "acpp/graph.hpp"
#include "acpp/metrics.hpp"

namespace acpp {

// Training proceeds in two phases: pixel loss only, then pixel loss plus the
// weighted structural term.
enum class LossPhase { mae_only, combined };

const char* phase_name(LossPhase phase);

// Mean absolute error over every element of the batch.
template <typename S>
typename Graph<S>::Var mae_term(Graph<S>& g, typename Graph<S>::Var pred,
                                typename Graph<S>::Var target);

// Multi-scale structural similarity of pred against target, built from graph
// ops so it backpropagates. Operands are (N,C,H,W); each plane is scored
// independently (valid Gaussian windowing, 2x2 mean-pool between scales) and
// the per-plane scores are averaged. Mirrors the exact metric path up to a
// 1e-6 floor on the per-scale factors that keeps pow gradients finite.
template <typename S>
typename Graph<S>::Var ms_ssim_term(Graph<S>& g, typename Graph<S>::Var pred,
                                    typename Graph<S>::Var target, const LossConfig& cfg);

template <typename S>
struct LossTerms {
    typename Graph<S>::Var total;
    typename Graph<S>::Var mae;
    typename Graph<S>::Var msssim;  // meaningful only when has_msssim
    bool has_msssim = false;
};

// total = mae                          (mae_only)
// total = mae + lambda * (1 - msssim)  (combined)
template <typename S>
LossTerms<S> training_loss(Graph<S>& g, typename Graph<S>::Var pred,
                           typename Graph<S>::Var target, const LossConfig& cfg,
                           LossPhase phase);

}  // namespace acpp
