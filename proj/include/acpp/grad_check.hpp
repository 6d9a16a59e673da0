#pragma once

#include <functional>
#include <string>
#include <vector>

#include "acpp/graph.hpp"

namespace acpp {

template <typename S>
struct GradCheckLeaf {
    std::string name;
    Tensor<S>* tensor = nullptr;
};

template <typename S>
struct GradCheckReport {
    struct PerLeaf {
        std::string name;
        S max_rel_err = 0;
        int64_t checked = 0;
        int64_t skipped_kinks = 0;
    };
    std::vector<PerLeaf> leaves;
    S max_rel_err = 0;
    bool passed = false;
};

// Builder rebuilds the forward graph from the current leaf contents and
// returns the scalar loss Var. It must be deterministic; the checker
// evaluates it twice up front and rejects value drift.
template <typename S>
using LossBuilder = std::function<typename Graph<S>::Var(Graph<S>&)>;

// Central-difference verification of the analytic gradients, one coordinate
// at a time. Coordinates whose one-sided slopes disagree by more than 25%
// sit on (or next to) a kink and are excluded from the comparison.
template <typename S>
GradCheckReport<S> gradient_check(const LossBuilder<S>& builder, const std::vector<GradCheckLeaf<S>>& leaves,
                                  S step, S tolerance);

}  // namespace acpp
