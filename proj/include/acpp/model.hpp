#pragma once

#include <string>
#include <utility>
#include <vector>

#include "acpp/graph.hpp"
#include "acpp/image.hpp"

namespace acpp {

// Residual restoration network: a 3x3 head lifts RGB into feature space,
// num_blocks residual blocks refine it (each: conv-relu-conv, channel
// attention, spatial attention, skip), a 3x3 tail projects back to RGB, and
// a global skip adds the input.
struct ModelConfig {
    int num_blocks = 30;
    int feature_channels = 64;
    int ca_reduction = 16;  // channel-attention bottleneck divisor
    int sa_kernel = 7;      // spatial-attention conv kernel (odd)
    bool global_skip = true;
};

void validate(const ModelConfig& cfg);

// Parameter tensor names and shapes in fixed creation order (head, blocks,
// tail). This order is the checkpoint manifest order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg);

int64_t parameter_count(const ModelConfig& cfg);

template <typename S>
struct ModelParams {
    ModelConfig config;
    uint64_t seed = 0;
    std::vector<std::pair<std::string, Tensor<S>>> tensors;  // layout order

    Tensor<S>& find(const std::string& name);
    void set_requires_grad(bool on);
};

// Weights drawn uniformly in +-1/sqrt(fan_in) from a stream derived from
// seed; biases zero. Identical (seed, config) gives identical parameters.
template <typename S>
ModelParams<S> init_model(const ModelConfig& cfg, uint64_t seed);

// Builds the forward computation on g. input is (N,3,H,W) with H,W at least
// sa_kernel. Parameter tensors are enrolled as leaves, so backward()
// accumulates into their grad fields when requires_grad is set.
template <typename S>
typename Graph<S>::Var model_forward(Graph<S>& g, ModelParams<S>& params,
                                     typename Graph<S>::Var input);

// Single forward pass on one image; output clamped to [0,1].
ImageBuffer run_model(ModelParams<float>& params, const ImageBuffer& input);

// Rotation self-ensemble: average the four 90-degree-rotation round trips
// pairwise ((r0+r1)+(r2+r3))/4, then clamp. An identity network returns the
// input bit-exactly.
ImageBuffer self_ensemble_infer(ModelParams<float>& params, const ImageBuffer& input);

// Binary checkpoint: magic, version, JSON header (config, seed, tensor
// manifest), then raw float32 data in manifest order. Round-trips bit-exactly.
void save_checkpoint(const ModelParams<float>& params, const std::string& path);
ModelParams<float> load_checkpoint(const std::string& path);

}  // namespace acpp
