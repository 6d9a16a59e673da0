#pragma once

#include <vector>

#include "acpp/tensor.hpp"

namespace acpp {

enum class PadMode { zero, reflect };
enum class ReduceKind { mean, max };

enum class Op {
    leaf,
    constant,
    conv2d,
    relu,
    sigmoid,
    global_avg_pool,
    channel_mean,
    channel_max,
    add,
    sub,
    mul,
    div,
    scale,
    pow_scalar,
    abs,
    concat_channels,
    avg_pool2,
    reshape,
    sum_all,
    mean_all,
};

// Define-by-run reverse-mode tape over dense tensors. Rebuilt per forward
// pass; node ids are topologically ordered by construction. Leaves reference
// caller-owned tensors and receive accumulated gradients on backward().
// A Graph and its leaf tensors belong to one worker at a time.
template <typename S>
class Graph {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    // Leaf referencing a caller-owned tensor; backward() accumulates into
    // t.grad when t.requires_grad. t must outlive the graph.
    Var leaf(Tensor<S>& t);

    // Graph-owned value that never receives a gradient (windows, targets).
    Var constant(Tensor<S> t);

    // input NCHW, weight OIKK (K odd), bias O. Output spatial extent
    // (H + 2*pad - K)/stride + 1.
    Var conv2d(Var input, Var weight, Var bias, int stride, PadMode mode, int pad_width);

    Var relu(Var x);
    Var sigmoid(Var x);

    // NCHW -> NC11, arithmetic mean over each plane.
    Var global_avg_pool(Var x);

    // NCHW -> N1HW. Max routes its gradient to the lowest winning channel.
    Var channel_reduce(Var x, ReduceKind kind);

    // Elementwise; b broadcastable to a along singleton axes only.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);

    // m*x + c with scalar constants.
    Var scale(Var x, S m, S c);

    // x^e for constant e; defined for positive x when e is fractional.
    Var pow_scalar(Var x, S e);

    Var abs(Var x);

    // Along the channel axis of NCHW inputs with equal N, H, W.
    Var concat_channels(Var a, Var b);

    // 2x2 mean pooling, stride 2; trailing odd row/column is dropped.
    Var avg_pool2(Var x);

    // Same data, new shape of equal element count.
    Var reshape(Var x, Shape s);

    Var sum_all(Var x);
    Var mean_all(Var x);

    const Tensor<S>& value(Var v) const;
    const std::vector<S>& grad(Var v) const;

    // loss must be a single scalar. Visits nodes once in reverse topological
    // order; accumulates into requires_grad leaves (repeat calls add up).
    void backward(Var loss);

    size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Op op = Op::leaf;
        int in0 = -1, in1 = -1, in2 = -1;
        Tensor<S> value;
        std::vector<S> grad;  // allocated lazily during backward
        Tensor<S>* leaf_target = nullptr;
        // per-op attributes
        int stride = 1;
        int pad = 0;
        PadMode pad_mode = PadMode::zero;
        S a = S(0);
        Shape saved_shape;
        std::vector<int32_t> arg_idx;  // channel_max winners
    };

    int push(Node n);
    Node& at(Var v);
    const Node& at(Var v) const;
    void ensure_grad(int id);
    void check_4d(const Tensor<S>& t, const char* who) const;

    std::vector<Node> nodes_;
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace acpp
