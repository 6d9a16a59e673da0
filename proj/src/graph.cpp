#include "acpp/graph.hpp"

#include <cmath>
#include <cstring>

namespace acpp {

namespace {

// Striped dot product: fixed accumulator layout and combine order, so the
// result is identical on every run while still vectorizing.
template <typename S>
S dot_striped(const S* a, const S* b, int n) {
    S acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0, acc4 = 0, acc5 = 0, acc6 = 0, acc7 = 0;
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 += a[i] * b[i];
        acc1 += a[i + 1] * b[i + 1];
        acc2 += a[i + 2] * b[i + 2];
        acc3 += a[i + 3] * b[i + 3];
        acc4 += a[i + 4] * b[i + 4];
        acc5 += a[i + 5] * b[i + 5];
        acc6 += a[i + 6] * b[i + 6];
        acc7 += a[i + 7] * b[i + 7];
    }
    S tail = 0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((acc0 + acc1) + (acc2 + acc3)) + ((acc4 + acc5) + (acc6 + acc7)) + tail;
}

// Mirror index without edge duplication: -1 -> 1, H -> H-2.
inline int reflect_index(int t, int extent) {
    if (t < 0) return -t;
    if (t >= extent) return 2 * extent - 2 - t;
    return t;
}

// (N,C,H,W) -> (N,C,H+2p,W+2p) copy under the given border mode.
template <typename S>
std::vector<S> make_padded(const Tensor<S>& in, int pad, PadMode mode) {
    const int n = in.shape[0], c = in.shape[1], h = in.shape[2], w = in.shape[3];
    const int hp = h + 2 * pad, wp = w + 2 * pad;
    std::vector<S> out(size_t(n) * c * hp * wp, S(0));
    for (int in_ = 0; in_ < n; ++in_) {
        for (int ic = 0; ic < c; ++ic) {
            const S* src = in.data.data() + (size_t(in_) * c + ic) * h * w;
            S* dst = out.data() + (size_t(in_) * c + ic) * hp * wp;
            if (mode == PadMode::zero) {
                for (int r = 0; r < h; ++r)
                    std::memcpy(dst + size_t(r + pad) * wp + pad, src + size_t(r) * w, sizeof(S) * size_t(w));
            } else {
                for (int r = 0; r < hp; ++r) {
                    const S* srow = src + size_t(reflect_index(r - pad, h)) * w;
                    S* drow = dst + size_t(r) * wp;
                    for (int col = 0; col < wp; ++col) drow[col] = srow[reflect_index(col - pad, w)];
                }
            }
        }
    }
    return out;
}

// Fold a padded-plane gradient back onto the unpadded input gradient.
template <typename S>
void fold_padded_grad(const std::vector<S>& gpad, std::vector<S>& gin, const Shape& in_shape, int pad,
                      PadMode mode) {
    const int n = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3];
    const int hp = h + 2 * pad, wp = w + 2 * pad;
    for (int in_ = 0; in_ < n; ++in_) {
        for (int ic = 0; ic < c; ++ic) {
            const S* src = gpad.data() + (size_t(in_) * c + ic) * hp * wp;
            S* dst = gin.data() + (size_t(in_) * c + ic) * h * w;
            if (mode == PadMode::zero) {
                for (int r = 0; r < h; ++r) {
                    const S* srow = src + size_t(r + pad) * wp + pad;
                    S* drow = dst + size_t(r) * w;
                    for (int col = 0; col < w; ++col) drow[col] += srow[col];
                }
            } else {
                for (int r = 0; r < hp; ++r) {
                    S* drow = dst + size_t(reflect_index(r - pad, h)) * w;
                    const S* srow = src + size_t(r) * wp;
                    for (int col = 0; col < wp; ++col) drow[reflect_index(col - pad, w)] += srow[col];
                }
            }
        }
    }
}

}  // namespace

template <typename S>
int Graph<S>::push(Node n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

template <typename S>
typename Graph<S>::Node& Graph<S>::at(Var v) {
    if (!v.valid() || v.id >= int(nodes_.size())) throw Error("graph: invalid node handle");
    return nodes_[size_t(v.id)];
}

template <typename S>
const typename Graph<S>::Node& Graph<S>::at(Var v) const {
    if (!v.valid() || v.id >= int(nodes_.size())) throw Error("graph: invalid node handle");
    return nodes_[size_t(v.id)];
}

template <typename S>
void Graph<S>::ensure_grad(int id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.empty()) n.grad.assign(n.value.data.size(), S(0));
}

template <typename S>
void Graph<S>::check_4d(const Tensor<S>& t, const char* who) const {
    if (t.rank() != 4) throw ShapeError(std::string(who) + ": expected NCHW tensor, got " + shape_str(t.shape));
}

template <typename S>
typename Graph<S>::Var Graph<S>::leaf(Tensor<S>& t) {
    Node n;
    n.op = Op::leaf;
    n.value = t;  // copy: the graph's view stays frozen even if t is updated later
    n.leaf_target = &t;
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::constant(Tensor<S> t) {
    Node n;
    n.op = Op::constant;
    n.value = std::move(t);
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::conv2d(Var input, Var weight, Var bias, int stride, PadMode mode,
                                        int pad_width) {
    const Tensor<S>& x = at(input).value;
    const Tensor<S>& w = at(weight).value;
    const Tensor<S>& b = at(bias).value;
    check_4d(x, "conv2d input");
    check_4d(w, "conv2d weight");
    const int N = x.shape[0], I = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int O = w.shape[0], WI = w.shape[1], KH = w.shape[2], KW = w.shape[3];
    if (KH != KW) throw ShapeError("conv2d: kernel must be square, got " + shape_str(w.shape));
    const int K = KH;
    if (K % 2 == 0) throw Error("conv2d: even kernel size " + std::to_string(K) + " unsupported");
    if (WI != I)
        throw ShapeError("conv2d: input has " + std::to_string(I) + " channels, weight expects " +
                         std::to_string(WI));
    if (b.rank() != 1 || b.shape[0] != O)
        throw ShapeError("conv2d: bias shape " + shape_str(b.shape) + " does not match " +
                         std::to_string(O) + " output channels");
    if (stride < 1) throw Error("conv2d: stride must be positive");
    if (pad_width < 0) throw Error("conv2d: negative padding");
    if (mode == PadMode::reflect && pad_width > std::min(H, W) - 1)
        throw ShapeError("conv2d: reflect padding wider than the image");
    const int HP = H + 2 * pad_width, WP = W + 2 * pad_width;
    if (HP < K || WP < K)
        throw ShapeError("conv2d: padded extent " + std::to_string(HP) + "x" + std::to_string(WP) +
                         " smaller than kernel " + std::to_string(K));
    const int OH = (HP - K) / stride + 1;
    const int OW = (WP - K) / stride + 1;

    std::vector<S> padded = make_padded(x, pad_width, mode);
    Node n;
    n.op = Op::conv2d;
    n.in0 = input.id;
    n.in1 = weight.id;
    n.in2 = bias.id;
    n.stride = stride;
    n.pad = pad_width;
    n.pad_mode = mode;
    n.value = Tensor<S>({N, O, OH, OW}, S(0));
    S* out = n.value.data.data();
    for (int in_ = 0; in_ < N; ++in_) {
        for (int o = 0; o < O; ++o) {
            S* oplane = out + (size_t(in_) * O + o) * OH * OW;
            const S bv = b.data[size_t(o)];
            for (int64_t t = 0; t < int64_t(OH) * OW; ++t) oplane[t] = bv;
            for (int i = 0; i < I; ++i) {
                const S* pplane = padded.data() + (size_t(in_) * I + i) * HP * WP;
                const S* wk = w.data.data() + (size_t(o) * I + i) * K * K;
                for (int kh = 0; kh < K; ++kh) {
                    for (int kw = 0; kw < K; ++kw) {
                        const S wv = wk[size_t(kh) * K + kw];
                        for (int oh = 0; oh < OH; ++oh) {
                            const S* prow = pplane + size_t(oh * stride + kh) * WP + kw;
                            S* orow = oplane + size_t(oh) * OW;
                            if (stride == 1) {
                                for (int ow = 0; ow < OW; ++ow) orow[ow] += wv * prow[ow];
                            } else {
                                for (int ow = 0; ow < OW; ++ow) orow[ow] += wv * prow[size_t(ow) * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::relu(Var x) {
    Node n;
    n.op = Op::relu;
    n.in0 = x.id;
    n.value = at(x).value;
    for (S& v : n.value.data) v = v > S(0) ? v : S(0);
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::sigmoid(Var x) {
    Node n;
    n.op = Op::sigmoid;
    n.in0 = x.id;
    n.value = at(x).value;
    for (S& v : n.value.data) v = S(1) / (S(1) + std::exp(-v));
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::global_avg_pool(Var x) {
    const Tensor<S>& xv = at(x).value;
    check_4d(xv, "global_avg_pool");
    const int N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    Node n;
    n.op = Op::global_avg_pool;
    n.in0 = x.id;
    n.value = Tensor<S>({N, C, 1, 1}, S(0));
    const S inv = S(1) / (S(H) * S(W));
    for (int64_t p = 0; p < int64_t(N) * C; ++p) {
        const S* plane = xv.data.data() + p * H * W;
        S acc = 0;
        for (int64_t t = 0; t < int64_t(H) * W; ++t) acc += plane[t];
        n.value.data[size_t(p)] = acc * inv;
    }
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::channel_reduce(Var x, ReduceKind kind) {
    const Tensor<S>& xv = at(x).value;
    check_4d(xv, "channel_reduce");
    const int N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    const int64_t plane = int64_t(H) * W;
    Node n;
    n.op = kind == ReduceKind::mean ? Op::channel_mean : Op::channel_max;
    n.in0 = x.id;
    n.value = Tensor<S>({N, 1, H, W}, S(0));
    if (kind == ReduceKind::mean) {
        const S inv = S(1) / S(C);
        for (int in_ = 0; in_ < N; ++in_) {
            const S* base = xv.data.data() + size_t(in_) * C * plane;
            S* out = n.value.data.data() + size_t(in_) * plane;
            for (int64_t t = 0; t < plane; ++t) {
                S acc = 0;
                for (int c = 0; c < C; ++c) acc += base[size_t(c) * plane + t];
                out[t] = acc * inv;
            }
        }
    } else {
        n.arg_idx.assign(size_t(N) * plane, 0);
        for (int in_ = 0; in_ < N; ++in_) {
            const S* base = xv.data.data() + size_t(in_) * C * plane;
            S* out = n.value.data.data() + size_t(in_) * plane;
            int32_t* arg = n.arg_idx.data() + size_t(in_) * plane;
            for (int64_t t = 0; t < plane; ++t) {
                S best = base[t];
                int32_t bc = 0;
                for (int c = 1; c < C; ++c) {
                    S v = base[size_t(c) * plane + t];
                    if (v > best) {  // strict: ties keep the lowest channel
                        best = v;
                        bc = c;
                    }
                }
                out[t] = best;
                arg[t] = bc;
            }
        }
    }
    return {push(std::move(n))};
}

template <typename S>
static void broadcast_check(const Shape& a, const Shape& b) {
    if (a.size() != b.size())
        throw ShapeError("elementwise: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    for (size_t i = 0; i < a.size(); ++i) {
        if (b[i] != a[i] && b[i] != 1)
            throw ShapeError("elementwise: shape " + shape_str(b) + " not broadcastable to " + shape_str(a));
    }
}

// Shared forward for add/sub/mul/div with b broadcast along singleton axes.
template <typename S, typename F>
static Tensor<S> ew_forward(const Tensor<S>& a, const Tensor<S>& b, F f) {
    broadcast_check<S>(a.shape, b.shape);
    Tensor<S> out = a;
    if (a.shape == b.shape) {
        for (size_t t = 0; t < out.data.size(); ++t) out.data[t] = f(a.data[t], b.data[t]);
        return out;
    }
    const int rank = a.rank();
    std::vector<int64_t> bstride(size_t(rank), 0), idx(size_t(rank), 0);
    int64_t st = 1;
    for (int i = rank - 1; i >= 0; --i) {
        bstride[size_t(i)] = (b.shape[size_t(i)] == 1) ? 0 : st;
        st *= b.shape[size_t(i)];
    }
    int64_t boff = 0;
    for (size_t t = 0; t < out.data.size(); ++t) {
        out.data[t] = f(a.data[t], b.data[boff]);
        for (int i = rank - 1; i >= 0; --i) {
            idx[size_t(i)]++;
            boff += bstride[size_t(i)];
            if (idx[size_t(i)] < a.shape[size_t(i)]) break;
            boff -= bstride[size_t(i)] * a.shape[size_t(i)];
            idx[size_t(i)] = 0;
        }
    }
    return out;
}

template <typename S>
typename Graph<S>::Var Graph<S>::add(Var a, Var b) {
    Node n;
    n.op = Op::add;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = ew_forward(at(a).value, at(b).value, [](S x, S y) { return x + y; });
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::sub(Var a, Var b) {
    Node n;
    n.op = Op::sub;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = ew_forward(at(a).value, at(b).value, [](S x, S y) { return x - y; });
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::mul(Var a, Var b) {
    Node n;
    n.op = Op::mul;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = ew_forward(at(a).value, at(b).value, [](S x, S y) { return x * y; });
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::div(Var a, Var b) {
    Node n;
    n.op = Op::div;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = ew_forward(at(a).value, at(b).value, [](S x, S y) { return x / y; });
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::scale(Var x, S m, S c) {
    Node n;
    n.op = Op::scale;
    n.in0 = x.id;
    n.a = m;
    n.value = at(x).value;
    for (S& v : n.value.data) v = m * v + c;
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::pow_scalar(Var x, S e) {
    Node n;
    n.op = Op::pow_scalar;
    n.in0 = x.id;
    n.a = e;
    n.value = at(x).value;
    for (S& v : n.value.data) v = std::pow(v, e);
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::abs(Var x) {
    Node n;
    n.op = Op::abs;
    n.in0 = x.id;
    n.value = at(x).value;
    for (S& v : n.value.data) v = std::fabs(v);
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::concat_channels(Var a, Var b) {
    const Tensor<S>& av = at(a).value;
    const Tensor<S>& bv = at(b).value;
    check_4d(av, "concat_channels");
    check_4d(bv, "concat_channels");
    if (av.shape[0] != bv.shape[0] || av.shape[2] != bv.shape[2] || av.shape[3] != bv.shape[3])
        throw ShapeError("concat_channels: " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    const int N = av.shape[0], CA = av.shape[1], CB = bv.shape[1], H = av.shape[2], W = av.shape[3];
    const int64_t plane = int64_t(H) * W;
    Node n;
    n.op = Op::concat_channels;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = Tensor<S>({N, CA + CB, H, W}, S(0));
    for (int in_ = 0; in_ < N; ++in_) {
        S* dst = n.value.data.data() + size_t(in_) * (CA + CB) * plane;
        std::memcpy(dst, av.data.data() + size_t(in_) * CA * plane, sizeof(S) * size_t(CA) * plane);
        std::memcpy(dst + size_t(CA) * plane, bv.data.data() + size_t(in_) * CB * plane,
                    sizeof(S) * size_t(CB) * plane);
    }
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::avg_pool2(Var x) {
    const Tensor<S>& xv = at(x).value;
    check_4d(xv, "avg_pool2");
    const int N = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3];
    const int OH = H / 2, OW = W / 2;
    if (OH < 1 || OW < 1) throw ShapeError("avg_pool2: spatial extent too small in " + shape_str(xv.shape));
    Node n;
    n.op = Op::avg_pool2;
    n.in0 = x.id;
    n.value = Tensor<S>({N, C, OH, OW}, S(0));
    for (int64_t p = 0; p < int64_t(N) * C; ++p) {
        const S* src = xv.data.data() + p * H * W;
        S* dst = n.value.data.data() + p * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
            const S* r0 = src + size_t(2 * oh) * W;
            const S* r1 = r0 + W;
            S* drow = dst + size_t(oh) * OW;
            for (int ow = 0; ow < OW; ++ow)
                drow[ow] = ((r0[2 * ow] + r0[2 * ow + 1]) + (r1[2 * ow] + r1[2 * ow + 1])) * S(0.25);
        }
    }
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::reshape(Var x, Shape s) {
    const Tensor<S>& xv = at(x).value;
    if (shape_numel(s) != xv.numel())
        throw ShapeError("reshape: " + shape_str(xv.shape) + " -> " + shape_str(s) + " changes element count");
    Node n;
    n.op = Op::reshape;
    n.in0 = x.id;
    n.saved_shape = xv.shape;
    n.value = xv;
    n.value.shape = std::move(s);
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::sum_all(Var x) {
    const Tensor<S>& xv = at(x).value;
    Node n;
    n.op = Op::sum_all;
    n.in0 = x.id;
    S acc = 0;
    for (S v : xv.data) acc += v;  // fixed row-major order
    n.value = Tensor<S>({1}, std::vector<S>{acc});
    return {push(std::move(n))};
}

template <typename S>
typename Graph<S>::Var Graph<S>::mean_all(Var x) {
    const Tensor<S>& xv = at(x).value;
    Node n;
    n.op = Op::mean_all;
    n.in0 = x.id;
    S acc = 0;
    for (S v : xv.data) acc += v;
    n.value = Tensor<S>({1}, std::vector<S>{acc / S(xv.numel())});
    return {push(std::move(n))};
}

template <typename S>
const Tensor<S>& Graph<S>::value(Var v) const {
    return at(v).value;
}

template <typename S>
const std::vector<S>& Graph<S>::grad(Var v) const {
    return at(v).grad;
}

// Backward helper for the broadcast-aware elementwise family.
template <typename S, typename FA, typename FB>
static void ew_backward(const Tensor<S>& a, const Tensor<S>& b, const std::vector<S>& g, std::vector<S>* ga,
                        std::vector<S>* gb, FA fa, FB fb) {
    if (a.shape == b.shape) {
        for (size_t t = 0; t < g.size(); ++t) {
            if (ga) (*ga)[t] += fa(a.data[t], b.data[t], g[t]);
            if (gb) (*gb)[t] += fb(a.data[t], b.data[t], g[t]);
        }
        return;
    }
    const int rank = a.rank();
    std::vector<int64_t> bstride(size_t(rank), 0), idx(size_t(rank), 0);
    int64_t st = 1;
    for (int i = rank - 1; i >= 0; --i) {
        bstride[size_t(i)] = (b.shape[size_t(i)] == 1) ? 0 : st;
        st *= b.shape[size_t(i)];
    }
    int64_t boff = 0;
    for (size_t t = 0; t < g.size(); ++t) {
        if (ga) (*ga)[t] += fa(a.data[t], b.data[boff], g[t]);
        if (gb) (*gb)[size_t(boff)] += fb(a.data[t], b.data[boff], g[t]);
        for (int i = rank - 1; i >= 0; --i) {
            idx[size_t(i)]++;
            boff += bstride[size_t(i)];
            if (idx[size_t(i)] < a.shape[size_t(i)]) break;
            boff -= bstride[size_t(i)] * a.shape[size_t(i)];
            idx[size_t(i)] = 0;
        }
    }
}

template <typename S>
void Graph<S>::backward(Var loss) {
    Node& top = at(loss);
    if (top.value.numel() != 1)
        throw Error("backward: loss must be a scalar, got shape " + shape_str(top.value.shape));

    for (Node& n : nodes_) n.grad.clear();
    ensure_grad(loss.id);
    nodes_[size_t(loss.id)].grad[0] = S(1);

    // A node's gradient only matters if some requires_grad leaf sits below
    // it; everything else (constant windows, targets) is pruned.
    std::vector<char> needs(nodes_.size(), 0);
    for (size_t id = 0; id < nodes_.size(); ++id) {
        const Node& n = nodes_[id];
        if (n.op == Op::leaf) {
            needs[id] = n.leaf_target != nullptr && n.leaf_target->requires_grad;
        } else {
            needs[id] = (n.in0 >= 0 && needs[size_t(n.in0)]) ||
                        (n.in1 >= 0 && needs[size_t(n.in1)]) ||
                        (n.in2 >= 0 && needs[size_t(n.in2)]);
        }
    }

    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[size_t(id)];
        if (n.grad.empty() || !needs[size_t(id)]) continue;
        const std::vector<S>& g = n.grad;
        switch (n.op) {
            case Op::leaf:
            case Op::constant:
                break;
            case Op::conv2d: {
                Node& xi = nodes_[size_t(n.in0)];
                Node& wi = nodes_[size_t(n.in1)];
                Node& bi = nodes_[size_t(n.in2)];
                const Tensor<S>& x = xi.value;
                const Tensor<S>& w = wi.value;
                const int N = x.shape[0], I = x.shape[1], H = x.shape[2], W = x.shape[3];
                const int O = w.shape[0], K = w.shape[2];
                const int OH = n.value.shape[2], OW = n.value.shape[3];
                const int HP = H + 2 * n.pad, WP = W + 2 * n.pad;
                const int s = n.stride;

                if (needs[size_t(n.in2)]) {
                    ensure_grad(n.in2);
                    for (int o = 0; o < O; ++o) {
                        S acc = 0;
                        for (int in_ = 0; in_ < N; ++in_) {
                            const S* gp = g.data() + (size_t(in_) * O + o) * OH * OW;
                            for (int64_t t = 0; t < int64_t(OH) * OW; ++t) acc += gp[t];
                        }
                        bi.grad[size_t(o)] += acc;
                    }
                }

                if (needs[size_t(n.in1)]) {
                    const std::vector<S> padded = make_padded(x, n.pad, n.pad_mode);
                    ensure_grad(n.in1);
                    for (int o = 0; o < O; ++o) {
                        for (int i = 0; i < I; ++i) {
                            S* gw = wi.grad.data() + (size_t(o) * I + i) * K * K;
                            for (int kh = 0; kh < K; ++kh) {
                                for (int kw = 0; kw < K; ++kw) {
                                    S acc = 0;
                                    for (int in_ = 0; in_ < N; ++in_) {
                                        const S* pplane = padded.data() + (size_t(in_) * I + i) * HP * WP;
                                        const S* gplane = g.data() + (size_t(in_) * O + o) * OH * OW;
                                        for (int oh = 0; oh < OH; ++oh) {
                                            const S* prow = pplane + size_t(oh * s + kh) * WP + kw;
                                            const S* grow = gplane + size_t(oh) * OW;
                                            if (s == 1) {
                                                acc += dot_striped(prow, grow, OW);
                                            } else {
                                                for (int ow = 0; ow < OW; ++ow)
                                                    acc += prow[size_t(ow) * s] * grow[ow];
                                            }
                                        }
                                    }
                                    gw[size_t(kh) * K + kw] += acc;
                                }
                            }
                        }
                    }
                }

                if (!needs[size_t(n.in0)]) break;
                ensure_grad(n.in0);
                std::vector<S> gpad(size_t(N) * I * HP * WP, S(0));
                for (int in_ = 0; in_ < N; ++in_) {
                    for (int i = 0; i < I; ++i) {
                        S* pplane = gpad.data() + (size_t(in_) * I + i) * HP * WP;
                        for (int o = 0; o < O; ++o) {
                            const S* gplane = g.data() + (size_t(in_) * O + o) * OH * OW;
                            const S* wk = w.data.data() + (size_t(o) * I + i) * K * K;
                            for (int kh = 0; kh < K; ++kh) {
                                for (int kw = 0; kw < K; ++kw) {
                                    const S wv = wk[size_t(kh) * K + kw];
                                    for (int oh = 0; oh < OH; ++oh) {
                                        S* prow = pplane + size_t(oh * s + kh) * WP + kw;
                                        const S* grow = gplane + size_t(oh) * OW;
                                        if (s == 1) {
                                            for (int ow = 0; ow < OW; ++ow) prow[ow] += wv * grow[ow];
                                        } else {
                                            for (int ow = 0; ow < OW; ++ow) prow[size_t(ow) * s] += wv * grow[ow];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                fold_padded_grad(gpad, xi.grad, x.shape, n.pad, n.pad_mode);
                break;
            }
            case Op::relu: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                for (size_t t = 0; t < g.size(); ++t)
                    if (xi.value.data[t] > S(0)) xi.grad[t] += g[t];
                break;
            }
            case Op::sigmoid: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                for (size_t t = 0; t < g.size(); ++t) {
                    const S y = n.value.data[t];
                    xi.grad[t] += g[t] * y * (S(1) - y);
                }
                break;
            }
            case Op::global_avg_pool: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                const int H = xi.value.shape[2], W = xi.value.shape[3];
                const S inv = S(1) / (S(H) * S(W));
                for (int64_t p = 0; p < int64_t(g.size()); ++p) {
                    const S gv = g[size_t(p)] * inv;
                    S* gx = xi.grad.data() + p * H * W;
                    for (int64_t t = 0; t < int64_t(H) * W; ++t) gx[t] += gv;
                }
                break;
            }
            case Op::channel_mean: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                const int N = xi.value.shape[0], C = xi.value.shape[1];
                const int64_t plane = int64_t(xi.value.shape[2]) * xi.value.shape[3];
                const S inv = S(1) / S(C);
                for (int in_ = 0; in_ < N; ++in_) {
                    const S* gp = g.data() + size_t(in_) * plane;
                    S* gx = xi.grad.data() + size_t(in_) * C * plane;
                    for (int c = 0; c < C; ++c)
                        for (int64_t t = 0; t < plane; ++t) gx[size_t(c) * plane + t] += gp[t] * inv;
                }
                break;
            }
            case Op::channel_max: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                const int N = xi.value.shape[0], C = xi.value.shape[1];
                const int64_t plane = int64_t(xi.value.shape[2]) * xi.value.shape[3];
                for (int in_ = 0; in_ < N; ++in_) {
                    const S* gp = g.data() + size_t(in_) * plane;
                    const int32_t* arg = n.arg_idx.data() + size_t(in_) * plane;
                    S* gx = xi.grad.data() + size_t(in_) * C * plane;
                    for (int64_t t = 0; t < plane; ++t) gx[size_t(arg[t]) * plane + t] += gp[t];
                }
                break;
            }
            case Op::add:
            case Op::sub:
            case Op::mul:
            case Op::div: {
                Node& ai = nodes_[size_t(n.in0)];
                Node& bi = nodes_[size_t(n.in1)];
                if (needs[size_t(n.in0)]) ensure_grad(n.in0);
                if (needs[size_t(n.in1)]) ensure_grad(n.in1);
                const Op op = n.op;
                ew_backward(
                    ai.value, bi.value, g,
                    needs[size_t(n.in0)] ? &ai.grad : nullptr,
                    needs[size_t(n.in1)] ? &bi.grad : nullptr,
                    [op](S, S b, S gv) -> S {
                        switch (op) {
                            case Op::add:
                            case Op::sub: return gv;
                            case Op::mul: return gv * b;
                            default: return gv / b;
                        }
                    },
                    [op](S a, S b, S gv) -> S {
                        switch (op) {
                            case Op::add: return gv;
                            case Op::sub: return -gv;
                            case Op::mul: return gv * a;
                            default: return -gv * a / (b * b);
                        }
                    });
                break;
            }
            case Op::scale: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                for (size_t t = 0; t < g.size(); ++t) xi.grad[t] += n.a * g[t];
                break;
            }
            case Op::pow_scalar: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                for (size_t t = 0; t < g.size(); ++t)
                    xi.grad[t] += g[t] * n.a * std::pow(xi.value.data[t], n.a - S(1));
                break;
            }
            case Op::abs: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                for (size_t t = 0; t < g.size(); ++t) {
                    const S x = xi.value.data[t];
                    if (x > S(0)) xi.grad[t] += g[t];
                    else if (x < S(0)) xi.grad[t] -= g[t];
                }
                break;
            }
            case Op::concat_channels: {
                Node& ai = nodes_[size_t(n.in0)];
                Node& bi = nodes_[size_t(n.in1)];
                const bool na = needs[size_t(n.in0)], nb = needs[size_t(n.in1)];
                if (na) ensure_grad(n.in0);
                if (nb) ensure_grad(n.in1);
                const int N = n.value.shape[0], CA = ai.value.shape[1], CB = bi.value.shape[1];
                const int64_t plane = int64_t(n.value.shape[2]) * n.value.shape[3];
                for (int in_ = 0; in_ < N; ++in_) {
                    const S* gp = g.data() + size_t(in_) * (CA + CB) * plane;
                    if (na) {
                        S* ga = ai.grad.data() + size_t(in_) * CA * plane;
                        for (int64_t t = 0; t < int64_t(CA) * plane; ++t) ga[t] += gp[t];
                    }
                    if (nb) {
                        S* gb = bi.grad.data() + size_t(in_) * CB * plane;
                        for (int64_t t = 0; t < int64_t(CB) * plane; ++t) gb[t] += gp[size_t(CA) * plane + t];
                    }
                }
                break;
            }
            case Op::avg_pool2: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                const int H = xi.value.shape[2], W = xi.value.shape[3];
                const int OH = n.value.shape[2], OW = n.value.shape[3];
                for (int64_t p = 0; p < int64_t(xi.value.shape[0]) * xi.value.shape[1]; ++p) {
                    const S* gp = g.data() + p * OH * OW;
                    S* gx = xi.grad.data() + p * H * W;
                    for (int oh = 0; oh < OH; ++oh) {
                        for (int ow = 0; ow < OW; ++ow) {
                            const S gv = gp[size_t(oh) * OW + ow] * S(0.25);
                            gx[size_t(2 * oh) * W + 2 * ow] += gv;
                            gx[size_t(2 * oh) * W + 2 * ow + 1] += gv;
                            gx[size_t(2 * oh + 1) * W + 2 * ow] += gv;
                            gx[size_t(2 * oh + 1) * W + 2 * ow + 1] += gv;
                        }
                    }
                }
                break;
            }
            case Op::reshape: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                for (size_t t = 0; t < g.size(); ++t) xi.grad[t] += g[t];
                break;
            }
            case Op::sum_all: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                const S gv = g[0];
                for (S& gx : xi.grad) gx += gv;
                break;
            }
            case Op::mean_all: {
                ensure_grad(n.in0);
                Node& xi = nodes_[size_t(n.in0)];
                const S gv = g[0] / S(xi.value.numel());
                for (S& gx : xi.grad) gx += gv;
                break;
            }
        }
    }

    // Deliver to caller-owned leaves; untouched leaves end up all-zero.
    for (Node& n : nodes_) {
        if (n.op != Op::leaf || n.leaf_target == nullptr) continue;
        if (!n.leaf_target->requires_grad) continue;
        n.leaf_target->ensure_grad();
        if (n.grad.empty()) continue;
        for (size_t t = 0; t < n.grad.size(); ++t) n.leaf_target->grad[t] += n.grad[t];
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace acpp
