#include "acpp/tensor.hpp"

#include <sstream>

namespace acpp {

int64_t shape_numel(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: empty shape");
    int64_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("tensor: nonpositive extent in shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename S>
Tensor<S> rot90_nchw(const Tensor<S>& t, int k) {
    if (t.rank() != 4) throw ShapeError("rot90_nchw: expected NCHW tensor, got " + shape_str(t.shape));
    k = ((k % 4) + 4) % 4;
    if (k == 0) return t;
    const int n = t.shape[0], c = t.shape[1], h = t.shape[2], w = t.shape[3];
    const int oh = (k % 2 == 0) ? h : w;
    const int ow = (k % 2 == 0) ? w : h;
    Tensor<S> out({n, c, oh, ow}, S(0));
    out.requires_grad = t.requires_grad;
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const S* src = t.data.data() + (size_t(in) * c + ic) * h * w;
            S* dst = out.data.data() + (size_t(in) * c + ic) * oh * ow;
            for (int r = 0; r < oh; ++r) {
                for (int col = 0; col < ow; ++col) {
                    int sr, sc;
                    switch (k) {
                        case 1: sr = col;          sc = w - 1 - r;   break;
                        case 2: sr = h - 1 - r;    sc = w - 1 - col; break;
                        default: sr = h - 1 - col; sc = r;           break;
                    }
                    dst[size_t(r) * ow + col] = src[size_t(sr) * w + sc];
                }
            }
        }
    }
    return out;
}

template Tensor<float> rot90_nchw(const Tensor<float>&, int);
template Tensor<double> rot90_nchw(const Tensor<double>&, int);

}  // namespace acpp
