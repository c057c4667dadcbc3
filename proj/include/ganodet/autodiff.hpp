#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "ganodet/common.hpp"
#include "ganodet/tensor.hpp"

namespace ganodet {

// Reverse-mode tape over Tensor. Each op builds a Node eagerly and installs
// a backward closure; backward() walks the graph in reverse topological order.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backfn;
    std::string tag;

    Tensor& grad_buf() {
        if (grad.empty()) grad = Tensor::zeros(value.shape);
        return grad;
    }
};

inline Var make_const(Tensor t, std::string tag = "") {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->tag = std::move(tag);
    return n;
}

inline Var make_param(Tensor t, std::string tag = "") {
    auto n = make_const(std::move(t), std::move(tag));
    n->requires_grad = true;
    return n;
}

inline bool any_requires_grad(const std::vector<Var>& vs) {
    for (const auto& v : vs)
        if (v->requires_grad) return true;
    return false;
}

namespace detail {

inline Var make_op(Tensor out, std::vector<Var> parents, std::function<void(Node&)> backfn,
                   std::string tag = "") {
    auto n = std::make_shared<Node>();
    n->value = std::move(out);
    n->requires_grad = any_requires_grad(parents);
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backfn = std::move(backfn);
    }
    n->tag = std::move(tag);
    return n;
}

}  // namespace detail

// Runs backprop from a scalar root. Grad buffers of reachable nodes that
// require grad are accumulated into; parameter grads must be zeroed by the
// caller between steps (see zero_grad).
inline void backward(const Var& root) {
    check_shape(root->value.numel() == 1, "backward root must be scalar");
    // iterative DFS topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root->grad_buf()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backfn && !n->grad.empty()) n->backfn(*n);
    }
}

inline void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params) p->grad = Tensor();
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    check_shape(a->value.same_shape(b->value), "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return detail::make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            auto& g = a->grad_buf();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (b->requires_grad) {
            auto& g = b->grad_buf();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
    });
}

// y = s*x + c elementwise
inline Var affine(const Var& x, double s, double c) {
    Tensor out = x->value;
    for (auto& v : out.data) v = s * v + c;
    return detail::make_op(std::move(out), {x}, [x, s](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * n.grad[i];
    });
}

inline Var scale(const Var& x, double s) { return affine(x, s, 0.0); }

inline Var relu(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return detail::make_op(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (x->value[i] > 0.0) g[i] += n.grad[i];
    });
}

inline Var leaky_relu(const Var& x, double slope = 0.2) {
    Tensor out = x->value;
    for (auto& v : out.data) v = v > 0.0 ? v : slope * v;
    return detail::make_op(std::move(out), {x}, [x, slope](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (std::size_t i = 0; i < g.numel(); ++i)
            g[i] += (x->value[i] > 0.0 ? 1.0 : slope) * n.grad[i];
    });
}

inline Var tanh_op(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = std::tanh(v);
    return detail::make_op(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += (1.0 - n.value[i] * n.value[i]) * n.grad[i];
    });
}

inline Var sigmoid_op(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return detail::make_op(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.value[i] * (1.0 - n.value[i]) * n.grad[i];
    });
}

// log of input clamped into [eps, 1-eps]; gradient is zero in the clamped range
inline Var log_clamped(const Var& x, double eps = 1e-7) {
    Tensor out = x->value;
    for (auto& v : out.data) v = std::log(std::clamp(v, eps, 1.0 - eps));
    return detail::make_op(std::move(out), {x}, [x, eps](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            double v = x->value[i];
            if (v > eps && v < 1.0 - eps) g[i] += n.grad[i] / v;
        }
    });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Var reshape(const Var& x, std::vector<int> new_shape) {
    check_shape(Tensor::numel_of(new_shape) == x->value.numel(), "reshape");
    Tensor out(std::move(new_shape), x->value.data);
    return detail::make_op(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

// (C, H, W) -> (H*W, C): rows are spatial positions, columns are channels
inline Var chw_to_pc(const Var& x) {
    check_shape(x->value.shape.size() == 3, "chw_to_pc input");
    const int C = x->value.shape[0], H = x->value.shape[1], W = x->value.shape[2];
    const int P = H * W;
    Tensor out({P, C});
    for (int c = 0; c < C; ++c)
        for (int p = 0; p < P; ++p) out.at2(p, c) = x->value.data[static_cast<std::size_t>(c) * P + p];
    return detail::make_op(std::move(out), {x}, [x, C, P](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (int c = 0; c < C; ++c)
            for (int p = 0; p < P; ++p) g.data[static_cast<std::size_t>(c) * P + p] += n.grad.at2(p, c);
    });
}

// (H*W, C) -> (C, H, W)
inline Var pc_to_chw(const Var& x, int H, int W) {
    check_shape(x->value.shape.size() == 2 && x->value.shape[0] == H * W, "pc_to_chw input");
    const int C = x->value.shape[1];
    const int P = H * W;
    Tensor out({C, H, W});
    for (int c = 0; c < C; ++c)
        for (int p = 0; p < P; ++p) out.data[static_cast<std::size_t>(c) * P + p] = x->value.at2(p, c);
    return detail::make_op(std::move(out), {x}, [x, C, P](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (int c = 0; c < C; ++c)
            for (int p = 0; p < P; ++p) g.at2(p, c) += n.grad.data[static_cast<std::size_t>(c) * P + p];
    });
}

inline Var concat_channels(const std::vector<Var>& xs) {
    check_shape(!xs.empty(), "concat_channels needs inputs");
    const int H = xs[0]->value.shape[1], W = xs[0]->value.shape[2];
    int C = 0;
    for (const auto& x : xs) {
        check_shape(x->value.shape.size() == 3 && x->value.shape[1] == H && x->value.shape[2] == W,
                    "concat_channels spatial dims");
        C += x->value.shape[0];
    }
    Tensor out({C, H, W});
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data.begin(), x->value.data.end(), out.data.begin() + off);
        off += x->value.numel();
    }
    return detail::make_op(std::move(out), xs, [xs](Node& n) {
        std::size_t off = 0;
        for (const auto& x : xs) {
            if (x->requires_grad) {
                auto& g = x->grad_buf();
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[off + i];
            }
            off += x->value.numel();
        }
    });
}

inline Var concat_cols(const std::vector<Var>& xs) {
    check_shape(!xs.empty(), "concat_cols needs inputs");
    const int R = xs[0]->value.shape[0];
    int C = 0;
    for (const auto& x : xs) {
        check_shape(x->value.shape.size() == 2 && x->value.shape[0] == R, "concat_cols rows");
        C += x->value.shape[1];
    }
    Tensor out({R, C});
    int coff = 0;
    for (const auto& x : xs) {
        const int xc = x->value.shape[1];
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < xc; ++c) out.at2(r, coff + c) = x->value.at2(r, c);
        coff += xc;
    }
    return detail::make_op(std::move(out), xs, [xs, R](Node& n) {
        int coff = 0;
        for (const auto& x : xs) {
            const int xc = x->value.shape[1];
            if (x->requires_grad) {
                auto& g = x->grad_buf();
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < xc; ++c) g.at2(r, c) += n.grad.at2(r, coff + c);
            }
            coff += xc;
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

inline Var matmul(const Var& a, const Var& b) {
    check_shape(a->value.shape.size() == 2 && b->value.shape.size() == 2 &&
                    a->value.shape[1] == b->value.shape[0],
                "matmul");
    const int m = a->value.shape[0], k = a->value.shape[1], n2 = b->value.shape[1];
    Tensor out({m, n2});
    CMapM A(a->value.data.data(), m, k), B(b->value.data.data(), k, n2);
    MapM O(out.data.data(), m, n2);
    O.noalias() = A * B;
    return detail::make_op(std::move(out), {a, b}, [a, b, m, k, n2](Node& n) {
        CMapM G(n.grad.data.data(), m, n2);
        if (a->requires_grad) {
            CMapM B(b->value.data.data(), k, n2);
            MapM GA(a->grad_buf().data.data(), m, k);
            GA.noalias() += G * B.transpose();
        }
        if (b->requires_grad) {
            CMapM A(a->value.data.data(), m, k);
            MapM GB(b->grad_buf().data.data(), k, n2);
            GB.noalias() += A.transpose() * G;
        }
    });
}

inline Var transpose2d(const Var& x) {
    check_shape(x->value.shape.size() == 2, "transpose2d");
    const int r = x->value.shape[0], c = x->value.shape[1];
    Tensor out({c, r});
    CMapM X(x->value.data.data(), r, c);
    MapM O(out.data.data(), c, r);
    O = X.transpose();
    return detail::make_op(std::move(out), {x}, [x, r, c](Node& n) {
        if (!x->requires_grad) return;
        CMapM G(n.grad.data.data(), c, r);
        MapM GX(x->grad_buf().data.data(), r, c);
        GX += G.transpose();
    });
}

inline Var softmax_rows(const Var& x) {
    check_shape(x->value.shape.size() == 2, "softmax_rows");
    const int R = x->value.shape[0], C = x->value.shape[1];
    Tensor out({R, C});
    for (int r = 0; r < R; ++r) {
        double mx = x->value.at2(r, 0);
        for (int c = 1; c < C; ++c) mx = std::max(mx, x->value.at2(r, c));
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
            double e = std::exp(x->value.at2(r, c) - mx);
            out.at2(r, c) = e;
            sum += e;
        }
        for (int c = 0; c < C; ++c) out.at2(r, c) /= sum;
    }
    return detail::make_op(std::move(out), {x}, [x, R, C](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (int r = 0; r < R; ++r) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c) dot += n.grad.at2(r, c) * n.value.at2(r, c);
            for (int c = 0; c < C; ++c) g.at2(r, c) += n.value.at2(r, c) * (n.grad.at2(r, c) - dot);
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution (same padding for stride 1, exact halving for stride 2)
// ---------------------------------------------------------------------------

namespace detail {

inline void im2col(const Tensor& x, int kh, int kw, int stride, int pad, Tensor& col, int Ho, int Wo) {
    const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    // col: (C*kh*kw, Ho*Wo)
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
                const int row = (c * kh + i) * kw + j;
                double* dst = &col.data[static_cast<std::size_t>(row) * Ho * Wo];
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride + i - pad;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * stride + j - pad;
                        dst[oh * Wo + ow] = (ih >= 0 && ih < H && iw >= 0 && iw < W) ? x.at3(c, ih, iw) : 0.0;
                    }
                }
            }
}

inline void col2im_add(const Tensor& col, int C, int H, int W, int kh, int kw, int stride, int pad,
                       Tensor& x, int Ho, int Wo) {
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
                const int row = (c * kh + i) * kw + j;
                const double* src = &col.data[static_cast<std::size_t>(row) * Ho * Wo];
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride + i - pad;
                    if (ih < 0 || ih >= H) continue;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * stride + j - pad;
                        if (iw >= 0 && iw < W) x.at3(c, ih, iw) += src[oh * Wo + ow];
                    }
                }
            }
}

}  // namespace detail

// x: (Cin, H, W), w: (Cout, Cin, kh, kw), b: (Cout). Odd kernels only; pad
// (k-1)/2 so stride 1 preserves spatial size and stride 2 halves even sizes.
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    check_shape(xs.size() == 3 && ws.size() == 4 && ws[1] == xs[0], "conv2d input/weight");
    check_shape(ws[2] % 2 == 1 && ws[3] % 2 == 1, "conv2d kernel must be odd");
    check_shape(b->value.shape == std::vector<int>{ws[0]}, "conv2d bias");
    const int Cin = xs[0], H = xs[1], W = xs[2];
    const int Cout = ws[0], kh = ws[2], kw = ws[3];
    const int pad = (kh - 1) / 2;
    check_shape(stride == 1 || (stride == 2 && H % 2 == 0 && W % 2 == 0), "conv2d stride-2 needs even dims");
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    const int K = Cin * kh * kw;

    auto col = std::make_shared<Tensor>(Tensor::zeros({K, Ho * Wo}));
    detail::im2col(x->value, kh, kw, stride, pad, *col, Ho, Wo);

    Tensor out({Cout, Ho, Wo});
    {
        CMapM Wm(w->value.data.data(), Cout, K);
        CMapM Cm(col->data.data(), K, Ho * Wo);
        MapM Om(out.data.data(), Cout, Ho * Wo);
        Om.noalias() = Wm * Cm;
    }
    for (int c = 0; c < Cout; ++c) {
        double bias = b->value[c];
        double* p = &out.data[static_cast<std::size_t>(c) * Ho * Wo];
        for (int i = 0; i < Ho * Wo; ++i) p[i] += bias;
    }

    return detail::make_op(
        std::move(out), {x, w, b},
        [x, w, b, col, Cin, H, W, Cout, kh, kw, stride, pad, Ho, Wo, K](Node& n) {
            CMapM G(n.grad.data.data(), Cout, Ho * Wo);
            if (w->requires_grad) {
                CMapM Cm(col->data.data(), K, Ho * Wo);
                MapM GW(w->grad_buf().data.data(), Cout, K);
                GW.noalias() += G * Cm.transpose();
            }
            if (b->requires_grad) {
                auto& gb = b->grad_buf();
                for (int c = 0; c < Cout; ++c) gb[c] += G.row(c).sum();
            }
            if (x->requires_grad) {
                Tensor gcol({K, Ho * Wo});
                CMapM Wm(w->value.data.data(), Cout, K);
                MapM GC(gcol.data.data(), K, Ho * Wo);
                GC.noalias() = Wm.transpose() * G;
                detail::col2im_add(gcol, Cin, H, W, kh, kw, stride, pad, x->grad_buf(), Ho, Wo);
            }
        });
}

enum class Upsample { Nearest, Bilinear };

// 2x upsampling, channel-preserving (operator U on the skip pathway)
inline Var upsample2x(const Var& x, Upsample mode = Upsample::Nearest) {
    check_shape(x->value.shape.size() == 3, "upsample2x input");
    const int C = x->value.shape[0], H = x->value.shape[1], W = x->value.shape[2];
    const int Ho = 2 * H, Wo = 2 * W;
    Tensor out({C, Ho, Wo});
    if (mode == Upsample::Nearest) {
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) out.at3(c, oh, ow) = x->value.at3(c, oh / 2, ow / 2);
        return detail::make_op(std::move(out), {x}, [x, C, Ho, Wo](Node& n) {
            if (!x->requires_grad) return;
            auto& g = x->grad_buf();
            for (int c = 0; c < C; ++c)
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow) g.at3(c, oh / 2, ow / 2) += n.grad.at3(c, oh, ow);
        });
    }
    // bilinear, half-pixel centers, edges clamped
    auto coords = [](int o, int size_in) {
        double s = (o + 0.5) / 2.0 - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(size_in - 1));
        int lo = static_cast<int>(std::floor(s));
        int hi = std::min(lo + 1, size_in - 1);
        return std::tuple<int, int, double>{lo, hi, s - lo};
    };
    for (int c = 0; c < C; ++c)
        for (int oh = 0; oh < Ho; ++oh) {
            auto [h0, h1, fh] = coords(oh, H);
            for (int ow = 0; ow < Wo; ++ow) {
                auto [w0, w1, fw] = coords(ow, W);
                out.at3(c, oh, ow) = (1 - fh) * (1 - fw) * x->value.at3(c, h0, w0) +
                                     (1 - fh) * fw * x->value.at3(c, h0, w1) +
                                     fh * (1 - fw) * x->value.at3(c, h1, w0) +
                                     fh * fw * x->value.at3(c, h1, w1);
            }
        }
    return detail::make_op(std::move(out), {x}, [x, coords, C, H, W, Ho, Wo](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < Ho; ++oh) {
                auto [h0, h1, fh] = coords(oh, H);
                for (int ow = 0; ow < Wo; ++ow) {
                    auto [w0, w1, fw] = coords(ow, W);
                    const double gv = n.grad.at3(c, oh, ow);
                    g.at3(c, h0, w0) += (1 - fh) * (1 - fw) * gv;
                    g.at3(c, h0, w1) += (1 - fh) * fw * gv;
                    g.at3(c, h1, w0) += fh * (1 - fw) * gv;
                    g.at3(c, h1, w1) += fh * fw * gv;
                }
            }
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Var global_avg_pool(const Var& x) {
    check_shape(x->value.shape.size() == 3, "global_avg_pool input");
    const int C = x->value.shape[0];
    const int P = x->value.shape[1] * x->value.shape[2];
    Tensor out({C});
    for (int c = 0; c < C; ++c) {
        double s = 0.0;
        const double* p = &x->value.data[static_cast<std::size_t>(c) * P];
        for (int i = 0; i < P; ++i) s += p[i];
        out[c] = s / P;
    }
    return detail::make_op(std::move(out), {x}, [x, C, P](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (int c = 0; c < C; ++c) {
            const double gv = n.grad[c] / P;
            double* p = &g.data[static_cast<std::size_t>(c) * P];
            for (int i = 0; i < P; ++i) p[i] += gv;
        }
    });
}

inline Var mean_all(const Var& x) {
    const std::size_t N = x->value.numel();
    double s = 0.0;
    for (double v : x->value.data) s += v;
    Tensor out = Tensor::scalar(s / static_cast<double>(N));
    return detail::make_op(std::move(out), {x}, [x, N](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        const double gv = n.grad[0] / static_cast<double>(N);
        for (std::size_t i = 0; i < N; ++i) g[i] += gv;
    });
}

inline Var sum_all(const Var& x) {
    double s = 0.0;
    for (double v : x->value.data) s += v;
    Tensor out = Tensor::scalar(s);
    return detail::make_op(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        auto& g = x->grad_buf();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0];
    });
}

// mean |a - b| over all elements; subgradient 0 at ties
inline Var mean_abs_diff(const Var& a, const Var& b) {
    check_shape(a->value.same_shape(b->value), "mean_abs_diff");
    const std::size_t N = a->value.numel();
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) s += std::abs(a->value[i] - b->value[i]);
    Tensor out = Tensor::scalar(s / static_cast<double>(N));
    return detail::make_op(std::move(out), {a, b}, [a, b, N](Node& n) {
        const double gv = n.grad[0] / static_cast<double>(N);
        for (std::size_t i = 0; i < N; ++i) {
            const double d = a->value[i] - b->value[i];
            const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (a->requires_grad) a->grad_buf()[i] += gv * sgn;
            if (b->requires_grad) b->grad_buf()[i] -= gv * sgn;
        }
    });
}

// mean of a list of scalar vars
inline Var mean_scalars(const std::vector<Var>& xs) {
    check_shape(!xs.empty(), "mean_scalars");
    Var acc = xs[0];
    for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return scale(acc, 1.0 / static_cast<double>(xs.size()));
}

}  // namespace ganodet
