#pragma once

// Reverse-mode autograd over Tensor. Define-by-run tape: each op returns a
// Var holding the result, its parents and a backward closure. Graph
// construction is skipped entirely inside NoGradGuard or when no parent
// requires gradients, so inference paths pay only for the forward math.
//
// All matrix-heavy ops (linear, conv2d, attention) go through Eigen GEMMs
// on row-major maps. Everything is double precision; gradients are exact
// enough to compare against central finite differences at tight tolerance.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "badt2i/tensor.hpp"

namespace badt2i {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

struct GradMode {
    static bool& enabled() {
        thread_local bool on = true;
        return on;
    }
};

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
    ~NoGradGuard() { GradMode::enabled() = prev; }
};

class VarNode;
using Var = std::shared_ptr<VarNode>;

class VarNode {
public:
    Tensor value;
    Tensor grad;  // allocated on first use
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(VarNode&)> backward_fn;

    explicit VarNode(Tensor v) : value(std::move(v)) {}

    void ensure_grad() {
        if (grad.empty()) grad = Tensor::zeros(value.shape());
    }
    void accumulate(const Tensor& g) {
        ensure_grad();
        grad.add_(g);
    }
};

inline Var leaf(Tensor v) {
    auto n = std::make_shared<VarNode>(std::move(v));
    n->requires_grad = true;
    return n;
}

inline Var constant(Tensor v) { return std::make_shared<VarNode>(std::move(v)); }

namespace detail {

inline bool track(const std::initializer_list<Var>& parents) {
    if (!GradMode::enabled()) return false;
    for (const auto& p : parents)
        if (p && p->requires_grad) return true;
    return false;
}

inline Var make_op(Tensor out, std::initializer_list<Var> parents,
                   std::function<void(VarNode&)> bw) {
    auto n = std::make_shared<VarNode>(std::move(out));
    if (track(parents)) {
        n->requires_grad = true;
        n->parents.assign(parents);
        n->backward_fn = std::move(bw);
    }
    return n;
}

}  // namespace detail

// Runs backward from a scalar root, accumulating into every reachable
// leaf's grad. Grads are not cleared here; callers zero them per step.
inline void backward(const Var& root) {
    if (root->value.size() != 1) throw BoundsError("backward: root must be scalar");
    // iterative post-order topological sort
    std::vector<VarNode*> order;
    std::unordered_set<VarNode*> seen;
    std::vector<std::pair<VarNode*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            VarNode* p = node->parents[next++].get();
            if (p && p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad.fill_(0.0);
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        VarNode* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// ----------------------------- elementwise -----------------------------

inline Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw BoundsError("add: shape mismatch");
    Tensor out = a->value;
    out.add_(b->value);
    return detail::make_op(std::move(out), {a, b}, [a, b](VarNode& n) {
        if (a->requires_grad) a->accumulate(n.grad);
        if (b->requires_grad) b->accumulate(n.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw BoundsError("sub: shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    return detail::make_op(std::move(out), {a, b}, [a, b](VarNode& n) {
        if (a->requires_grad) a->accumulate(n.grad);
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad[i] -= n.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw BoundsError("mul: shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return detail::make_op(std::move(out), {a, b}, [a, b](VarNode& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i] * a->value[i];
        }
    });
}

inline Var scale(const Var& a, double c) {
    Tensor out = a->value;
    out.scale_(c);
    return detail::make_op(std::move(out), {a}, [a, c](VarNode& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += c * n.grad[i];
    });
}

// ca*a + cb*b
inline Var lincomb(double ca, const Var& a, double cb, const Var& b) {
    if (!a->value.same_shape(b->value)) throw BoundsError("lincomb: shape mismatch");
    Tensor out(a->value.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = ca * a->value[i] + cb * b->value[i];
    return detail::make_op(std::move(out), {a, b}, [a, b, ca, cb](VarNode& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += ca * n.grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += cb * n.grad[i];
        }
    });
}

inline Var silu(const Var& a) {
    Tensor out(a->value.shape());
    for (size_t i = 0; i < out.size(); ++i) {
        double x = a->value[i];
        out[i] = x / (1.0 + std::exp(-x));
    }
    return detail::make_op(std::move(out), {a}, [a](VarNode& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            double x = a->value[i];
            double s = 1.0 / (1.0 + std::exp(-x));
            a->grad[i] += n.grad[i] * s * (1.0 + x * (1.0 - s));
        }
    });
}

inline Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a->value.reshaped(shape);
    return detail::make_op(std::move(out), {a}, [a](VarNode& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    });
}

// ----------------------------- matmul / linear -----------------------------

inline Var matmul(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
        throw BoundsError("matmul: bad shapes");
    int m = a->value.dim(0), k = a->value.dim(1), n2 = b->value.dim(1);
    Tensor out({m, n2});
    MapM(out.data(), m, n2).noalias() =
        MapCM(a->value.data(), m, k) * MapCM(b->value.data(), k, n2);
    return detail::make_op(std::move(out), {a, b}, [a, b, m, k, n2](VarNode& n) {
        MapCM g(n.grad.data(), m, n2);
        if (a->requires_grad) {
            a->ensure_grad();
            MapM(a->grad.data(), m, k).noalias() += g * MapCM(b->value.data(), k, n2).transpose();
        }
        if (b->requires_grad) {
            b->ensure_grad();
            MapM(b->grad.data(), k, n2).noalias() += MapCM(a->value.data(), m, k).transpose() * g;
        }
    });
}

// a[N,D] * b[M,D]^T -> [N,M]
inline Var matmul_nt(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(1))
        throw BoundsError("matmul_nt: bad shapes");
    int n1 = a->value.dim(0), d = a->value.dim(1), m = b->value.dim(0);
    Tensor out({n1, m});
    MapM(out.data(), n1, m).noalias() =
        MapCM(a->value.data(), n1, d) * MapCM(b->value.data(), m, d).transpose();
    return detail::make_op(std::move(out), {a, b}, [a, b, n1, d, m](VarNode& n) {
        MapCM g(n.grad.data(), n1, m);
        if (a->requires_grad) {
            a->ensure_grad();
            MapM(a->grad.data(), n1, d).noalias() += g * MapCM(b->value.data(), m, d);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            MapM(b->grad.data(), m, d).noalias() += g.transpose() * MapCM(a->value.data(), n1, d);
        }
    });
}

// x[..., In] -> [..., Out] with w[Out, In], optional bias[Out]
inline Var linear(const Var& x, const Var& w, const Var& b) {
    int in = w->value.dim(1), out_dim = w->value.dim(0);
    if (x->value.dim(x->value.rank() - 1) != in) throw BoundsError("linear: in-dim mismatch");
    int64_t rows = static_cast<int64_t>(x->value.size()) / in;
    std::vector<int> out_shape = x->value.shape();
    out_shape.back() = out_dim;
    Tensor out(out_shape);
    MapM y(out.data(), rows, out_dim);
    y.noalias() = MapCM(x->value.data(), rows, in) * MapCM(w->value.data(), out_dim, in).transpose();
    if (b) {
        Eigen::Map<const Eigen::VectorXd> bv(b->value.data(), out_dim);
        y.rowwise() += bv.transpose();
    }
    return detail::make_op(std::move(out), {x, w, b}, [x, w, b, rows, in, out_dim](VarNode& n) {
        MapCM g(n.grad.data(), rows, out_dim);
        if (x->requires_grad) {
            x->ensure_grad();
            MapM(x->grad.data(), rows, in).noalias() += g * MapCM(w->value.data(), out_dim, in);
        }
        if (w->requires_grad) {
            w->ensure_grad();
            MapM(w->grad.data(), out_dim, in).noalias() +=
                g.transpose() * MapCM(x->value.data(), rows, in);
        }
        if (b && b->requires_grad) {
            b->ensure_grad();
            Eigen::Map<Eigen::VectorXd>(b->grad.data(), out_dim) += g.colwise().sum().transpose();
        }
    });
}

// ----------------------------- convolution -----------------------------

namespace detail {

// column-major-of-patches layout: colT[(c*kh + i)*kw + j][oh*OW + ow]
inline void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad,
                   int OH, int OW, double* colT) {
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                double* dst = colT + ((static_cast<size_t>(c) * kh + i) * kw + j) *
                                         (static_cast<size_t>(OH) * OW);
                for (int oh = 0; oh < OH; ++oh) {
                    int ih = oh * stride - pad + i;
                    if (ih < 0 || ih >= H) {
                        std::fill(dst + static_cast<size_t>(oh) * OW,
                                  dst + static_cast<size_t>(oh + 1) * OW, 0.0);
                        continue;
                    }
                    const double* src = x + (static_cast<size_t>(c) * H + ih) * W;
                    for (int ow = 0; ow < OW; ++ow) {
                        int iw = ow * stride - pad + j;
                        dst[static_cast<size_t>(oh) * OW + ow] =
                            (iw < 0 || iw >= W) ? 0.0 : src[iw];
                    }
                }
            }
        }
    }
}

inline void col2im_add(const double* colT, int C, int H, int W, int kh, int kw, int stride,
                       int pad, int OH, int OW, double* dx) {
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const double* src = colT + ((static_cast<size_t>(c) * kh + i) * kw + j) *
                                               (static_cast<size_t>(OH) * OW);
                for (int oh = 0; oh < OH; ++oh) {
                    int ih = oh * stride - pad + i;
                    if (ih < 0 || ih >= H) continue;
                    double* dst = dx + (static_cast<size_t>(c) * H + ih) * W;
                    for (int ow = 0; ow < OW; ++ow) {
                        int iw = ow * stride - pad + j;
                        if (iw >= 0 && iw < W) dst[iw] += src[static_cast<size_t>(oh) * OW + ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// x[B,C,H,W], w[O,C,kh,kw], optional bias[O]
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->value.rank() != 4 || w->value.rank() != 4) throw BoundsError("conv2d: rank");
    int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    int O = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    if (w->value.dim(1) != C) throw BoundsError("conv2d: channel mismatch");
    int OH = (H + 2 * pad - kh) / stride + 1;
    int OW = (W + 2 * pad - kw) / stride + 1;
    int ckk = C * kh * kw, hw = OH * OW;
    Tensor out({B, O, OH, OW});
    std::vector<double> colT(static_cast<size_t>(ckk) * hw);
    MapCM wm(w->value.data(), O, ckk);
    for (int bi = 0; bi < B; ++bi) {
        detail::im2col(x->value.data() + static_cast<size_t>(bi) * C * H * W, C, H, W, kh, kw,
                       stride, pad, OH, OW, colT.data());
        MapM(out.data() + static_cast<size_t>(bi) * O * hw, O, hw).noalias() =
            wm * MapCM(colT.data(), ckk, hw);
    }
    if (b) {
        for (int bi = 0; bi < B; ++bi)
            for (int o = 0; o < O; ++o) {
                double bv = b->value[static_cast<size_t>(o)];
                double* p = out.data() + (static_cast<size_t>(bi) * O + o) * hw;
                for (int i = 0; i < hw; ++i) p[i] += bv;
            }
    }
    auto bw = [x, w, b, B, C, H, W, O, kh, kw, stride, pad, OH, OW, ckk, hw](VarNode& n) {
        std::vector<double> colT(static_cast<size_t>(ckk) * hw);
        std::vector<double> dcolT(static_cast<size_t>(ckk) * hw);
        if (x->requires_grad) x->ensure_grad();
        if (w->requires_grad) w->ensure_grad();
        if (b && b->requires_grad) b->ensure_grad();
        MapCM wm(w->value.data(), O, ckk);
        for (int bi = 0; bi < B; ++bi) {
            MapCM g(n.grad.data() + static_cast<size_t>(bi) * O * hw, O, hw);
            if (w->requires_grad || x->requires_grad)
                detail::im2col(x->value.data() + static_cast<size_t>(bi) * C * H * W, C, H, W, kh,
                               kw, stride, pad, OH, OW, colT.data());
            if (w->requires_grad)
                MapM(w->grad.data(), O, ckk).noalias() +=
                    g * MapCM(colT.data(), ckk, hw).transpose();
            if (x->requires_grad) {
                MapM(dcolT.data(), ckk, hw).noalias() = wm.transpose() * g;
                detail::col2im_add(dcolT.data(), C, H, W, kh, kw, stride, pad, OH, OW,
                                   x->grad.data() + static_cast<size_t>(bi) * C * H * W);
            }
            if (b && b->requires_grad)
                for (int o = 0; o < O; ++o) b->grad[static_cast<size_t>(o)] += g.row(o).sum();
        }
    };
    return detail::make_op(std::move(out), {x, w, b}, std::move(bw));
}

// nearest-neighbor x2
inline Var upsample2(const Var& x) {
    int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    Tensor out({B, C, 2 * H, 2 * W});
    for (int bc = 0; bc < B * C; ++bc) {
        const double* src = x->value.data() + static_cast<size_t>(bc) * H * W;
        double* dst = out.data() + static_cast<size_t>(bc) * 4 * H * W;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                double v = src[static_cast<size_t>(i) * W + j];
                size_t o = (static_cast<size_t>(2 * i) * 2 * W) + 2 * j;
                dst[o] = v;
                dst[o + 1] = v;
                dst[o + 2 * W] = v;
                dst[o + 2 * W + 1] = v;
            }
    }
    return detail::make_op(std::move(out), {x}, [x, B, C, H, W](VarNode& n) {
        x->ensure_grad();
        for (int bc = 0; bc < B * C; ++bc) {
            double* dst = x->grad.data() + static_cast<size_t>(bc) * H * W;
            const double* g = n.grad.data() + static_cast<size_t>(bc) * 4 * H * W;
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    size_t o = (static_cast<size_t>(2 * i) * 2 * W) + 2 * j;
                    dst[static_cast<size_t>(i) * W + j] +=
                        g[o] + g[o + 1] + g[o + 2 * W] + g[o + 2 * W + 1];
                }
        }
    });
}

// global average pool: [B,C,H,W] -> [B,C]
inline Var avg_pool_all(const Var& x) {
    int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    int hw = H * W;
    Tensor out({B, C});
    for (int bc = 0; bc < B * C; ++bc) {
        const double* p = x->value.data() + static_cast<size_t>(bc) * hw;
        double s = 0.0;
        for (int i = 0; i < hw; ++i) s += p[i];
        out[static_cast<size_t>(bc)] = s / hw;
    }
    return detail::make_op(std::move(out), {x}, [x, B, C, hw](VarNode& n) {
        x->ensure_grad();
        for (int bc = 0; bc < B * C; ++bc) {
            double g = n.grad[static_cast<size_t>(bc)] / hw;
            double* p = x->grad.data() + static_cast<size_t>(bc) * hw;
            for (int i = 0; i < hw; ++i) p[i] += g;
        }
    });
}

// ----------------------------- normalization -----------------------------

// x[B,C,H,W], gamma[C], beta[C]; stats per (batch, group)
inline Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
                      double eps = 1e-5) {
    int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    if (C % groups != 0) throw BoundsError("group_norm: groups must divide channels");
    int cg = C / groups, gn = cg * H * W;
    Tensor out(x->value.shape());
    auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(B) * groups * 2);
    for (int b = 0; b < B; ++b) {
        for (int g = 0; g < groups; ++g) {
            const double* p =
                x->value.data() + (static_cast<size_t>(b) * C + static_cast<size_t>(g) * cg) * H * W;
            double mean = 0.0;
            for (int i = 0; i < gn; ++i) mean += p[i];
            mean /= gn;
            double var = 0.0;
            for (int i = 0; i < gn; ++i) {
                double d = p[i] - mean;
                var += d * d;
            }
            var /= gn;
            double inv = 1.0 / std::sqrt(var + eps);
            (*stats)[(static_cast<size_t>(b) * groups + g) * 2] = mean;
            (*stats)[(static_cast<size_t>(b) * groups + g) * 2 + 1] = inv;
            double* q = out.data() + (static_cast<size_t>(b) * C + static_cast<size_t>(g) * cg) * H * W;
            for (int c = 0; c < cg; ++c) {
                double ga = gamma->value[static_cast<size_t>(g) * cg + c];
                double be = beta->value[static_cast<size_t>(g) * cg + c];
                for (int i = 0; i < H * W; ++i) {
                    size_t off = static_cast<size_t>(c) * H * W + i;
                    q[off] = ga * (p[off] - mean) * inv + be;
                }
            }
        }
    }
    auto bw = [x, gamma, beta, stats, B, C, H, W, groups, cg, gn](VarNode& n) {
        if (x->requires_grad) x->ensure_grad();
        if (gamma->requires_grad) gamma->ensure_grad();
        if (beta->requires_grad) beta->ensure_grad();
        int hw = H * W;
        std::vector<double> xhat(static_cast<size_t>(gn)), wg(static_cast<size_t>(gn));
        for (int b = 0; b < B; ++b) {
            for (int g = 0; g < groups; ++g) {
                size_t base = (static_cast<size_t>(b) * C + static_cast<size_t>(g) * cg) *
                              static_cast<size_t>(hw);
                double mean = (*stats)[(static_cast<size_t>(b) * groups + g) * 2];
                double inv = (*stats)[(static_cast<size_t>(b) * groups + g) * 2 + 1];
                const double* p = x->value.data() + base;
                const double* gr = n.grad.data() + base;
                double wsum = 0.0, wxsum = 0.0;
                for (int c = 0; c < cg; ++c) {
                    double ga = gamma->value[static_cast<size_t>(g) * cg + c];
                    for (int i = 0; i < hw; ++i) {
                        size_t off = static_cast<size_t>(c) * hw + i;
                        double xh = (p[off] - mean) * inv;
                        xhat[off] = xh;
                        double w = ga * gr[off];
                        wg[off] = w;
                        wsum += w;
                        wxsum += w * xh;
                    }
                }
                if (gamma->requires_grad || beta->requires_grad) {
                    for (int c = 0; c < cg; ++c) {
                        double dg = 0.0, db = 0.0;
                        for (int i = 0; i < hw; ++i) {
                            size_t off = static_cast<size_t>(c) * hw + i;
                            dg += gr[off] * xhat[off];
                            db += gr[off];
                        }
                        if (gamma->requires_grad)
                            gamma->grad[static_cast<size_t>(g) * cg + c] += dg;
                        if (beta->requires_grad) beta->grad[static_cast<size_t>(g) * cg + c] += db;
                    }
                }
                if (x->requires_grad) {
                    double mw = wsum / gn, mwx = wxsum / gn;
                    double* dx = x->grad.data() + base;
                    for (size_t off = 0; off < static_cast<size_t>(gn); ++off)
                        dx[off] += inv * (wg[off] - mw - xhat[off] * mwx);
                }
            }
        }
    };
    return detail::make_op(std::move(out), {x, gamma, beta}, std::move(bw));
}

// x[..., D] normalized per row
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
    int d = x->value.dim(x->value.rank() - 1);
    int64_t rows = static_cast<int64_t>(x->value.size()) / d;
    Tensor out(x->value.shape());
    auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * 2);
    for (int64_t r = 0; r < rows; ++r) {
        const double* p = x->value.data() + r * d;
        double mean = 0.0;
        for (int i = 0; i < d; ++i) mean += p[i];
        mean /= d;
        double var = 0.0;
        for (int i = 0; i < d; ++i) {
            double dd = p[i] - mean;
            var += dd * dd;
        }
        var /= d;
        double inv = 1.0 / std::sqrt(var + eps);
        (*stats)[static_cast<size_t>(r) * 2] = mean;
        (*stats)[static_cast<size_t>(r) * 2 + 1] = inv;
        double* q = out.data() + r * d;
        for (int i = 0; i < d; ++i)
            q[i] = gamma->value[static_cast<size_t>(i)] * (p[i] - mean) * inv +
                   beta->value[static_cast<size_t>(i)];
    }
    auto bw = [x, gamma, beta, stats, rows, d](VarNode& n) {
        if (x->requires_grad) x->ensure_grad();
        if (gamma->requires_grad) gamma->ensure_grad();
        if (beta->requires_grad) beta->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            double mean = (*stats)[static_cast<size_t>(r) * 2];
            double inv = (*stats)[static_cast<size_t>(r) * 2 + 1];
            const double* p = x->value.data() + r * d;
            const double* gr = n.grad.data() + r * d;
            double wsum = 0.0, wxsum = 0.0;
            for (int i = 0; i < d; ++i) {
                double xh = (p[i] - mean) * inv;
                double w = gamma->value[static_cast<size_t>(i)] * gr[i];
                wsum += w;
                wxsum += w * xh;
                if (gamma->requires_grad) gamma->grad[static_cast<size_t>(i)] += gr[i] * xh;
                if (beta->requires_grad) beta->grad[static_cast<size_t>(i)] += gr[i];
            }
            if (x->requires_grad) {
                double mw = wsum / d, mwx = wxsum / d;
                double* dx = x->grad.data() + r * d;
                for (int i = 0; i < d; ++i) {
                    double xh = (p[i] - mean) * inv;
                    dx[i] += inv * (gamma->value[static_cast<size_t>(i)] * gr[i] - mw - xh * mwx);
                }
            }
        }
    };
    return detail::make_op(std::move(out), {x, gamma, beta}, std::move(bw));
}

// ----------------------------- attention -----------------------------

// q[B,Nq,D], k[B,Nk,D], v[B,Nk,Dv] -> [B,Nq,Dv]; scaled dot-product, softmax rows
inline Var attention(const Var& q, const Var& k, const Var& v) {
    int B = q->value.dim(0), Nq = q->value.dim(1), D = q->value.dim(2);
    int Nk = k->value.dim(1), Dv = v->value.dim(2);
    if (k->value.dim(2) != D || v->value.dim(1) != Nk || k->value.dim(0) != B ||
        v->value.dim(0) != B)
        throw BoundsError("attention: bad shapes");
    double scl = 1.0 / std::sqrt(static_cast<double>(D));
    Tensor out({B, Nq, Dv});
    auto attn = std::make_shared<Tensor>(Tensor({B, Nq, Nk}));
    for (int b = 0; b < B; ++b) {
        MapCM Q(q->value.data() + static_cast<size_t>(b) * Nq * D, Nq, D);
        MapCM K(k->value.data() + static_cast<size_t>(b) * Nk * D, Nk, D);
        MapCM V(v->value.data() + static_cast<size_t>(b) * Nk * Dv, Nk, Dv);
        MapM A(attn->data() + static_cast<size_t>(b) * Nq * Nk, Nq, Nk);
        A.noalias() = Q * K.transpose() * scl;
        for (int i = 0; i < Nq; ++i) {
            double mx = A.row(i).maxCoeff();
            A.row(i) = (A.row(i).array() - mx).exp();
            A.row(i) /= A.row(i).sum();
        }
        MapM(out.data() + static_cast<size_t>(b) * Nq * Dv, Nq, Dv).noalias() = A * V;
    }
    auto bw = [q, k, v, attn, B, Nq, Nk, D, Dv, scl](VarNode& n) {
        if (q->requires_grad) q->ensure_grad();
        if (k->requires_grad) k->ensure_grad();
        if (v->requires_grad) v->ensure_grad();
        MatRM dS(Nq, Nk);
        for (int b = 0; b < B; ++b) {
            MapCM G(n.grad.data() + static_cast<size_t>(b) * Nq * Dv, Nq, Dv);
            MapCM A(attn->data() + static_cast<size_t>(b) * Nq * Nk, Nq, Nk);
            MapCM Q(q->value.data() + static_cast<size_t>(b) * Nq * D, Nq, D);
            MapCM K(k->value.data() + static_cast<size_t>(b) * Nk * D, Nk, D);
            MapCM V(v->value.data() + static_cast<size_t>(b) * Nk * Dv, Nk, Dv);
            if (v->requires_grad)
                MapM(v->grad.data() + static_cast<size_t>(b) * Nk * Dv, Nk, Dv).noalias() +=
                    A.transpose() * G;
            if (q->requires_grad || k->requires_grad) {
                dS.noalias() = G * V.transpose();  // dA
                for (int i = 0; i < Nq; ++i) {
                    double dot = dS.row(i).dot(A.row(i));
                    dS.row(i) = A.row(i).array() * (dS.row(i).array() - dot);
                }
                if (q->requires_grad)
                    MapM(q->grad.data() + static_cast<size_t>(b) * Nq * D, Nq, D).noalias() +=
                        dS * K * scl;
                if (k->requires_grad)
                    MapM(k->grad.data() + static_cast<size_t>(b) * Nk * D, Nk, D).noalias() +=
                        dS.transpose() * Q * scl;
            }
        }
    };
    return detail::make_op(std::move(out), {q, k, v}, std::move(bw));
}

// ----------------------------- structure ops -----------------------------

// table[V,D], ids flattened [B*L] -> [B,L,D]
inline Var embedding(const Var& table, const std::vector<int>& ids, int B, int L) {
    int V = table->value.dim(0), D = table->value.dim(1);
    if (static_cast<int>(ids.size()) != B * L) throw BoundsError("embedding: id count");
    for (int id : ids)
        if (id < 0 || id >= V) throw DataError("embedding: token id out of vocabulary range");
    Tensor out({B, L, D});
    for (size_t i = 0; i < ids.size(); ++i)
        std::memcpy(out.data() + i * D, table->value.data() + static_cast<size_t>(ids[i]) * D,
                    sizeof(double) * D);
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    return detail::make_op(std::move(out), {table}, [table, ids_copy, D](VarNode& n) {
        table->ensure_grad();
        for (size_t i = 0; i < ids_copy->size(); ++i) {
            double* dst = table->grad.data() + static_cast<size_t>((*ids_copy)[i]) * D;
            const double* g = n.grad.data() + i * D;
            for (int j = 0; j < D; ++j) dst[j] += g[j];
        }
    });
}

inline Var concat_ch(const Var& a, const Var& b) {
    int B = a->value.dim(0), C1 = a->value.dim(1), H = a->value.dim(2), W = a->value.dim(3);
    int C2 = b->value.dim(1);
    if (b->value.dim(0) != B || b->value.dim(2) != H || b->value.dim(3) != W)
        throw BoundsError("concat_ch: shape mismatch");
    Tensor out({B, C1 + C2, H, W});
    size_t hw = static_cast<size_t>(H) * W;
    for (int bi = 0; bi < B; ++bi) {
        std::memcpy(out.data() + static_cast<size_t>(bi) * (C1 + C2) * hw,
                    a->value.data() + static_cast<size_t>(bi) * C1 * hw, sizeof(double) * C1 * hw);
        std::memcpy(out.data() + (static_cast<size_t>(bi) * (C1 + C2) + C1) * hw,
                    b->value.data() + static_cast<size_t>(bi) * C2 * hw, sizeof(double) * C2 * hw);
    }
    return detail::make_op(std::move(out), {a, b}, [a, b, B, C1, C2, hw](VarNode& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (int bi = 0; bi < B; ++bi) {
                const double* g = n.grad.data() + static_cast<size_t>(bi) * (C1 + C2) * hw;
                double* dst = a->grad.data() + static_cast<size_t>(bi) * C1 * hw;
                for (size_t i = 0; i < C1 * hw; ++i) dst[i] += g[i];
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int bi = 0; bi < B; ++bi) {
                const double* g =
                    n.grad.data() + (static_cast<size_t>(bi) * (C1 + C2) + C1) * hw;
                double* dst = b->grad.data() + static_cast<size_t>(bi) * C2 * hw;
                for (size_t i = 0; i < C2 * hw; ++i) dst[i] += g[i];
            }
        }
    });
}

// [B,C,H,W] -> [B,H*W,C]
inline Var nchw_to_nlc(const Var& x) {
    int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    int N = H * W;
    Tensor out({B, N, C});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double* src = x->value.data() + (static_cast<size_t>(b) * C + c) * N;
            double* dst = out.data() + static_cast<size_t>(b) * N * C + c;
            for (int i = 0; i < N; ++i) dst[static_cast<size_t>(i) * C] = src[i];
        }
    return detail::make_op(std::move(out), {x}, [x, B, C, N](VarNode& n) {
        x->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                double* dst = x->grad.data() + (static_cast<size_t>(b) * C + c) * N;
                const double* g = n.grad.data() + static_cast<size_t>(b) * N * C + c;
                for (int i = 0; i < N; ++i) dst[i] += g[static_cast<size_t>(i) * C];
            }
    });
}

// [B,N,C] -> [B,C,H,W] with N == H*W
inline Var nlc_to_nchw(const Var& x, int H, int W) {
    int B = x->value.dim(0), N = x->value.dim(1), C = x->value.dim(2);
    if (N != H * W) throw BoundsError("nlc_to_nchw: size mismatch");
    Tensor out({B, C, H, W});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double* dst = out.data() + (static_cast<size_t>(b) * C + c) * N;
            const double* src = x->value.data() + static_cast<size_t>(b) * N * C + c;
            for (int i = 0; i < N; ++i) dst[i] = src[static_cast<size_t>(i) * C];
        }
    return detail::make_op(std::move(out), {x}, [x, B, C, N](VarNode& n) {
        x->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const double* g = n.grad.data() + (static_cast<size_t>(b) * C + c) * N;
                double* dst = x->grad.data() + static_cast<size_t>(b) * N * C + c;
                for (int i = 0; i < N; ++i) dst[static_cast<size_t>(i) * C] += g[i];
            }
    });
}

// x[B,C,H,W] + v[B,C] broadcast over spatial dims
inline Var add_channel_bias(const Var& x, const Var& v) {
    int B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    if (v->value.dim(0) != B || v->value.dim(1) != C) throw BoundsError("add_channel_bias");
    int hw = H * W;
    Tensor out = x->value;
    for (int bc = 0; bc < B * C; ++bc) {
        double bv = v->value[static_cast<size_t>(bc)];
        double* p = out.data() + static_cast<size_t>(bc) * hw;
        for (int i = 0; i < hw; ++i) p[i] += bv;
    }
    return detail::make_op(std::move(out), {x, v}, [x, v, B, C, hw](VarNode& n) {
        if (x->requires_grad) x->accumulate(n.grad);
        if (v->requires_grad) {
            v->ensure_grad();
            for (int bc = 0; bc < B * C; ++bc) {
                const double* g = n.grad.data() + static_cast<size_t>(bc) * hw;
                double s = 0.0;
                for (int i = 0; i < hw; ++i) s += g[i];
                v->grad[static_cast<size_t>(bc)] += s;
            }
        }
    });
}

// mean over axis 1: [B,L,D] -> [B,D]
inline Var mean_rows(const Var& x) {
    int B = x->value.dim(0), L = x->value.dim(1), D = x->value.dim(2);
    Tensor out({B, D});
    for (int b = 0; b < B; ++b) {
        double* dst = out.data() + static_cast<size_t>(b) * D;
        for (int l = 0; l < L; ++l) {
            const double* src = x->value.data() + (static_cast<size_t>(b) * L + l) * D;
            for (int d = 0; d < D; ++d) dst[d] += src[d];
        }
        for (int d = 0; d < D; ++d) dst[d] /= L;
    }
    return detail::make_op(std::move(out), {x}, [x, B, L, D](VarNode& n) {
        x->ensure_grad();
        for (int b = 0; b < B; ++b) {
            const double* g = n.grad.data() + static_cast<size_t>(b) * D;
            for (int l = 0; l < L; ++l) {
                double* dst = x->grad.data() + (static_cast<size_t>(b) * L + l) * D;
                for (int d = 0; d < D; ++d) dst[d] += g[d] / L;
            }
        }
    });
}

// rows of x[N,D] scaled to unit L2 norm
inline Var l2_normalize_rows(const Var& x, double eps = 1e-8) {
    int N = x->value.dim(0), D = x->value.dim(1);
    Tensor out(x->value.shape());
    auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(N));
    for (int r = 0; r < N; ++r) {
        const double* p = x->value.data() + static_cast<size_t>(r) * D;
        double s = 0.0;
        for (int i = 0; i < D; ++i) s += p[i] * p[i];
        double nr = std::sqrt(s) + eps;
        (*norms)[static_cast<size_t>(r)] = nr;
        double* q = out.data() + static_cast<size_t>(r) * D;
        for (int i = 0; i < D; ++i) q[i] = p[i] / nr;
    }
    return detail::make_op(std::move(out), {x}, [x, norms, N, D](VarNode& n) {
        x->ensure_grad();
        for (int r = 0; r < N; ++r) {
            double nr = (*norms)[static_cast<size_t>(r)];
            const double* p = x->value.data() + static_cast<size_t>(r) * D;
            const double* g = n.grad.data() + static_cast<size_t>(r) * D;
            double dot = 0.0;
            for (int i = 0; i < D; ++i) dot += p[i] * g[i];
            dot /= (nr * nr);
            double* dx = x->grad.data() + static_cast<size_t>(r) * D;
            for (int i = 0; i < D; ++i) dx[i] += (g[i] - p[i] * dot) / nr;
        }
    });
}

// ----------------------------- losses -----------------------------

inline Var mean_all(const Var& x) {
    Tensor out = Tensor::scalar(x->value.mean());
    int64_t n = static_cast<int64_t>(x->value.size());
    return detail::make_op(std::move(out), {x}, [x, n](VarNode& nn) {
        x->ensure_grad();
        double g = nn.grad[0] / static_cast<double>(n);
        for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
    });
}

// mean((a-b)^2) over all elements
inline Var mse_loss(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw BoundsError("mse_loss: shape mismatch");
    int64_t n = static_cast<int64_t>(a->value.size());
    double s = 0.0;
    for (size_t i = 0; i < a->value.size(); ++i) {
        double d = a->value[i] - b->value[i];
        s += d * d;
    }
    Tensor out = Tensor::scalar(s / static_cast<double>(n));
    return detail::make_op(std::move(out), {a, b}, [a, b, n](VarNode& nn) {
        double g = 2.0 * nn.grad[0] / static_cast<double>(n);
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < a->grad.size(); ++i)
                a->grad[i] += g * (a->value[i] - b->value[i]);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < b->grad.size(); ++i)
                b->grad[i] -= g * (a->value[i] - b->value[i]);
        }
    });
}

// mean NLL over rows of logits[N,K] with integer targets
inline Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets) {
    int N = logits->value.dim(0), K = logits->value.dim(1);
    if (static_cast<int>(targets.size()) != N) throw BoundsError("cross_entropy: target count");
    auto probs = std::make_shared<Tensor>(Tensor({N, K}));
    double loss = 0.0;
    for (int r = 0; r < N; ++r) {
        const double* p = logits->value.data() + static_cast<size_t>(r) * K;
        double mx = p[0];
        for (int i = 1; i < K; ++i) mx = std::max(mx, p[i]);
        double z = 0.0;
        for (int i = 0; i < K; ++i) z += std::exp(p[i] - mx);
        double logz = std::log(z) + mx;
        for (int i = 0; i < K; ++i) probs->at(r, i) = std::exp(p[i] - logz);
        loss -= (p[targets[static_cast<size_t>(r)]] - logz);
    }
    Tensor out = Tensor::scalar(loss / N);
    auto tgt = std::make_shared<std::vector<int>>(targets);
    return detail::make_op(std::move(out), {logits}, [logits, probs, tgt, N, K](VarNode& nn) {
        logits->ensure_grad();
        double g = nn.grad[0] / N;
        for (int r = 0; r < N; ++r) {
            double* dst = logits->grad.data() + static_cast<size_t>(r) * K;
            const double* pr = probs->data() + static_cast<size_t>(r) * K;
            for (int i = 0; i < K; ++i) dst[i] += g * pr[i];
            dst[(*tgt)[static_cast<size_t>(r)]] -= g;
        }
    });
}

}  // namespace badt2i
