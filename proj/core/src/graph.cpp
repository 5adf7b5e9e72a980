#include "vsal/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <utility>

#include "vsal/errors.hpp"

namespace vsal {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

int conv_out_extent(int in, int k, int stride, int pad, int dil) {
    const int eff = dil * (k - 1) + 1;
    const int num = in + 2 * pad - eff;
    if (num < 0) throw ShapeError("conv kernel larger than padded input");
    return num / stride + 1;
}

void im2col(const Tensor& x, int k, int stride, int pad, int dil, int ho, int wo, double* cols) {
    const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::int64_t n = static_cast<std::int64_t>(ho) * wo;
    const double* src = x.data();
    std::int64_t r = 0;
    for (int ci = 0; ci < cin; ++ci) {
        const double* plane = src + static_cast<std::int64_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++r) {
                double* dst = cols + r * n;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky * dil;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + wo, 0.0);
                        dst += wo;
                        continue;
                    }
                    const double* row = plane + static_cast<std::int64_t>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx * dil;
                        *dst++ = (ix >= 0 && ix < w) ? row[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_acc(const double* cols, int cin, int h, int w, int k, int stride, int pad, int dil,
                int ho, int wo, Tensor& dx) {
    const std::int64_t n = static_cast<std::int64_t>(ho) * wo;
    double* dst = dx.data();
    std::int64_t r = 0;
    for (int ci = 0; ci < cin; ++ci) {
        double* plane = dst + static_cast<std::int64_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++r) {
                const double* src = cols + r * n;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky * dil;
                    if (iy < 0 || iy >= h) {
                        src += wo;
                        continue;
                    }
                    double* row = plane + static_cast<std::int64_t>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx * dil;
                        if (ix >= 0 && ix < w) row[ix] += src[ox];
                    }
                    src += wo;
                }
            }
        }
    }
}

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

VarId Graph::emplace(Tensor value, bool requires_grad, std::function<void(Graph&)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size() - 1);
}

VarId Graph::leaf(Tensor value, bool requires_grad) {
    return emplace(std::move(value), requires_grad, nullptr);
}

Tensor& Graph::grad_buf(VarId id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_ready) {
        n.grad = Tensor(n.value.shape());
        n.grad_ready = true;
    }
    return n.grad;
}

const Tensor& Graph::grad(VarId id) { return grad_buf(id); }

void Graph::accumulate(VarId id, const Tensor& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    Tensor& buf = grad_buf(id);
    double* d = buf.data();
    const double* s = g.data();
    const std::int64_t m = buf.size();
    for (std::int64_t i = 0; i < m; ++i) d[i] += s[i];
}

void Graph::backward(VarId root) {
    if (value(root).size() != 1) throw ContractViolation("backward root must be scalar");
    for (Node& n : nodes_) n.grad_ready = false;
    grad_buf(root)[0] = 1.0;
    for (std::int64_t i = root; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || !n.back || !n.grad_ready) continue;
        n.back(*this);
    }
}

// ---------------------------------------------------------------------------
// elementwise

VarId Graph::relu(VarId x) {
    Tensor out = value(x);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            const Tensor& xv = g.value(x);
            Tensor gx(xv.shape());
            for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = xv[i] > 0.0 ? go[i] : 0.0;
            g.accumulate(x, gx);
        };
    }
    return id;
}

VarId Graph::sigmoid(VarId x) {
    Tensor out = value(x);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(out[i]);
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            const Tensor& y = g.value(id);
            Tensor gx(y.shape());
            for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = go[i] * y[i] * (1.0 - y[i]);
            g.accumulate(x, gx);
        };
    }
    return id;
}

VarId Graph::tanh_(VarId x) {
    Tensor out = value(x);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            const Tensor& y = g.value(id);
            Tensor gx(y.shape());
            for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = go[i] * (1.0 - y[i] * y[i]);
            g.accumulate(x, gx);
        };
    }
    return id;
}

VarId Graph::add(VarId a, VarId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Tensor out = av;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    bool rg = requires_grad(a) || requires_grad(b);
    VarId id = emplace(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [a, b, id](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            g.accumulate(a, go);
            g.accumulate(b, go);
        };
    }
    return id;
}

VarId Graph::sub(VarId a, VarId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw ShapeError("sub: shape mismatch");
    Tensor out = av;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    bool rg = requires_grad(a) || requires_grad(b);
    VarId id = emplace(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [a, b, id](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            g.accumulate(a, go);
            Tensor neg = go;
            for (std::int64_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
            g.accumulate(b, neg);
        };
    }
    return id;
}

VarId Graph::mul(VarId a, VarId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw ShapeError("mul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Tensor out = av;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    bool rg = requires_grad(a) || requires_grad(b);
    VarId id = emplace(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [a, b, id](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            const Tensor& av2 = g.value(a);
            const Tensor& bv2 = g.value(b);
            Tensor ga(av2.shape());
            Tensor gb(bv2.shape());
            for (std::int64_t i = 0; i < ga.size(); ++i) {
                ga[i] = go[i] * bv2[i];
                gb[i] = go[i] * av2[i];
            }
            g.accumulate(a, ga);
            g.accumulate(b, gb);
        };
    }
    return id;
}

VarId Graph::scale(VarId x, double k) {
    Tensor out = value(x);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= k;
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, k, id](Graph& g) {
            Tensor gx = g.grad_buf(id);
            for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] *= k;
            g.accumulate(x, gx);
        };
    }
    return id;
}

VarId Graph::add_const(VarId x, double k) {
    Tensor out = value(x);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += k;
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id](Graph& g) { g.accumulate(x, g.grad_buf(id)); };
    }
    return id;
}

VarId Graph::mul_const(VarId x, Tensor w) {
    const Tensor& xv = value(x);
    if (!xv.same_shape(w)) throw ShapeError("mul_const: shape mismatch");
    Tensor out = xv;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= w[i];
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id, w = std::move(w)](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            Tensor gx(w.shape());
            for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = go[i] * w[i];
            g.accumulate(x, gx);
        };
    }
    return id;
}

VarId Graph::smooth_sqrt(VarId x, double eps2) {
    Tensor out = value(x);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i] * out[i] + eps2);
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            const Tensor& xv = g.value(x);
            const Tensor& y = g.value(id);
            Tensor gx(xv.shape());
            for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = go[i] * xv[i] / y[i];
            g.accumulate(x, gx);
        };
    }
    return id;
}

// ---------------------------------------------------------------------------
// linear algebra

VarId Graph::conv2d(VarId x, VarId w, VarId b, int stride, int pad, int dilation) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.ndim() != 3 || wv.ndim() != 4) throw ShapeError("conv2d: expected x[C,H,W], w[Co,Ci,k,k]");
    if (wv.dim(2) != wv.dim(3)) throw ShapeError("conv2d: non-square kernel");
    if (wv.dim(1) != xv.dim(0))
        throw ShapeError("conv2d: input channels " + std::to_string(xv.dim(0)) + " != kernel channels " +
                         std::to_string(wv.dim(1)));
    if (bv.ndim() != 1 || bv.dim(0) != wv.dim(0)) throw ShapeError("conv2d: bias shape mismatch");

    const int cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const int cout = wv.dim(0), k = wv.dim(2);
    const int ho = conv_out_extent(h, k, stride, pad, dilation);
    const int wo = conv_out_extent(wd, k, stride, pad, dilation);
    const std::int64_t n = static_cast<std::int64_t>(ho) * wo;
    const std::int64_t ckk = static_cast<std::int64_t>(cin) * k * k;

    if (static_cast<std::int64_t>(scratch_.size()) < ckk * n) scratch_.resize(static_cast<size_t>(ckk * n));
    im2col(xv, k, stride, pad, dilation, ho, wo, scratch_.data());

    Tensor out({cout, ho, wo});
    {
        MapRM y(out.data(), cout, n);
        CMapRM wm(wv.data(), cout, ckk);
        CMapRM cols(scratch_.data(), ckk, n);
        y.noalias() = wm * cols;
        for (int co = 0; co < cout; ++co) y.row(co).array() += bv[co];
    }

    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    VarId id = emplace(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [x, w, b, id, stride, pad, dilation, cin, h, wd, cout, k, ho, wo, n,
                              ckk](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            CMapRM dy(go.data(), cout, n);
            const Tensor& xv2 = g.value(x);
            const Tensor& wv2 = g.value(w);

            if (g.requires_grad(b)) {
                Tensor db({cout});
                for (int co = 0; co < cout; ++co) db[co] = dy.row(co).sum();
                g.accumulate(b, db);
            }
            if (g.requires_grad(w)) {
                std::vector<double> cols(static_cast<size_t>(ckk * n));
                im2col(xv2, k, stride, pad, dilation, ho, wo, cols.data());
                Tensor dw(wv2.shape());
                MapRM dwm(dw.data(), cout, ckk);
                CMapRM colsm(cols.data(), ckk, n);
                dwm.noalias() = dy * colsm.transpose();
                g.accumulate(w, dw);
            }
            if (g.requires_grad(x)) {
                std::vector<double> dcols(static_cast<size_t>(ckk * n));
                MapRM dcolsm(dcols.data(), ckk, n);
                CMapRM wm(wv2.data(), cout, ckk);
                dcolsm.noalias() = wm.transpose() * dy;
                Tensor dx(xv2.shape());
                col2im_acc(dcols.data(), cin, h, wd, k, stride, pad, dilation, ho, wo, dx);
                g.accumulate(x, dx);
            }
        };
    }
    return id;
}

VarId Graph::linear(VarId x, VarId w, VarId b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.ndim() != 1 || wv.ndim() != 2 || bv.ndim() != 1) throw ShapeError("linear: expected x[n], w[m,n], b[m]");
    if (wv.dim(1) != xv.dim(0) || wv.dim(0) != bv.dim(0)) throw ShapeError("linear: shape mismatch");
    const int m = wv.dim(0), n = wv.dim(1);
    Tensor out({m});
    for (int i = 0; i < m; ++i) {
        double acc = bv[i];
        const double* row = wv.data() + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += row[j] * xv[j];
        out[i] = acc;
    }
    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    VarId id = emplace(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [x, w, b, id, m, n](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            const Tensor& xv2 = g.value(x);
            const Tensor& wv2 = g.value(w);
            if (g.requires_grad(b)) g.accumulate(b, go);
            if (g.requires_grad(w)) {
                Tensor dw({m, n});
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) dw[static_cast<std::int64_t>(i) * n + j] = go[i] * xv2[j];
                g.accumulate(w, dw);
            }
            if (g.requires_grad(x)) {
                Tensor dx({n});
                for (int i = 0; i < m; ++i) {
                    const double* row = wv2.data() + static_cast<std::int64_t>(i) * n;
                    for (int j = 0; j < n; ++j) dx[j] += go[i] * row[j];
                }
                g.accumulate(x, dx);
            }
        };
    }
    return id;
}

VarId Graph::gram(VarId a, VarId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(0) != bv.dim(0) || av.dim(1) != bv.dim(1))
        throw ShapeError("gram: expected matching [C,N] inputs");
    const int c = av.dim(0), n = av.dim(1);
    Tensor out({n, n});
    {
        MapRM y(out.data(), n, n);
        CMapRM am(av.data(), c, n);
        CMapRM bm(bv.data(), c, n);
        y.noalias() = am.transpose() * bm;
    }
    bool rg = requires_grad(a) || requires_grad(b);
    VarId id = emplace(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [a, b, id, c, n](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            CMapRM dy(go.data(), n, n);
            CMapRM am(g.value(a).data(), c, n);
            CMapRM bm(g.value(b).data(), c, n);
            if (g.requires_grad(a)) {
                Tensor da({c, n});
                MapRM dam(da.data(), c, n);
                dam.noalias() = bm * dy.transpose();
                g.accumulate(a, da);
            }
            if (g.requires_grad(b)) {
                Tensor db({c, n});
                MapRM dbm(db.data(), c, n);
                dbm.noalias() = am * dy;
                g.accumulate(b, db);
            }
        };
    }
    return id;
}

// ---------------------------------------------------------------------------
// shape / selection

VarId Graph::concat(VarId a, VarId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.ndim() != bv.ndim()) throw ShapeError("concat: rank mismatch");
    for (int i = 1; i < av.ndim(); ++i)
        if (av.dim(i) != bv.dim(i)) throw ShapeError("concat: trailing dims differ");
    std::vector<int> shape = av.shape();
    shape[0] += bv.dim(0);
    Tensor out(shape);
    std::copy(av.data(), av.data() + av.size(), out.data());
    std::copy(bv.data(), bv.data() + bv.size(), out.data() + av.size());
    bool rg = requires_grad(a) || requires_grad(b);
    VarId id = emplace(std::move(out), rg, nullptr);
    if (rg) {
        const std::int64_t na = av.size();
        nodes_.back().back = [a, b, id, na](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            const Tensor& av2 = g.value(a);
            const Tensor& bv2 = g.value(b);
            Tensor ga(av2.shape());
            Tensor gb(bv2.shape());
            std::copy(go.data(), go.data() + na, ga.data());
            std::copy(go.data() + na, go.data() + go.size(), gb.data());
            g.accumulate(a, ga);
            g.accumulate(b, gb);
        };
    }
    return id;
}

VarId Graph::slice0(VarId x, int from, int to) {
    const Tensor& xv = value(x);
    if (from < 0 || to > xv.dim(0) || from >= to) throw ShapeError("slice0: bad range");
    std::vector<int> shape = xv.shape();
    shape[0] = to - from;
    const std::int64_t inner = xv.size() / xv.dim(0);
    Tensor out(shape);
    std::copy(xv.data() + from * inner, xv.data() + to * inner, out.data());
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id, from, inner](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            Tensor gx(g.value(x).shape());
            std::copy(go.data(), go.data() + go.size(), gx.data() + from * inner);
            g.accumulate(x, gx);
        };
    }
    return id;
}

VarId Graph::reshape(VarId x, std::vector<int> shape) {
    const Tensor& xv = value(x);
    if (shape_numel(shape) != xv.size()) throw ShapeError("reshape: element count mismatch");
    Tensor out = Tensor::from(shape, std::vector<double>(xv.data(), xv.data() + xv.size()));
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            Tensor gx = Tensor::from(g.value(x).shape(), std::vector<double>(go.data(), go.data() + go.size()));
            g.accumulate(x, gx);
        };
    }
    return id;
}

VarId Graph::pick(VarId x, std::int64_t index) {
    const Tensor& xv = value(x);
    if (index < 0 || index >= xv.size()) throw ShapeError("pick: index out of range");
    VarId id = emplace(Tensor::scalar(xv[index]), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id, index](Graph& g) {
            Tensor gx(g.value(x).shape());
            gx[index] = g.grad_buf(id)[0];
            g.accumulate(x, gx);
        };
    }
    return id;
}

VarId Graph::broadcast_chw(VarId v, int h, int w) {
    const Tensor& vv = value(v);
    if (vv.ndim() != 1) throw ShapeError("broadcast_chw: expected [C]");
    const int c = vv.dim(0);
    Tensor out({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        std::fill(out.data() + static_cast<std::int64_t>(ci) * h * w,
                  out.data() + static_cast<std::int64_t>(ci + 1) * h * w, vv[ci]);
    VarId id = emplace(std::move(out), requires_grad(v), nullptr);
    if (requires_grad(v)) {
        nodes_.back().back = [v, id, c, h, w](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            Tensor gv({c});
            for (int ci = 0; ci < c; ++ci) {
                double acc = 0.0;
                const double* p = go.data() + static_cast<std::int64_t>(ci) * h * w;
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) acc += p[i];
                gv[ci] = acc;
            }
            g.accumulate(v, gv);
        };
    }
    return id;
}

VarId Graph::outer_sc(VarId s, VarId c) {
    const Tensor& sv = value(s);
    const Tensor& cv = value(c);
    if (cv.ndim() != 1) throw ShapeError("outer_sc: c must be [C]");
    int h, w;
    if (sv.ndim() == 2) {
        h = sv.dim(0);
        w = sv.dim(1);
    } else if (sv.ndim() == 3 && sv.dim(0) == 1) {
        h = sv.dim(1);
        w = sv.dim(2);
    } else {
        throw ShapeError("outer_sc: s must be [H,W] or [1,H,W]");
    }
    const int cc = cv.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor out({cc, h, w});
    for (int ci = 0; ci < cc; ++ci) {
        double* dst = out.data() + ci * hw;
        const double k = cv[ci];
        for (std::int64_t i = 0; i < hw; ++i) dst[i] = k * sv[i];
    }
    bool rg = requires_grad(s) || requires_grad(c);
    VarId id = emplace(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [s, c, id, cc, hw](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            const Tensor& sv2 = g.value(s);
            const Tensor& cv2 = g.value(c);
            if (g.requires_grad(s)) {
                Tensor gs(sv2.shape());
                for (int ci = 0; ci < cc; ++ci) {
                    const double* p = go.data() + ci * hw;
                    const double k = cv2[ci];
                    for (std::int64_t i = 0; i < hw; ++i) gs[i] += k * p[i];
                }
                g.accumulate(s, gs);
            }
            if (g.requires_grad(c)) {
                Tensor gc({cc});
                for (int ci = 0; ci < cc; ++ci) {
                    const double* p = go.data() + ci * hw;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < hw; ++i) acc += p[i] * sv2[i];
                    gc[ci] = acc;
                }
                g.accumulate(c, gc);
            }
        };
    }
    return id;
}

VarId Graph::mul_scalar_var(VarId x, VarId s) {
    const Tensor& xv = value(x);
    const Tensor& sv = value(s);
    if (sv.size() != 1) throw ShapeError("mul_scalar_var: s must be scalar");
    Tensor out = xv;
    const double k = sv[0];
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= k;
    bool rg = requires_grad(x) || requires_grad(s);
    VarId id = emplace(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [x, s, id](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            const Tensor& xv2 = g.value(x);
            const double k2 = g.value(s)[0];
            if (g.requires_grad(x)) {
                Tensor gx(xv2.shape());
                for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = go[i] * k2;
                g.accumulate(x, gx);
            }
            if (g.requires_grad(s)) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < xv2.size(); ++i) acc += go[i] * xv2[i];
                g.accumulate(s, Tensor::scalar(acc));
            }
        };
    }
    return id;
}

// ---------------------------------------------------------------------------
// normalization / pooling / resampling

VarId Graph::instance_norm(VarId x, VarId gamma, VarId beta, double eps) {
    const Tensor& xv = value(x);
    const Tensor& gv = value(gamma);
    const Tensor& bv = value(beta);
    if (xv.ndim() != 3) throw ShapeError("instance_norm: expected [C,H,W]");
    const int c = xv.dim(0);
    if (gv.ndim() != 1 || gv.dim(0) != c || bv.ndim() != 1 || bv.dim(0) != c)
        throw ShapeError("instance_norm: affine shape mismatch");
    const std::int64_t hw = static_cast<std::int64_t>(xv.dim(1)) * xv.dim(2);

    Tensor out(xv.shape());
    std::vector<double> mu(static_cast<size_t>(c)), inv(static_cast<size_t>(c));
    for (int ci = 0; ci < c; ++ci) {
        const double* p = xv.data() + ci * hw;
        double m = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) m += p[i];
        m /= static_cast<double>(hw);
        double var = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) {
            const double d = p[i] - m;
            var += d * d;
        }
        var /= static_cast<double>(hw);
        mu[static_cast<size_t>(ci)] = m;
        inv[static_cast<size_t>(ci)] = 1.0 / std::sqrt(var + eps);
        double* o = out.data() + ci * hw;
        for (std::int64_t i = 0; i < hw; ++i)
            o[i] = gv[ci] * (p[i] - m) * inv[static_cast<size_t>(ci)] + bv[ci];
    }
    bool rg = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
    VarId id = emplace(std::move(out), rg, nullptr);
    if (rg) {
        nodes_.back().back = [x, gamma, beta, id, c, hw, mu = std::move(mu), inv = std::move(inv)](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            const Tensor& xv2 = g.value(x);
            const Tensor& gv2 = g.value(gamma);
            Tensor dgamma({c}), dbeta({c});
            Tensor dx(xv2.shape());
            for (int ci = 0; ci < c; ++ci) {
                const double* p = xv2.data() + ci * hw;
                const double* dyc = go.data() + ci * hw;
                const double m = mu[static_cast<size_t>(ci)];
                const double iv = inv[static_cast<size_t>(ci)];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::int64_t i = 0; i < hw; ++i) {
                    const double xhat = (p[i] - m) * iv;
                    sum_dy += dyc[i];
                    sum_dy_xhat += dyc[i] * xhat;
                }
                dbeta[ci] = sum_dy;
                dgamma[ci] = sum_dy_xhat;
                if (g.requires_grad(x)) {
                    const double gammac = gv2[ci];
                    const double m1 = gammac * sum_dy / static_cast<double>(hw);
                    const double m2 = gammac * sum_dy_xhat / static_cast<double>(hw);
                    double* dxc = dx.data() + ci * hw;
                    for (std::int64_t i = 0; i < hw; ++i) {
                        const double xhat = (p[i] - m) * iv;
                        dxc[i] = iv * (gammac * dyc[i] - m1 - xhat * m2);
                    }
                }
            }
            g.accumulate(gamma, dgamma);
            g.accumulate(beta, dbeta);
            if (g.requires_grad(x)) g.accumulate(x, dx);
        };
    }
    return id;
}

VarId Graph::softmax_groups(VarId x, int group) {
    const Tensor& xv = value(x);
    if (xv.ndim() != 1 || xv.dim(0) % group != 0) throw ShapeError("softmax_groups: bad group size");
    const int ng = xv.dim(0) / group;
    Tensor out(xv.shape());
    for (int gi = 0; gi < ng; ++gi) {
        const double* p = xv.data() + static_cast<std::int64_t>(gi) * group;
        double* o = out.data() + static_cast<std::int64_t>(gi) * group;
        double mx = p[0];
        for (int i = 1; i < group; ++i) mx = std::max(mx, p[i]);
        double z = 0.0;
        for (int i = 0; i < group; ++i) {
            o[i] = std::exp(p[i] - mx);
            z += o[i];
        }
        for (int i = 0; i < group; ++i) o[i] /= z;
    }
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id, ng, group](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            const Tensor& y = g.value(id);
            Tensor gx(y.shape());
            for (int gi = 0; gi < ng; ++gi) {
                const std::int64_t off = static_cast<std::int64_t>(gi) * group;
                double dot = 0.0;
                for (int i = 0; i < group; ++i) dot += go[off + i] * y[off + i];
                for (int i = 0; i < group; ++i) gx[off + i] = y[off + i] * (go[off + i] - dot);
            }
            g.accumulate(x, gx);
        };
    }
    return id;
}

VarId Graph::global_avg_pool(VarId x) {
    const Tensor& xv = value(x);
    if (xv.ndim() != 3) throw ShapeError("global_avg_pool: expected [C,H,W]");
    const int c = xv.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(xv.dim(1)) * xv.dim(2);
    Tensor out({c});
    for (int ci = 0; ci < c; ++ci) {
        const double* p = xv.data() + ci * hw;
        double acc = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
        out[ci] = acc / static_cast<double>(hw);
    }
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id, c, hw](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            Tensor gx(g.value(x).shape());
            for (int ci = 0; ci < c; ++ci) {
                const double k = go[ci] / static_cast<double>(hw);
                double* p = gx.data() + ci * hw;
                for (std::int64_t i = 0; i < hw; ++i) p[i] = k;
            }
            g.accumulate(x, gx);
        };
    }
    return id;
}

VarId Graph::global_max_pool(VarId x) {
    const Tensor& xv = value(x);
    if (xv.ndim() != 3) throw ShapeError("global_max_pool: expected [C,H,W]");
    const int c = xv.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(xv.dim(1)) * xv.dim(2);
    Tensor out({c});
    std::vector<std::int64_t> argmax(static_cast<size_t>(c));
    for (int ci = 0; ci < c; ++ci) {
        const double* p = xv.data() + ci * hw;
        std::int64_t best = 0;
        for (std::int64_t i = 1; i < hw; ++i)
            if (p[i] > p[best]) best = i;  // first occurrence wins on ties
        argmax[static_cast<size_t>(ci)] = best;
        out[ci] = p[best];
    }
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id, c, hw, argmax = std::move(argmax)](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            Tensor gx(g.value(x).shape());
            for (int ci = 0; ci < c; ++ci) gx[ci * hw + argmax[static_cast<size_t>(ci)]] = go[ci];
            g.accumulate(x, gx);
        };
    }
    return id;
}

namespace {
struct Lerp {
    int lo, hi;
    double w_hi;
};
Lerp lerp_coords(int out_i, int out_n, int in_n) {
    const double src = (static_cast<double>(out_i) + 0.5) * static_cast<double>(in_n) / static_cast<double>(out_n) - 0.5;
    double f = std::floor(src);
    int lo = static_cast<int>(f);
    double w = src - f;
    if (lo < 0) {
        lo = 0;
        w = 0.0;
    }
    int hi = lo + 1;
    if (hi >= in_n) {
        hi = in_n - 1;
        w = 0.0;
    }
    return {lo, hi, w};
}
}  // namespace

VarId Graph::upsample_bilinear(VarId x, int oh, int ow) {
    const Tensor& xv = value(x);
    if (xv.ndim() != 3) throw ShapeError("upsample_bilinear: expected [C,H,W]");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor out({c, oh, ow});
    for (int oy = 0; oy < oh; ++oy) {
        const Lerp ly = lerp_coords(oy, oh, h);
        for (int ox = 0; ox < ow; ++ox) {
            const Lerp lx = lerp_coords(ox, ow, w);
            for (int ci = 0; ci < c; ++ci) {
                const double v = (1 - ly.w_hi) * ((1 - lx.w_hi) * xv.at(ci, ly.lo, lx.lo) + lx.w_hi * xv.at(ci, ly.lo, lx.hi)) +
                                 ly.w_hi * ((1 - lx.w_hi) * xv.at(ci, ly.hi, lx.lo) + lx.w_hi * xv.at(ci, ly.hi, lx.hi));
                out.at(ci, oy, ox) = v;
            }
        }
    }
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id, c, h, w, oh, ow](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            Tensor gx(g.value(x).shape());
            for (int oy = 0; oy < oh; ++oy) {
                const Lerp ly = lerp_coords(oy, oh, h);
                for (int ox = 0; ox < ow; ++ox) {
                    const Lerp lx = lerp_coords(ox, ow, w);
                    for (int ci = 0; ci < c; ++ci) {
                        const double gv = go.at(ci, oy, ox);
                        gx.at(ci, ly.lo, lx.lo) += (1 - ly.w_hi) * (1 - lx.w_hi) * gv;
                        gx.at(ci, ly.lo, lx.hi) += (1 - ly.w_hi) * lx.w_hi * gv;
                        gx.at(ci, ly.hi, lx.lo) += ly.w_hi * (1 - lx.w_hi) * gv;
                        gx.at(ci, ly.hi, lx.hi) += ly.w_hi * lx.w_hi * gv;
                    }
                }
            }
            g.accumulate(x, gx);
        };
    }
    return id;
}

// ---------------------------------------------------------------------------
// spatial differences

VarId Graph::diff_x(VarId x) {
    const Tensor& xv = value(x);
    if (xv.ndim() != 2) throw ShapeError("diff_x: expected [H,W]");
    const int h = xv.dim(0), w = xv.dim(1);
    if (w < 2) throw ShapeError("diff_x: width < 2");
    Tensor out({h, w - 1});
    for (int y = 0; y < h; ++y)
        for (int i = 0; i < w - 1; ++i) out.at(y, i) = xv.at(y, i + 1) - xv.at(y, i);
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id, h, w](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            Tensor gx(g.value(x).shape());
            for (int y = 0; y < h; ++y)
                for (int i = 0; i < w - 1; ++i) {
                    gx.at(y, i + 1) += go.at(y, i);
                    gx.at(y, i) -= go.at(y, i);
                }
            g.accumulate(x, gx);
        };
    }
    return id;
}

VarId Graph::diff_y(VarId x) {
    const Tensor& xv = value(x);
    if (xv.ndim() != 2) throw ShapeError("diff_y: expected [H,W]");
    const int h = xv.dim(0), w = xv.dim(1);
    if (h < 2) throw ShapeError("diff_y: height < 2");
    Tensor out({h - 1, w});
    for (int y = 0; y < h - 1; ++y)
        for (int i = 0; i < w; ++i) out.at(y, i) = xv.at(y + 1, i) - xv.at(y, i);
    VarId id = emplace(std::move(out), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id, h, w](Graph& g) {
            const Tensor& go = g.grad_buf(id);
            Tensor gx(g.value(x).shape());
            for (int y = 0; y < h - 1; ++y)
                for (int i = 0; i < w; ++i) {
                    gx.at(y + 1, i) += go.at(y, i);
                    gx.at(y, i) -= go.at(y, i);
                }
            g.accumulate(x, gx);
        };
    }
    return id;
}

// ---------------------------------------------------------------------------
// reductions / losses

VarId Graph::sum_all(VarId x) {
    VarId id = emplace(Tensor::scalar(value(x).sum()), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id](Graph& g) {
            const double k = g.grad_buf(id)[0];
            g.accumulate(x, Tensor::full(g.value(x).shape(), k));
        };
    }
    return id;
}

VarId Graph::mean_all(VarId x) {
    const std::int64_t n = value(x).size();
    VarId id = emplace(Tensor::scalar(value(x).sum() / static_cast<double>(n)), requires_grad(x), nullptr);
    if (requires_grad(x)) {
        nodes_.back().back = [x, id, n](Graph& g) {
            const double k = g.grad_buf(id)[0] / static_cast<double>(n);
            g.accumulate(x, Tensor::full(g.value(x).shape(), k));
        };
    }
    return id;
}

VarId Graph::wsum(const std::vector<VarId>& scalars, const std::vector<double>& weights) {
    if (scalars.size() != weights.size()) throw ContractViolation("wsum: arity mismatch");
    double acc = 0.0;
    bool rg = false;
    for (size_t i = 0; i < scalars.size(); ++i) {
        if (value(scalars[i]).size() != 1) throw ShapeError("wsum: non-scalar term");
        acc += weights[i] * value(scalars[i])[0];
        rg = rg || requires_grad(scalars[i]);
    }
    VarId id = emplace(Tensor::scalar(acc), rg, nullptr);
    if (rg) {
        nodes_.back().back = [scalars, weights, id](Graph& g) {
            const double k = g.grad_buf(id)[0];
            for (size_t i = 0; i < scalars.size(); ++i)
                g.accumulate(scalars[i], Tensor::scalar(k * weights[i]));
        };
    }
    return id;
}

VarId Graph::bce_with_logits(VarId logits, Tensor target, const Tensor* mask, bool mean, double eps) {
    const Tensor& lv = value(logits);
    if (!lv.same_shape(target)) throw ShapeError("bce_with_logits: target shape mismatch");
    if (mask && !mask->same_shape(target)) throw ShapeError("bce_with_logits: mask shape mismatch");

    double acc = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < lv.size(); ++i) {
        if (mask && (*mask)[i] == 0.0) continue;
        ++count;
        double p = stable_sigmoid(lv[i]);
        p = std::min(1.0 - eps, std::max(eps, p));
        const double t = target[i];
        acc += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    }
    const double denom = mean ? std::max<std::int64_t>(count, 1) : 1;
    VarId id = emplace(Tensor::scalar(count == 0 ? 0.0 : acc / denom), requires_grad(logits), nullptr);
    if (requires_grad(logits)) {
        Tensor maskCopy = mask ? *mask : Tensor();
        bool hasMask = mask != nullptr;
        nodes_.back().back = [logits, id, target = std::move(target), maskCopy = std::move(maskCopy),
                              hasMask, denom, eps](Graph& g) {
            const double k = g.grad_buf(id)[0] / denom;
            const Tensor& lv2 = g.value(logits);
            Tensor gx(lv2.shape());
            for (std::int64_t i = 0; i < lv2.size(); ++i) {
                if (hasMask && maskCopy[i] == 0.0) continue;
                const double p = stable_sigmoid(lv2[i]);
                if (p < eps || p > 1.0 - eps) continue;  // clamped region is flat
                gx[i] = k * (p - target[i]);
            }
            g.accumulate(logits, gx);
        };
    }
    return id;
}

}  // namespace vsal
