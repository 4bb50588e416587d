#include "hwgen/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace hwgen {

namespace {
thread_local bool t_grad_enabled = true;

void axpy(Tensor& dst, const Tensor& src, float scale = 1.f) {
    for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += scale * src.v[i];
}
}  // namespace

bool grad_enabled() { return t_grad_enabled; }
NoGrad::NoGrad() : prev(t_grad_enabled) { t_grad_enabled = false; }
NoGrad::~NoGrad() { t_grad_enabled = prev; }

VarPtr leaf(Tensor t, bool requires_grad) {
    auto v = std::make_shared<Var>();
    v->val = std::move(t);
    v->requires_grad = requires_grad;
    return v;
}

VarPtr constant(Tensor t) { return leaf(std::move(t), false); }

VarPtr make_op(Tensor out, std::vector<VarPtr> parents, std::function<void(Var&)> bw) {
    auto v = std::make_shared<Var>();
    v->val = std::move(out);
    bool need = t_grad_enabled;
    if (need) {
        need = false;
        for (const auto& p : parents)
            if (p->requires_grad) {
                need = true;
                break;
            }
    }
    if (need) {
        v->requires_grad = true;
        v->parents = std::move(parents);
        v->backward_fn = std::move(bw);
    }
    return v;
}

void backward(const VarPtr& root) {
    if (!root->requires_grad && !root->backward_fn) {
        // constant graph; nothing to do
    }
    root->g();
    std::fill(root->grad.v.begin(), root->grad.v.end(), 1.f);

    // iterative post-order DFS
    std::vector<Var*> order;
    std::unordered_set<Var*> seen;
    std::vector<std::pair<Var*, size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Var* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // order is children-after-parents; walk from root side (reverse)
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Var* n = *it;
        if (n->backward_fn && n->grad_alloc) n->backward_fn(*n);
    }
}

// ---------------- elementwise ----------------

VarPtr add(const VarPtr& a, const VarPtr& b) {
    if (!a->val.same_shape(b->val)) throw NumericError("add: shape mismatch");
    Tensor out = a->val;
    axpy(out, b->val);
    return make_op(std::move(out), {a, b}, [a, b](Var& self) {
        if (a->requires_grad) axpy(a->g(), self.grad);
        if (b->requires_grad) axpy(b->g(), self.grad);
    });
}

VarPtr sub(const VarPtr& a, const VarPtr& b) {
    if (!a->val.same_shape(b->val)) throw NumericError("sub: shape mismatch");
    Tensor out = a->val;
    axpy(out, b->val, -1.f);
    return make_op(std::move(out), {a, b}, [a, b](Var& self) {
        if (a->requires_grad) axpy(a->g(), self.grad);
        if (b->requires_grad) axpy(b->g(), self.grad, -1.f);
    });
}

VarPtr mul(const VarPtr& a, const VarPtr& b) {
    if (!a->val.same_shape(b->val)) throw NumericError("mul: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b->val.v[i];
    return make_op(std::move(out), {a, b}, [a, b](Var& self) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += self.grad.v[i] * b->val.v[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] += self.grad.v[i] * a->val.v[i];
        }
    });
}

VarPtr add_scalar(const VarPtr& a, float c) {
    Tensor out = a->val;
    for (auto& x : out.v) x += c;
    return make_op(std::move(out), {a}, [a](Var& self) { axpy(a->g(), self.grad); });
}

VarPtr mul_scalar(const VarPtr& a, float c) {
    Tensor out = a->val;
    for (auto& x : out.v) x *= c;
    return make_op(std::move(out), {a}, [a, c](Var& self) { axpy(a->g(), self.grad, c); });
}

VarPtr relu(const VarPtr& a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = x > 0.f ? x : 0.f;
    return make_op(std::move(out), {a}, [a](Var& self) {
        Tensor& ga = a->g();
        for (size_t i = 0; i < ga.v.size(); ++i)
            if (a->val.v[i] > 0.f) ga.v[i] += self.grad.v[i];
    });
}

VarPtr silu(const VarPtr& a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = x / (1.f + std::exp(-x));
    return make_op(std::move(out), {a}, [a](Var& self) {
        Tensor& ga = a->g();
        for (size_t i = 0; i < ga.v.size(); ++i) {
            const float x = a->val.v[i];
            const float s = 1.f / (1.f + std::exp(-x));
            ga.v[i] += self.grad.v[i] * (s * (1.f + x * (1.f - s)));
        }
    });
}

VarPtr sigmoid(const VarPtr& a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = 1.f / (1.f + std::exp(-x));
    return make_op(std::move(out), {a}, [a](Var& self) {
        Tensor& ga = a->g();
        for (size_t i = 0; i < ga.v.size(); ++i) {
            const float y = self.val.v[i];
            ga.v[i] += self.grad.v[i] * y * (1.f - y);
        }
    });
}

VarPtr tanh_op(const VarPtr& a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = std::tanh(x);
    return make_op(std::move(out), {a}, [a](Var& self) {
        Tensor& ga = a->g();
        for (size_t i = 0; i < ga.v.size(); ++i) {
            const float y = self.val.v[i];
            ga.v[i] += self.grad.v[i] * (1.f - y * y);
        }
    });
}

// ---------------- shape ----------------

VarPtr reshape(const VarPtr& a, std::vector<int> shape) {
    Tensor out = a->val.reshaped(std::move(shape));
    return make_op(std::move(out), {a}, [a](Var& self) { axpy(a->g(), self.grad); });
}

VarPtr slice_lastdim(const VarPtr& a, int from, int to) {
    const int D = a->val.shape.back();
    if (from < 0 || to > D || from >= to) throw NumericError("slice_lastdim: bad range");
    const int W = to - from;
    const int64_t rows = a->val.numel() / D;
    std::vector<int> oshape = a->val.shape;
    oshape.back() = W;
    Tensor out(oshape);
    for (int64_t r = 0; r < rows; ++r)
        std::copy_n(a->val.v.data() + r * D + from, W, out.v.data() + r * W);
    return make_op(std::move(out), {a}, [a, from, D, W, rows](Var& self) {
        Tensor& ga = a->g();
        for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < W; ++j) ga.v[size_t(r * D + from + j)] += self.grad.v[size_t(r * W + j)];
    });
}

VarPtr concat_channels(const VarPtr& a, const VarPtr& b) {
    const auto& sa = a->val.shape;
    const auto& sb = b->val.shape;
    if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
        throw NumericError("concat_channels: shape mismatch");
    const int N = sa[0], Ca = sa[1], Cb = sb[1], HW = sa[2] * sa[3];
    Tensor out({N, Ca + Cb, sa[2], sa[3]});
    for (int n = 0; n < N; ++n) {
        std::copy_n(a->val.v.data() + int64_t(n) * Ca * HW, int64_t(Ca) * HW,
                    out.v.data() + int64_t(n) * (Ca + Cb) * HW);
        std::copy_n(b->val.v.data() + int64_t(n) * Cb * HW, int64_t(Cb) * HW,
                    out.v.data() + int64_t(n) * (Ca + Cb) * HW + int64_t(Ca) * HW);
    }
    return make_op(std::move(out), {a, b}, [a, b, N, Ca, Cb, HW](Var& self) {
        for (int n = 0; n < N; ++n) {
            const float* g = self.grad.v.data() + int64_t(n) * (Ca + Cb) * HW;
            if (a->requires_grad) {
                float* ga = a->g().v.data() + int64_t(n) * Ca * HW;
                for (int64_t i = 0; i < int64_t(Ca) * HW; ++i) ga[i] += g[i];
            }
            if (b->requires_grad) {
                float* gb = b->g().v.data() + int64_t(n) * Cb * HW;
                for (int64_t i = 0; i < int64_t(Cb) * HW; ++i) gb[i] += g[int64_t(Ca) * HW + i];
            }
        }
    });
}

VarPtr concat_seq(const VarPtr& a, const VarPtr& b) {
    const auto& sa = a->val.shape;
    const auto& sb = b->val.shape;
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[2])
        throw NumericError("concat_seq: shape mismatch");
    const int N = sa[0], La = sa[1], Lb = sb[1], D = sa[2];
    Tensor out({N, La + Lb, D});
    for (int n = 0; n < N; ++n) {
        std::copy_n(a->val.v.data() + int64_t(n) * La * D, int64_t(La) * D,
                    out.v.data() + int64_t(n) * (La + Lb) * D);
        std::copy_n(b->val.v.data() + int64_t(n) * Lb * D, int64_t(Lb) * D,
                    out.v.data() + int64_t(n) * (La + Lb) * D + int64_t(La) * D);
    }
    return make_op(std::move(out), {a, b}, [a, b, N, La, Lb, D](Var& self) {
        for (int n = 0; n < N; ++n) {
            const float* g = self.grad.v.data() + int64_t(n) * (La + Lb) * D;
            if (a->requires_grad) {
                float* ga = a->g().v.data() + int64_t(n) * La * D;
                for (int64_t i = 0; i < int64_t(La) * D; ++i) ga[i] += g[i];
            }
            if (b->requires_grad) {
                float* gb = b->g().v.data() + int64_t(n) * Lb * D;
                for (int64_t i = 0; i < int64_t(Lb) * D; ++i) gb[i] += g[int64_t(La) * D + i];
            }
        }
    });
}

VarPtr reverse_seq(const VarPtr& a) {
    const auto& s = a->val.shape;
    if (s.size() != 3) throw NumericError("reverse_seq: expects [N,L,D]");
    const int N = s[0], L = s[1], D = s[2];
    Tensor out(s);
    for (int n = 0; n < N; ++n)
        for (int l = 0; l < L; ++l)
            std::copy_n(a->val.v.data() + (int64_t(n) * L + l) * D, D,
                        out.v.data() + (int64_t(n) * L + (L - 1 - l)) * D);
    return make_op(std::move(out), {a}, [a, N, L, D](Var& self) {
        Tensor& ga = a->g();
        for (int n = 0; n < N; ++n)
            for (int l = 0; l < L; ++l) {
                const float* g = self.grad.v.data() + (int64_t(n) * L + (L - 1 - l)) * D;
                float* dst = ga.v.data() + (int64_t(n) * L + l) * D;
                for (int d = 0; d < D; ++d) dst[d] += g[d];
            }
    });
}

VarPtr stack_seq(const std::vector<VarPtr>& steps) {
    if (steps.empty()) throw NumericError("stack_seq: empty");
    const int N = steps[0]->val.shape[0], D = steps[0]->val.shape[1];
    const int L = int(steps.size());
    Tensor out({N, L, D});
    for (int l = 0; l < L; ++l)
        for (int n = 0; n < N; ++n)
            std::copy_n(steps[size_t(l)]->val.v.data() + int64_t(n) * D, D,
                        out.v.data() + (int64_t(n) * L + l) * D);
    std::vector<VarPtr> parents = steps;
    return make_op(std::move(out), std::move(parents), [steps, N, L, D](Var& self) {
        for (int l = 0; l < L; ++l) {
            auto& st = steps[size_t(l)];
            if (!st->requires_grad) continue;
            Tensor& g = st->g();
            for (int n = 0; n < N; ++n) {
                const float* src = self.grad.v.data() + (int64_t(n) * L + l) * D;
                float* dst = g.v.data() + int64_t(n) * D;
                for (int d = 0; d < D; ++d) dst[d] += src[d];
            }
        }
    });
}

VarPtr seq_step(const VarPtr& a, int l) {
    const auto& s = a->val.shape;
    if (s.size() != 3 || l < 0 || l >= s[1]) throw NumericError("seq_step: bad index");
    const int N = s[0], L = s[1], D = s[2];
    Tensor out({N, D});
    for (int n = 0; n < N; ++n)
        std::copy_n(a->val.v.data() + (int64_t(n) * L + l) * D, D, out.v.data() + int64_t(n) * D);
    return make_op(std::move(out), {a}, [a, l, N, L, D](Var& self) {
        Tensor& ga = a->g();
        for (int n = 0; n < N; ++n) {
            const float* g = self.grad.v.data() + int64_t(n) * D;
            float* dst = ga.v.data() + (int64_t(n) * L + l) * D;
            for (int d = 0; d < D; ++d) dst[d] += g[d];
        }
    });
}

// ---------------- bias adds ----------------

VarPtr add_bias(const VarPtr& x, const VarPtr& b) {
    const int D = b->val.shape[0];
    if (x->val.shape.back() != D) throw NumericError("add_bias: width mismatch");
    const int64_t rows = x->val.numel() / D;
    Tensor out = x->val;
    for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < D; ++j) out.v[size_t(r * D + j)] += b->val.v[size_t(j)];
    return make_op(std::move(out), {x, b}, [x, b, rows, D](Var& self) {
        if (x->requires_grad) axpy(x->g(), self.grad);
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < D; ++j) gb.v[size_t(j)] += self.grad.v[size_t(r * D + j)];
        }
    });
}

VarPtr add_channel_bias(const VarPtr& x, const VarPtr& b) {
    const auto& s = x->val.shape;
    if (s.size() != 4 || b->val.shape[0] != s[1]) throw NumericError("add_channel_bias: shape mismatch");
    const int N = s[0], C = s[1], HW = s[2] * s[3];
    Tensor out = x->val;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float bv = b->val.v[size_t(c)];
            float* p = out.v.data() + (int64_t(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) p[i] += bv;
        }
    return make_op(std::move(out), {x, b}, [x, b, N, C, HW](Var& self) {
        if (x->requires_grad) axpy(x->g(), self.grad);
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const float* g = self.grad.v.data() + (int64_t(n) * C + c) * HW;
                    float acc = 0.f;
                    for (int i = 0; i < HW; ++i) acc += g[i];
                    gb.v[size_t(c)] += acc;
                }
        }
    });
}

VarPtr add_channel_bias_nc(const VarPtr& x, const VarPtr& b) {
    const auto& s = x->val.shape;
    if (s.size() != 4 || b->val.shape[0] != s[0] || b->val.shape[1] != s[1])
        throw NumericError("add_channel_bias_nc: shape mismatch");
    const int N = s[0], C = s[1], HW = s[2] * s[3];
    Tensor out = x->val;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float bv = b->val.at2(n, c);
            float* p = out.v.data() + (int64_t(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) p[i] += bv;
        }
    return make_op(std::move(out), {x, b}, [x, b, N, C, HW](Var& self) {
        if (x->requires_grad) axpy(x->g(), self.grad);
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const float* g = self.grad.v.data() + (int64_t(n) * C + c) * HW;
                    float acc = 0.f;
                    for (int i = 0; i < HW; ++i) acc += g[i];
                    gb.at2(n, c) += acc;
                }
        }
    });
}

// ---------------- linear algebra ----------------

VarPtr matmul(const VarPtr& a, const VarPtr& b) {
    Tensor out = hwgen::matmul(a->val, b->val);
    return make_op(std::move(out), {a, b}, [a, b](Var& self) {
        const int m = a->val.shape[0], k = a->val.shape[1], n = b->val.shape[1];
        if (a->requires_grad)
            matmul_nt_acc(self.grad.v.data(), b->val.v.data(), a->g().v.data(), m, n, k);
        if (b->requires_grad)
            matmul_tn_acc(a->val.v.data(), self.grad.v.data(), b->g().v.data(), k, m, n);
    });
}

VarPtr linear(const VarPtr& x, const VarPtr& W, const VarPtr& b) {
    const int In = W->val.shape[0], Out = W->val.shape[1];
    if (x->val.shape.back() != In) throw NumericError("linear: input width mismatch");
    const int64_t rows = x->val.numel() / In;
    std::vector<int> oshape = x->val.shape;
    oshape.back() = Out;
    Tensor out(oshape);
    matmul_acc(x->val.v.data(), W->val.v.data(), out.v.data(), int(rows), In, Out);
    if (b) {
        for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < Out; ++j) out.v[size_t(r * Out + j)] += b->val.v[size_t(j)];
    }
    std::vector<VarPtr> parents = b ? std::vector<VarPtr>{x, W, b} : std::vector<VarPtr>{x, W};
    return make_op(std::move(out), std::move(parents), [x, W, b, rows, In, Out](Var& self) {
        if (x->requires_grad)
            matmul_nt_acc(self.grad.v.data(), W->val.v.data(), x->g().v.data(), int(rows), Out, In);
        if (W->requires_grad)
            matmul_tn_acc(x->val.v.data(), self.grad.v.data(), W->g().v.data(), In, int(rows), Out);
        if (b && b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < Out; ++j) gb.v[size_t(j)] += self.grad.v[size_t(r * Out + j)];
        }
    });
}

namespace {
// 2-D matmul with transpose flags, accumulating into C
void mm2(const float* A, const float* B, float* C, int m, int k, int n, bool ta, bool tb) {
    if (!ta && !tb)
        matmul_acc(A, B, C, m, k, n);
    else if (!ta && tb)
        matmul_nt_acc(A, B, C, m, k, n);
    else if (ta && !tb)
        matmul_tn_acc(A, B, C, m, k, n);
    else {  // ta && tb: C += A^T B^T; rare, done naively
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                float acc = 0.f;
                for (int kk = 0; kk < k; ++kk)
                    acc += A[int64_t(kk) * m + i] * B[int64_t(j) * k + kk];
                C[int64_t(i) * n + j] += acc;
            }
    }
}
}  // namespace

VarPtr bmm(const VarPtr& a, const VarPtr& b, bool ta, bool tb) {
    const auto& sa = a->val.shape;
    const auto& sb = b->val.shape;
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0]) throw NumericError("bmm: expects [N,·,·]");
    const int N = sa[0];
    const int m = ta ? sa[2] : sa[1];
    const int k = ta ? sa[1] : sa[2];
    const int kb = tb ? sb[2] : sb[1];
    const int n = tb ? sb[1] : sb[2];
    if (k != kb) throw NumericError("bmm: inner dim mismatch");
    const int64_t as = int64_t(sa[1]) * sa[2], bs = int64_t(sb[1]) * sb[2];
    Tensor out({N, m, n});
    for (int i = 0; i < N; ++i)
        mm2(a->val.v.data() + i * as, b->val.v.data() + i * bs, out.v.data() + int64_t(i) * m * n,
            m, k, n, ta, tb);
    return make_op(std::move(out), {a, b}, [a, b, N, m, k, n, as, bs, ta, tb](Var& self) {
        const int64_t os = int64_t(m) * n;
        for (int i = 0; i < N; ++i) {
            const float* gC = self.grad.v.data() + i * os;
            const float* A = a->val.v.data() + i * as;
            const float* B = b->val.v.data() + i * bs;
            if (a->requires_grad) {
                float* gA = a->g().v.data() + i * as;
                // dA = ta ? B' dC^T : dC B'^T  with B' = op(B)
                if (!ta)
                    mm2(gC, B, gA, m, n, k, false, !tb);
                else
                    mm2(B, gC, gA, k, n, m, tb, true);
            }
            if (b->requires_grad) {
                float* gB = b->g().v.data() + i * bs;
                // dB = tb ? dC^T A' : A'^T dC  with A' = op(A)
                if (!tb)
                    mm2(A, gC, gB, k, m, n, !ta, false);
                else
                    mm2(gC, A, gB, n, m, k, true, ta);
            }
        }
    });
}

// ---------------- conv2d ----------------

namespace {
void im2col(const float* x, int C, int H, int W, int kh, int kw, int sh, int sw, int ph, int pw,
            int OH, int OW, float* col) {
    // col layout: [C*kh*kw, OH*OW]
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                float* dst = col + ((int64_t(c) * kh + ki) * kw + kj) * OH * OW;
                for (int oi = 0; oi < OH; ++oi) {
                    const int ii = oi * sh - ph + ki;
                    if (ii < 0 || ii >= H) {
                        std::fill_n(dst + int64_t(oi) * OW, OW, 0.f);
                        continue;
                    }
                    const float* src = x + (int64_t(c) * H + ii) * W;
                    for (int oj = 0; oj < OW; ++oj) {
                        const int jj = oj * sw - pw + kj;
                        dst[int64_t(oi) * OW + oj] = (jj >= 0 && jj < W) ? src[jj] : 0.f;
                    }
                }
            }
}

void col2im_acc(const float* col, int C, int H, int W, int kh, int kw, int sh, int sw, int ph,
                int pw, int OH, int OW, float* x) {
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                const float* src = col + ((int64_t(c) * kh + ki) * kw + kj) * OH * OW;
                for (int oi = 0; oi < OH; ++oi) {
                    const int ii = oi * sh - ph + ki;
                    if (ii < 0 || ii >= H) continue;
                    float* dst = x + (int64_t(c) * H + ii) * W;
                    for (int oj = 0; oj < OW; ++oj) {
                        const int jj = oj * sw - pw + kj;
                        if (jj >= 0 && jj < W) dst[jj] += src[int64_t(oi) * OW + oj];
                    }
                }
            }
}
}  // namespace

VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, int sh, int sw, int ph, int pw) {
    const auto& sx = x->val.shape;
    const auto& swt = w->val.shape;
    if (sx.size() != 4 || swt.size() != 4 || sx[1] != swt[1]) throw NumericError("conv2d: shape mismatch");
    const int N = sx[0], C = sx[1], H = sx[2], W = sx[3];
    const int Cout = swt[0], kh = swt[2], kw = swt[3];
    const int OH = (H + 2 * ph - kh) / sh + 1;
    const int OW = (W + 2 * pw - kw) / sw + 1;
    if (OH <= 0 || OW <= 0) throw NumericError("conv2d: empty output");
    const int CKK = C * kh * kw;

    Tensor out({N, Cout, OH, OW});
    std::vector<float> col(size_t(CKK) * OH * OW);
    for (int n = 0; n < N; ++n) {
        im2col(x->val.v.data() + int64_t(n) * C * H * W, C, H, W, kh, kw, sh, sw, ph, pw, OH, OW,
               col.data());
        matmul_acc(w->val.v.data(), col.data(), out.v.data() + int64_t(n) * Cout * OH * OW, Cout,
                   CKK, OH * OW);
    }
    if (b) {
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < Cout; ++c) {
                float* p = out.v.data() + (int64_t(n) * Cout + c) * OH * OW;
                const float bv = b->val.v[size_t(c)];
                for (int i = 0; i < OH * OW; ++i) p[i] += bv;
            }
    }
    std::vector<VarPtr> parents = b ? std::vector<VarPtr>{x, w, b} : std::vector<VarPtr>{x, w};
    return make_op(std::move(out), std::move(parents),
                   [x, w, b, N, C, H, W, Cout, kh, kw, sh, sw, ph, pw, OH, OW, CKK](Var& self) {
                       std::vector<float> col(size_t(CKK) * OH * OW);
                       std::vector<float> dcol(size_t(CKK) * OH * OW);
                       for (int n = 0; n < N; ++n) {
                           const float* gOut = self.grad.v.data() + int64_t(n) * Cout * OH * OW;
                           if (w->requires_grad) {
                               im2col(x->val.v.data() + int64_t(n) * C * H * W, C, H, W, kh, kw, sh,
                                      sw, ph, pw, OH, OW, col.data());
                               matmul_nt_acc(gOut, col.data(), w->g().v.data(), Cout, OH * OW, CKK);
                           }
                           if (x->requires_grad) {
                               std::fill(dcol.begin(), dcol.end(), 0.f);
                               matmul_tn_acc(w->val.v.data(), gOut, dcol.data(), CKK, Cout, OH * OW);
                               col2im_acc(dcol.data(), C, H, W, kh, kw, sh, sw, ph, pw, OH, OW,
                                          x->g().v.data() + int64_t(n) * C * H * W);
                           }
                       }
                       if (b && b->requires_grad) {
                           Tensor& gb = b->g();
                           for (int n = 0; n < N; ++n)
                               for (int c = 0; c < Cout; ++c) {
                                   const float* g = self.grad.v.data() + (int64_t(n) * Cout + c) * OH * OW;
                                   float acc = 0.f;
                                   for (int i = 0; i < OH * OW; ++i) acc += g[i];
                                   gb.v[size_t(c)] += acc;
                               }
                       }
                   });
}

// ---------------- norm / pooling / softmax ----------------

VarPtr group_norm(const VarPtr& x, const VarPtr& gamma, const VarPtr& beta, int groups, float eps) {
    const auto& s = x->val.shape;
    if (s.size() != 4 || s[1] % groups != 0) throw NumericError("group_norm: bad channels/groups");
    const int N = s[0], C = s[1], HW = s[2] * s[3];
    const int gc = C / groups;            // channels per group
    const int64_t gsz = int64_t(gc) * HW; // elements per group
    Tensor out(s);
    Tensor xhat(s);
    Tensor inv_sigma({N, groups});
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < groups; ++g) {
            const float* p = x->val.v.data() + (int64_t(n) * C + int64_t(g) * gc) * HW;
            double mu = 0.0;
            for (int64_t i = 0; i < gsz; ++i) mu += p[i];
            mu /= double(gsz);
            double var = 0.0;
            for (int64_t i = 0; i < gsz; ++i) {
                const double d = p[i] - mu;
                var += d * d;
            }
            var /= double(gsz);
            const float is = float(1.0 / std::sqrt(var + eps));
            inv_sigma.at2(n, g) = is;
            float* xh = xhat.v.data() + (int64_t(n) * C + int64_t(g) * gc) * HW;
            float* o = out.v.data() + (int64_t(n) * C + int64_t(g) * gc) * HW;
            for (int c = 0; c < gc; ++c) {
                const float ga = gamma->val.v[size_t(g * gc + c)];
                const float be = beta->val.v[size_t(g * gc + c)];
                for (int i = 0; i < HW; ++i) {
                    const float v = (p[int64_t(c) * HW + i] - float(mu)) * is;
                    xh[int64_t(c) * HW + i] = v;
                    o[int64_t(c) * HW + i] = v * ga + be;
                }
            }
        }
    return make_op(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, N, C, HW, groups, gc, gsz, xhat, inv_sigma](Var& self) {
                       for (int n = 0; n < N; ++n)
                           for (int g = 0; g < groups; ++g) {
                               const float* gy = self.grad.v.data() + (int64_t(n) * C + int64_t(g) * gc) * HW;
                               const float* xh = xhat.v.data() + (int64_t(n) * C + int64_t(g) * gc) * HW;
                               if (gamma->requires_grad || beta->requires_grad) {
                                   for (int c = 0; c < gc; ++c) {
                                       float dg = 0.f, db = 0.f;
                                       for (int i = 0; i < HW; ++i) {
                                           dg += gy[int64_t(c) * HW + i] * xh[int64_t(c) * HW + i];
                                           db += gy[int64_t(c) * HW + i];
                                       }
                                       if (gamma->requires_grad) gamma->g().v[size_t(g * gc + c)] += dg;
                                       if (beta->requires_grad) beta->g().v[size_t(g * gc + c)] += db;
                                   }
                               }
                               if (x->requires_grad) {
                                   // dL/dxhat = gy * gamma; dx = is*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                                   double m1 = 0.0, m2 = 0.0;
                                   for (int c = 0; c < gc; ++c) {
                                       const float ga = gamma->val.v[size_t(g * gc + c)];
                                       for (int i = 0; i < HW; ++i) {
                                           const double dxh = double(gy[int64_t(c) * HW + i]) * ga;
                                           m1 += dxh;
                                           m2 += dxh * xh[int64_t(c) * HW + i];
                                       }
                                   }
                                   m1 /= double(gsz);
                                   m2 /= double(gsz);
                                   const float is = inv_sigma.at2(n, g);
                                   float* gx = x->g().v.data() + (int64_t(n) * C + int64_t(g) * gc) * HW;
                                   for (int c = 0; c < gc; ++c) {
                                       const float ga = gamma->val.v[size_t(g * gc + c)];
                                       for (int i = 0; i < HW; ++i) {
                                           const double dxh = double(gy[int64_t(c) * HW + i]) * ga;
                                           gx[int64_t(c) * HW + i] +=
                                               float(is * (dxh - m1 - double(xh[int64_t(c) * HW + i]) * m2));
                                       }
                                   }
                               }
                           }
                   });
}

VarPtr layer_norm_lastdim(const VarPtr& x, const VarPtr& gamma, const VarPtr& beta, float eps) {
    const int D = x->val.shape.back();
    if (gamma->val.shape[0] != D || beta->val.shape[0] != D)
        throw NumericError("layer_norm: parameter width mismatch");
    const int64_t rows = x->val.numel() / D;
    Tensor out(x->val.shape);
    Tensor xhat(x->val.shape);
    Tensor inv_sigma({int(rows)});
    for (int64_t r = 0; r < rows; ++r) {
        const float* p = x->val.v.data() + r * D;
        double mu = 0.0;
        for (int j = 0; j < D; ++j) mu += p[j];
        mu /= D;
        double var = 0.0;
        for (int j = 0; j < D; ++j) {
            const double d = p[j] - mu;
            var += d * d;
        }
        var /= D;
        const float is = float(1.0 / std::sqrt(var + eps));
        inv_sigma.v[size_t(r)] = is;
        for (int j = 0; j < D; ++j) {
            const float v = (p[j] - float(mu)) * is;
            xhat.v[size_t(r * D + j)] = v;
            out.v[size_t(r * D + j)] = v * gamma->val.v[size_t(j)] + beta->val.v[size_t(j)];
        }
    }
    return make_op(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, rows, D, xhat, inv_sigma](Var& self) {
                       for (int64_t r = 0; r < rows; ++r) {
                           const float* gy = self.grad.v.data() + r * D;
                           const float* xh = xhat.v.data() + r * D;
                           if (gamma->requires_grad || beta->requires_grad) {
                               for (int j = 0; j < D; ++j) {
                                   if (gamma->requires_grad) gamma->g().v[size_t(j)] += gy[j] * xh[j];
                                   if (beta->requires_grad) beta->g().v[size_t(j)] += gy[j];
                               }
                           }
                           if (x->requires_grad) {
                               double m1 = 0.0, m2 = 0.0;
                               for (int j = 0; j < D; ++j) {
                                   const double dxh = double(gy[j]) * gamma->val.v[size_t(j)];
                                   m1 += dxh;
                                   m2 += dxh * xh[j];
                               }
                               m1 /= D;
                               m2 /= D;
                               const float is = inv_sigma.v[size_t(r)];
                               float* gx = x->g().v.data() + r * D;
                               for (int j = 0; j < D; ++j) {
                                   const double dxh = double(gy[j]) * gamma->val.v[size_t(j)];
                                   gx[j] += float(is * (dxh - m1 - double(xh[j]) * m2));
                               }
                           }
                       }
                   });
}

VarPtr nchw_to_nlc(const VarPtr& x) {
    const auto& s = x->val.shape;
    if (s.size() != 4) throw NumericError("nchw_to_nlc: expects NCHW");
    const int N = s[0], C = s[1], HW = s[2] * s[3];
    Tensor out({N, HW, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* src = x->val.v.data() + (int64_t(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) out.v[size_t((int64_t(n) * HW + i) * C + c)] = src[i];
        }
    return make_op(std::move(out), {x}, [x, N, C, HW](Var& self) {
        Tensor& gx = x->g();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                float* dst = gx.v.data() + (int64_t(n) * C + c) * HW;
                for (int i = 0; i < HW; ++i)
                    dst[i] += self.grad.v[size_t((int64_t(n) * HW + i) * C + c)];
            }
    });
}

VarPtr nlc_to_nchw(const VarPtr& x, int H, int W) {
    const auto& s = x->val.shape;
    if (s.size() != 3 || s[1] != H * W) throw NumericError("nlc_to_nchw: bad shape");
    const int N = s[0], C = s[2], HW = H * W;
    Tensor out({N, C, H, W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            float* dst = out.v.data() + (int64_t(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) dst[i] = x->val.v[size_t((int64_t(n) * HW + i) * C + c)];
        }
    return make_op(std::move(out), {x}, [x, N, C, HW](Var& self) {
        Tensor& gx = x->g();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const float* g = self.grad.v.data() + (int64_t(n) * C + c) * HW;
                for (int i = 0; i < HW; ++i)
                    gx.v[size_t((int64_t(n) * HW + i) * C + c)] += g[i];
            }
    });
}

VarPtr upsample_nearest2x(const VarPtr& x) {
    const auto& s = x->val.shape;
    if (s.size() != 4) throw NumericError("upsample_nearest2x: expects NCHW");
    const int N = s[0], C = s[1], H = s[2], W = s[3];
    Tensor out({N, C, H * 2, W * 2});
    for (int nc = 0; nc < N * C; ++nc) {
        const float* src = x->val.v.data() + int64_t(nc) * H * W;
        float* dst = out.v.data() + int64_t(nc) * H * W * 4;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                const float v = src[int64_t(i) * W + j];
                float* d = dst + (int64_t(i) * 2) * (W * 2) + j * 2;
                d[0] = v;
                d[1] = v;
                d[W * 2] = v;
                d[W * 2 + 1] = v;
            }
    }
    return make_op(std::move(out), {x}, [x, N, C, H, W](Var& self) {
        Tensor& gx = x->g();
        for (int nc = 0; nc < N * C; ++nc) {
            float* dst = gx.v.data() + int64_t(nc) * H * W;
            const float* g = self.grad.v.data() + int64_t(nc) * H * W * 4;
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    const float* s2 = g + (int64_t(i) * 2) * (W * 2) + j * 2;
                    dst[int64_t(i) * W + j] += s2[0] + s2[1] + s2[W * 2] + s2[W * 2 + 1];
                }
        }
    });
}

VarPtr global_avg_pool(const VarPtr& x) {
    const auto& s = x->val.shape;
    if (s.size() != 4) throw NumericError("global_avg_pool: expects NCHW");
    const int N = s[0], C = s[1], HW = s[2] * s[3];
    Tensor out({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* p = x->val.v.data() + (int64_t(n) * C + c) * HW;
            float acc = 0.f;
            for (int i = 0; i < HW; ++i) acc += p[i];
            out.at2(n, c) = acc / float(HW);
        }
    return make_op(std::move(out), {x}, [x, N, C, HW](Var& self) {
        Tensor& gx = x->g();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const float g = self.grad.at2(n, c) / float(HW);
                float* p = gx.v.data() + (int64_t(n) * C + c) * HW;
                for (int i = 0; i < HW; ++i) p[i] += g;
            }
    });
}

VarPtr softmax_lastdim(const VarPtr& x, const Tensor* key_mask) {
    const int K = x->val.shape.back();
    const int64_t rows = x->val.numel() / K;
    const int N = x->val.shape[0];
    const int64_t rows_per_n = rows / N;
    Tensor out(x->val.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const float* p = x->val.v.data() + r * K;
        float* o = out.v.data() + r * K;
        const float* mask = nullptr;
        if (key_mask) mask = key_mask->v.data() + (r / rows_per_n) * K;
        float mx = -1e30f;
        for (int j = 0; j < K; ++j) {
            if (mask && mask[j] == 0.f) continue;
            mx = std::max(mx, p[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < K; ++j) {
            if (mask && mask[j] == 0.f) {
                o[j] = 0.f;
                continue;
            }
            o[j] = std::exp(p[j] - mx);
            denom += o[j];
        }
        const float inv = float(1.0 / denom);
        for (int j = 0; j < K; ++j) o[j] *= inv;
    }
    return make_op(std::move(out), {x}, [x, K, rows](Var& self) {
        Tensor& gx = x->g();
        for (int64_t r = 0; r < rows; ++r) {
            const float* y = self.val.v.data() + r * K;
            const float* gy = self.grad.v.data() + r * K;
            float dot = 0.f;
            for (int j = 0; j < K; ++j) dot += y[j] * gy[j];
            float* g = gx.v.data() + r * K;
            for (int j = 0; j < K; ++j) g[j] += y[j] * (gy[j] - dot);
        }
    });
}

VarPtr gather_rows(const VarPtr& table, const std::vector<int>& ids) {
    const int V = table->val.shape[0], D = table->val.shape[1];
    Tensor out({int(ids.size()), D});
    for (size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (id < 0 || id >= V) throw DataError("gather_rows: id out of range");
        std::copy_n(table->val.v.data() + int64_t(id) * D, D, out.v.data() + int64_t(i) * D);
    }
    return make_op(std::move(out), {table}, [table, ids, D](Var& self) {
        Tensor& gt = table->g();
        for (size_t i = 0; i < ids.size(); ++i) {
            const float* g = self.grad.v.data() + int64_t(i) * D;
            float* dst = gt.v.data() + int64_t(ids[i]) * D;
            for (int d = 0; d < D; ++d) dst[d] += g[d];
        }
    });
}

// ---------------- reductions / losses ----------------

VarPtr sum_all(const VarPtr& a) {
    double acc = 0.0;
    for (float x : a->val.v) acc += x;
    return make_op(Tensor::scalar(float(acc)), {a}, [a](Var& self) {
        axpy(a->g(), Tensor::full(a->val.shape, self.grad.v[0]));
    });
}

VarPtr mean_all(const VarPtr& a) {
    double acc = 0.0;
    for (float x : a->val.v) acc += x;
    const float inv = 1.f / float(a->val.numel());
    return make_op(Tensor::scalar(float(acc * inv)), {a}, [a, inv](Var& self) {
        Tensor& ga = a->g();
        const float g = self.grad.v[0] * inv;
        for (auto& x : ga.v) x += g;
    });
}

VarPtr mse_loss(const VarPtr& pred, const Tensor& target) {
    if (!pred->val.same_shape(target)) throw NumericError("mse_loss: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < target.v.size(); ++i) {
        const double d = double(pred->val.v[i]) - target.v[i];
        acc += d * d;
    }
    const float inv = 1.f / float(target.numel());
    return make_op(Tensor::scalar(float(acc * inv)), {pred}, [pred, target, inv](Var& self) {
        Tensor& gp = pred->g();
        const float g = self.grad.v[0] * inv * 2.f;
        for (size_t i = 0; i < gp.v.size(); ++i)
            gp.v[i] += g * (pred->val.v[i] - target.v[i]);
    });
}

VarPtr cross_entropy(const VarPtr& logits, const std::vector<int>& labels) {
    const int N = logits->val.shape[0], C = logits->val.shape[1];
    if (int(labels.size()) != N) throw NumericError("cross_entropy: label count mismatch");
    Tensor probs({N, C});
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
        if (labels[size_t(n)] < 0 || labels[size_t(n)] >= C)
            throw DataError("cross_entropy: label outside classifier range");
        const float* p = logits->val.v.data() + int64_t(n) * C;
        float mx = p[0];
        for (int j = 1; j < C; ++j) mx = std::max(mx, p[j]);
        double denom = 0.0;
        for (int j = 0; j < C; ++j) denom += std::exp(double(p[j]) - mx);
        const double logz = std::log(denom) + mx;
        for (int j = 0; j < C; ++j) probs.at2(n, j) = float(std::exp(double(p[j]) - logz));
        loss += logz - p[labels[size_t(n)]];
    }
    const float inv = 1.f / float(N);
    return make_op(Tensor::scalar(float(loss * inv)), {logits},
                   [logits, labels, probs, N, C, inv](Var& self) {
                       Tensor& gl = logits->g();
                       const float g = self.grad.v[0] * inv;
                       for (int n = 0; n < N; ++n)
                           for (int j = 0; j < C; ++j) {
                               float d = probs.at2(n, j);
                               if (j == labels[size_t(n)]) d -= 1.f;
                               gl.at2(n, j) += g * d;
                           }
                   });
}

VarPtr p_distance(const VarPtr& a, const VarPtr& b, float p) {
    if (!a->val.same_shape(b->val) || a->val.ndim() != 2)
        throw NumericError("p_distance: expects matching [N,D]");
    if (p < 1.f) throw NumericError("p_distance: p must be >= 1");
    const int N = a->val.shape[0], D = a->val.shape[1];
    Tensor out({N});
    for (int n = 0; n < N; ++n) {
        double acc = 0.0;
        const float* pa = a->val.v.data() + int64_t(n) * D;
        const float* pb = b->val.v.data() + int64_t(n) * D;
        if (p == 2.f) {
            for (int d = 0; d < D; ++d) {
                const double df = double(pa[d]) - pb[d];
                acc += df * df;
            }
            out.v[size_t(n)] = float(std::sqrt(acc));
        } else {
            for (int d = 0; d < D; ++d) acc += std::pow(std::abs(double(pa[d]) - pb[d]), double(p));
            out.v[size_t(n)] = float(std::pow(acc, 1.0 / p));
        }
    }
    return make_op(std::move(out), {a, b}, [a, b, p, N, D](Var& self) {
        for (int n = 0; n < N; ++n) {
            const float dist = self.val.v[size_t(n)];
            const float g = self.grad.v[size_t(n)];
            if (g == 0.f) continue;
            const float* pa = a->val.v.data() + int64_t(n) * D;
            const float* pb = b->val.v.data() + int64_t(n) * D;
            const double safe = std::max(double(dist), 1e-12);
            for (int d = 0; d < D; ++d) {
                const double df = double(pa[d]) - pb[d];
                double dd;
                if (p == 2.f)
                    dd = df / safe;
                else
                    dd = std::pow(std::abs(df), double(p) - 1.0) * (df >= 0 ? 1.0 : -1.0) *
                         std::pow(safe, 1.0 - double(p));
                if (a->requires_grad) a->g().v[size_t(int64_t(n) * D + d)] += float(g * dd);
                if (b->requires_grad) b->g().v[size_t(int64_t(n) * D + d)] -= float(g * dd);
            }
        }
    });
}

}  // namespace hwgen
