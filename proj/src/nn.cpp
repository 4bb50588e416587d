#include "hwgen/nn.hpp"

#include <cmath>

namespace hwgen {

Linear::Linear(int in, int out, Rng& rng, bool bias) {
    const float s = std::sqrt(1.f / float(in));
    W = leaf(Tensor::uniform({in, out}, rng, -s, s), true);
    if (bias) b = leaf(Tensor::zeros({out}), true);
}

void Linear::collect(const std::string& prefix, NamedParams& out) const {
    out.push_back({prefix + ".W", W});
    if (b) out.push_back({prefix + ".b", b});
}

Conv2d::Conv2d(int cin, int cout, int kh, int kw, int sh_, int sw_, int ph_, int pw_, Rng& rng)
    : sh(sh_), sw(sw_), ph(ph_), pw(pw_) {
    const float s = std::sqrt(2.f / float(cin * kh * kw));
    W = leaf(Tensor::randn({cout, cin, kh, kw}, rng, s), true);
    b = leaf(Tensor::zeros({cout}), true);
}

void Conv2d::collect(const std::string& prefix, NamedParams& out) const {
    out.push_back({prefix + ".W", W});
    out.push_back({prefix + ".b", b});
}

GroupNorm::GroupNorm(int channels, int groups_) : groups(groups_) {
    gamma = leaf(Tensor::full({channels}, 1.f), true);
    beta = leaf(Tensor::zeros({channels}), true);
}

void GroupNorm::collect(const std::string& prefix, NamedParams& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
}

LayerNorm::LayerNorm(int dim) {
    gamma = leaf(Tensor::full({dim}, 1.f), true);
    beta = leaf(Tensor::zeros({dim}), true);
}

void LayerNorm::collect(const std::string& prefix, NamedParams& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
}

GRU::GRU(int in, int hidden_, Rng& rng) : wx(in, 3 * hidden_, rng), wh(hidden_, 3 * hidden_, rng), hidden(hidden_) {}

VarPtr GRU::fwd(const VarPtr& x) const {
    const int N = x->val.shape[0], L = x->val.shape[1];
    const int H = hidden;
    // input projections for all steps at once
    VarPtr gi_all = wx.fwd(x);  // [N,L,3H]
    VarPtr h = constant(Tensor::zeros({N, H}));
    std::vector<VarPtr> outs;
    outs.reserve(size_t(L));
    for (int l = 0; l < L; ++l) {
        VarPtr gi = seq_step(gi_all, l);  // [N,3H]
        VarPtr gh = wh.fwd(h);            // [N,3H]
        VarPtr r = sigmoid(add(slice_lastdim(gi, 0, H), slice_lastdim(gh, 0, H)));
        VarPtr z = sigmoid(add(slice_lastdim(gi, H, 2 * H), slice_lastdim(gh, H, 2 * H)));
        VarPtr n = tanh_op(add(slice_lastdim(gi, 2 * H, 3 * H),
                               mul(r, slice_lastdim(gh, 2 * H, 3 * H))));
        // h' = n + z*(h - n)
        h = add(n, mul(z, sub(h, n)));
        outs.push_back(h);
    }
    return stack_seq(outs);  // [N,L,H]
}

void GRU::collect(const std::string& prefix, NamedParams& out) const {
    wx.collect(prefix + ".wx", out);
    wh.collect(prefix + ".wh", out);
}

VarPtr BiGRU::fwd(const VarPtr& x) const {
    VarPtr f = fw.fwd(x);
    VarPtr b = reverse_seq(bw.fwd(reverse_seq(x)));
    // concat along feature dim via channel concat on [N*L, H, 1, 1]
    const int N = x->val.shape[0], L = x->val.shape[1];
    const int H = f->val.shape[2];
    VarPtr cat = concat_channels(reshape(f, {N * L, H, 1, 1}), reshape(b, {N * L, H, 1, 1}));
    return reshape(cat, {N, L, 2 * H});
}

void BiGRU::collect(const std::string& prefix, NamedParams& out) const {
    fw.collect(prefix + ".fw", out);
    bw.collect(prefix + ".bw", out);
}

Adam::Adam(std::vector<VarPtr> ps, float lr_, float weight_decay_, bool decoupled_)
    : params(std::move(ps)) {
    lr = lr_;
    weight_decay = weight_decay_;
    decoupled = decoupled_;
    m.reserve(params.size());
    v.reserve(params.size());
    for (auto& p : params) {
        m.push_back(Tensor::zeros(p->val.shape));
        v.push_back(Tensor::zeros(p->val.shape));
    }
}

void Adam::step() {
    ++t;
    const double bc1 = 1.0 - std::pow(double(beta1), t);
    const double bc2 = 1.0 - std::pow(double(beta2), t);
    for (size_t i = 0; i < params.size(); ++i) {
        Var& p = *params[i];
        if (!p.grad_alloc) continue;
        float* w = p.val.v.data();
        const float* g = p.grad.v.data();
        float* mi = m[i].v.data();
        float* vi = v[i].v.data();
        for (size_t j = 0; j < p.val.v.size(); ++j) {
            float gj = g[j];
            if (!decoupled && weight_decay != 0.f) gj += weight_decay * w[j];
            mi[j] = beta1 * mi[j] + (1.f - beta1) * gj;
            vi[j] = beta2 * vi[j] + (1.f - beta2) * gj * gj;
            const double mhat = mi[j] / bc1;
            const double vhat = vi[j] / bc2;
            double upd = mhat / (std::sqrt(vhat) + eps);
            if (decoupled && weight_decay != 0.f) upd += double(weight_decay) * w[j];
            w[j] -= float(double(lr) * upd);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params) p->zero_grad();
}

}  // namespace hwgen
