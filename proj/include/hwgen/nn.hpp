#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hwgen/autograd.hpp"

namespace hwgen {

using NamedParams = std::vector<std::pair<std::string, VarPtr>>;

struct Linear {
    VarPtr W, b;  // W is [in, out]
    Linear() = default;
    Linear(int in, int out, Rng& rng, bool bias = true);
    VarPtr fwd(const VarPtr& x) const { return linear(x, W, b); }
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct Conv2d {
    VarPtr W, b;  // W is [cout, cin, kh, kw]
    int sh = 1, sw = 1, ph = 0, pw = 0;
    Conv2d() = default;
    Conv2d(int cin, int cout, int kh, int kw, int sh, int sw, int ph, int pw, Rng& rng);
    VarPtr fwd(const VarPtr& x) const { return conv2d(x, W, b, sh, sw, ph, pw); }
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct GroupNorm {
    VarPtr gamma, beta;
    int groups = 1;
    GroupNorm() = default;
    GroupNorm(int channels, int groups);
    VarPtr fwd(const VarPtr& x) const { return group_norm(x, gamma, beta, groups); }
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct LayerNorm {
    VarPtr gamma, beta;
    LayerNorm() = default;
    explicit LayerNorm(int dim);
    VarPtr fwd(const VarPtr& x) const { return layer_norm_lastdim(x, gamma, beta); }
    void collect(const std::string& prefix, NamedParams& out) const;
};

// single-direction GRU over [N,L,D] -> [N,L,H]
struct GRU {
    Linear wx;  // [D, 3H]
    Linear wh;  // [H, 3H]
    int hidden = 0;
    GRU() = default;
    GRU(int in, int hidden, Rng& rng);
    VarPtr fwd(const VarPtr& x) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

// two GRUs over the sequence and its reverse, concatenated -> [N,L,2H]
struct BiGRU {
    GRU fw, bw;
    BiGRU() = default;
    BiGRU(int in, int hidden, Rng& rng) : fw(in, hidden, rng), bw(in, hidden, rng) {}
    VarPtr fwd(const VarPtr& x) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct Adam {
    std::vector<VarPtr> params;
    float lr = 1e-3f;
    float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
    float weight_decay = 0.f;
    bool decoupled = false;  // true = AdamW
    int t = 0;
    std::vector<Tensor> m, v;

    explicit Adam(std::vector<VarPtr> ps, float lr, float weight_decay = 0.f,
                  bool decoupled = false);
    void step();
    void zero_grad();
};

inline std::vector<VarPtr> param_list(const NamedParams& named) {
    std::vector<VarPtr> out;
    out.reserve(named.size());
    for (auto& [k, p] : named) out.push_back(p);
    return out;
}

}  // namespace hwgen
