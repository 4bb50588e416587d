#pragma once

#include "hwgen/latent_codec.hpp"
#include "hwgen/nn.hpp"

namespace hwgen {

// epsilon-prediction network contract: output shape == input latent shape.
// ctx is the condition token sequence (style token + text tokens), ctx_mask
// marks real tokens.
struct DenoiserBase {
    virtual ~DenoiserBase() = default;
    virtual VarPtr fwd(const VarPtr& z_t, const std::vector<int>& t, const VarPtr& ctx,
                       const Tensor& ctx_mask) const = 0;
    virtual NamedParams named_params() const = 0;
};

struct ResBlock {
    GroupNorm n1, n2;
    Conv2d c1, c2;
    Linear temb_proj;
    Conv2d skip;  // 1x1 when channel count changes
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(int cin, int cout, int temb_dim, int groups, Rng& rng);
    VarPtr fwd(const VarPtr& x, const VarPtr& temb) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

// pre-norm self-attention + cross-attention + feed-forward, all residual,
// single head, queries from spatial positions, keys/values from ctx for the
// cross part
struct AttnBlock {
    LayerNorm ln1, ln2, ln3;
    Linear q1, k1, v1, o1;      // self
    Linear q2, kc, vc, o2;      // cross (kc, vc from d_model)
    Linear ff1, ff2;
    int channels = 0;

    AttnBlock() = default;
    AttnBlock(int channels, int d_model, Rng& rng);
    VarPtr fwd(const VarPtr& x, const VarPtr& ctx, const Tensor& ctx_mask) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct UNetConfig {
    std::vector<int> widths = {64, 128, 256};
    int d_model = 320;
    int temb_dim = 128;
    int groups = 8;
};

// 3-level encoder/decoder on the (4,8,32) latent grid; attention at the two
// coarsest levels and the middle
struct UNetDenoiser : DenoiserBase {
    UNetConfig cfg;
    Conv2d stem;
    ResBlock res1;
    Conv2d down1;
    ResBlock res2;
    AttnBlock attn2;
    Conv2d down2;
    ResBlock res3;
    AttnBlock attn3;
    ResBlock mid1;
    AttnBlock attn_mid;
    ResBlock mid2;
    Conv2d up2_conv;
    ResBlock res_u2;
    AttnBlock attn_u2;
    Conv2d up1_conv;
    ResBlock res_u1;
    GroupNorm norm_out;
    Conv2d conv_out;
    Linear temb_fc1, temb_fc2;
    Linear style_to_temb;  // style token (ctx position 0) modulates every ResBlock

    UNetDenoiser() = default;
    UNetDenoiser(const UNetConfig& cfg, Rng& rng);
    VarPtr fwd(const VarPtr& z_t, const std::vector<int>& t, const VarPtr& ctx,
               const Tensor& ctx_mask) const override;
    NamedParams named_params() const override;
};

Tensor sinusoidal_embedding(const std::vector<int>& t, int dim);

}  // namespace hwgen
