#include "hwgen/denoiser.hpp"

#include <cmath>

namespace hwgen {

Tensor sinusoidal_embedding(const std::vector<int>& t, int dim) {
    const int half = dim / 2;
    Tensor out({int(t.size()), dim});
    for (size_t n = 0; n < t.size(); ++n)
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * double(i) / double(half - 1));
            out.at2(int(n), i) = float(std::sin(double(t[n]) * freq));
            out.at2(int(n), half + i) = float(std::cos(double(t[n]) * freq));
        }
    return out;
}

ResBlock::ResBlock(int cin, int cout, int temb_dim, int groups, Rng& rng)
    : n1(cin, groups), n2(cout, groups),
      c1(cin, cout, 3, 3, 1, 1, 1, 1, rng),
      c2(cout, cout, 3, 3, 1, 1, 1, 1, rng),
      temb_proj(temb_dim, cout, rng) {
    if (cin != cout) {
        skip = Conv2d(cin, cout, 1, 1, 1, 1, 0, 0, rng);
        has_skip = true;
    }
}

VarPtr ResBlock::fwd(const VarPtr& x, const VarPtr& temb) const {
    VarPtr h = c1.fwd(silu(n1.fwd(x)));
    h = add_channel_bias_nc(h, temb_proj.fwd(silu(temb)));
    h = c2.fwd(silu(n2.fwd(h)));
    return add(h, has_skip ? skip.fwd(x) : x);
}

void ResBlock::collect(const std::string& prefix, NamedParams& out) const {
    n1.collect(prefix + ".n1", out);
    c1.collect(prefix + ".c1", out);
    temb_proj.collect(prefix + ".temb", out);
    n2.collect(prefix + ".n2", out);
    c2.collect(prefix + ".c2", out);
    if (has_skip) skip.collect(prefix + ".skip", out);
}

AttnBlock::AttnBlock(int channels_, int d_model, Rng& rng)
    : ln1(channels_), ln2(channels_), ln3(channels_),
      q1(channels_, channels_, rng), k1(channels_, channels_, rng),
      v1(channels_, channels_, rng), o1(channels_, channels_, rng),
      q2(channels_, channels_, rng), kc(d_model, channels_, rng),
      vc(d_model, channels_, rng), o2(channels_, channels_, rng),
      ff1(channels_, channels_ * 2, rng), ff2(channels_ * 2, channels_, rng),
      channels(channels_) {}

VarPtr AttnBlock::fwd(const VarPtr& x, const VarPtr& ctx, const Tensor& ctx_mask) const {
    const auto& s = x->val.shape;
    const int H = s[2], W = s[3];
    const float scale = 1.f / std::sqrt(float(channels));

    VarPtr t = nchw_to_nlc(x);  // (N, HW, C)

    // self-attention
    {
        VarPtr h = ln1.fwd(t);
        VarPtr att = softmax_lastdim(mul_scalar(bmm(q1.fwd(h), k1.fwd(h), false, true), scale));
        t = add(t, o1.fwd(bmm(att, v1.fwd(h), false, false)));
    }
    // cross-attention over condition tokens
    {
        VarPtr h = ln2.fwd(t);
        VarPtr scores = mul_scalar(bmm(q2.fwd(h), kc.fwd(ctx), false, true), scale);
        VarPtr att = softmax_lastdim(scores, &ctx_mask);
        t = add(t, o2.fwd(bmm(att, vc.fwd(ctx), false, false)));
    }
    // feed-forward
    t = add(t, ff2.fwd(silu(ff1.fwd(ln3.fwd(t)))));

    return nlc_to_nchw(t, H, W);
}

void AttnBlock::collect(const std::string& prefix, NamedParams& out) const {
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    ln3.collect(prefix + ".ln3", out);
    q1.collect(prefix + ".q1", out);
    k1.collect(prefix + ".k1", out);
    v1.collect(prefix + ".v1", out);
    o1.collect(prefix + ".o1", out);
    q2.collect(prefix + ".q2", out);
    kc.collect(prefix + ".kc", out);
    vc.collect(prefix + ".vc", out);
    o2.collect(prefix + ".o2", out);
    ff1.collect(prefix + ".ff1", out);
    ff2.collect(prefix + ".ff2", out);
}

UNetDenoiser::UNetDenoiser(const UNetConfig& cfg_, Rng& rng) : cfg(cfg_) {
    if (cfg.widths.size() != 3) throw ConfigError("denoiser expects 3 channel widths");
    const int w1 = cfg.widths[0], w2 = cfg.widths[1], w3 = cfg.widths[2];
    const int td = cfg.temb_dim, g = cfg.groups, dm = cfg.d_model;
    stem = Conv2d(kLatentC, w1, 3, 3, 1, 1, 1, 1, rng);
    res1 = ResBlock(w1, w1, td, g, rng);
    down1 = Conv2d(w1, w2, 3, 3, 2, 2, 1, 1, rng);
    res2 = ResBlock(w2, w2, td, g, rng);
    attn2 = AttnBlock(w2, dm, rng);
    down2 = Conv2d(w2, w3, 3, 3, 2, 2, 1, 1, rng);
    res3 = ResBlock(w3, w3, td, g, rng);
    attn3 = AttnBlock(w3, dm, rng);
    mid1 = ResBlock(w3, w3, td, g, rng);
    attn_mid = AttnBlock(w3, dm, rng);
    mid2 = ResBlock(w3, w3, td, g, rng);
    up2_conv = Conv2d(w3, w2, 3, 3, 1, 1, 1, 1, rng);
    res_u2 = ResBlock(2 * w2, w2, td, g, rng);
    attn_u2 = AttnBlock(w2, dm, rng);
    up1_conv = Conv2d(w2, w1, 3, 3, 1, 1, 1, 1, rng);
    res_u1 = ResBlock(2 * w1, w1, td, g, rng);
    norm_out = GroupNorm(w1, g);
    conv_out = Conv2d(w1, kLatentC, 3, 3, 1, 1, 1, 1, rng);
    temb_fc1 = Linear(td, td, rng);
    temb_fc2 = Linear(td, td, rng);
    style_to_temb = Linear(dm, td, rng);
}

VarPtr UNetDenoiser::fwd(const VarPtr& z_t, const std::vector<int>& t, const VarPtr& ctx,
                         const Tensor& ctx_mask) const {
    if (z_t->val.shape.size() != 4 || z_t->val.shape[1] != kLatentC)
        throw NumericError("denoiser: latent must be (N,4,H,W), got " + z_t->val.shape_str());
    VarPtr temb = temb_fc2.fwd(silu(temb_fc1.fwd(constant(sinusoidal_embedding(t, cfg.temb_dim)))));
    temb = add(temb, style_to_temb.fwd(seq_step(ctx, 0)));

    VarPtr x = stem.fwd(z_t);
    VarPtr h1 = res1.fwd(x, temb);                       // (N,w1,8,32)
    VarPtr h2 = attn2.fwd(res2.fwd(down1.fwd(h1), temb), ctx, ctx_mask);  // (N,w2,4,16)
    VarPtr h3 = attn3.fwd(res3.fwd(down2.fwd(h2), temb), ctx, ctx_mask);  // (N,w3,2,8)

    VarPtr m = mid2.fwd(attn_mid.fwd(mid1.fwd(h3, temb), ctx, ctx_mask), temb);

    VarPtr u2 = up2_conv.fwd(upsample_nearest2x(m));     // (N,w2,4,16)
    u2 = attn_u2.fwd(res_u2.fwd(concat_channels(u2, h2), temb), ctx, ctx_mask);

    VarPtr u1 = up1_conv.fwd(upsample_nearest2x(u2));    // (N,w1,8,32)
    u1 = res_u1.fwd(concat_channels(u1, h1), temb);

    return conv_out.fwd(silu(norm_out.fwd(u1)));
}

NamedParams UNetDenoiser::named_params() const {
    NamedParams out;
    stem.collect("unet.stem", out);
    res1.collect("unet.res1", out);
    down1.collect("unet.down1", out);
    res2.collect("unet.res2", out);
    attn2.collect("unet.attn2", out);
    down2.collect("unet.down2", out);
    res3.collect("unet.res3", out);
    attn3.collect("unet.attn3", out);
    mid1.collect("unet.mid1", out);
    attn_mid.collect("unet.attn_mid", out);
    mid2.collect("unet.mid2", out);
    up2_conv.collect("unet.up2_conv", out);
    res_u2.collect("unet.res_u2", out);
    attn_u2.collect("unet.attn_u2", out);
    up1_conv.collect("unet.up1_conv", out);
    res_u1.collect("unet.res_u1", out);
    norm_out.collect("unet.norm_out", out);
    conv_out.collect("unet.conv_out", out);
    temb_fc1.collect("unet.temb_fc1", out);
    temb_fc2.collect("unet.temb_fc2", out);
    style_to_temb.collect("unet.style_to_temb", out);
    return out;
}

}  // namespace hwgen
