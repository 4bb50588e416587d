#pragma once

#include <functional>
#include <memory>
#include <string>

#include "hwgen/image.hpp"
#include "hwgen/tensor.hpp"

namespace hwgen {

inline constexpr int kLatentC = 4;
inline constexpr int kLatentH = kCanonH / 8;   // 8
inline constexpr int kLatentW = kCanonW / 8;   // 32

// Latent grid for one image: Tensor of shape (4, 8, 32) plus codec identity.
struct LatentGrid {
    Tensor values;  // (kLatentC, kLatentH, kLatentW)
    std::string scale_tag;
};

class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual LatentGrid encode(const Raster& image) const = 0;
    virtual Raster decode(const LatentGrid& z) const = 0;
    virtual std::string tag() const = 0;
};

// Default codec: 4x4 block average to a 16x64 grid, then 2x2 space-to-depth
// into 4 channels, values mapped to [-1,1]. decode is its exact right inverse
// (encode(decode(z)) == z for every latent); decode(encode(x)) == x exactly on
// images constant over 4x4 blocks.
class StubCodec : public LatentCodec {
public:
    LatentGrid encode(const Raster& image) const override;
    Raster decode(const LatentGrid& z) const override;
    std::string tag() const override { return "stub"; }
};

// Adapter slot for an externally trained image autoencoder. Weights are not
// shipped; loading is delegated to the callback pair, with the published
// latent scaling constant applied around it.
class PretrainedCodecAdapter : public LatentCodec {
public:
    using EncodeFn = std::function<Tensor(const Tensor& rgb)>;  // (3,64,256) -> (4,8,32)
    using DecodeFn = std::function<Tensor(const Tensor& z)>;    // (4,8,32) -> (3,64,256)
    PretrainedCodecAdapter(std::string tag, float latent_scale, EncodeFn enc, DecodeFn dec)
        : tag_("pretrained:" + std::move(tag)), scale_(latent_scale), enc_(std::move(enc)),
          dec_(std::move(dec)) {}
    LatentGrid encode(const Raster& image) const override;
    Raster decode(const LatentGrid& z) const override;
    std::string tag() const override { return tag_; }

private:
    std::string tag_;
    float scale_;
    EncodeFn enc_;
    DecodeFn dec_;
};

std::shared_ptr<LatentCodec> make_codec(const std::string& key);

}  // namespace hwgen
