#include "hwgen/latent_codec.hpp"

#include <algorithm>
#include <functional>

namespace hwgen {

namespace {
void require_canonical(const Raster& image) {
    if (!image.is_canonical())
        throw DataError("codec expects a canonical 64x256 image, got " +
                        std::to_string(image.h) + "x" + std::to_string(image.w));
}
void require_latent_shape(const Tensor& t) {
    if (t.shape != std::vector<int>{kLatentC, kLatentH, kLatentW})
        throw NumericError("latent must be (4,8,32), got " + t.shape_str());
}
}  // namespace

LatentGrid StubCodec::encode(const Raster& image) const {
    require_canonical(image);
    // 4x4 block means -> 16 x 64
    const int bh = 16, bw = 64;
    Tensor small({bh, bw});
    for (int i = 0; i < bh; ++i)
        for (int j = 0; j < bw; ++j) {
            float acc = 0.f;
            for (int di = 0; di < 4; ++di)
                for (int dj = 0; dj < 4; ++dj) acc += image.at(i * 4 + di, j * 4 + dj);
            small.at2(i, j) = acc / 16.f;
        }
    // 2x2 space-to-depth -> 4 x 8 x 32, then affine to [-1,1]
    LatentGrid z;
    z.values = Tensor({kLatentC, kLatentH, kLatentW});
    z.scale_tag = tag();
    for (int c = 0; c < 4; ++c) {
        const int di = c / 2, dj = c % 2;
        for (int i = 0; i < kLatentH; ++i)
            for (int j = 0; j < kLatentW; ++j)
                z.values.at3(c, i, j) = 2.f * small.at2(i * 2 + di, j * 2 + dj) - 1.f;
    }
    if (!z.values.all_finite()) throw NumericError("stub encode produced non-finite latent");
    return z;
}

Raster StubCodec::decode(const LatentGrid& z) const {
    require_latent_shape(z.values);
    Raster out(kCanonH, kCanonW);
    for (int c = 0; c < 4; ++c) {
        const int di = c / 2, dj = c % 2;
        for (int i = 0; i < kLatentH; ++i)
            for (int j = 0; j < kLatentW; ++j) {
                const float v = std::clamp((z.values.at3(c, i, j) + 1.f) * 0.5f, 0.f, 1.f);
                const int si = (i * 2 + di) * 4, sj = (j * 2 + dj) * 4;
                for (int ii = 0; ii < 4; ++ii)
                    for (int jj = 0; jj < 4; ++jj) out.at(si + ii, sj + jj) = v;
            }
    }
    return out;
}

LatentGrid PretrainedCodecAdapter::encode(const Raster& image) const {
    require_canonical(image);
    // grayscale replicated to 3 channels only inside this adapter
    Tensor rgb({3, kCanonH, kCanonW});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < kCanonH; ++i)
            for (int j = 0; j < kCanonW; ++j) rgb.at3(c, i, j) = image.at(i, j);
    Tensor z = enc_(rgb);
    require_latent_shape(z);
    for (auto& v : z.v) v *= scale_;
    LatentGrid out;
    out.values = std::move(z);
    out.scale_tag = tag();
    return out;
}

Raster PretrainedCodecAdapter::decode(const LatentGrid& z) const {
    require_latent_shape(z.values);
    Tensor scaled = z.values;
    for (auto& v : scaled.v) v /= scale_;
    Tensor rgb = dec_(scaled);
    if (rgb.shape != std::vector<int>{3, kCanonH, kCanonW})
        throw NumericError("pretrained codec decode returned bad shape " + rgb.shape_str());
    Raster out(kCanonH, kCanonW);
    for (int i = 0; i < kCanonH; ++i)
        for (int j = 0; j < kCanonW; ++j) {
            const float g = (rgb.at3(0, i, j) + rgb.at3(1, i, j) + rgb.at3(2, i, j)) / 3.f;
            out.at(i, j) = std::clamp(g, 0.f, 1.f);
        }
    return out;
}

std::shared_ptr<LatentCodec> make_codec(const std::string& key) {
    if (key == "stub") return std::make_shared<StubCodec>();
    if (key.rfind("pretrained-adapter", 0) == 0)
        throw ConfigError("pretrained codec adapter requires external weights; construct "
                          "PretrainedCodecAdapter programmatically");
    throw ConfigError("unknown codec key: '" + key + "'");
}

}  // namespace hwgen
