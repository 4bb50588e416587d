#include "hwgen/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace hwgen {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(f)),
                                      std::istreambuf_iterator<char>());
}

uint32_t be32(const unsigned char* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

void put_be32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

const unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};

std::vector<unsigned char> zlib_inflate(const unsigned char* data, size_t n, size_t hint) {
    std::vector<unsigned char> out;
    out.reserve(hint);
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw DataError("zlib inflate init failed");
    zs.next_in = const_cast<unsigned char*>(data);
    zs.avail_in = uInt(n);
    unsigned char buf[1 << 15];
    int ret = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw DataError("corrupt PNG stream");
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
    } while (ret != Z_STREAM_END && zs.avail_in > 0);
    inflateEnd(&zs);
    return out;
}

std::vector<unsigned char> zlib_deflate(const unsigned char* data, size_t n) {
    uLongf cap = compressBound(uLong(n));
    std::vector<unsigned char> out(cap);
    if (compress2(out.data(), &cap, data, uLong(n), 6) != Z_OK)
        throw NumericError("zlib deflate failed");
    out.resize(cap);
    return out;
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

Raster decode_png(const std::vector<unsigned char>& bytes, const std::string& path) {
    if (bytes.size() < 8 + 25 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
        throw DataError("not a PNG file: " + path);
    size_t pos = 8;
    uint32_t width = 0, height = 0;
    int bitdepth = 0, colortype = 0, interlace = 0;
    std::vector<unsigned char> idat;
    bool seen_ihdr = false;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = be32(&bytes[pos]);
        const std::string type(reinterpret_cast<const char*>(&bytes[pos + 4]), 4);
        if (pos + 12 + len > bytes.size()) throw DataError("truncated PNG: " + path);
        const unsigned char* data = &bytes[pos + 8];
        if (type == "IHDR") {
            width = be32(data);
            height = be32(data + 4);
            bitdepth = data[8];
            colortype = data[9];
            interlace = data[12];
            seen_ihdr = true;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || width == 0 || height == 0) throw DataError("bad PNG header: " + path);
    if (bitdepth != 8 || interlace != 0)
        throw DataError("unsupported PNG (need 8-bit non-interlaced): " + path);
    int channels;
    switch (colortype) {
        case 0: channels = 1; break;  // gray
        case 2: channels = 3; break;  // rgb
        case 4: channels = 2; break;  // gray+alpha
        case 6: channels = 4; break;  // rgba
        default: throw DataError("unsupported PNG color type: " + path);
    }
    const size_t stride = size_t(width) * channels;
    auto raw = zlib_inflate(idat.data(), idat.size(), (stride + 1) * height);
    if (raw.size() < (stride + 1) * height) throw DataError("short PNG pixel data: " + path);

    std::vector<unsigned char> prev(stride, 0), cur(stride);
    Raster img{int(height), int(width)};
    for (uint32_t y = 0; y < height; ++y) {
        const unsigned char* line = &raw[(stride + 1) * y];
        const int filter = line[0];
        for (size_t x = 0; x < stride; ++x) {
            const int rawv = line[1 + x];
            const int a = x >= size_t(channels) ? cur[x - channels] : 0;
            const int b = prev[x];
            const int c = x >= size_t(channels) ? prev[x - channels] : 0;
            int v;
            switch (filter) {
                case 0: v = rawv; break;
                case 1: v = rawv + a; break;
                case 2: v = rawv + b; break;
                case 3: v = rawv + (a + b) / 2; break;
                case 4: v = rawv + paeth(a, b, c); break;
                default: throw DataError("bad PNG filter: " + path);
            }
            cur[x] = uint8_t(v);
        }
        for (uint32_t x = 0; x < width; ++x) {
            float g;
            switch (colortype) {
                case 0: g = cur[x] / 255.f; break;
                case 4: g = cur[size_t(x) * 2] / 255.f; break;
                case 2: {
                    const unsigned char* p = &cur[size_t(x) * 3];
                    g = (p[0] + p[1] + p[2]) / (3.f * 255.f);
                    break;
                }
                default: {  // 6
                    const unsigned char* p = &cur[size_t(x) * 4];
                    g = (p[0] + p[1] + p[2]) / (3.f * 255.f);
                    break;
                }
            }
            img.at(int(y), int(x)) = g;
        }
        std::swap(prev, cur);
    }
    return img;
}

Raster decode_pnm(const std::vector<unsigned char>& bytes, const std::string& path) {
    size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else
                break;
        }
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t += char(bytes[pos++]);
        return t;
    };
    const std::string magic = token();
    const bool color = magic == "P6";
    if (magic != "P5" && magic != "P6") throw DataError("unsupported image format: " + path);
    const int w = std::stoi(token());
    const int h = std::stoi(token());
    const int maxv = std::stoi(token());
    if (w <= 0 || h <= 0 || maxv <= 0 || maxv > 255) throw DataError("bad PNM header: " + path);
    ++pos;  // single whitespace after maxval
    const int ch = color ? 3 : 1;
    if (bytes.size() - pos < size_t(w) * h * ch) throw DataError("truncated PNM: " + path);
    Raster img(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const unsigned char* p = &bytes[pos + (size_t(i) * w + j) * ch];
            float g = color ? (p[0] + p[1] + p[2]) / 3.f : float(p[0]);
            img.at(i, j) = g / float(maxv);
        }
    return img;
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& data) {
    put_be32(out, uint32_t(data.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uint32_t crc =
        uint32_t(crc32(0, out.data() + start, uInt(out.size() - start)));
    put_be32(out, crc);
}

}  // namespace

Raster load_image(const std::string& path) {
    auto bytes = read_file(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
        return decode_png(bytes, path);
    return decode_pnm(bytes, path);
}

void save_png(const std::string& path, const Raster& img,
              const std::map<std::string, std::string>& text_chunks) {
    if (img.h <= 0 || img.w <= 0) throw DataError("save_png: empty image");
    std::vector<unsigned char> out(kPngSig, kPngSig + 8);

    std::vector<unsigned char> ihdr;
    put_be32(ihdr, uint32_t(img.w));
    put_be32(ihdr, uint32_t(img.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    append_chunk(out, "IHDR", ihdr);

    for (const auto& [k, v] : text_chunks) {
        std::vector<unsigned char> t(k.begin(), k.end());
        t.push_back(0);
        t.insert(t.end(), v.begin(), v.end());
        append_chunk(out, "tEXt", t);
    }

    std::vector<unsigned char> raw((size_t(img.w) + 1) * img.h);
    for (int i = 0; i < img.h; ++i) {
        raw[(size_t(img.w) + 1) * i] = 0;  // filter: none
        for (int j = 0; j < img.w; ++j) {
            const float v = std::clamp(img.at(i, j), 0.f, 1.f);
            raw[(size_t(img.w) + 1) * i + 1 + j] = uint8_t(std::lround(v * 255.f));
        }
    }
    append_chunk(out, "IDAT", zlib_deflate(raw.data(), raw.size()));
    append_chunk(out, "IEND", {});

    // atomic: temp + rename
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write: " + tmp);
        f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw DataError("cannot rename to: " + path);
}

std::map<std::string, std::string> read_png_text(const std::string& path) {
    auto bytes = read_file(path);
    std::map<std::string, std::string> out;
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0) return out;
    size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = be32(&bytes[pos]);
        const std::string type(reinterpret_cast<const char*>(&bytes[pos + 4]), 4);
        if (pos + 12 + len > bytes.size()) break;
        if (type == "tEXt") {
            const unsigned char* d = &bytes[pos + 8];
            size_t z = 0;
            while (z < len && d[z] != 0) ++z;
            if (z < len)
                out[std::string(d, d + z)] = std::string(d + z + 1, d + len);
        }
        if (type == "IEND") break;
        pos += 12 + len;
    }
    return out;
}

Raster resize_bilinear(const Raster& src, int oh, int ow) {
    if (src.h <= 0 || src.w <= 0) throw DataError("resize: empty source");
    if (oh <= 0 || ow <= 0) throw DataError("resize: empty target");
    if (oh == src.h && ow == src.w) return src;
    Raster out(oh, ow);
    const double sy = double(src.h) / oh;
    const double sx = double(src.w) / ow;
    for (int i = 0; i < oh; ++i) {
        double fy = (i + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, double(src.h - 1));
        const int y0 = int(fy);
        const int y1 = std::min(y0 + 1, src.h - 1);
        const double wy = fy - y0;
        for (int j = 0; j < ow; ++j) {
            double fx = (j + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, double(src.w - 1));
            const int x0 = int(fx);
            const int x1 = std::min(x0 + 1, src.w - 1);
            const double wx = fx - x0;
            const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0) + wx * src.at(y0, x1)) +
                             wy * ((1 - wx) * src.at(y1, x0) + wx * src.at(y1, x1));
            out.at(i, j) = float(v);
        }
    }
    return out;
}

bool ink_bbox(const Raster& img, float thr, int& top, int& left, int& bottom, int& right) {
    top = img.h;
    left = img.w;
    bottom = -1;
    right = -1;
    for (int i = 0; i < img.h; ++i)
        for (int j = 0; j < img.w; ++j)
            if (1.f - img.at(i, j) > thr) {
                top = std::min(top, i);
                left = std::min(left, j);
                bottom = std::max(bottom, i);
                right = std::max(right, j);
            }
    return bottom >= 0;
}

Raster crop(const Raster& img, int top, int left, int h, int w) {
    Raster out(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) out.at(i, j) = img.at(top + i, left + j);
    return out;
}

}  // namespace hwgen
