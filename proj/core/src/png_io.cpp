#include "objswap/png_io.hpp"

#include "objswap/errors.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

namespace objswap {

namespace {

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back((unsigned char)(v >> 24));
    out.push_back((unsigned char)(v >> 16));
    out.push_back((unsigned char)(v >> 8));
    out.push_back((unsigned char)v);
}

uint32_t get_u32(const unsigned char* p) {
    return ((uint32_t)p[0] << 24) | ((uint32_t)p[1] << 16) | ((uint32_t)p[2] << 8) | p[3];
}

void write_chunk(std::vector<unsigned char>& out, const char* type,
                 const unsigned char* payload, size_t len) {
    put_u32(out, (uint32_t)len);
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len)
        out.insert(out.end(), payload, payload + len);
    uint32_t crc = crc32(0L, out.data() + start, (uInt)(4 + len));
    put_u32(out, crc);
}

unsigned char to_byte(double v) {
    double s = std::floor(v * 255.0 + 0.5);
    if (s < 0)
        s = 0;
    if (s > 255)
        s = 255;
    return (unsigned char)s;
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc)
        return a;
    if (pb <= pc)
        return b;
    return c;
}

}  // namespace

void write_png(const std::string& path, const Tensor& img) {
    if (img.ndim() != 3)
        throw ValidationError("img", "expected [C,H,W] tensor, got " + img.shape_str());
    int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    int color_type;
    if (c == 1)
        color_type = 0;
    else if (c == 3)
        color_type = 2;
    else if (c == 4)
        color_type = 6;
    else
        throw ValidationError("img", "unsupported channel count " + std::to_string(c));

    // Filter 0 on every scanline; the corpus compresses fine without
    // per-row filter search and the output stays deterministic.
    std::vector<unsigned char> raw((size_t)h * (1 + (size_t)w * c));
    size_t k = 0;
    for (int y = 0; y < h; ++y) {
        raw[k++] = 0;
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                raw[k++] = to_byte(img.at(ch, y, x));
    }

    uLongf bound = compressBound((uLong)raw.size());
    std::vector<unsigned char> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), (uLong)raw.size(), 6) != Z_OK)
        throw IoError("png deflate failed for " + path);
    compressed.resize(bound);

    std::vector<unsigned char> out;
    const unsigned char sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);
    unsigned char ihdr[13];
    ihdr[0] = (unsigned char)(w >> 24);
    ihdr[1] = (unsigned char)(w >> 16);
    ihdr[2] = (unsigned char)(w >> 8);
    ihdr[3] = (unsigned char)w;
    ihdr[4] = (unsigned char)(h >> 24);
    ihdr[5] = (unsigned char)(h >> 16);
    ihdr[6] = (unsigned char)(h >> 8);
    ihdr[7] = (unsigned char)h;
    ihdr[8] = 8;  // bit depth
    ihdr[9] = (unsigned char)color_type;
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    write_chunk(out, "IHDR", ihdr, 13);
    write_chunk(out, "IDAT", compressed.data(), compressed.size());
    write_chunk(out, "IEND", nullptr, 0);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("cannot open for write: " + path);
    f.write((const char*)out.data(), (std::streamsize)out.size());
    if (!f)
        throw IoError("short write: " + path);
}

Tensor read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    const unsigned char sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
        throw IoError("not a PNG file: " + path);

    size_t pos = 8;
    int w = 0, h = 0, bit_depth = 0, color_type = 0, interlace = 0;
    std::vector<unsigned char> idat;
    bool seen_ihdr = false, seen_iend = false;
    while (pos + 8 <= buf.size() && !seen_iend) {
        uint32_t len = get_u32(&buf[pos]);
        if (pos + 12 + len > buf.size())
            throw IoError("truncated PNG: " + path);
        const char* type = (const char*)&buf[pos + 4];
        const unsigned char* payload = &buf[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = (int)get_u32(payload);
            h = (int)get_u32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            interlace = payload[12];
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || w <= 0 || h <= 0)
        throw IoError("missing IHDR: " + path);
    if (bit_depth != 8)
        throw IoError("unsupported PNG bit depth " + std::to_string(bit_depth) + ": " + path);
    if (interlace != 0)
        throw IoError("interlaced PNG not supported: " + path);
    int c;
    switch (color_type) {
        case 0: c = 1; break;
        case 2: c = 3; break;
        case 4: c = 2; break;
        case 6: c = 4; break;
        default:
            throw IoError("unsupported PNG color type " + std::to_string(color_type) + ": " + path);
    }

    uLongf raw_len = (uLongf)((size_t)h * (1 + (size_t)w * c));
    std::vector<unsigned char> raw(raw_len);
    if (uncompress(raw.data(), &raw_len, idat.data(), (uLong)idat.size()) != Z_OK ||
        raw_len != raw.size())
        throw IoError("png inflate failed: " + path);

    // Undo scanline filters in place.
    size_t stride = (size_t)w * c;
    std::vector<unsigned char> prev(stride, 0);
    Tensor img({c, h, w});
    for (int y = 0; y < h; ++y) {
        unsigned char* row = &raw[(size_t)y * (stride + 1)];
        int filter = row[0];
        unsigned char* cur = row + 1;
        for (size_t i = 0; i < stride; ++i) {
            int a = i >= (size_t)c ? cur[i - c] : 0;
            int b = prev[i];
            int cc = i >= (size_t)c ? prev[i - c] : 0;
            int v = cur[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, cc); break;
                default: throw IoError("bad PNG filter type: " + path);
            }
            cur[i] = (unsigned char)v;
        }
        std::memcpy(prev.data(), cur, stride);
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                img.at(ch, y, x) = cur[(size_t)x * c + ch] / 255.0;
    }
    return img;
}

}  // namespace objswap
