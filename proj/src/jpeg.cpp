#include "ar2/jpeg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

namespace ar2 {
namespace {

const uint8_t kZigzag[64] = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

const uint8_t kLumaQuant[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

const uint8_t kChromaQuant[64] = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

const uint8_t kDcLumaBits[16] = {0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
const uint8_t kDcLumaVals[12] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
const uint8_t kDcChromaBits[16] = {0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
const uint8_t kDcChromaVals[12] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};

const uint8_t kAcLumaBits[16] = {0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d};
const uint8_t kAcLumaVals[162] = {
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06,
    0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08,
    0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0, 0x24, 0x33, 0x62, 0x72,
    0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45,
    0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
    0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75,
    0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3,
    0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6,
    0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9,
    0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
    0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4,
    0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa};
const uint8_t kAcChromaBits[16] = {0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77};
const uint8_t kAcChromaVals[162] = {
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41,
    0x51, 0x07, 0x61, 0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91,
    0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0, 0x15, 0x62, 0x72, 0xd1,
    0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26,
    0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44,
    0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58,
    0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74,
    0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a,
    0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4,
    0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7,
    0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda,
    0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4,
    0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa};

struct HuffEncoder {
    uint16_t code[256];
    uint8_t len[256];

    HuffEncoder(const uint8_t* bits, const uint8_t* vals, int nvals) {
        std::memset(len, 0, sizeof(len));
        int k = 0;
        uint16_t c = 0;
        for (int l = 1; l <= 16; ++l) {
            for (int i = 0; i < bits[l - 1]; ++i) {
                if (k >= nvals) throw DataError("jpeg: huffman spec overflow");
                code[vals[k]] = c;
                len[vals[k]] = uint8_t(l);
                ++c;
                ++k;
            }
            c = uint16_t(c << 1);
        }
        if (k != nvals) throw DataError("jpeg: huffman spec underflow");
    }
};

struct HuffDecoder {
    // Canonical decode tables per code length (F.2.2.3).
    int32_t mincode[17];
    int32_t maxcode[17];  // -1 when no codes of that length
    int valptr[17];
    std::vector<uint8_t> vals;

    void build(const uint8_t* bits, const uint8_t* values, int nvals) {
        vals.assign(values, values + nvals);
        int32_t code = 0;
        int k = 0;
        for (int l = 1; l <= 16; ++l) {
            valptr[l] = k;
            mincode[l] = code;
            code += bits[l - 1];
            k += bits[l - 1];
            maxcode[l] = bits[l - 1] ? code - 1 : -1;
            code <<= 1;
        }
        if (k != nvals) throw DataError("jpeg: DHT count mismatch");
    }
};

class BitWriter {
public:
    explicit BitWriter(std::vector<uint8_t>& out) : out_(out) {}
    void put(uint32_t value, int nbits) {
        for (int i = nbits - 1; i >= 0; --i) {
            acc_ = (acc_ << 1) | ((value >> i) & 1u);
            if (++nbits_ == 8) flush_byte();
        }
    }
    void pad() {
        while (nbits_ != 0) {
            acc_ = (acc_ << 1) | 1u;
            if (++nbits_ == 8) flush_byte();
        }
    }

private:
    void flush_byte() {
        out_.push_back(uint8_t(acc_));
        if ((acc_ & 0xff) == 0xff) out_.push_back(0x00);  // byte stuffing
        acc_ = 0;
        nbits_ = 0;
    }
    std::vector<uint8_t>& out_;
    uint32_t acc_ = 0;
    int nbits_ = 0;
};

class BitReader {
public:
    BitReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
    int bit() {
        if (nbits_ == 0) {
            if (pos_ >= size_) throw DataError("jpeg: entropy data truncated");
            uint8_t b = data_[pos_++];
            if (b == 0xff) {
                if (pos_ >= size_) throw DataError("jpeg: entropy data truncated");
                uint8_t next = data_[pos_++];
                if (next != 0x00) throw DataError("jpeg: unexpected marker in scan");
            }
            acc_ = b;
            nbits_ = 8;
        }
        --nbits_;
        return (acc_ >> nbits_) & 1;
    }
    int bits(int n) {
        int v = 0;
        for (int i = 0; i < n; ++i) v = (v << 1) | bit();
        return v;
    }
    size_t consumed() const { return pos_; }

private:
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
    uint8_t acc_ = 0;
    int nbits_ = 0;
};

int decode_symbol(BitReader& br, const HuffDecoder& table) {
    int32_t code = br.bit();
    for (int l = 1; l <= 16; ++l) {
        if (table.maxcode[l] >= 0 && code <= table.maxcode[l])
            return table.vals[size_t(table.valptr[l] + code - table.mincode[l])];
        code = (code << 1) | br.bit();
    }
    throw DataError("jpeg: invalid huffman code");
}

int receive_extend(BitReader& br, int s) {
    if (s == 0) return 0;
    int v = br.bits(s);
    if (v < (1 << (s - 1))) v += (-(1 << s)) + 1;
    return v;
}

int bit_size(int v) {
    int a = v < 0 ? -v : v;
    int s = 0;
    while (a) {
        ++s;
        a >>= 1;
    }
    return s;
}

struct CosTable {
    double c[8][8];  // c[x][u] = cos((2x+1) u pi / 16)
    double alpha[8];
    CosTable() {
        for (int x = 0; x < 8; ++x)
            for (int u = 0; u < 8; ++u)
                c[x][u] = std::cos((2.0 * x + 1.0) * u * M_PI / 16.0);
        for (int u = 0; u < 8; ++u) alpha[u] = u == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
    }
};
const CosTable& cossin() {
    static const CosTable t;
    return t;
}

void fdct8x8(const double* in, double* out) {
    const auto& t = cossin();
    double tmp[64];
    for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int x = 0; x < 8; ++x) acc += in[y * 8 + x] * t.c[x][u];
            tmp[y * 8 + u] = acc;
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int y = 0; y < 8; ++y) acc += tmp[y * 8 + u] * t.c[y][v];
            out[v * 8 + u] = 0.25 * t.alpha[u] * t.alpha[v] * acc;
        }
}

void idct8x8(const double* in, double* out) {
    const auto& t = cossin();
    double tmp[64];
    for (int v = 0; v < 8; ++v)
        for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u)
                acc += t.alpha[u] * in[v * 8 + u] * t.c[x][u];
            tmp[v * 8 + x] = acc;
        }
    for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) {
            double acc = 0.0;
            for (int v = 0; v < 8; ++v)
                acc += t.alpha[v] * tmp[v * 8 + x] * t.c[y][v];
            out[y * 8 + x] = 0.25 * acc;
        }
}

void scaled_quant(const uint8_t* base, int quality, uint16_t* out) {
    quality = std::min(100, std::max(1, quality));
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    for (int i = 0; i < 64; ++i) {
        int q = (int(base[i]) * scale + 50) / 100;
        out[i] = uint16_t(std::min(255, std::max(1, q)));
    }
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v & 0xff));
}

void put_marker(std::vector<uint8_t>& out, uint8_t m) {
    out.push_back(0xff);
    out.push_back(m);
}

// One full component plane of size ph x pw (multiples of 8), values 0..255.
struct Plane {
    int h = 0, w = 0;
    std::vector<double> v;
    Plane(int hh, int ww) : h(hh), w(ww), v(size_t(hh) * ww, 0.0) {}
    double& at(int y, int x) { return v[size_t(y) * w + x]; }
    double at(int y, int x) const { return v[size_t(y) * w + x]; }
};

void encode_block(BitWriter& bw, const double* block, const uint16_t* quant,
                  const HuffEncoder& dc, const HuffEncoder& ac, int& pred) {
    double freq[64];
    fdct8x8(block, freq);
    int coef[64];
    for (int i = 0; i < 64; ++i) {
        const int zi = kZigzag[i];
        double q = freq[zi] / double(quant[i]);
        coef[i] = int(std::lround(q));
    }
    const int diff = coef[0] - pred;
    pred = coef[0];
    const int ds = bit_size(diff);
    bw.put(dc.code[ds], dc.len[ds]);
    if (ds > 0) bw.put(uint32_t(diff < 0 ? diff + (1 << ds) - 1 : diff), ds);

    int run = 0;
    for (int k = 1; k < 64; ++k) {
        if (coef[k] == 0) {
            ++run;
            continue;
        }
        while (run > 15) {
            bw.put(ac.code[0xf0], ac.len[0xf0]);  // ZRL
            run -= 16;
        }
        const int s = bit_size(coef[k]);
        const int rs = (run << 4) | s;
        bw.put(ac.code[rs], ac.len[rs]);
        bw.put(uint32_t(coef[k] < 0 ? coef[k] + (1 << s) - 1 : coef[k]), s);
        run = 0;
    }
    if (run > 0) bw.put(ac.code[0x00], ac.len[0x00]);  // EOB
}

}  // namespace

std::vector<uint8_t> jpeg_encode(const Image& img, int quality) {
    if (img.h < 1 || img.w < 1) throw ShapeError("jpeg_encode: empty image");
    uint16_t qy[64], qc[64];
    scaled_quant(kLumaQuant, quality, qy);
    scaled_quant(kChromaQuant, quality, qc);

    // Color transform into full-resolution planes padded to block multiples.
    const int ph = (img.h + 7) / 8 * 8, pw = (img.w + 7) / 8 * 8;
    Plane Y(ph, pw), Cb(ph, pw), Cr(ph, pw);
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) {
            const int sy = std::min(y, img.h - 1), sx = std::min(x, img.w - 1);
            const double r = img.at(sy, sx, 0) * 255.0;
            const double g = img.at(sy, sx, 1) * 255.0;
            const double b = img.at(sy, sx, 2) * 255.0;
            Y.at(y, x) = 0.299 * r + 0.587 * g + 0.114 * b;
            Cb.at(y, x) = -0.168735892 * r - 0.331264108 * g + 0.5 * b + 128.0;
            Cr.at(y, x) = 0.5 * r - 0.418687589 * g - 0.081312411 * b + 128.0;
        }

    std::vector<uint8_t> out;
    put_marker(out, 0xd8);  // SOI

    put_marker(out, 0xe0);  // APP0 / JFIF
    put_u16(out, 16);
    const char jfif[5] = {'J', 'F', 'I', 'F', 0};
    out.insert(out.end(), jfif, jfif + 5);
    out.push_back(1);
    out.push_back(1);  // version 1.1
    out.push_back(0);  // aspect-ratio units
    put_u16(out, 1);
    put_u16(out, 1);
    out.push_back(0);
    out.push_back(0);  // no thumbnail

    for (int id = 0; id < 2; ++id) {  // DQT x2
        put_marker(out, 0xdb);
        put_u16(out, 67);
        out.push_back(uint8_t(id));
        const uint16_t* q = id == 0 ? qy : qc;
        for (int i = 0; i < 64; ++i) out.push_back(uint8_t(q[i]));
    }

    put_marker(out, 0xc0);  // SOF0, 8-bit, 3 components, 1x1 sampling
    put_u16(out, 17);
    out.push_back(8);
    put_u16(out, uint16_t(img.h));
    put_u16(out, uint16_t(img.w));
    out.push_back(3);
    for (int c = 0; c < 3; ++c) {
        out.push_back(uint8_t(c + 1));
        out.push_back(0x11);
        out.push_back(c == 0 ? 0 : 1);
    }

    struct HuffSpec {
        uint8_t cls_id;
        const uint8_t* bits;
        const uint8_t* vals;
        int n;
    };
    const HuffSpec specs[4] = {{0x00, kDcLumaBits, kDcLumaVals, 12},
                               {0x01, kDcChromaBits, kDcChromaVals, 12},
                               {0x10, kAcLumaBits, kAcLumaVals, 162},
                               {0x11, kAcChromaBits, kAcChromaVals, 162}};
    for (const auto& s : specs) {
        put_marker(out, 0xc4);
        put_u16(out, uint16_t(2 + 1 + 16 + s.n));
        out.push_back(s.cls_id);
        out.insert(out.end(), s.bits, s.bits + 16);
        out.insert(out.end(), s.vals, s.vals + s.n);
    }

    put_marker(out, 0xda);  // SOS
    put_u16(out, 12);
    out.push_back(3);
    for (int c = 0; c < 3; ++c) {
        out.push_back(uint8_t(c + 1));
        out.push_back(c == 0 ? 0x00 : 0x11);
    }
    out.push_back(0);
    out.push_back(63);
    out.push_back(0);

    const HuffEncoder dcl(kDcLumaBits, kDcLumaVals, 12);
    const HuffEncoder dcc(kDcChromaBits, kDcChromaVals, 12);
    const HuffEncoder acl(kAcLumaBits, kAcLumaVals, 162);
    const HuffEncoder acc(kAcChromaBits, kAcChromaVals, 162);

    BitWriter bw(out);
    int pred[3] = {0, 0, 0};
    double block[64];
    for (int by = 0; by < ph / 8; ++by)
        for (int bx = 0; bx < pw / 8; ++bx)
            for (int c = 0; c < 3; ++c) {
                const Plane& p = c == 0 ? Y : (c == 1 ? Cb : Cr);
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        block[y * 8 + x] = p.at(by * 8 + y, bx * 8 + x) - 128.0;
                encode_block(bw, block, c == 0 ? qy : qc, c == 0 ? dcl : dcc,
                             c == 0 ? acl : acc, pred[c]);
            }
    bw.pad();

    put_marker(out, 0xd9);  // EOI
    return out;
}

Image jpeg_decode(const std::vector<uint8_t>& bytes) {
    size_t pos = 0;
    auto need = [&](size_t n) {
        if (pos + n > bytes.size()) throw DataError("jpeg: truncated stream");
    };
    auto u8 = [&] {
        need(1);
        return bytes[pos++];
    };
    auto u16 = [&] {
        need(2);
        uint16_t v = uint16_t((bytes[pos] << 8) | bytes[pos + 1]);
        pos += 2;
        return v;
    };

    need(2);
    if (bytes[0] != 0xff || bytes[1] != 0xd8) throw DataError("jpeg: missing SOI");
    pos = 2;

    uint16_t quant[4][64];
    bool quant_seen[4] = {false, false, false, false};
    HuffDecoder dc_tables[4], ac_tables[4];
    bool dc_seen[4] = {false}, ac_seen[4] = {false};
    int height = 0, width = 0;
    struct Comp {
        int id = 0, qid = 0, dcid = 0, acid = 0;
    };
    Comp comps[3];
    int ncomp = 0;
    bool sof_seen = false;

    for (;;) {
        uint8_t b = u8();
        if (b != 0xff) throw DataError("jpeg: expected marker");
        uint8_t m = u8();
        while (m == 0xff) m = u8();
        if (m == 0xd9) throw DataError("jpeg: EOI before scan data");
        if (m == 0x01 || (m >= 0xd0 && m <= 0xd7)) continue;  // standalone

        uint16_t seglen = u16();
        if (seglen < 2) throw DataError("jpeg: bad segment length");
        size_t seg_end = pos + seglen - 2;
        if (seg_end > bytes.size()) throw DataError("jpeg: truncated segment");

        if (m == 0xdb) {  // DQT
            while (pos < seg_end) {
                uint8_t pq = u8();
                int prec = pq >> 4, id = pq & 15;
                if (prec != 0 || id > 3) throw DataError("jpeg: unsupported DQT");
                for (int i = 0; i < 64; ++i) quant[id][i] = u8();
                quant_seen[id] = true;
            }
        } else if (m == 0xc4) {  // DHT
            while (pos < seg_end) {
                uint8_t tc = u8();
                int cls = tc >> 4, id = tc & 15;
                if (cls > 1 || id > 3) throw DataError("jpeg: unsupported DHT");
                uint8_t bits[16];
                int total = 0;
                for (int i = 0; i < 16; ++i) {
                    bits[i] = u8();
                    total += bits[i];
                }
                need(size_t(total));
                if (cls == 0) {
                    dc_tables[id].build(bits, &bytes[pos], total);
                    dc_seen[id] = true;
                } else {
                    ac_tables[id].build(bits, &bytes[pos], total);
                    ac_seen[id] = true;
                }
                pos += size_t(total);
            }
        } else if (m == 0xc0) {  // SOF0 baseline
            if (u8() != 8) throw DataError("jpeg: only 8-bit precision supported");
            height = u16();
            width = u16();
            ncomp = u8();
            if (ncomp != 3) throw DataError("jpeg: only 3-component images supported");
            for (int c = 0; c < ncomp; ++c) {
                comps[c].id = u8();
                uint8_t hv = u8();
                if (hv != 0x11) throw DataError("jpeg: only 4:4:4 sampling supported");
                comps[c].qid = u8();
            }
            sof_seen = true;
        } else if (m >= 0xc1 && m <= 0xcf && m != 0xc4 && m != 0xc8 && m != 0xcc) {
            throw DataError("jpeg: only baseline SOF0 supported");
        } else if (m == 0xda) {  // SOS
            if (!sof_seen) throw DataError("jpeg: SOS before SOF");
            int ns = u8();
            if (ns != ncomp) throw DataError("jpeg: scan component count mismatch");
            for (int c = 0; c < ns; ++c) {
                uint8_t id = u8();
                uint8_t t = u8();
                bool found = false;
                for (int i = 0; i < ncomp; ++i)
                    if (comps[i].id == id) {
                        comps[i].dcid = t >> 4;
                        comps[i].acid = t & 15;
                        found = true;
                    }
                if (!found) throw DataError("jpeg: unknown scan component");
            }
            pos += 3;  // Ss, Se, AhAl
            break;
        } else {
            pos = seg_end;  // skip APPn/COM/etc.
        }
        if (pos != seg_end) throw DataError("jpeg: segment over/underrun");
    }

    for (int c = 0; c < ncomp; ++c) {
        if (!quant_seen[comps[c].qid] || !dc_seen[comps[c].dcid] || !ac_seen[comps[c].acid])
            throw DataError("jpeg: scan references missing table");
    }
    if (height < 1 || width < 1) throw DataError("jpeg: bad dimensions");

    const int ph = (height + 7) / 8 * 8, pw = (width + 7) / 8 * 8;
    std::vector<Plane> planes(3, Plane(ph, pw));

    BitReader br(bytes.data() + pos, bytes.size() - pos);
    int pred[3] = {0, 0, 0};
    double freq[64], spatial[64];
    for (int by = 0; by < ph / 8; ++by)
        for (int bx = 0; bx < pw / 8; ++bx)
            for (int c = 0; c < 3; ++c) {
                int coef[64] = {0};
                const int t = decode_symbol(br, dc_tables[comps[c].dcid]);
                pred[c] += receive_extend(br, t);
                coef[0] = pred[c];
                for (int k = 1; k < 64;) {
                    const int rs = decode_symbol(br, ac_tables[comps[c].acid]);
                    const int r = rs >> 4, s = rs & 15;
                    if (s == 0) {
                        if (r == 15) {
                            k += 16;
                            continue;
                        }
                        break;  // EOB
                    }
                    k += r;
                    if (k > 63) throw DataError("jpeg: AC index overflow");
                    coef[k] = receive_extend(br, s);
                    ++k;
                }
                const uint16_t* q = quant[comps[c].qid];
                for (int i = 0; i < 64; ++i) freq[i] = 0.0;
                for (int i = 0; i < 64; ++i)
                    freq[kZigzag[i]] = double(coef[i]) * double(q[i]);
                idct8x8(freq, spatial);
                Plane& p = planes[size_t(c)];
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        p.at(by * 8 + y, bx * 8 + x) = spatial[y * 8 + x] + 128.0;
            }

    Image img(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double Yv = planes[0].at(y, x);
            const double Cbv = planes[1].at(y, x) - 128.0;
            const double Crv = planes[2].at(y, x) - 128.0;
            const double r = Yv + 1.402 * Crv;
            const double g = Yv - 0.344136286 * Cbv - 0.714136286 * Crv;
            const double b = Yv + 1.772 * Cbv;
            img.at(y, x, 0) = float(r / 255.0);
            img.at(y, x, 1) = float(g / 255.0);
            img.at(y, x, 2) = float(b / 255.0);
        }
    img.clamp01();
    return img;
}

}  // namespace ar2
