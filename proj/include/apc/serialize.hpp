#pragma once

// Little-endian binary container helpers shared by the dataset, prior and
// checkpoint formats. Writers accumulate into a memory buffer (so trailers
// like CRC32 can cover everything written) and flush to disk at the end;
// readers work over a fully loaded buffer and throw TruncatedError when a
// read runs past the end.

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "apc/errors.hpp"
#include "apc/mlp.hpp"

namespace apc::io {

uint32_t crc32(const void* data, size_t n, uint32_t seed = 0);

class BinWriter {
public:
    void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(uint16_t v) { raw(&v, 2); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }

    void magic(const char m[4]) { buf_.append(m, 4); }

    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        buf_.append(s);
    }

    void f32_block(const float* p, size_t n) { raw(p, n * 4); }

    const std::string& buffer() const { return buf_; }
    size_t size() const { return buf_.size(); }

    void append_crc32() { u32(crc32(buf_.data(), buf_.size())); }

    void save(const std::string& path) const;

private:
    void raw(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
    std::string buf_;
};

class BinReader {
public:
    explicit BinReader(std::string data) : buf_(std::move(data)) {}

    static BinReader from_file(const std::string& path);

    uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
    uint16_t u16() { return scalar<uint16_t>(); }
    uint32_t u32() { return scalar<uint32_t>(); }
    uint64_t u64() { return scalar<uint64_t>(); }
    float f32() { return scalar<float>(); }
    double f64() { return scalar<double>(); }

    void expect_magic(const char m[4], const char* what) {
        const char* p = take(4);
        if (std::memcmp(p, m, 4) != 0) throw IoError(std::string(what) + ": bad magic bytes");
    }

    std::string str() {
        const uint32_t n = u32();
        const char* p = take(n);
        return std::string(p, n);
    }

    void f32_block(float* out, size_t n) { std::memcpy(out, take(n * 4), n * 4); }

    size_t remaining() const { return buf_.size() - pos_; }
    size_t position() const { return pos_; }
    const std::string& buffer() const { return buf_; }

private:
    template <class T>
    T scalar() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const char* take(size_t n) {
        if (pos_ + n > buf_.size()) throw TruncatedError("binary file truncated");
        const char* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::string buf_;
    size_t pos_ = 0;
};

// MLP blocks shared by the prior and checkpoint formats: layer count, then
// per layer (in, out, activation, W row-major, b).
template <class R>
void write_mlp(BinWriter& w, const ad::Mlp<R>& m) {
    w.u32(static_cast<uint32_t>(m.layers.size()));
    for (const auto& lay : m.layers) {
        w.u32(static_cast<uint32_t>(lay.in));
        w.u32(static_cast<uint32_t>(lay.out));
        w.u8(static_cast<uint8_t>(lay.act));
        for (const R& v : lay.W.value().d) w.f32(static_cast<float>(v));
        for (const R& v : lay.b.value().d) w.f32(static_cast<float>(v));
    }
}

template <class R>
ad::Mlp<R> read_mlp(BinReader& r) {
    ad::Mlp<R> m;
    const uint32_t n_layers = r.u32();
    for (uint32_t l = 0; l < n_layers; ++l) {
        ad::Linear<R> lay;
        lay.in = static_cast<int>(r.u32());
        lay.out = static_cast<int>(r.u32());
        const uint8_t act = r.u8();
        if (act > 2) throw IoError("read_mlp: unknown activation id");
        lay.act = static_cast<ad::Activation>(act);
        Mat<R> W(lay.in, lay.out), b(1, lay.out);
        for (auto& v : W.d) v = static_cast<R>(r.f32());
        for (auto& v : b.d) v = static_cast<R>(r.f32());
        lay.W = ad::Var<R>::leaf(std::move(W), true);
        lay.b = ad::Var<R>::leaf(std::move(b), true);
        m.layers.push_back(std::move(lay));
    }
    return m;
}

} // namespace apc::io
