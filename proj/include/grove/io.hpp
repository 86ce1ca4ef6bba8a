#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace grove {

/// Little-endian binary writer for the model file formats. Everything goes
/// through fixed-width writes so files are byte-stable across runs.
class BinaryWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void magic(const char tag[4]) { bytes_.append(tag, 4); }

    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_.append(s);
    }

    const std::string& bytes() const { return bytes_; }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + path);
        out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
        if (!out) throw std::runtime_error("write failed: " + path);
    }

private:
    std::string bytes_;
};

/// Bounds-checked reader matching BinaryWriter.
class BinaryReader {
public:
    explicit BinaryReader(std::string bytes) : bytes_(std::move(bytes)) {}

    static BinaryReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open for reading: " + path);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return BinaryReader(std::move(bytes));
    }

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }

    std::uint32_t u32() {
        const char* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        const char* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    void expect_magic(const char tag[4], const std::string& what) {
        const char* p = take(4);
        if (std::memcmp(p, tag, 4) != 0) throw std::runtime_error("bad magic, not a " + what + " file");
    }

    std::string str() {
        const std::uint32_t len = u32();
        const char* p = take(len);
        return std::string(p, len);
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

    /// Peek at the first four bytes without consuming them.
    std::string peek_magic() const {
        if (bytes_.size() < 4) return {};
        return bytes_.substr(0, 4);
    }

private:
    const char* take(std::size_t count) {
        if (pos_ + count > bytes_.size()) throw std::runtime_error("truncated model file");
        const char* p = bytes_.data() + pos_;
        pos_ += count;
        return p;
    }

    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace grove
