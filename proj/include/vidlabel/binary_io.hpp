#pragma once

// Little-endian binary readers/writers shared by every on-disk format.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vidlabel/common.hpp"

namespace vidlabel::io {

using Magic = std::array<char, 8>;

constexpr Magic make_magic(const char (&text)[9]) {
    Magic m{};
    for (std::size_t i = 0; i < 8; ++i) m[i] = text[i];
    return m;
}

/// Accumulates a little-endian byte image; finish() writes it to the target path (if any).
class BinaryWriter {
public:
    BinaryWriter() = default;
    explicit BinaryWriter(std::filesystem::path path) : path_(std::move(path)) {}

    void magic(const Magic& m) { bytes(m.data(), m.size()); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { put_le(v); }
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
    // u16 length prefix followed by raw bytes.
    void short_string(std::string_view s);
    void bytes(const void* data, std::size_t n);

    // Writes the buffer to the target path; I/O failure is a DataError.
    void finish();
    const std::vector<unsigned char>& buffer() const noexcept { return buffer_; }
    std::vector<unsigned char> take() { return std::move(buffer_); }

private:
    template <typename T>
    void put_le(T v) {
        unsigned char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(buf, sizeof(T));
    }

    std::filesystem::path path_;
    std::vector<unsigned char> buffer_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path);
    // Reads from an in-memory image; `name` is used in error messages.
    BinaryReader(std::span<const unsigned char> bytes, std::string name);

    // Throws DataError("bad magic ...") when the first 8 bytes differ.
    void expect_magic(const Magic& m);
    std::uint8_t u8();
    std::uint16_t u16() { return get_le<std::uint16_t>(); }
    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
    std::string short_string();
    void bytes(void* data, std::size_t n);

    bool at_end();
    std::size_t remaining() const noexcept { return buffer_.size() - pos_; }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    template <typename T>
    T get_le() {
        unsigned char buf[sizeof(T)];
        bytes(buf, sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(buf[i]) << (8 * i));
        return v;
    }

    std::filesystem::path path_;
    std::vector<unsigned char> buffer_;
    std::size_t pos_ = 0;
};

/// Plain-text key=value files (manifests, configs, reports, artifact metadata).
using KeyValues = std::vector<std::pair<std::string, std::string>>;

void write_key_values(const std::filesystem::path& path, const KeyValues& kv);
KeyValues read_key_values(const std::filesystem::path& path);
// Returns nullptr when the key is missing.
const std::string* find_value(const KeyValues& kv, std::string_view key);

}  // namespace vidlabel::io
