#include "vidlabel/binary_io.hpp"

#include <iterator>
#include <limits>

namespace vidlabel::io {

void BinaryWriter::short_string(std::string_view s) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max()) throw DataError("string too long for u16 length prefix");
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
}

void BinaryWriter::bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buffer_.insert(buffer_.end(), p, p + n);
}

void BinaryWriter::finish() {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path_.string());
    out.write(reinterpret_cast<const char*>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
    out.flush();
    if (!out) throw DataError("write failed: " + path_.string());
}

BinaryReader::BinaryReader(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for reading: " + path.string());
    buffer_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

BinaryReader::BinaryReader(std::span<const unsigned char> bytes, std::string name)
    : path_(std::move(name)), buffer_(bytes.begin(), bytes.end()) {}

void BinaryReader::expect_magic(const Magic& m) {
    Magic got{};
    if (remaining() < got.size()) throw DataError("bad magic (file too short): " + path_.string());
    bytes(got.data(), got.size());
    if (got != m) throw DataError("bad magic in " + path_.string() + ": expected " + std::string(m.data(), 8));
}

std::uint8_t BinaryReader::u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
}

std::string BinaryReader::short_string() {
    const std::uint16_t n = u16();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
}

void BinaryReader::bytes(void* data, std::size_t n) {
    if (remaining() < n) throw DataError("truncated file: " + path_.string());
    std::memcpy(data, buffer_.data() + pos_, n);
    pos_ += n;
}

bool BinaryReader::at_end() { return pos_ == buffer_.size(); }

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
    if (!out) throw DataError("write failed: " + path.string());
}

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open for reading: " + path.string());
    KeyValues kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("malformed key=value line in " + path.string() + ": " + line);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
}

const std::string* find_value(const KeyValues& kv, std::string_view key) {
    for (const auto& [k, v] : kv)
        if (k == key) return &v;
    return nullptr;
}

}  // namespace vidlabel::io
