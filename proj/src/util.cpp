#include "debias/util.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "debias/errors.hpp"

namespace debias {

uint64_t mix_seed(uint64_t base, uint64_t salt) {
    uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t bounded_rand(std::mt19937_64& rng, uint64_t bound) {
    if (bound < 2) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % bound;
}

std::string fnv1a_hex(const std::string& bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

void write_f32_blob(const std::filesystem::path& path, std::span<const float> data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for write: " + path.string());
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!f) throw ConfigError("short write: " + path.string());
}

std::vector<float> read_f32_blob(const std::filesystem::path& path, size_t expected_count) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw DataFormatError("cannot open blob: " + path.string());
    auto bytes = static_cast<size_t>(f.tellg());
    if (bytes != expected_count * sizeof(float)) {
        throw DataFormatError("blob size mismatch for " + path.string() + ": got " +
                              std::to_string(bytes) + " bytes, expected " +
                              std::to_string(expected_count * sizeof(float)));
    }
    std::vector<float> out(expected_count);
    f.seekg(0);
    f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw DataFormatError("short read: " + path.string());
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataFormatError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for write: " + path.string());
    f << content;
    if (!f) throw ConfigError("short write: " + path.string());
}

}  // namespace debias
