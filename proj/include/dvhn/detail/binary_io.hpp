#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "dvhn/errors.hpp"

// Little-endian scalar I/O shared by the EMB1, DVHM and DVHC formats.
namespace dvhn::detail {

template <typename T>
T to_little_endian(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        std::array<unsigned char, sizeof(T)> bytes{};
        std::memcpy(bytes.data(), &value, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
            std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        }
        std::memcpy(&value, bytes.data(), sizeof(T));
    }
    return value;
}

class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path)
        : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) {
            throw IoError("cannot open '" + path.string() + "' for writing");
        }
    }

    void magic(std::string_view tag) { raw(tag.data(), tag.size()); }

    template <typename T>
    void put(T value) {
        value = to_little_endian(value);
        raw(&value, sizeof(T));
    }

    template <typename T>
    void put_all(std::span<const T> values) {
        for (T v : values) put(v);
    }

    void finish() {
        out_.flush();
        if (!out_) throw IoError("write to '" + path_.string() + "' failed");
    }

private:
    void raw(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write to '" + path_.string() + "' failed");
    }

    std::filesystem::path path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path)
        : path_(path), in_(path, std::ios::binary) {
        if (!in_) {
            throw IoError("cannot open '" + path.string() + "' for reading");
        }
    }

    void expect_magic(std::string_view tag) {
        std::string got(tag.size(), '\0');
        in_.read(got.data(), static_cast<std::streamsize>(got.size()));
        if (!in_ || got != tag) {
            throw FormatError("'" + path_.string() + "' does not start with the " +
                              std::string(tag) + " magic");
        }
    }

    void expect_version(std::uint32_t expected) {
        auto version = get<std::uint32_t>();
        if (version != expected) {
            throw FormatError("'" + path_.string() + "' has unsupported version " +
                              std::to_string(version));
        }
    }

    template <typename T>
    T get() {
        T value{};
        in_.read(reinterpret_cast<char*>(&value), sizeof(T));
        if (!in_) throw IoError("'" + path_.string() + "' is truncated");
        return to_little_endian(value);
    }

    template <typename T>
    void get_all(std::span<T> out) {
        in_.read(reinterpret_cast<char*>(out.data()),
                 static_cast<std::streamsize>(out.size_bytes()));
        if (!in_) throw IoError("'" + path_.string() + "' is truncated");
        if constexpr (std::endian::native == std::endian::big) {
            for (auto& v : out) v = to_little_endian(v);
        }
    }

    /// True when every byte of the file has been consumed.
    bool at_end() { return in_.peek() == std::ifstream::traits_type::eof(); }

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ifstream in_;
};

}  // namespace dvhn::detail
