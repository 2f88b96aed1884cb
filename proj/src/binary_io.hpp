#pragma once

// Little-endian stream helpers shared by the binary file formats.

#include "temi/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>

namespace temi::detail {

template <typename T>
T to_little(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        std::array<char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), &value, sizeof(T));
        std::reverse(bytes.begin(), bytes.end());
        std::memcpy(&value, bytes.data(), sizeof(T));
    }
    return value;
}

class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
        if (!out_) throw IoError("cannot open for writing: " + path);
    }

    void magic(std::string_view tag) { out_.write(tag.data(), static_cast<std::streamsize>(tag.size())); }

    template <typename T>
    void put(T value) {
        value = to_little(value);
        out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
    }

    void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

    void finish() {
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open for reading: " + path);
    }

    void expect_magic(std::string_view tag) {
        std::string got(tag.size(), '\0');
        in_.read(got.data(), static_cast<std::streamsize>(got.size()));
        if (in_.gcount() != static_cast<std::streamsize>(tag.size()) || got != tag)
            throw FormatError(path_ + ": bad magic, expected " + std::string(tag));
    }

    template <typename T>
    T get() {
        T value{};
        in_.read(reinterpret_cast<char*>(&value), sizeof(T));
        if (in_.gcount() != static_cast<std::streamsize>(sizeof(T)))
            throw IoError(path_ + ": truncated file");
        return to_little(value);
    }

    std::string bytes(std::size_t count) {
        std::string s(count, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(count));
        if (in_.gcount() != static_cast<std::streamsize>(count)) throw IoError(path_ + ": truncated file");
        return s;
    }

    [[nodiscard]] bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }
    [[nodiscard]] const std::string& path() const { return path_; }

private:
    std::ifstream in_;
    std::string path_;
};

} // namespace temi::detail
