#pragma once

#include "ifr/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

// Little-endian primitive encoding shared by the model, shard and weight files.
namespace ifr::binary {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <class T>
concept Scalar = std::is_arithmetic_v<T>;

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void magic(std::string_view tag) { bytes(tag.data(), tag.size()); }

    template <Scalar T>
    void put(T value) { bytes(&value, sizeof(T)); }

    template <Scalar T>
    void put_array(std::span<const T> values) { bytes(values.data(), values.size_bytes()); }

    // Narrows doubles to f32 on the way out.
    void put_f32_array(std::span<const double> values) {
        std::vector<float> tmp(values.begin(), values.end());
        put_array<float>(tmp);
    }

    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failed");
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    void expect_magic(std::string_view tag) {
        std::string got(tag.size(), '\0');
        bytes(got.data(), got.size());
        if (got != tag)
            throw FormatError(source_ + ": bad magic (expected '" + std::string(tag) + "')");
    }

    template <Scalar T>
    T get() {
        T value{};
        bytes(&value, sizeof(T));
        return value;
    }

    template <Scalar T>
    void get_array(std::span<T> values) { bytes(values.data(), values.size_bytes()); }

    std::vector<double> get_f32_array(std::size_t n) {
        std::vector<float> tmp(n);
        get_array<float>(tmp);
        return {tmp.begin(), tmp.end()};
    }

    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw TruncationError(source_ + ": unexpected end of file");
    }

    // True when no bytes remain.
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

    const std::string& source() const { return source_; }

private:
    std::istream& in_;
    std::string source_;
};

} // namespace ifr::binary
