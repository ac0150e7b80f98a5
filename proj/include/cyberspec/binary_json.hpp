#pragma once

// Numeric arrays embedded in JSON as base64 of little-endian IEEE-754
// float64 (or int64) values, so that round trips are bit-exact.

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <sodium.h>

#include "cyberspec/errors.hpp"

namespace cyberspec {

namespace detail {

inline std::string base64_encode(std::span<const unsigned char> bytes) {
    constexpr int variant = sodium_base64_VARIANT_ORIGINAL;
    std::string out(sodium_base64_ENCODED_LEN(bytes.size(), variant), '\0');
    sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
    out.resize(out.size() - 1);  // drop terminating NUL
    return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& text) {
    std::vector<unsigned char> out(text.size() / 4 * 3 + 3);
    std::size_t len = 0;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, nullptr,
                          sodium_base64_VARIANT_ORIGINAL) != 0)
        throw SchemaError("malformed base64 array");
    out.resize(len);
    return out;
}

template <class T>
std::string encode_words(std::span<const T> values) {
    std::vector<unsigned char> bytes;
    bytes.reserve(values.size() * 8);
    for (T v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    }
    return base64_encode(bytes);
}

template <class T>
std::vector<T> decode_words(const nlohmann::json& j, const char* dtype) {
    if (!j.is_object() || j.value("dtype", "") != dtype || !j.contains("data"))
        throw SchemaError(std::string("expected a ") + dtype + " array");
    const auto bytes = base64_decode(j.at("data").get<std::string>());
    if (bytes.size() % 8 != 0) throw SchemaError("array byte length is not a multiple of 8");
    std::vector<T> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
        out[i] = std::bit_cast<T>(bits);
    }
    if (j.contains("length") && j.at("length").get<std::size_t>() != out.size())
        throw SchemaError("array length field does not match payload");
    return out;
}

}  // namespace detail

inline nlohmann::json f64_array(std::span<const double> values) {
    return {{"dtype", "f64le"}, {"length", values.size()}, {"data", detail::encode_words(values)}};
}

inline std::vector<double> read_f64_array(const nlohmann::json& j) { return detail::decode_words<double>(j, "f64le"); }

inline nlohmann::json i64_array(std::span<const std::int64_t> values) {
    return {{"dtype", "i64le"}, {"length", values.size()}, {"data", detail::encode_words(values)}};
}

inline std::vector<std::int64_t> read_i64_array(const nlohmann::json& j) {
    return detail::decode_words<std::int64_t>(j, "i64le");
}

/// Scalars travel as a one-element array so they round-trip bit-exactly too.
inline nlohmann::json f64_scalar(double v) { return f64_array(std::span<const double>(&v, 1)); }

inline double read_f64_scalar(const nlohmann::json& j) {
    const auto v = read_f64_array(j);
    if (v.size() != 1) throw SchemaError("expected a scalar");
    return v[0];
}

}  // namespace cyberspec
