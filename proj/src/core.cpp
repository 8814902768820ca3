#include "toolfuse/core.hpp"

#include <cstdint>
#include <cstdio>

namespace toolfuse {

std::string fnv1a_hex(std::string_view text) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : text) {
        h ^= c;
        h *= 16777619u;
    }
    char buf[9];
    std::snprintf(buf, sizeof(buf), "%08x", h);
    return std::string(buf);
}

namespace {

nlohmann::json sort_keys(const json& value) {
    // nlohmann::json's default object is key-sorted; rebuilding through it
    // canonicalizes nested objects.
    switch (value.type()) {
        case json::value_t::object: {
            nlohmann::json out = nlohmann::json::object();
            for (const auto& [k, v] : value.items()) out[k] = sort_keys(v);
            return out;
        }
        case json::value_t::array: {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& v : value) out.push_back(sort_keys(v));
            return out;
        }
        default:
            return value;
    }
}

}  // namespace

std::string canonical_dump(const json& value) {
    return sort_keys(value).dump();
}

}  // namespace toolfuse
