#pragma once

#include <string>

#include "hpx/tensor.hpp"
#include "json.hpp"

namespace hpx::detail {

// Removes key from obj and returns its value, or fallback when absent.
template <typename T>
T take(nlohmann::json& obj, const char* key, T fallback) {
    if (auto it = obj.find(key); it != obj.end()) {
        T v = it->get<T>();
        obj.erase(it);
        return v;
    }
    return fallback;
}

inline void reject_leftovers(const nlohmann::json& obj, const std::string& where) {
    if (!obj.empty()) {
        throw Error("unknown key '" + obj.begin().key() + "' in " + where);
    }
}

}  // namespace hpx::detail
