#pragma once

#include <compare>
#include <functional>
#include <string>
#include <string_view>

namespace semtool {

// Identity of a tool across the whole catalog. Ordering is lexicographic on
// (server_id, name) and is the tie-break order used by search.
struct ToolKey {
    std::string server_id;
    std::string name;

    auto operator<=>(const ToolKey&) const = default;
    bool operator==(const ToolKey&) const = default;

    // "server_id.name"; server ids cannot contain '.', so this is reversible.
    std::string qualified() const { return server_id + "." + name; }

    // Inverse of qualified(). Throws ValidationError when there is no '.'.
    static ToolKey parse(std::string_view qualified);
};

// Server ids must match [a-z0-9_-]+.
bool is_valid_server_id(std::string_view id);

}  // namespace semtool

template <>
struct std::hash<semtool::ToolKey> {
    size_t operator()(const semtool::ToolKey& k) const noexcept {
        size_t h = std::hash<std::string>{}(k.server_id);
        return h ^ (std::hash<std::string>{}(k.name) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    }
};
