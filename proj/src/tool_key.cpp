#include "semtool/tool_key.hpp"

#include "semtool/errors.hpp"

namespace semtool {

ToolKey ToolKey::parse(std::string_view qualified) {
    const auto dot = qualified.find('.');
    if (dot == std::string_view::npos || dot == 0 || dot + 1 == qualified.size()) {
        throw ValidationError("malformed tool key '" + std::string(qualified) +
                              "' (expected server_id.name)");
    }
    return {std::string(qualified.substr(0, dot)), std::string(qualified.substr(dot + 1))};
}

bool is_valid_server_id(std::string_view id) {
    if (id.empty()) return false;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

}  // namespace semtool
