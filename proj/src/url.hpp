#pragma once

#include <string>

namespace semtool::detail {

// "http://host:8080/v1/x" -> {"http://host:8080", "/v1/x"}
struct SplitUrl {
    std::string origin;
    std::string path;
};

SplitUrl split_url(const std::string& url);

}  // namespace semtool::detail
