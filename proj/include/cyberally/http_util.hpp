#pragma once

#include <string>
#include <string_view>

namespace cyberally {

struct BaseUrl {
    std::string origin;      // scheme://host[:port]
    std::string path_prefix; // "" or "/v1" (no trailing slash)
};

// Throws InvalidConfig when the URL has no scheme or host.
BaseUrl split_base_url(std::string_view url);

} // namespace cyberally
