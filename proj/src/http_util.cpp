#include "cyberally/http_util.hpp"

#include "cyberally/error.hpp"

namespace cyberally {

BaseUrl split_base_url(std::string_view url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos || scheme_end == 0) {
        throw Error(ErrorCode::InvalidConfig, "base URL needs a scheme: " + std::string(url));
    }
    auto path_start = url.find('/', scheme_end + 3);
    BaseUrl out;
    out.origin = std::string(url.substr(0, path_start));
    if (out.origin.size() == scheme_end + 3) {
        throw Error(ErrorCode::InvalidConfig, "base URL has no host: " + std::string(url));
    }
    if (path_start != std::string_view::npos) {
        out.path_prefix = std::string(url.substr(path_start));
        while (!out.path_prefix.empty() && out.path_prefix.back() == '/') {
            out.path_prefix.pop_back();
        }
    }
    return out;
}

} // namespace cyberally
