#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <string_view>

namespace csrag::http {

/// `scheme://host[:port]` and the remaining path+query of an absolute URL.
struct UrlParts {
    std::string origin;
    std::string path;
};

/// Throws ValidationError for anything that is not an absolute http(s) URL.
UrlParts split_url(std::string_view url);

/// Resolves `link` (absolute, root-relative or relative) against `base`.
std::string resolve_url(std::string_view base, std::string_view link);

struct Response {
    int status = 0;  ///< 0 when the request never produced an HTTP response
    std::string body;
    std::string error;  ///< transport error description when status == 0
};

/// Minimal GET interface so crawling can be driven by a fake in tests.
class Getter {
  public:
    virtual ~Getter() = default;
    virtual Response get(const std::string& url) = 0;
};

std::unique_ptr<Getter> make_getter(std::chrono::milliseconds timeout);

}  // namespace csrag::http
