#include <httplib.h>

#include "csrag/common/http.hpp"

#include "csrag/common/error.hpp"

namespace csrag::http {

UrlParts split_url(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw ValidationError("not an absolute URL: " + std::string(url));
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ValidationError("unsupported URL scheme: " + std::string(url));
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string_view::npos) return {std::string(url), "/"};
    return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

std::string resolve_url(std::string_view base, std::string_view link) {
    if (link.find("://") != std::string_view::npos) return std::string(link);
    const auto parts = split_url(base);
    if (link.substr(0, 2) == "//") return std::string(base.substr(0, base.find(':') + 1)) + std::string(link);
    if (!link.empty() && link.front() == '/') return parts.origin + std::string(link);
    std::string dir = parts.path.substr(0, parts.path.find('?'));
    dir = dir.substr(0, dir.rfind('/') + 1);
    return parts.origin + dir + std::string(link);
}

namespace {

class HttplibGetter final : public Getter {
  public:
    explicit HttplibGetter(std::chrono::milliseconds timeout) : timeout_(timeout) {}

    Response get(const std::string& url) override {
        const auto parts = split_url(url);
        httplib::Client client(parts.origin);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_follow_location(true);
        auto res = client.Get(parts.path);
        if (!res) return {0, {}, httplib::to_string(res.error())};
        return {res->status, std::move(res->body), {}};
    }

  private:
    std::chrono::milliseconds timeout_;
};

}  // namespace

std::unique_ptr<Getter> make_getter(std::chrono::milliseconds timeout) {
    return std::make_unique<HttplibGetter>(timeout);
}

}  // namespace csrag::http
