#pragma once

#include <httplib.h>

#include <chrono>
#include <string>
#include <thread>

namespace csrag::testing {

/// An httplib server on an ephemeral localhost port, stopped on destruction.
class FakeServer {
  public:
    httplib::Server server;

    void start() {
        port_ = server.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~FakeServer() {
        server.stop();
        if (thread_.joinable()) thread_.join();
    }

    [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  private:
    int port_ = 0;
    std::thread thread_;
};

}  // namespace csrag::testing
