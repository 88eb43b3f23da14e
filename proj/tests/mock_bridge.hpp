#pragma once

// In-process NDJSON embedding server for tests, backed by a ToyEncoder. One
// listener thread on 127.0.0.1 with an ephemeral port; connections are served
// one at a time.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "radiart/bridge.hpp"
#include "radiart/embedding.hpp"

namespace radiart::testing {

struct MockBehaviour {
    /// Requests whose responses are withheld and then sent in reverse order.
    std::size_t reverse_batch = 1;
    /// Methods that are read but never answered.
    std::vector<std::string> silent;
    /// Method after which the server writes half a line and hangs up.
    std::string truncate_on;
    /// Scale applied to returned embeddings (1 keeps them unit).
    double embedding_scale = 1.0;
    std::size_t image_size = 16;
};

class MockBridge {
public:
    explicit MockBridge(MockBehaviour behaviour = {}) : behaviour_(std::move(behaviour)), encoder_(11) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = 0;
        ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
        ::listen(listen_fd_, 4);
        socklen_t len = sizeof(addr);
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        thread_ = std::thread([this] { serve(); });
    }

    ~MockBridge() {
        stop_ = true;
        thread_.join();
        ::close(listen_fd_);
    }

    int port() const { return port_; }
    std::string endpoint() const { return "127.0.0.1:" + std::to_string(port_); }
    const ToyEncoder& encoder() const { return encoder_; }

    std::vector<std::string> methods_seen() {
        std::lock_guard lock(mutex_);
        return seen_;
    }

private:
    void serve() {
        while (!stop_) {
            pollfd p{listen_fd_, POLLIN, 0};
            if (::poll(&p, 1, 20) <= 0) continue;
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) continue;
            handle(fd);
            ::close(fd);
        }
    }

    void send_text(int fd, const std::string& s) { ::send(fd, s.data(), s.size(), MSG_NOSIGNAL); }

    void handle(int fd) {
        std::string buf;
        std::vector<std::string> held;
        char chunk[65536];
        while (!stop_) {
            pollfd p{fd, POLLIN, 0};
            if (::poll(&p, 1, 20) <= 0) continue;
            const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
            if (n <= 0) return;
            buf.append(chunk, static_cast<std::size_t>(n));
            for (std::size_t nl; (nl = buf.find('\n')) != std::string::npos;) {
                const std::string line = buf.substr(0, nl);
                buf.erase(0, nl + 1);
                const nlohmann::json req = nlohmann::json::parse(line);
                const std::string method = req.at("method").get<std::string>();
                {
                    std::lock_guard lock(mutex_);
                    seen_.push_back(method);
                }
                if (std::find(behaviour_.silent.begin(), behaviour_.silent.end(), method) != behaviour_.silent.end())
                    continue;
                const std::string resp = respond(req).dump() + "\n";
                if (method == behaviour_.truncate_on) {
                    send_text(fd, resp.substr(0, resp.size() / 2));
                    return;
                }
                held.push_back(resp);
                if (held.size() >= behaviour_.reverse_batch) {
                    for (auto it = held.rbegin(); it != held.rend(); ++it) send_text(fd, *it);
                    held.clear();
                }
            }
        }
    }

    nlohmann::json embedding_json(const std::vector<double>& e) const {
        WireTensor t{{e.size()}, {}};
        for (double v : e) t.data.push_back(static_cast<float>(v * behaviour_.embedding_scale));
        return {{"embedding", encode_tensor(t)}};
    }

    nlohmann::json respond(const nlohmann::json& req) const {
        const auto id = req.at("id");
        const std::string method = req.at("method").get<std::string>();
        const nlohmann::json& params = req.at("params");
        try {
            if (method == "info")
                return {{"id", id},
                        {"result",
                         {{"dim", encoder_.dim()},
                          {"image_size", behaviour_.image_size},
                          {"variant", "mock-toy"},
                          {"feature_layers", {"l0", "l1"}}}}};
            if (method == "embed_text")
                return {{"id", id}, {"result", embedding_json(encoder_.embed_text(params.at("text")))}};
            if (method == "embed_image")
                return {{"id", id},
                        {"result", embedding_json(encoder_.embed_image(wire_to_image(decode_tensor(params.at("image")))))}};
            if (method == "image_vjp") {
                const Image img = wire_to_image(decode_tensor(params.at("image")));
                const WireTensor up = decode_tensor(params.at("upstream"));
                const std::vector<double> u(up.data.begin(), up.data.end());
                return {{"id", id},
                        {"result", {{"gradient", encode_tensor(image_to_wire(encoder_.image_embed_vjp(img, u)))}}}};
            }
            if (method == "features") {
                const Image img = wire_to_image(decode_tensor(params.at("image")));
                return {{"id", id}, {"result", {{"features", {encode_tensor(image_to_wire(img))}}}}};
            }
            return {{"id", id}, {"error", "unknown method " + method}};
        } catch (const std::exception& e) {
            return {{"id", id}, {"error", e.what()}};
        }
    }

    MockBehaviour behaviour_;
    ToyEncoder encoder_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stop_{false};
    std::thread thread_;
    std::mutex mutex_;
    std::vector<std::string> seen_;
};

}  // namespace radiart::testing
