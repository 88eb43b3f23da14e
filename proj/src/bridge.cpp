#include "radiart/bridge.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>

#include "radiart/error.hpp"

namespace radiart {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    return static_cast<int>(std::max<long long>(0, left.count()));
}

/// Buffered line reader over a file descriptor.
class FdLineReader {
public:
    std::string read_line(int fd, std::chrono::milliseconds timeout) {
        const auto deadline = Clock::now() + timeout;
        for (;;) {
            const auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            pollfd p{fd, POLLIN, 0};
            const int rc = ::poll(&p, 1, remaining_ms(deadline));
            if (rc == 0) throw BridgeError("bridge timed out after " + std::to_string(timeout.count()) + " ms");
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw BridgeError(std::string("bridge poll failed: ") + std::strerror(errno));
            }
            char chunk[65536];
            const ssize_t n = ::read(fd, chunk, sizeof(chunk));
            if (n < 0) {
                if (errno == EINTR || errno == EAGAIN) continue;
                throw BridgeError(std::string("bridge read failed: ") + std::strerror(errno));
            }
            if (n == 0) {
                if (!buffer_.empty())
                    throw BridgeError("bridge protocol error: connection closed mid-message");
                throw BridgeError("bridge closed the connection");
            }
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

private:
    std::string buffer_;
};

// Sockets use send() so a vanished peer is an EPIPE error, not a signal.
void write_all(int fd, const std::string& data, bool socket) {
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = socket ? ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL)
                                 : ::write(fd, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw BridgeError(std::string("bridge write failed: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

class TcpTransport final : public BridgeTransport {
public:
    TcpTransport(const std::string& host, int port, std::chrono::milliseconds timeout) {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        const std::string port_str = std::to_string(port);
        if (::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res) != 0 || !res)
            throw BridgeError("cannot resolve bridge host " + host);
        std::string last_error = "no addresses";
        for (addrinfo* a = res; a && fd_ < 0; a = a->ai_next) {
            const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
            if (fd < 0) continue;
            const int flags = ::fcntl(fd, F_GETFL, 0);
            ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
            int rc = ::connect(fd, a->ai_addr, a->ai_addrlen);
            if (rc < 0 && errno == EINPROGRESS) {
                pollfd p{fd, POLLOUT, 0};
                rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
                int err = 0;
                socklen_t len = sizeof(err);
                if (rc == 1 && ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) == 0 && err == 0)
                    rc = 0;
                else {
                    last_error = rc == 0 ? "connect timed out" : std::strerror(err ? err : errno);
                    rc = -1;
                }
            } else if (rc < 0) {
                last_error = std::strerror(errno);
            }
            if (rc == 0) {
                ::fcntl(fd, F_SETFL, flags);
                fd_ = fd;
            } else {
                ::close(fd);
            }
        }
        ::freeaddrinfo(res);
        if (fd_ < 0)
            throw BridgeError("bridge unreachable at " + host + ":" + port_str + " (" + last_error + ")");
    }

    ~TcpTransport() override {
        if (fd_ >= 0) ::close(fd_);
    }

    void send_line(const std::string& line) override { write_all(fd_, line + "\n", true); }
    std::string recv_line(std::chrono::milliseconds timeout) override {
        return reader_.read_line(fd_, timeout);
    }

private:
    int fd_ = -1;
    FdLineReader reader_;
};

class StdioTransport final : public BridgeTransport {
public:
    explicit StdioTransport(const std::string& command) {
        int to_child[2], from_child[2];
        if (::pipe(to_child) != 0) throw BridgeError("pipe() failed");
        if (::pipe(from_child) != 0) {
            ::close(to_child[0]);
            ::close(to_child[1]);
            throw BridgeError("pipe() failed");
        }
        pid_ = ::fork();
        if (pid_ < 0) throw BridgeError("fork() failed for bridge command");
        if (pid_ == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        write_fd_ = to_child[1];
        read_fd_ = from_child[0];
        ::signal(SIGPIPE, SIG_IGN);
    }

    ~StdioTransport() override {
        if (write_fd_ >= 0) ::close(write_fd_);
        if (read_fd_ >= 0) ::close(read_fd_);
        if (pid_ > 0) {
            int status = 0;
            if (::waitpid(pid_, &status, WNOHANG) == 0) {
                ::kill(pid_, SIGTERM);
                ::waitpid(pid_, &status, 0);
            }
        }
    }

    void send_line(const std::string& line) override { write_all(write_fd_, line + "\n", false); }
    std::string recv_line(std::chrono::milliseconds timeout) override {
        return reader_.read_line(read_fd_, timeout);
    }

private:
    pid_t pid_ = -1;
    int write_fd_ = -1;
    int read_fd_ = -1;
    FdLineReader reader_;
};

}  // namespace

// ---- codec ------------------------------------------------------------------

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest > 0) {
        std::uint32_t v = bytes[i] << 16;
        if (rest == 2) v |= bytes[i + 1] << 8;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw BridgeError("base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=' && i + 4 == text.size() && k >= 2) {
                v[k] = 0;
                ++pad;
            } else {
                if (pad) throw BridgeError("base64 padding in the middle of a quantum");
                v[k] = decode_char(c);
                if (v[k] < 0) throw BridgeError("invalid base64 character");
            }
        }
        const std::uint32_t q = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
        out.push_back(static_cast<std::uint8_t>(q >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>(q >> 8));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(q));
    }
    return out;
}

std::size_t WireTensor::element_count() const {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

nlohmann::json encode_tensor(const WireTensor& t) {
    if (t.element_count() != t.data.size()) throw UsageError("encode_tensor: shape/data mismatch");
    std::vector<std::uint8_t> bytes(t.data.size() * 4);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        const std::uint32_t bits = std::bit_cast<std::uint32_t>(t.data[i]);
        for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
    return {{"shape", t.shape}, {"dtype", "f32"}, {"data", base64_encode(bytes)}};
}

WireTensor decode_tensor(const nlohmann::json& j) {
    WireTensor t;
    try {
        if (j.at("dtype").get<std::string>() != "f32")
            throw BridgeError("bridge protocol error: unsupported tensor dtype");
        t.shape = j.at("shape").get<std::vector<std::size_t>>();
        const auto bytes = base64_decode(j.at("data").get<std::string>());
        if (bytes.size() != t.element_count() * 4)
            throw BridgeError("bridge protocol error: tensor payload does not match shape");
        t.data.resize(t.element_count());
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= std::uint32_t(bytes[i * 4 + b]) << (8 * b);
            t.data[i] = std::bit_cast<float>(bits);
        }
    } catch (const nlohmann::json::exception& e) {
        throw BridgeError(std::string("bridge protocol error: bad tensor: ") + e.what());
    }
    return t;
}

WireTensor image_to_wire(const Image& image) {
    WireTensor t{{image.height, image.width, 3}, {}};
    t.data.reserve(image.pixels.size());
    for (double v : image.pixels.values()) t.data.push_back(static_cast<float>(v));
    return t;
}

Image wire_to_image(const WireTensor& t) {
    if (t.shape.size() != 3 || t.shape[2] != 3)
        throw BridgeError("bridge protocol error: expected an HxWx3 tensor");
    Image img(t.shape[1], t.shape[0]);
    for (std::size_t i = 0; i < t.data.size(); ++i) img.pixels[i] = t.data[i];
    return img;
}

// ---- endpoint / transport ---------------------------------------------------

BridgeEndpoint BridgeEndpoint::parse(const std::string& text) {
    BridgeEndpoint e;
    if (text.rfind("stdio:", 0) == 0) {
        e.kind = Kind::Stdio;
        e.command = text.substr(6);
        if (e.command.empty()) throw ValidationError("stdio bridge endpoint needs a command");
        return e;
    }
    std::string rest = text.rfind("tcp://", 0) == 0 ? text.substr(6) : text;
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw ValidationError("bridge endpoint must be host:port");
    e.host = rest.substr(0, colon);
    if (e.host.empty()) e.host = "127.0.0.1";
    try {
        std::size_t used = 0;
        e.port = std::stoi(rest.substr(colon + 1), &used);
        if (used != rest.size() - colon - 1) throw std::invalid_argument(rest);
    } catch (const std::exception&) {
        throw ValidationError("bad bridge port in '" + text + "'");
    }
    if (e.port <= 0 || e.port > 65535) throw ValidationError("bridge port out of range");
    return e;
}

std::string BridgeEndpoint::to_string() const {
    return kind == Kind::Stdio ? "stdio:" + command : "tcp://" + host + ":" + std::to_string(port);
}

std::unique_ptr<BridgeTransport> connect_transport(const BridgeEndpoint& endpoint,
                                                   std::chrono::milliseconds timeout) {
    if (endpoint.kind == BridgeEndpoint::Kind::Stdio)
        return std::make_unique<StdioTransport>(endpoint.command);
    return std::make_unique<TcpTransport>(endpoint.host, endpoint.port, timeout);
}

// ---- client -----------------------------------------------------------------

BridgeClient::BridgeClient(std::unique_ptr<BridgeTransport> transport,
                           std::chrono::milliseconds timeout)
    : transport_(std::move(transport)), timeout_(timeout) {
    if (!transport_) throw UsageError("BridgeClient needs a transport");
}

std::int64_t BridgeClient::submit(const std::string& method, nlohmann::json params) {
    const std::int64_t id = next_id_++;
    nlohmann::json req = {{"id", id}, {"method", method}, {"params", std::move(params)}};
    transport_->send_line(req.dump());
    return id;
}

nlohmann::json BridgeClient::await(std::int64_t id) {
    const auto deadline = Clock::now() + timeout_;
    for (;;) {
        if (auto it = parked_.find(id); it != parked_.end()) {
            nlohmann::json resp = std::move(it->second);
            parked_.erase(it);
            if (resp.contains("error")) {
                const auto& err = resp["error"];
                throw BridgeError("bridge error for request " + std::to_string(id) + ": " +
                                  (err.is_string() ? err.get<std::string>() : err.dump()));
            }
            if (!resp.contains("result"))
                throw BridgeError("bridge protocol error: response without result or error");
            return resp["result"];
        }
        const std::string line =
            transport_->recv_line(std::chrono::milliseconds(remaining_ms(deadline)));
        nlohmann::json resp;
        try {
            resp = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw BridgeError("bridge protocol error: response is not valid JSON");
        }
        if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_number_integer())
            throw BridgeError("bridge protocol error: response lacks an integer id");
        const auto rid = resp["id"].get<std::int64_t>();
        parked_[rid] = std::move(resp);
    }
}

nlohmann::json BridgeClient::call(const std::string& method, nlohmann::json params) {
    return await(submit(method, std::move(params)));
}

// ---- provider ---------------------------------------------------------------

BridgeProvider::BridgeProvider(const BridgeEndpoint& endpoint, std::chrono::milliseconds timeout)
    : client_(connect_transport(endpoint, timeout), timeout) {
    handshake();
}

BridgeProvider::BridgeProvider(std::unique_ptr<BridgeTransport> transport,
                               std::chrono::milliseconds timeout)
    : client_(std::move(transport), timeout) {
    handshake();
}

void BridgeProvider::handshake() {
    const nlohmann::json info = client_.call("info");
    try {
        dim_ = info.at("dim").get<std::size_t>();
        image_size_ = info.at("image_size").get<std::size_t>();
        if (info.contains("feature_layers"))
            feature_layers_ = info["feature_layers"].get<std::vector<std::string>>();
        if (info.contains("variant")) variant_ = info["variant"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BridgeError(std::string("bridge protocol error: bad info response: ") + e.what());
    }
    if (dim_ == 0 || image_size_ == 0) throw BridgeError("bridge protocol error: zero dim/image_size");
}

std::vector<double> BridgeProvider::unit_embedding(const nlohmann::json& result) const {
    if (!result.contains("embedding")) throw BridgeError("bridge protocol error: missing embedding");
    const WireTensor t = decode_tensor(result["embedding"]);
    if (t.data.size() != dim_) throw BridgeError("bridge protocol error: embedding has wrong dimension");
    std::vector<double> e(t.data.begin(), t.data.end());
    double n = 0.0;
    for (double v : e) n += v * v;
    n = std::sqrt(n);
    if (!(std::abs(n - 1.0) < 1e-4))
        throw BridgeError("bridge protocol error: embedding is not unit norm");
    for (double& v : e) v /= n;
    return e;
}

std::vector<double> BridgeProvider::do_embed_text(const std::string& text) const {
    return unit_embedding(client_.call("embed_text", {{"text", text}}));
}

std::vector<double> BridgeProvider::do_embed_image(const Image& image) const {
    return unit_embedding(client_.call("embed_image", {{"image", encode_tensor(image_to_wire(image))}}));
}

Image BridgeProvider::do_image_embed_vjp(const Image& image, std::span<const double> upstream) const {
    WireTensor up{{upstream.size()}, {}};
    for (double v : upstream) up.data.push_back(static_cast<float>(v));
    const nlohmann::json result = client_.call(
        "image_vjp", {{"image", encode_tensor(image_to_wire(image))}, {"upstream", encode_tensor(up)}});
    if (!result.contains("gradient")) throw BridgeError("bridge protocol error: missing gradient");
    Image g = wire_to_image(decode_tensor(result["gradient"]));
    if (g.width != image.width || g.height != image.height)
        throw BridgeError("bridge protocol error: gradient shape differs from image");
    return g;
}

std::vector<WireTensor> BridgeProvider::features(const Image& image) const {
    const nlohmann::json result =
        client_.call("features", {{"image", encode_tensor(image_to_wire(image))}});
    std::vector<WireTensor> out;
    try {
        for (const auto& f : result.at("features")) out.push_back(decode_tensor(f));
    } catch (const nlohmann::json::exception& e) {
        throw BridgeError(std::string("bridge protocol error: bad features: ") + e.what());
    }
    return out;
}

ad::Var BridgeProvider::embed_image_on_tape(ad::Var image, std::size_t width,
                                            std::size_t height) const {
    ad::Var x = image;
    if (width != image_size_ || height != image_size_)
        x = ad::matmul(image.tape->constant(area_resize_matrix(width, height, image_size_, image_size_)),
                       image);
    return EmbeddingProvider::embed_image_on_tape(x, image_size_, image_size_);
}

}  // namespace radiart
