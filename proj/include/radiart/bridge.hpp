#pragma once

// Engine side of the embedding bridge protocol: newline-delimited JSON
// requests {id, method, params} answered by {id, result} or {id, error}, with
// tensors carried as {shape, dtype: "f32", data: base64 of little-endian f32}.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "radiart/embedding.hpp"

namespace radiart {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws BridgeError on characters outside the base64 alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct WireTensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    std::size_t element_count() const;
};

nlohmann::json encode_tensor(const WireTensor& t);
/// Throws BridgeError when dtype, shape and payload length disagree.
WireTensor decode_tensor(const nlohmann::json& j);

struct BridgeEndpoint {
    enum class Kind { Tcp, Stdio };
    Kind kind = Kind::Tcp;
    std::string host = "127.0.0.1";
    int port = 0;
    std::string command;

    /// "tcp://host:port", "host:port" or "stdio:<shell command>".
    static BridgeEndpoint parse(const std::string& text);
    std::string to_string() const;
};

/// Line-oriented byte channel to a bridge process.
class BridgeTransport {
public:
    virtual ~BridgeTransport() = default;
    virtual void send_line(const std::string& line) = 0;
    /// Next complete line without its terminator. Throws BridgeError on
    /// timeout, on EOF, or when the peer closes mid-line.
    virtual std::string recv_line(std::chrono::milliseconds timeout) = 0;
};

std::unique_ptr<BridgeTransport> connect_transport(const BridgeEndpoint& endpoint,
                                                   std::chrono::milliseconds timeout);

class BridgeClient {
public:
    static constexpr std::chrono::milliseconds kDefaultTimeout{30000};

    explicit BridgeClient(std::unique_ptr<BridgeTransport> transport,
                          std::chrono::milliseconds timeout = kDefaultTimeout);

    /// Sends a request and returns its id without waiting.
    std::int64_t submit(const std::string& method, nlohmann::json params);
    /// Waits for the response to `id`; responses for other ids that arrive
    /// first are parked until requested. Throws BridgeError on error
    /// responses, timeouts and protocol violations.
    nlohmann::json await(std::int64_t id);
    nlohmann::json call(const std::string& method, nlohmann::json params = nlohmann::json::object());

private:
    std::unique_ptr<BridgeTransport> transport_;
    std::chrono::milliseconds timeout_;
    std::int64_t next_id_ = 1;
    std::map<std::int64_t, nlohmann::json> parked_;
};

/// Embedding provider backed by a remote encoder. Images are area-resized
/// to the bridge's declared input size on the engine side (differentiably)
/// before being sent.
class BridgeProvider final : public EmbeddingProvider {
public:
    explicit BridgeProvider(const BridgeEndpoint& endpoint,
                            std::chrono::milliseconds timeout = BridgeClient::kDefaultTimeout);
    explicit BridgeProvider(std::unique_ptr<BridgeTransport> transport,
                            std::chrono::milliseconds timeout = BridgeClient::kDefaultTimeout);

    std::string name() const override { return "bridge:" + variant_; }
    std::size_t dim() const override { return dim_; }
    EmbeddingCapabilities capabilities() const override { return {true, true, true}; }
    std::size_t image_size() const { return image_size_; }
    const std::string& variant() const { return variant_; }
    std::vector<std::string> feature_layers() const { return feature_layers_; }

    /// Remote feature stack ("features" method). Forward only: the protocol
    /// has no feature VJP.
    std::vector<WireTensor> features(const Image& image) const;

    ad::Var embed_image_on_tape(ad::Var image, std::size_t width, std::size_t height) const override;

protected:
    std::vector<double> do_embed_text(const std::string& text) const override;
    std::vector<double> do_embed_image(const Image& image) const override;
    Image do_image_embed_vjp(const Image& image, std::span<const double> upstream) const override;

private:
    void handshake();
    std::vector<double> unit_embedding(const nlohmann::json& result) const;

    mutable BridgeClient client_;
    std::size_t dim_ = 0;
    std::size_t image_size_ = 0;
    std::string variant_ = "unknown";
    std::vector<std::string> feature_layers_;
};

WireTensor image_to_wire(const Image& image);
Image wire_to_image(const WireTensor& t);

}  // namespace radiart
