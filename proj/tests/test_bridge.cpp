#include "doctest.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "mock_bridge.hpp"
#include "radiart/bridge.hpp"
#include "radiart/error.hpp"

using namespace radiart;
using namespace std::chrono_literals;
using radiart::testing::MockBehaviour;
using radiart::testing::MockBridge;

namespace {

Image noise_image(std::size_t w, std::size_t h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(w, h);
    for (double& v : img.pixels.values()) v = u(rng);
    return img;
}

Image as_f32(const Image& img) {
    Image out = img;
    for (double& v : out.pixels.values()) v = static_cast<float>(v);
    return out;
}

BridgeClient client_for(const MockBridge& mock, std::chrono::milliseconds timeout = 5000ms) {
    return BridgeClient(connect_transport(BridgeEndpoint::parse(mock.endpoint()), timeout), timeout);
}

}  // namespace

TEST_CASE("base64 matches the RFC 4648 vectors") {
    const auto enc = [](const std::string& s) {
        return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    };
    CHECK(enc("") == "");
    CHECK(enc("f") == "Zg==");
    CHECK(enc("fo") == "Zm8=");
    CHECK(enc("foo") == "Zm9v");
    CHECK(enc("foob") == "Zm9vYg==");
    CHECK(enc("fooba") == "Zm9vYmE=");
    CHECK(enc("foobar") == "Zm9vYmFy");
    const auto dec = base64_decode("Zm9vYmE=");
    CHECK(std::string(dec.begin(), dec.end()) == "fooba");
    CHECK_THROWS_AS(base64_decode("Zm9v!mE="), BridgeError);
    CHECK_THROWS_AS(base64_decode("Zm9"), BridgeError);
}

TEST_CASE("f32 tensors survive the wire bit for bit") {
    WireTensor t{{2, 3, 4}, {}};
    std::mt19937 rng(1);
    for (std::size_t i = 0; i < 24; ++i) t.data.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(rng())));
    t.data[0] = std::numeric_limits<float>::denorm_min();
    t.data[1] = -0.0f;
    t.data[2] = std::numeric_limits<float>::infinity();
    t.data[3] = std::numeric_limits<float>::max();
    const nlohmann::json j = nlohmann::json::parse(encode_tensor(t).dump());
    CHECK(j["dtype"] == "f32");
    const WireTensor back = decode_tensor(j);
    CHECK(back.shape == t.shape);
    REQUIRE(back.data.size() == t.data.size());
    CHECK(std::memcmp(back.data.data(), t.data.data(), t.data.size() * sizeof(float)) == 0);
    // little-endian layout: 1.0f is 00 00 80 3f
    const auto bytes = base64_decode(encode_tensor(WireTensor{{1}, {1.0f}})["data"].get<std::string>());
    CHECK(bytes == std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3f});
}

TEST_CASE("malformed tensors are protocol errors") {
    nlohmann::json j = encode_tensor(WireTensor{{2}, {1.0f, 2.0f}});
    auto wrong_dtype = j;
    wrong_dtype["dtype"] = "f64";
    CHECK_THROWS_AS(decode_tensor(wrong_dtype), BridgeError);
    auto wrong_shape = j;
    wrong_shape["shape"] = {3};
    CHECK_THROWS_AS(decode_tensor(wrong_shape), BridgeError);
    CHECK_THROWS_AS(decode_tensor(nlohmann::json{{"shape", {1}}}), BridgeError);
}

TEST_CASE("endpoint parsing") {
    auto e = BridgeEndpoint::parse("tcp://localhost:9000");
    CHECK(e.kind == BridgeEndpoint::Kind::Tcp);
    CHECK(e.host == "localhost");
    CHECK(e.port == 9000);
    e = BridgeEndpoint::parse("10.0.0.2:7");
    CHECK(e.host == "10.0.0.2");
    CHECK(e.to_string() == "tcp://10.0.0.2:7");
    e = BridgeEndpoint::parse("stdio:python3 bridge.py --x");
    CHECK(e.kind == BridgeEndpoint::Kind::Stdio);
    CHECK(e.command == "python3 bridge.py --x");
    CHECK_THROWS_AS(BridgeEndpoint::parse("localhost"), ValidationError);
    CHECK_THROWS_AS(BridgeEndpoint::parse("h:0"), ValidationError);
    CHECK_THROWS_AS(BridgeEndpoint::parse("h:70000"), ValidationError);
    CHECK_THROWS_AS(BridgeEndpoint::parse("h:12ab"), ValidationError);
}

TEST_CASE("provider handshake and embeddings against the mock") {
    MockBridge mock;
    BridgeProvider p(BridgeEndpoint::parse(mock.endpoint()), 5000ms);
    CHECK(p.dim() == mock.encoder().dim());
    CHECK(p.image_size() == 16);
    CHECK(p.variant() == "mock-toy");
    CHECK(p.name() == "bridge:mock-toy");
    CHECK(p.feature_layers() == std::vector<std::string>{"l0", "l1"});

    const auto t = p.embed_text("a watercolor painting");
    const auto ref = mock.encoder().embed_text("a watercolor painting");
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == doctest::Approx(ref[i]).epsilon(1e-6));
    CHECK(p.embed_text("a watercolor painting") == t);

    const Image img = noise_image(16, 16, 3);
    const auto e = p.embed_image(img);
    const auto eref = mock.encoder().embed_image(as_f32(img));
    double n = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        CHECK(e[i] == doctest::Approx(eref[i]).epsilon(1e-6));
        n += e[i] * e[i];
    }
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));

    const auto feats = p.features(img);
    REQUIRE(feats.size() == 1);
    CHECK(feats[0].shape == std::vector<std::size_t>{16, 16, 3});
}

TEST_CASE("vjp over the wire is linear in the upstream vector") {
    MockBridge mock;
    BridgeProvider p(BridgeEndpoint::parse(mock.endpoint()), 5000ms);
    const Image img = noise_image(16, 16, 4);
    std::vector<double> u(p.dim());
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    for (double& x : u) x = nd(rng);
    const double a = -2.5;
    std::vector<double> au(u);
    for (double& x : au) x *= a;
    const Image g1 = p.image_embed_vjp(img, u);
    const Image ga = p.image_embed_vjp(img, au);
    double scale = 0.0;
    for (double v : g1.pixels.values()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < g1.pixels.size(); ++i)
        CHECK(std::abs(ga.pixels[i] - a * g1.pixels[i]) <= 4 * std::numeric_limits<float>::epsilon() * std::abs(a) * scale);
}

TEST_CASE("tape embedding through the bridge resizes on the engine side") {
    MockBridge mock;
    BridgeProvider p(BridgeEndpoint::parse(mock.endpoint()), 5000ms);
    const Image img = noise_image(32, 24, 5);
    ad::Tape t;
    const ad::Var x = t.input(img.pixels);
    const ad::Var e = p.embed_image_on_tape(x, 32, 24);
    const auto ref = mock.encoder().embed_image(img);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(e.value()[i] == doctest::Approx(ref[i]).epsilon(1e-5));
    std::vector<double> u(p.dim(), 0.0);
    u[3] = 1.0;
    t.backward(ad::dot(e, t.constant(Tensor::row(u))));
    const Image g = mock.encoder().image_embed_vjp(img, u);
    double scale = 0.0;
    for (double v : g.pixels.values()) scale = std::max(scale, std::abs(v));
    CHECK(max_abs_diff(x.grad(), g.pixels) < 1e-4 * scale);
}

TEST_CASE("interleaved responses are matched by id") {
    MockBehaviour b;
    b.reverse_batch = 3;
    MockBridge mock(b);
    BridgeClient c = client_for(mock);
    const auto id1 = c.submit("embed_text", {{"text", "one"}});
    const auto id2 = c.submit("embed_text", {{"text", "two"}});
    const auto id3 = c.submit("embed_text", {{"text", "three"}});
    const auto r1 = decode_tensor(c.await(id1)["embedding"]);
    const auto r3 = decode_tensor(c.await(id3)["embedding"]);
    const auto r2 = decode_tensor(c.await(id2)["embedding"]);
    const auto two = mock.encoder().embed_text("two");
    CHECK(r2.data[0] == static_cast<float>(two[0]));
    CHECK(r1.data[0] == static_cast<float>(mock.encoder().embed_text("one")[0]));
    CHECK(r3.data[0] == static_cast<float>(mock.encoder().embed_text("three")[0]));
}

TEST_CASE("error responses, timeouts and hang-ups are bridge errors") {
    SUBCASE("server-side error") {
        MockBridge mock;
        BridgeClient c = client_for(mock);
        CHECK_THROWS_AS(c.call("no_such_method"), BridgeError);
    }
    SUBCASE("timeout") {
        MockBehaviour b;
        b.silent = {"embed_text"};
        MockBridge mock(b);
        BridgeProvider p(BridgeEndpoint::parse(mock.endpoint()), 200ms);
        const auto start = std::chrono::steady_clock::now();
        CHECK_THROWS_AS(p.embed_text("hello"), BridgeError);
        CHECK(std::chrono::steady_clock::now() - start < 5s);
    }
    SUBCASE("truncated message") {
        MockBehaviour b;
        b.truncate_on = "embed_text";
        MockBridge mock(b);
        BridgeProvider p(BridgeEndpoint::parse(mock.endpoint()), 2000ms);
        CHECK_THROWS_AS(p.embed_text("hello"), BridgeError);
    }
    SUBCASE("non-unit embedding") {
        MockBehaviour b;
        b.embedding_scale = 1.01;
        MockBridge mock(b);
        BridgeProvider p(BridgeEndpoint::parse(mock.endpoint()), 2000ms);
        CHECK_THROWS_AS(p.embed_text("hello"), BridgeError);
    }
    SUBCASE("nothing listening") {
        int port = 0;
        {
            MockBridge gone;
            port = gone.port();
        }
        CHECK_THROWS_AS(BridgeProvider(BridgeEndpoint::parse("127.0.0.1:" + std::to_string(port)), 500ms),
                        BridgeError);
        CHECK_THROWS_AS(make_provider("bridge:127.0.0.1:" + std::to_string(port)), BridgeError);
    }
}

TEST_CASE("stdio transport") {
    auto echo = connect_transport(BridgeEndpoint::parse("stdio:cat"), 2000ms);
    echo->send_line("{\"ping\":1}");
    CHECK(echo->recv_line(2000ms) == "{\"ping\":1}");

    auto mute = connect_transport(BridgeEndpoint::parse("stdio:exec sleep 5"), 2000ms);
    CHECK_THROWS_AS(mute->recv_line(100ms), BridgeError);

    auto quits = connect_transport(BridgeEndpoint::parse("stdio:printf 'half'"), 2000ms);
    CHECK_THROWS_AS(quits->recv_line(2000ms), BridgeError);

    // an echo is not a valid response: it has no result
    CHECK_THROWS_AS(BridgeProvider(BridgeEndpoint::parse("stdio:cat"), 2000ms), BridgeError);
}
