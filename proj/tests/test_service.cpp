#include "repcoach/errors.hpp"
#include "repcoach/service.hpp"
#include "repcoach/synth.hpp"
#include "repcoach/ws_server.hpp"

#include <doctest.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <cmath>
#include <random>

using namespace repcoach;
namespace fs = std::filesystem;

namespace {

ClassificationModel<float> random_classifier(std::uint64_t seed) {
    SegModelConfig sc;
    sc.stages = 3;
    sc.first_channels = 8;
    Rng rng(seed);
    SegmentationModel<float> seg(sc);
    seg.init(rng);
    ClassificationModel<float> cls(seg);
    cls.init(rng);
    return cls;
}

fs::path scratch_dir(const std::string& name) {
    std::random_device rd;
    const auto dir = fs::temp_directory_path() / (name + "-" + std::to_string(rd()));
    fs::remove_all(dir);
    return dir;
}

ServiceOptions options_in(const fs::path& dir) {
    ServiceOptions o;
    o.data_dir = dir;
    return o;
}

std::string start_session(LiveService& service) {
    const auto replies = service.handle_ingest(wire::make_start({{{"participant", "p1"}}}));
    REQUIRE(replies.size() == 1);
    return wire::decode_status(replies[0]).session;
}

// Sends the session in batches of up to 64 samples, markers interleaved at their times.
void stream_session(LiveService& service, const std::string& id, const Session& s) {
    std::size_t next_marker = 0;
    for (std::size_t i = 0; i < s.samples.size(); i += 64) {
        const std::size_t end = std::min(s.samples.size(), i + 64);
        std::vector<RawSample> batch(s.samples.begin() + static_cast<long>(i), s.samples.begin() + static_cast<long>(end));
        REQUIRE(service.handle_ingest(wire::make_sample_batch(id, batch)).empty());
        while (next_marker < s.markers.size() && s.markers[next_marker] <= batch.back().t) {
            service.handle_ingest(wire::make_marker(id, s.markers[next_marker++]));
        }
    }
}

wire::Message error_of(const std::vector<wire::Message>& replies) {
    REQUIRE(replies.size() == 1);
    REQUIRE(replies[0].kind == wire::Kind::error);
    return replies[0];
}

}  // namespace

TEST_CASE("wire messages round trip") {
    RawSample s;
    s.t = 0.01;
    s.values << 1, 2, 3, 4, 5, 6;
    const auto batch = wire::parse(wire::serialize(wire::make_sample_batch("x", {s, s})));
    CHECK(batch.kind == wire::Kind::sample_batch);
    CHECK(batch.session == "x");
    const auto back = wire::decode_samples(batch);
    REQUIRE(back.size() == 2);
    CHECK(back[1] == s);

    PredictionEvent e;
    e.tick = 7;
    e.sample_index = 704;
    e.stream_time = 7.04;
    e.windows_used = 8;
    e.confidence = 0.625;
    e.flag = true;
    e.new_markers = {650, 690};
    e.latency_ms = 3.5;
    const auto pe = wire::decode_prediction(wire::parse(wire::serialize(wire::make_prediction("x", e))));
    CHECK(pe.tick == 7);
    CHECK(pe.sample_index == 704);
    CHECK(pe.confidence == 0.625);
    CHECK(pe.flag);
    CHECK(pe.new_markers == std::vector<Index>{650, 690});

    wire::Status st;
    st.state = "recording";
    st.session = "live-0001";
    st.samples = 12;
    const auto sb = wire::decode_status(wire::parse(wire::serialize(wire::make_status(st))));
    CHECK(sb.state == "recording");
    CHECK(sb.session == "live-0001");
    CHECK(sb.samples == 12);
    CHECK(wire::decode_marker(wire::parse(wire::serialize(wire::make_marker("x", 12.5)))) == 12.5);
}

TEST_CASE("wire decoding names the failing field") {
    auto field_of = [](const std::string& text) {
        try {
            wire::decode_samples(wire::parse(text));
        } catch (const wire::WireError& e) {
            return e.field();
        }
        return std::string("none");
    };
    CHECK(field_of("not json") == "$");
    CHECK(field_of(R"({"v":2,"kind":"sample_batch"})") == "v");
    CHECK(field_of(R"({"v":1,"kind":"bogus"})") == "kind");
    CHECK(field_of(R"({"v":1,"kind":"sample_batch","payload":{}})") == "payload.samples");
    CHECK(field_of(R"({"v":1,"kind":"sample_batch","payload":{"samples":[]}})") == "payload.samples");
    CHECK(field_of(R"({"v":1,"kind":"sample_batch","payload":{"samples":[{"t":0,"ax":1,"ay":"x","az":0,"gx":0,"gy":0,"gz":0}]}})") ==
          "payload.samples[0].ay");
    std::vector<RawSample> too_many(65);
    CHECK(field_of(wire::serialize(wire::make_sample_batch("x", too_many))) == "payload.samples");
}

TEST_CASE("session state machine") {
    const auto dir = scratch_dir("svc-state");
    LiveService service(options_in(dir));
    CHECK(service.status().state == "idle");

    RawSample s;
    error_of(service.handle_ingest(wire::make_sample_batch("", {s})));
    error_of(service.handle_ingest(wire::make_stop("")));

    const auto id = start_session(service);
    CHECK_FALSE(id.empty());
    CHECK(service.status().state == "recording");
    CHECK(wire::decode_error(error_of(service.handle_ingest(wire::make_start({})))).in_reply_to == "start");

    std::vector<RawSample> batch(20);
    for (int i = 0; i < 20; ++i) batch[static_cast<std::size_t>(i)].t = i * 0.01 + 12.4;
    service.handle_ingest(wire::make_sample_batch(id, batch));
    const auto marked = service.handle_ingest(wire::make_marker(id, 12.5));
    REQUIRE(marked.size() == 1);
    CHECK(wire::decode_status(marked[0]).markers == 1);
    error_of(service.handle_ingest(wire::make_marker(id, 12.45)));

    // A bad batch is rejected whole; later valid messages are still processed.
    const auto bad = service.handle_text(
        R"({"v":1,"kind":"sample_batch","payload":{"samples":[{"t":13,"ax":1,"ay":"oops","az":0,"gx":0,"gy":0,"gz":0}]}})");
    CHECK(wire::decode_error(error_of(bad)).field == "payload.samples[0].ay");
    CHECK(service.status().samples == 20);
    std::vector<RawSample> more(1);
    more[0].t = 12.6;
    CHECK(service.handle_ingest(wire::make_sample_batch(id, more)).empty());
    CHECK(service.status().samples == 21);

    const auto stopped = service.handle_ingest(wire::make_stop(id));
    const auto st = wire::decode_status(stopped.at(0));
    CHECK(st.state == "idle");
    CHECK_FALSE(st.saved.empty());
    const auto saved = read_session(*service.last_saved());
    CHECK(saved.markers == std::vector<double>{12.5});
    CHECK(saved.samples.size() == 21);
    CHECK(saved.meta.at("participant") == "p1");

    CHECK(start_session(service) != id);
    fs::remove_all(dir);
}

TEST_CASE("publication order, drops and late joiners") {
    const auto dir = scratch_dir("svc-pub");
    ServiceOptions o = options_in(dir);
    o.queue_capacity = 3;
    LiveService service(o);
    CHECK(service.publish_prediction({}) == 0);

    const auto early = service.subscribe();
    CHECK(early->drain().size() == 1);
    for (long t = 1; t <= 3; ++t) {
        PredictionEvent e;
        e.tick = t;
        CHECK(service.publish_prediction(e) == 1);
    }
    const auto got = early->drain();
    REQUIRE(got.size() == 3);
    for (long t = 1; t <= 3; ++t) CHECK(wire::decode_prediction(got[static_cast<std::size_t>(t - 1)]).tick == t);

    PredictionEvent stale;
    stale.tick = 2;
    CHECK_THROWS_AS(service.publish_prediction(stale), StateError);

    const auto late = service.subscribe();
    const auto snapshot = late->drain();
    REQUIRE(snapshot.size() == 1);
    CHECK(snapshot[0].kind == wire::Kind::status);
    CHECK(wire::decode_status(snapshot[0]).last_tick == 3);
    for (long t = 4; t <= 8; ++t) {
        PredictionEvent e;
        e.tick = t;
        CHECK(service.publish_prediction(e) == 2);
    }
    const auto kept = late->drain();
    REQUIRE(kept.size() == 3);
    CHECK(wire::decode_prediction(kept[0]).tick == 6);
    CHECK(late->dropped() == 2);
    CHECK(service.status().dropped == 4);
    service.unsubscribe(early);
    CHECK(service.status().subscribers == 1);
}

TEST_CASE("live session persists and matches an offline replay") {
    const auto dir = scratch_dir("svc-live");
    const auto model = random_classifier(1);
    LiveService service(options_in(dir), model);
    const auto sub = service.subscribe();

    SyntheticProfile p;
    p.seed = 21;
    const auto s = generate_session(p).session;
    const auto id = start_session(service);
    stream_session(service, id, s);
    service.handle_ingest(wire::make_stop(id));

    const auto saved = read_session(*service.last_saved());
    REQUIRE(saved.samples.size() == s.samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        worst = std::max(worst, std::abs(saved.samples[i].t - s.samples[i].t));
        worst = std::max(worst, (saved.samples[i].values - s.samples[i].values).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-9);
    CHECK(saved.markers == s.markers);

    const auto live = service.published();
    const auto offline = replay_session(saved, model);
    REQUIRE(live.size() == offline.size());
    REQUIRE(!live.empty());
    for (std::size_t k = 0; k < live.size(); ++k) {
        CHECK(live[k].tick == offline[k].tick);
        CHECK(std::abs(live[k].confidence - offline[k].confidence) <= 1e-6);
        CHECK(live[k].flag == (live[k].confidence >= 0.5));
    }

    long last = -1;
    std::size_t predictions = 0;
    for (const auto& m : sub->drain()) {
        if (m.kind != wire::Kind::prediction) continue;
        const long tick = wire::decode_prediction(m).tick;
        CHECK(tick > last);
        last = tick;
        ++predictions;
    }
    CHECK(predictions == live.size());
    fs::remove_all(dir);
}

TEST_CASE("websocket round trip") {
    namespace beast = boost::beast;
    namespace net = boost::asio;
    using tcp = net::ip::tcp;

    const auto dir = scratch_dir("svc-ws");
    const auto model = random_classifier(2);
    LiveService service(options_in(dir), model);
    WsServer server(service, 0);
    server.start();

    net::io_context ioc;
    auto connect = [&] {
        auto ws = std::make_unique<beast::websocket::stream<tcp::socket>>(ioc);
        tcp::resolver resolver(ioc);
        net::connect(ws->next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.port())));
        ws->handshake("127.0.0.1", "/");
        return ws;
    };
    auto receive = [](beast::websocket::stream<tcp::socket>& ws) {
        beast::flat_buffer buffer;
        ws.read(buffer);
        return wire::parse(beast::buffers_to_string(buffer.data()));
    };
    auto send = [](beast::websocket::stream<tcp::socket>& ws, const wire::Message& m) {
        ws.text(true);
        ws.write(net::buffer(wire::serialize(m)));
    };

    auto recorder = connect();
    CHECK(receive(*recorder).kind == wire::Kind::status);
    send(*recorder, wire::make_hello({}));
    CHECK(receive(*recorder).kind == wire::Kind::status);

    recorder->text(true);
    recorder->write(net::buffer(std::string("{broken")));
    const auto err = receive(*recorder);
    CHECK(err.kind == wire::Kind::error);
    CHECK(wire::decode_error(err).field == "$");

    send(*recorder, wire::make_start({}));
    const auto started = receive(*recorder);
    REQUIRE(started.kind == wire::Kind::status);
    const auto id = wire::decode_status(started).session;

    auto watcher = connect();
    CHECK(wire::decode_status(receive(*watcher)).state == "recording");

    SyntheticProfile p;
    p.seed = 22;
    p.reps = 3;
    const auto s = generate_session(p).session;
    for (std::size_t i = 0; i < s.samples.size(); i += 50) {
        const std::size_t end = std::min(s.samples.size(), i + 50);
        send(*recorder, wire::make_sample_batch(id, {s.samples.begin() + static_cast<long>(i), s.samples.begin() + static_cast<long>(end)}));
    }
    send(*recorder, wire::make_marker(id, s.markers[0]));
    send(*recorder, wire::make_stop(id));

    long last = -1;
    std::size_t predictions = 0;
    while (true) {
        const auto m = receive(*watcher);
        if (m.kind == wire::Kind::prediction) {
            const long tick = wire::decode_prediction(m).tick;
            CHECK(tick > last);
            last = tick;
            ++predictions;
        } else if (m.kind == wire::Kind::status && !wire::decode_status(m).saved.empty()) {
            break;
        }
    }
    CHECK(predictions == service.published().size());
    CHECK(predictions > 0);
    const auto saved = read_session(*service.last_saved());
    CHECK(saved.samples.size() == s.samples.size());
    CHECK(saved.markers == std::vector<double>{s.markers[0]});

    recorder->close(beast::websocket::close_code::normal);
    watcher->close(beast::websocket::close_code::normal);
    server.stop();
    fs::remove_all(dir);
}
