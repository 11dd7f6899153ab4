#include "repcoach/wire.hpp"

#include <array>
#include <cmath>

namespace repcoach::wire {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 8> kKindNames = {"hello",  "start",      "sample_batch", "marker",
                                                   "stop",   "prediction", "status",       "error"};
constexpr std::array<const char*, 6> kChannelNames = {"ax", "ay", "az", "gx", "gy", "gz"};

const json& member(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw WireError(path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) throw WireError(path + "." + key, "missing");
    return *it;
}

double number(const json& obj, const std::string& key, const std::string& path) {
    const auto& v = member(obj, key, path);
    if (!v.is_number()) throw WireError(path + "." + key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw WireError(path + "." + key, "expected a finite number");
    return d;
}

long integer(const json& obj, const std::string& key, const std::string& path) {
    const auto& v = member(obj, key, path);
    if (!v.is_number_integer()) throw WireError(path + "." + key, "expected an integer");
    return v.get<long>();
}

std::string text(const json& obj, const std::string& key, const std::string& path) {
    const auto& v = member(obj, key, path);
    if (!v.is_string()) throw WireError(path + "." + key, "expected a string");
    return v.get<std::string>();
}

std::string optional_text(const json& obj, const std::string& key, const std::string& path) {
    return obj.contains(key) ? text(obj, key, path) : std::string();
}

void expect(const Message& m, Kind kind) {
    if (m.kind != kind) throw WireError("kind", "expected " + to_string(kind));
}

Message envelope(Kind kind, const std::string& session, json payload) {
    Message m;
    m.kind = kind;
    m.session = session;
    m.payload = std::move(payload);
    return m;
}

}  // namespace

std::string to_string(Kind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<Kind> kind_from_string(const std::string& name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (name == kKindNames[i]) return static_cast<Kind>(i);
    }
    return std::nullopt;
}

Message parse(const std::string& raw) {
    json j;
    try {
        j = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw WireError("$", std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw WireError("$", "expected an object");
    const long v = integer(j, "v", "$");
    if (v < 1 || v > kSchemaVersion) throw WireError("v", "unsupported schema version " + std::to_string(v));
    Message m;
    const auto name = text(j, "kind", "$");
    const auto kind = kind_from_string(name);
    if (!kind) throw WireError("kind", "unknown kind '" + name + "'");
    m.kind = *kind;
    m.session = optional_text(j, "session", "$");
    if (j.contains("client_time")) m.client_time = number(j, "client_time", "$");
    if (j.contains("payload")) {
        if (!j["payload"].is_object()) throw WireError("payload", "expected an object");
        m.payload = j["payload"];
    }
    return m;
}

std::string serialize(const Message& m) {
    json j = {{"v", kSchemaVersion}, {"kind", to_string(m.kind)}, {"session", m.session}, {"payload", m.payload}};
    if (m.client_time) j["client_time"] = *m.client_time;
    return j.dump();
}

Hello decode_hello(const Message& m) {
    expect(m, Kind::hello);
    Hello h;
    if (m.payload.contains("schema")) h.schema = static_cast<int>(integer(m.payload, "schema", "payload"));
    if (m.payload.contains("role")) h.role = text(m.payload, "role", "payload");
    if (h.role != "recorder" && h.role != "subscriber") throw WireError("payload.role", "expected recorder or subscriber");
    h.client = optional_text(m.payload, "client", "payload");
    return h;
}

Start decode_start(const Message& m) {
    expect(m, Kind::start);
    Start s;
    if (m.payload.contains("meta")) {
        const auto& meta = m.payload["meta"];
        if (!meta.is_object()) throw WireError("payload.meta", "expected an object");
        for (const auto& [key, value] : meta.items()) {
            if (!value.is_string()) throw WireError("payload.meta." + key, "expected a string");
            s.meta[key] = value.get<std::string>();
        }
    }
    return s;
}

std::vector<RawSample> decode_samples(const Message& m) {
    expect(m, Kind::sample_batch);
    const auto& arr = member(m.payload, "samples", "payload");
    if (!arr.is_array()) throw WireError("payload.samples", "expected an array");
    if (arr.empty() || arr.size() > kMaxBatch) throw WireError("payload.samples", "must hold 1..64 samples");
    std::vector<RawSample> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "payload.samples[" + std::to_string(i) + "]";
        RawSample s;
        s.t = number(arr[i], "t", path);
        for (std::size_t c = 0; c < kChannelNames.size(); ++c) {
            s.values[static_cast<Index>(c)] = number(arr[i], kChannelNames[c], path);
        }
        out.push_back(s);
    }
    return out;
}

double decode_marker(const Message& m) {
    expect(m, Kind::marker);
    return number(m.payload, "t", "payload");
}

PredictionEvent decode_prediction(const Message& m) {
    expect(m, Kind::prediction);
    const auto& p = m.payload;
    PredictionEvent e;
    e.tick = integer(p, "tick", "payload");
    e.wall_time = number(p, "wall_time", "payload");
    e.sample_index = integer(p, "sample_index", "payload");
    e.stream_time = number(p, "stream_time", "payload");
    e.windows_used = static_cast<int>(integer(p, "windows_used", "payload"));
    e.confidence = number(p, "confidence", "payload");
    const auto& flag = member(p, "flag", "payload");
    if (!flag.is_boolean()) throw WireError("payload.flag", "expected a boolean");
    e.flag = flag.get<bool>();
    const auto& markers = member(p, "new_markers", "payload");
    if (!markers.is_array()) throw WireError("payload.new_markers", "expected an array");
    for (std::size_t i = 0; i < markers.size(); ++i) {
        if (!markers[i].is_number_integer()) {
            throw WireError("payload.new_markers[" + std::to_string(i) + "]", "expected an integer");
        }
        e.new_markers.push_back(markers[i].get<Index>());
    }
    e.latency_ms = number(p, "latency_ms", "payload");
    return e;
}

Status decode_status(const Message& m) {
    expect(m, Kind::status);
    const auto& p = m.payload;
    Status s;
    s.state = text(p, "state", "payload");
    s.session = m.session;
    s.samples = integer(p, "samples", "payload");
    s.markers = integer(p, "markers", "payload");
    s.ticks = integer(p, "ticks", "payload");
    s.last_tick = integer(p, "last_tick", "payload");
    s.dropped = integer(p, "dropped", "payload");
    s.subscribers = integer(p, "subscribers", "payload");
    s.saved = optional_text(p, "saved", "payload");
    return s;
}

Error decode_error(const Message& m) {
    expect(m, Kind::error);
    Error e;
    e.message = text(m.payload, "message", "payload");
    e.field = optional_text(m.payload, "field", "payload");
    e.in_reply_to = optional_text(m.payload, "in_reply_to", "payload");
    return e;
}

Message make_hello(const Hello& h) {
    return envelope(Kind::hello, {}, {{"schema", h.schema}, {"role", h.role}, {"client", h.client}});
}

Message make_start(const Start& s) { return envelope(Kind::start, {}, {{"meta", s.meta}}); }

Message make_sample_batch(const std::string& session, const std::vector<RawSample>& samples) {
    json arr = json::array();
    for (const auto& s : samples) {
        json o = {{"t", s.t}};
        for (std::size_t c = 0; c < kChannelNames.size(); ++c) o[kChannelNames[c]] = s.values[static_cast<Index>(c)];
        arr.push_back(std::move(o));
    }
    return envelope(Kind::sample_batch, session, {{"samples", std::move(arr)}});
}

Message make_marker(const std::string& session, double t) { return envelope(Kind::marker, session, {{"t", t}}); }

Message make_stop(const std::string& session) { return envelope(Kind::stop, session, json::object()); }

Message make_prediction(const std::string& session, const PredictionEvent& e) {
    return envelope(Kind::prediction, session,
                    {{"tick", e.tick},
                     {"wall_time", e.wall_time},
                     {"sample_index", e.sample_index},
                     {"stream_time", e.stream_time},
                     {"windows_used", e.windows_used},
                     {"confidence", e.confidence},
                     {"flag", e.flag},
                     {"new_markers", e.new_markers},
                     {"latency_ms", e.latency_ms}});
}

Message make_status(const Status& s) {
    json p = {{"state", s.state},       {"samples", s.samples}, {"markers", s.markers},
              {"ticks", s.ticks},       {"last_tick", s.last_tick}, {"dropped", s.dropped},
              {"subscribers", s.subscribers}};
    if (!s.saved.empty()) p["saved"] = s.saved;
    return envelope(Kind::status, s.session, std::move(p));
}

Message make_error(const Error& e, const std::string& session) {
    json p = {{"message", e.message}};
    if (!e.field.empty()) p["field"] = e.field;
    if (!e.in_reply_to.empty()) p["in_reply_to"] = e.in_reply_to;
    return envelope(Kind::error, session, std::move(p));
}

}  // namespace repcoach::wire
