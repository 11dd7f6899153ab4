#pragma once

#include "repcoach/session_io.hpp"
#include "repcoach/streaming.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace repcoach::wire {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kMaxBatch = 64;

enum class Kind { hello, start, sample_batch, marker, stop, prediction, status, error };

std::string to_string(Kind kind);
std::optional<Kind> kind_from_string(const std::string& name);

/// Envelope shared by every message: {"v", "kind", "session", "client_time", "payload"}.
struct Message {
    Kind kind = Kind::hello;
    std::string session;
    std::optional<double> client_time;
    nlohmann::json payload = nlohmann::json::object();
};

/// Field-level decoding failure; `field` is a JSON path such as "payload.samples[3].ay".
class WireError : public std::runtime_error {
public:
    WireError(const std::string& field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Parses the envelope; payload contents are checked by the typed decoders below.
Message parse(const std::string& text);
std::string serialize(const Message& message);

struct Hello {
    int schema = kSchemaVersion;
    std::string role = "recorder";  // recorder | subscriber
    std::string client;
};

struct Start {
    std::map<std::string, std::string> meta;
};

struct Status {
    std::string state;  // idle | recording
    std::string session;
    long samples = 0;
    long markers = 0;
    long ticks = 0;
    long last_tick = -1;
    long dropped = 0;
    long subscribers = 0;
    std::string saved;  // persisted base path after stop
};

struct Error {
    std::string message;
    std::string field;
    std::string in_reply_to;
};

Hello decode_hello(const Message& m);
Start decode_start(const Message& m);
/// 1..64 samples, each {"t", "ax", "ay", "az", "gx", "gy", "gz"} with finite numbers.
std::vector<RawSample> decode_samples(const Message& m);
/// Marker time {"t"} in seconds on the sample clock.
double decode_marker(const Message& m);
PredictionEvent decode_prediction(const Message& m);
Status decode_status(const Message& m);
Error decode_error(const Message& m);

Message make_hello(const Hello& h);
Message make_start(const Start& s);
Message make_sample_batch(const std::string& session, const std::vector<RawSample>& samples);
Message make_marker(const std::string& session, double t);
Message make_stop(const std::string& session);
Message make_prediction(const std::string& session, const PredictionEvent& e);
Message make_status(const Status& s);
Message make_error(const Error& e, const std::string& session = {});

}  // namespace repcoach::wire
