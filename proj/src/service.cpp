#include "repcoach/service.hpp"

#include "repcoach/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace repcoach {

// --- Subscriber ------------------------------------------------------------------------------

Subscriber::Subscriber(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ValidationError("subscriber capacity must be positive");
}

bool Subscriber::push(wire::Message message) {
    bool kept = true;
    std::function<void()> notify;
    {
        std::lock_guard lock(mutex_);
        if (queue_.size() >= capacity_) {
            queue_.pop_front();
            ++dropped_;
            kept = false;
        }
        queue_.push_back(std::move(message));
        notify = notify_;
    }
    cv_.notify_all();
    if (notify) notify();
    return kept;
}

std::optional<wire::Message> Subscriber::pop() {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) return std::nullopt;
    auto m = std::move(queue_.front());
    queue_.pop_front();
    return m;
}

std::optional<wire::Message> Subscriber::wait_pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty(); })) return std::nullopt;
    auto m = std::move(queue_.front());
    queue_.pop_front();
    return m;
}

std::vector<wire::Message> Subscriber::drain() {
    std::lock_guard lock(mutex_);
    std::vector<wire::Message> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
    queue_.clear();
    return out;
}

long Subscriber::dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
}

std::size_t Subscriber::pending() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
}

void Subscriber::set_notify(std::function<void()> notify) {
    std::lock_guard lock(mutex_);
    notify_ = std::move(notify);
}

// --- LiveService -----------------------------------------------------------------------------

LiveService::LiveService(ServiceOptions options, std::optional<ClassificationModel<float>> model)
    : options_(std::move(options)), model_(std::move(model)) {
    if (options_.queue_capacity == 0) throw ValidationError("queue capacity must be positive");
}

std::vector<wire::Message> LiveService::handle_text(const std::string& text) {
    try {
        return handle_ingest(wire::parse(text));
    } catch (const wire::WireError& e) {
        return {wire::make_error({e.what(), e.field(), {}})};
    }
}

std::vector<wire::Message> LiveService::handle_ingest(const wire::Message& message) {
    std::lock_guard lock(mutex_);
    try {
        return dispatch(message);
    } catch (const wire::WireError& e) {
        return {wire::make_error({e.what(), e.field(), wire::to_string(message.kind)}, session_id_)};
    } catch (const std::exception& e) {
        return {wire::make_error({e.what(), {}, wire::to_string(message.kind)}, session_id_)};
    }
}

std::vector<wire::Message> LiveService::dispatch(const wire::Message& m) {
    switch (m.kind) {
        case wire::Kind::hello: {
            const auto hello = wire::decode_hello(m);
            if (hello.schema != wire::kSchemaVersion) {
                throw wire::WireError("payload.schema", "unsupported schema " + std::to_string(hello.schema));
            }
            return {wire::make_status(status_locked())};
        }
        case wire::Kind::start:
            return on_start(m);
        case wire::Kind::sample_batch:
            return on_samples(m);
        case wire::Kind::marker:
            return on_marker(m);
        case wire::Kind::stop:
            return on_stop(m);
        default:
            throw wire::WireError("kind", wire::to_string(m.kind) + " is not a client message");
    }
}

std::vector<wire::Message> LiveService::on_start(const wire::Message& m) {
    const auto start = wire::decode_start(m);
    if (recording_) throw StateError("a session is already recording");
    session_ = Session{};
    session_.meta = start.meta;
    session_id_ = next_session_id();
    session_.meta["session"] = session_id_;
    pipeline_ = model_ ? std::make_unique<LivePipeline>(*model_, options_.live) : nullptr;
    published_.clear();
    last_tick_ = -1;
    recording_ = true;
    const auto st = wire::make_status(status_locked());
    broadcast_locked(st);
    return {st};
}

std::vector<wire::Message> LiveService::on_samples(const wire::Message& m) {
    if (!recording_) throw StateError("samples received before start");
    const auto samples = wire::decode_samples(m);
    double last = session_.samples.empty() ? -INFINITY : session_.samples.back().t;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].t < last) {
            throw wire::WireError("payload.samples[" + std::to_string(i) + "].t", "timestamps must be non-decreasing");
        }
        last = samples[i].t;
    }
    for (const auto& s : samples) {
        session_.samples.push_back(s);
        if (pipeline_) {
            for (const auto& e : pipeline_->push(s)) publish_locked(e);
        }
    }
    return {};
}

std::vector<wire::Message> LiveService::on_marker(const wire::Message& m) {
    if (!recording_) throw StateError("marker received before start");
    const double t = wire::decode_marker(m);
    if (!session_.markers.empty() && t <= session_.markers.back()) {
        throw wire::WireError("payload.t", "markers must be strictly increasing");
    }
    if (!session_.samples.empty() && t < session_.samples.front().t) {
        throw wire::WireError("payload.t", "marker precedes the first sample");
    }
    session_.markers.push_back(t);
    return {wire::make_status(status_locked())};
}

std::vector<wire::Message> LiveService::on_stop(const wire::Message&) {
    if (!recording_) throw StateError("stop received while idle");
    if (pipeline_) {
        for (const auto& e : pipeline_->finish()) publish_locked(e);
    }
    recording_ = false;
    // Markers pressed after the final sample cannot be placed on the recording.
    if (!session_.samples.empty()) {
        const double end = session_.samples.back().t;
        std::erase_if(session_.markers, [end](double t) { return t > end; });
    }
    const auto base = options_.data_dir / session_id_;
    std::filesystem::create_directories(options_.data_dir);
    write_session(session_, base);
    last_saved_ = base;
    auto st = status_locked();
    st.saved = base.string();
    const auto reply = wire::make_status(st);
    broadcast_locked(reply);
    pipeline_.reset();
    return {reply};
}

std::shared_ptr<Subscriber> LiveService::subscribe() {
    std::lock_guard lock(mutex_);
    auto sub = std::make_shared<Subscriber>(options_.queue_capacity);
    subscribers_.push_back(sub);
    sub->push(wire::make_status(status_locked()));
    return sub;
}

void LiveService::unsubscribe(const std::shared_ptr<Subscriber>& subscriber) {
    std::lock_guard lock(mutex_);
    std::erase(subscribers_, subscriber);
}

std::size_t LiveService::publish_prediction(const PredictionEvent& event) {
    std::lock_guard lock(mutex_);
    publish_locked(event);
    return subscribers_.size();
}

void LiveService::publish_locked(const PredictionEvent& event) {
    if (event.tick <= last_tick_) {
        throw StateError("tick " + std::to_string(event.tick) + " is not newer than " + std::to_string(last_tick_));
    }
    last_tick_ = event.tick;
    published_.push_back(event);
    broadcast_locked(wire::make_prediction(session_id_, event));
}

void LiveService::broadcast_locked(const wire::Message& message) {
    for (const auto& s : subscribers_) s->push(message);
}

wire::Status LiveService::status() const {
    std::lock_guard lock(mutex_);
    return status_locked();
}

wire::Status LiveService::status_locked() const {
    wire::Status s;
    s.state = recording_ ? "recording" : "idle";
    s.session = session_id_;
    s.samples = static_cast<long>(session_.samples.size());
    s.markers = static_cast<long>(session_.markers.size());
    s.ticks = static_cast<long>(published_.size());
    s.last_tick = last_tick_;
    for (const auto& sub : subscribers_) s.dropped += sub->dropped();
    s.subscribers = static_cast<long>(subscribers_.size());
    return s;
}

bool LiveService::recording() const {
    std::lock_guard lock(mutex_);
    return recording_;
}

std::vector<PredictionEvent> LiveService::published() const {
    std::lock_guard lock(mutex_);
    return published_;
}

std::optional<std::filesystem::path> LiveService::last_saved() const {
    std::lock_guard lock(mutex_);
    return last_saved_;
}

std::string LiveService::next_session_id() {
    while (true) {
        char id[32];
        std::snprintf(id, sizeof(id), "live-%04ld", ++session_counter_);
        if (!std::filesystem::exists(SessionPaths::from_base(options_.data_dir / id).csv)) return id;
    }
}

}  // namespace repcoach
