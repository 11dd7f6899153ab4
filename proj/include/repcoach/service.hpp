#pragma once

#include "repcoach/streaming.hpp"
#include "repcoach/wire.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace repcoach {

/// Bounded outbox of one read-only client. When full, the oldest undelivered message is dropped.
class Subscriber {
public:
    explicit Subscriber(std::size_t capacity = 256);

    /// Queues a message; returns false when an older one had to be dropped to make room.
    bool push(wire::Message message);
    std::optional<wire::Message> pop();
    std::optional<wire::Message> wait_pop(std::chrono::milliseconds timeout);
    std::vector<wire::Message> drain();

    long dropped() const;
    std::size_t pending() const;
    /// Called after every push, outside the queue lock.
    void set_notify(std::function<void()> notify);

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<wire::Message> queue_;
    long dropped_ = 0;
    std::function<void()> notify_;
};

struct ServiceOptions {
    std::filesystem::path data_dir = "sessions";
    std::size_t queue_capacity = 256;
    LiveOptions live;
};

/// Single active recording session, any number of subscribers. All entry points are serialized
/// by one lock, so ingestion, ticks and publication observe a single writer.
class LiveService {
public:
    /// Without a model the service records sessions but publishes no predictions.
    explicit LiveService(ServiceOptions options, std::optional<ClassificationModel<float>> model = std::nullopt);

    /// Applies one client message; returns the replies for the sender. Never throws on bad
    /// input: errors become error replies and the service state is unchanged.
    std::vector<wire::Message> handle_ingest(const wire::Message& message);
    std::vector<wire::Message> handle_text(const std::string& text);

    /// New subscriber; its queue starts with a status snapshot and then receives later ticks only.
    std::shared_ptr<Subscriber> subscribe();
    void unsubscribe(const std::shared_ptr<Subscriber>& subscriber);

    /// Sends the event to every subscriber; returns the number of subscribers reached.
    std::size_t publish_prediction(const PredictionEvent& event);

    wire::Status status() const;
    bool recording() const;
    /// Predictions published for the current (or last finished) session.
    std::vector<PredictionEvent> published() const;
    /// Path base of the last persisted session.
    std::optional<std::filesystem::path> last_saved() const;

private:
    std::vector<wire::Message> dispatch(const wire::Message& message);
    std::vector<wire::Message> on_start(const wire::Message& message);
    std::vector<wire::Message> on_samples(const wire::Message& message);
    std::vector<wire::Message> on_marker(const wire::Message& message);
    std::vector<wire::Message> on_stop(const wire::Message& message);
    void publish_locked(const PredictionEvent& event);
    void broadcast_locked(const wire::Message& message);
    wire::Status status_locked() const;
    std::string next_session_id();

    ServiceOptions options_;
    std::optional<ClassificationModel<float>> model_;
    mutable std::mutex mutex_;
    std::vector<std::shared_ptr<Subscriber>> subscribers_;

    bool recording_ = false;
    std::string session_id_;
    Session session_;
    std::unique_ptr<LivePipeline> pipeline_;
    std::vector<PredictionEvent> published_;
    long last_tick_ = -1;
    long session_counter_ = 0;
    std::optional<std::filesystem::path> last_saved_;
};

}  // namespace repcoach
