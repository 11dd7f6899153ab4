#pragma once

#include "repcoach/service.hpp"

#include <memory>
#include <string>

namespace repcoach {

/// WebSocket front end of a LiveService: one JSON wire message per text frame. Every connection
/// is subscribed on accept, so it first receives a status snapshot and then all later broadcasts;
/// replies to its own messages are sent ahead of queued broadcasts. All I/O runs on one thread.
class WsServer {
public:
    /// Binds immediately; port 0 picks a free port.
    WsServer(LiveService& service, unsigned short port, const std::string& address = "127.0.0.1");
    ~WsServer();
    WsServer(const WsServer&) = delete;
    WsServer& operator=(const WsServer&) = delete;

    unsigned short port() const;
    /// Serves until stop() is called from another thread or a signal handler.
    void run();
    /// Serves on a background thread.
    void start();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace repcoach
