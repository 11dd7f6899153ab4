#include "repcoach/ws_server.hpp"

#include "repcoach/errors.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>
#include <thread>

namespace repcoach {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket socket, LiveService& service) : ws_(std::move(socket)), service_(service) {}

    void start() {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(beast::bind_front_handler(&Connection::on_accept, shared_from_this()));
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return;
        subscriber_ = service_.subscribe();
        std::weak_ptr<Connection> weak = shared_from_this();
        subscriber_->set_notify([weak] {
            if (auto self = weak.lock()) net::post(self->ws_.get_executor(), [self] { self->write_next(); });
        });
        write_next();
        read();
    }

    void read() { ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_read, shared_from_this())); }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            shutdown();
            return;
        }
        const auto text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        for (const auto& reply : service_.handle_text(text)) replies_.push_back(wire::serialize(reply));
        write_next();
        read();
    }

    // Replies first, then one broadcast at a time so a slow client backs up in its bounded queue.
    void write_next() {
        if (writing_ || closed_) return;
        if (replies_.empty()) {
            if (!subscriber_) return;
            auto m = subscriber_->pop();
            if (!m) return;
            replies_.push_back(wire::serialize(*m));
        }
        writing_ = true;
        ws_.text(true);
        ws_.async_write(net::buffer(replies_.front()),
                        beast::bind_front_handler(&Connection::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t) {
        writing_ = false;
        replies_.pop_front();
        if (ec) {
            shutdown();
            return;
        }
        write_next();
    }

    void shutdown() {
        if (closed_) return;
        closed_ = true;
        if (subscriber_) {
            subscriber_->set_notify({});
            service_.unsubscribe(subscriber_);
            subscriber_.reset();
        }
    }

    websocket::stream<beast::tcp_stream> ws_;
    LiveService& service_;
    beast::flat_buffer buffer_;
    std::deque<std::string> replies_;
    std::shared_ptr<Subscriber> subscriber_;
    bool writing_ = false;
    bool closed_ = false;
};

}  // namespace

struct WsServer::Impl {
    Impl(LiveService& s, unsigned short port, const std::string& address)
        : service(s), acceptor(ioc), work(net::make_work_guard(ioc)) {
        beast::error_code ec;
        const tcp::endpoint endpoint(net::ip::make_address(address, ec), port);
        if (ec) throw ValidationError("invalid listen address '" + address + "'");
        acceptor.open(endpoint.protocol(), ec);
        if (!ec) acceptor.set_option(net::socket_base::reuse_address(true), ec);
        if (!ec) acceptor.bind(endpoint, ec);
        if (!ec) acceptor.listen(net::socket_base::max_listen_connections, ec);
        if (ec) throw IoError("cannot listen on " + address + ":" + std::to_string(port) + ": " + ec.message());
        accept();
    }

    void accept() {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            std::make_shared<Connection>(std::move(socket), service)->start();
            accept();
        });
    }

    LiveService& service;
    net::io_context ioc{1};
    tcp::acceptor acceptor;
    net::executor_work_guard<net::io_context::executor_type> work;
    std::thread thread;
};

WsServer::WsServer(LiveService& service, unsigned short port, const std::string& address)
    : impl_(std::make_unique<Impl>(service, port, address)) {}

WsServer::~WsServer() { stop(); }

unsigned short WsServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void WsServer::run() { impl_->ioc.run(); }

void WsServer::start() {
    if (impl_->thread.joinable()) throw StateError("server already started");
    impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void WsServer::stop() {
    impl_->work.reset();
    impl_->ioc.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace repcoach
