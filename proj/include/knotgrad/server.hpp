#pragma once

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <csignal>
#include <deque>
#include <memory>
#include <optional>
#include <string>

#include "knotgrad/service.hpp"

namespace knotgrad::service {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = net::ip::tcp;

namespace detail {

/// One websocket client: reads requests, hands them to a Connection, and
/// writes replies and snapshots through a single outbox.
class WsClient : public std::enable_shared_from_this<WsClient> {
 public:
  /// Snapshots beyond this many queued messages are dropped for a slow client.
  static constexpr std::size_t max_outbox = 512;

  WsClient(tcp::socket socket, SessionManager& manager) : ws_(std::move(socket)), manager_(manager) {}

  void start() {
    net::dispatch(ws_.get_executor(), [self = shared_from_this()] { self->accept(); });
  }

 private:
  void accept() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      std::weak_ptr<WsClient> weak = self;
      self->conn_ = std::make_unique<Connection>(self->manager_, [weak](const nlohmann::json& m) {
        if (auto s = weak.lock()) s->send(m);
      });
      self->send(hello_message());
      self->read();
    });
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->conn_.reset();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->conn_->handle(text);
      self->read();
    });
  }

  /// Thread-safe: hops onto the client's strand.
  void send(const nlohmann::json& m) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = m.dump(), snapshot = m.value("type", "") == "snapshot"] {
      if (snapshot && self->outbox_.size() >= max_outbox) return;
      self->outbox_.push_back(std::move(text));
      if (self->outbox_.size() == 1) self->write();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->outbox_.clear();
        return;
      }
      self->outbox_.pop_front();
      if (!self->outbox_.empty()) self->write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  SessionManager& manager_;
  std::unique_ptr<Connection> conn_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
};

}  // namespace detail

/// Websocket front end for a SessionManager. Every client receives a hello
/// message announcing the protocol version, then exchanges JSON messages.
class Server {
 public:
  /// Binds immediately; throws ServiceError if the address is unusable or
  /// the port is taken. Port 0 picks a free port.
  Server(SessionManager& manager, const std::string& bind, unsigned short port)
      : manager_(manager), acceptor_(net::make_strand(ioc_)) {
    beast::error_code ec;
    const auto address = net::ip::make_address(bind, ec);
    if (ec) throw ServiceError("bad bind address '" + bind + "'");
    const tcp::endpoint endpoint{address, port};
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw ServiceError("cannot listen on " + bind + ":" + std::to_string(port) + ": " + ec.message());
    accept();
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  /// Serves until stop().
  void run() { ioc_.run(); }

  /// Thread-safe.
  void stop() { ioc_.stop(); }

  /// SIGINT/SIGTERM end run().
  void stop_on_signals() {
    signals_.emplace(ioc_, SIGINT, SIGTERM);
    signals_->async_wait([this](const beast::error_code&, int) { stop(); });
  }

 private:
  void accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (!ec) std::make_shared<detail::WsClient>(std::move(socket), manager_)->start();
      if (acceptor_.is_open()) accept();
    });
  }

  SessionManager& manager_;
  net::io_context ioc_{1};
  tcp::acceptor acceptor_;
  std::optional<net::signal_set> signals_;
};

}  // namespace knotgrad::service
