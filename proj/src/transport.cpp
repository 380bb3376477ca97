#include "echogrid/transport.hpp"

#include "echogrid/audio.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <deque>
#include <iostream>
#include <thread>

namespace echogrid::server {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

constexpr std::size_t kPcmBlockFrames = 512;

std::string make_session_id(std::uint64_t counter) {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  char buf[64];
  std::snprintf(buf, sizeof buf, "s%lld-%llu", static_cast<long long>(ms), static_cast<unsigned long long>(counter));
  return buf;
}

struct Shared {
  ServeOptions options;
  HrirSet hrirs;
  std::atomic<std::uint64_t> counter{0};
};

/// Renders PCM blocks on its own thread from the latest published snapshot.
class PcmStream {
public:
  using Sink = std::function<void(std::string)>;

  PcmStream(const Shared& shared, Sink sink) : mixer_(shared.hrirs, shared.options.config.grid), sink_(std::move(sink)) {
    thread_ = std::thread([this] { loop(); });
  }
  ~PcmStream() {
    stop_ = true;
    thread_.join();
  }

  void publish(const ActiveCellSet& set) { snapshots_.publish(set); }

private:
  void loop() {
    std::vector<float> block(kPcmBlockFrames * 2);
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(double(kPcmBlockFrames) / kSampleRate));
    auto deadline = std::chrono::steady_clock::now();
    while (!stop_) {
      mixer_.render(snapshots_.latest(), block);
      std::string bytes(block.size() * 2, '\0');
      for (std::size_t i = 0; i < block.size(); ++i) {
        const auto v = static_cast<std::int16_t>(std::lround(std::clamp(block[i], -1.0f, 1.0f) * 32767.0f));
        bytes[2 * i] = static_cast<char>(v & 0xff);
        bytes[2 * i + 1] = static_cast<char>((v >> 8) & 0xff);
      }
      sink_(std::move(bytes));
      deadline += period;
      std::this_thread::sleep_until(deadline);
    }
  }

  Mixer mixer_;
  LatestValue<ActiveCellSet> snapshots_;
  Sink sink_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

class Connection : public std::enable_shared_from_this<Connection> {
public:
  Connection(tcp::socket socket, Shared& shared)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), shared_(shared),
        state_(shared.options.config, make_session_id(++shared.counter)), start_(std::chrono::steady_clock::now()) {}

  void start() {
    http::async_read(ws_.next_layer(), buffer_, request_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_request(ec); });
  }

private:
  double now() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  void on_request(beast::error_code ec) {
    if (ec) return;
    if (!websocket::is_upgrade(request_)) {
      auto res = std::make_shared<http::response<http::string_body>>(http::status::ok, request_.version());
      res->set(http::field::content_type, "application/json");
      res->body() = json{{"service", "echogrid"}, {"protocol", kProtocol}}.dump();
      res->prepare_payload();
      http::async_write(ws_.next_layer(), *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
        beast::error_code ignored;
        self->ws_.next_layer().socket().shutdown(tcp::socket::shutdown_both, ignored);
      });
      return;
    }
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(request_, [self = shared_from_this()](beast::error_code e) {
      if (e) return;
      if (self->shared_.options.verbose) std::clog << "session " << self->state_.session_id << " connected\n";
      self->read();
      self->schedule_tick();
    });
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      finish();
      return;
    }
    if (!ws_.got_text()) {
      buffer_.consume(buffer_.size());
      send(json{{"type", "error"}, {"code", code::kPayload}, {"message", "binary frames are not accepted"}}.dump(),
           false);
      read();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    const bool was_waiting = state_.phase == Phase::AwaitHello;
    Output out = handle_text(state_, text, now());
    if (was_waiting && state_.phase != Phase::AwaitHello && state_.pcm) start_pcm();
    deliver(out);
    if (out.close) {
      closing_ = true;
      return;
    }
    read();
  }

  void start_pcm() {
    auto weak = weak_from_this();
    auto executor = ws_.get_executor();
    pcm_ = std::make_unique<PcmStream>(shared_, [weak, executor](std::string bytes) {
      net::post(executor, [weak, bytes = std::move(bytes)]() mutable {
        if (auto self = weak.lock()) self->send(std::move(bytes), true);
      });
    });
  }

  void deliver(const Output& out) {
    for (const json& m : out.messages) send(m.dump(), false);
    for (const SessionLog& log : out.finished_logs) {
      if (shared_.options.log_dir.empty()) continue;
      try {
        const auto path = persist(log, shared_.options.log_dir);
        if (shared_.options.verbose) std::clog << "wrote " << path.string() << "\n";
      } catch (const std::exception& e) {
        send(json{{"type", "error"}, {"code", "E_STORAGE"}, {"message", e.what()}}.dump(), false);
      }
    }
  }

  void schedule_tick() {
    timer_.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / shared_.options.tick_hz)));
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->finished_) return;
      if (auto msg = tick(self->state_, self->now())) self->send(msg->dump(), false);
      if (self->pcm_ && self->state_.engine) self->pcm_->publish(self->state_.engine->state());
      self->schedule_tick();
    });
  }

  void send(std::string payload, bool binary) {
    if (finished_) return;
    queue_.push_back({binary, std::move(payload)});
    if (queue_.size() == 1) write_next();
  }

  void write_next() {
    ws_.binary(queue_.front().binary);
    ws_.async_write(net::buffer(queue_.front().payload), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->finish();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) {
        self->write_next();
      } else if (self->closing_) {
        self->ws_.async_close(websocket::close_code::policy_error, [self](beast::error_code) { self->finish(); });
      }
    });
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    timer_.cancel();
    pcm_.reset();
    deliver(abort_session(state_));
    queue_.clear();
    if (shared_.options.verbose) std::clog << "session " << state_.session_id << " closed\n";
  }

  struct Frame {
    bool binary;
    std::string payload;
  };

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
  Shared& shared_;
  SessionState state_;
  std::chrono::steady_clock::time_point start_;
  std::deque<Frame> queue_;
  std::unique_ptr<PcmStream> pcm_;
  bool closing_ = false;
  bool finished_ = false;
};

}  // namespace

struct WebSocketServer::Impl {
  Shared shared;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Connection>(std::move(socket), shared)->start();
      accept();
    });
  }
};

WebSocketServer::WebSocketServer(ServeOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->shared.options = std::move(options);
  impl_->shared.hrirs = default_hrir_set();
  const auto address = net::ip::make_address(impl_->shared.options.host);
  const tcp::endpoint endpoint(address, impl_->shared.options.port);
  impl_->acceptor.open(endpoint.protocol());
  impl_->acceptor.set_option(net::socket_base::reuse_address(true));
  impl_->acceptor.bind(endpoint);
  impl_->acceptor.listen();
  impl_->accept();
}

WebSocketServer::~WebSocketServer() = default;

unsigned short WebSocketServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void WebSocketServer::run() {
  auto guard = net::make_work_guard(impl_->ioc);
  impl_->ioc.run();
}

void WebSocketServer::stop() { impl_->ioc.stop(); }

}  // namespace echogrid::server
