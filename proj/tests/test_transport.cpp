#include "echogrid/transport.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <doctest.h>

#include <chrono>
#include <thread>

using namespace echogrid;
using namespace echogrid::server;

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

struct Running {
  WebSocketServer server;
  std::thread thread;

  explicit Running(ServeOptions opt) : server((opt.port = 0, std::move(opt))) {
    thread = std::thread([this] { server.run(); });
  }
  ~Running() {
    server.stop();
    thread.join();
  }
};

struct Client {
  net::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};

  explicit Client(unsigned short port) {
    tcp::resolver resolver(ioc);
    net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/");
  }

  void send(const json& j) {
    ws.text(true);
    ws.write(net::buffer(j.dump()));
  }

  // Next frame; binary frames come back as {"binary": size}.
  json receive() {
    beast::flat_buffer buf;
    ws.read(buf);
    if (!ws.got_text()) return {{"binary", buf.size()}};
    return json::parse(beast::buffers_to_string(buf.data()));
  }

  json receive_type(std::string_view type, int limit = 500) {
    for (int i = 0; i < limit; ++i) {
      json m = receive();
      if (m.contains("type") && m["type"] == type) return m;
    }
    throw std::runtime_error("no " + std::string(type) + " message");
  }
};

json hello(bool pcm = false) {
  return {{"type", "hello"}, {"protocol", "echogrid/1"}, {"participant_id", "p01"}, {"group", "2D3D"},
          {"session_number", 1},  {"seed", 11},             {"pcm", pcm}};
}

struct TempDir {
  std::filesystem::path path;
  TempDir() : path(std::filesystem::temp_directory_path() / ("echogrid-transport-" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("plain HTTP gets a service description") {
  Running srv({});
  net::io_context ioc;
  tcp::socket sock(ioc);
  tcp::resolver resolver(ioc);
  net::connect(sock, resolver.resolve("127.0.0.1", std::to_string(srv.server.port())));
  http::request<http::empty_body> req(http::verb::get, "/", 11);
  req.set(http::field::host, "127.0.0.1");
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  CHECK(res.result() == http::status::ok);
  CHECK(json::parse(res.body())["protocol"] == "echogrid/1");
}

TEST_CASE("a session over the wire, persisted on disconnect") {
  TempDir dir;
  ServeOptions opt;
  opt.log_dir = dir.path;
  Running srv(opt);
  {
    Client c(srv.server.port());
    c.send(hello());
    const json welcome = c.receive_type("welcome");
    CHECK(welcome["session_id"].get<std::string>().size() > 0);
    const LocalizationTask task = gen_localization(11);
    CHECK(welcome["scene"]["markers"].size() == 3);

    c.send({{"type", "task_control"}, {"action", "start"}, {"t", 100.0}});
    CHECK(c.receive_type("task_state")["phase"] == "localization_running");
    const Vec3 o = task.objects[0].position;
    c.send({{"type", "pose"}, {"t", 100.5}, {"position", {o.x(), o.y() + 0.3, o.z()}}, {"yaw", 0}, {"pitch", -90}});
    json cells;
    for (int i = 0; i < 100 && (cells.is_null() || cells["cells"].empty()); ++i) cells = c.receive_type("active_cells");
    REQUIRE(cells["cells"].size() == 1);
    CHECK(cells["cells"][0]["marker_id"] == 1);

    c.send({{"type", "pose"}, {"t", 101.0}, {"position", {0, 1}}, {"yaw", 0}, {"pitch", 0}});
    CHECK(c.receive_type("error")["code"] == "E_PAYLOAD");
    c.ws.close(websocket::close_code::normal);
  }
  // the server writes the partial log once it notices the disconnect
  std::vector<std::filesystem::path> files;
  for (int i = 0; i < 200 && files.empty(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    if (std::filesystem::exists(dir.path))
      for (const auto& e : std::filesystem::directory_iterator(dir.path))
        if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  REQUIRE(files.size() == 1);
  CHECK(files[0].filename().string().ends_with("-localization.jsonl"));
  const SessionLog log = read_session_log(files[0]);
  CHECK_FALSE(log.header.complete);
  CHECK(log.header.seed == 11);
}

TEST_CASE("PCM sessions receive binary blocks") {
  Running srv({});
  Client c(srv.server.port());
  c.send(hello(true));
  int blocks = 0;
  for (int i = 0; i < 200 && blocks < 5; ++i) {
    const json m = c.receive();
    if (m.contains("binary")) {
      CHECK(m["binary"] == 512 * 2 * 2);
      ++blocks;
    }
  }
  CHECK(blocks == 5);
}

TEST_CASE("binary frames from the client are refused") {
  Running srv({});
  Client c(srv.server.port());
  c.ws.binary(true);
  const std::string bytes(16, '\0');
  c.ws.write(net::buffer(bytes));
  CHECK(c.receive_type("error")["code"] == "E_PAYLOAD");
  c.send(hello());
  CHECK(c.receive_type("welcome")["protocol"] == "echogrid/1");
}

TEST_CASE("a wrong protocol version closes the connection") {
  Running srv({});
  Client c(srv.server.port());
  json h = hello();
  h["protocol"] = "echogrid/9";
  c.send(h);
  CHECK(c.receive()["code"] == "E_VERSION");
  beast::flat_buffer buf;
  beast::error_code ec;
  c.ws.read(buf, ec);
  CHECK(ec == websocket::error::closed);
}
