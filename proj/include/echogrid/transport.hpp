#pragma once

// WebSocket front end for the session state machine.

#include "echogrid/server.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace echogrid::server {

struct ServeOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  ServerConfig config;
  std::filesystem::path log_dir;  // empty: logs are not persisted
  double tick_hz = 30.0;
  bool verbose = false;
};

/// One io thread; every connection is its own session. Text frames carry
/// JSON messages; sessions that asked for PCM also receive binary frames of
/// interleaved 16-bit little-endian stereo at 44.1 kHz, 512 frames each.
class WebSocketServer {
public:
  explicit WebSocketServer(ServeOptions options);
  ~WebSocketServer();
  WebSocketServer(const WebSocketServer&) = delete;
  WebSocketServer& operator=(const WebSocketServer&) = delete;

  /// Port actually bound (useful with port 0).
  unsigned short port() const;
  /// Blocks until stop() is called.
  void run();
  /// Thread-safe.
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace echogrid::server
