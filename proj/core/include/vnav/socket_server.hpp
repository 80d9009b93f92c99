#pragma once

#include <atomic>
#include <cstdint>
#include <functional>

#include "vnav/nav_service.hpp"

namespace vnav {

/// Line-oriented TCP front end for ServiceConnection. Loopback only.
/// One thread per connection reads lines; a second drives the session.
class SocketServer {
 public:
  SocketServer(ServiceOptions opts, std::uint16_t port);
  ~SocketServer();
  SocketServer(const SocketServer&) = delete;
  SocketServer& operator=(const SocketServer&) = delete;

  /// Port actually bound (useful when 0 was requested).
  std::uint16_t port() const { return port_; }

  /// Accepts until stop() or until max_connections have been served (0 = unlimited).
  void serve(std::size_t max_connections = 0);
  void stop();

 private:
  void handle_client(int fd);

  ServiceOptions opts_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
};

}  // namespace vnav
