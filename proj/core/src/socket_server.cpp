#include "vnav/socket_server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <mutex>
#include <system_error>
#include <thread>
#include <vector>


namespace vnav {
namespace {

bool write_all(int fd, const std::string& s) {
  std::size_t off = 0;
  while (off < s.size()) {
    const ssize_t n = ::send(fd, s.data() + off, s.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

SocketServer::SocketServer(ServiceOptions opts, std::uint16_t port) : opts_(std::move(opts)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::system_error(errno, std::generic_category(), "socket");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 8) < 0) {
    const int err = errno;
    ::close(listen_fd_);
    throw std::system_error(err, std::generic_category(), "cannot listen on 127.0.0.1:" + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

SocketServer::~SocketServer() {
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void SocketServer::stop() { stopping_ = true; }

void SocketServer::serve(std::size_t max_connections) {
  std::vector<std::thread> clients;
  std::size_t served = 0;
  while (!stopping_ && (max_connections == 0 || served < max_connections)) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, 200);
    if (r <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    ++served;
    clients.emplace_back([this, fd] { handle_client(fd); });
  }
  for (auto& t : clients) t.join();
}

void SocketServer::handle_client(int fd) {
  std::mutex write_mu;
  bool peer_gone = false;
  ServiceConnection conn(opts_, [&](const std::string& line) {
    std::lock_guard<std::mutex> lock(write_mu);
    if (!peer_gone && !write_all(fd, line + "\n")) peer_gone = true;
  });

  std::thread reader([&] {
    std::string buf;
    char chunk[4096];
    for (;;) {
      pollfd p{fd, POLLIN, 0};
      const int r = ::poll(&p, 1, 200);
      if (conn.closed() || stopping_) break;
      if (r <= 0) continue;
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = buf.find('\n')) != std::string::npos) {
        conn.on_line(buf.substr(0, nl));
        buf.erase(0, nl + 1);
      }
    }
    conn.close();
  });

  while (!conn.closed() && !stopping_) {
    const auto t = conn.advance();
    if (t == SessionRunner::Tick::Stepped) {
      if (conn.step_delay_ms() > 0) conn.wait_for_input(std::chrono::milliseconds(conn.step_delay_ms()));
    } else {
      conn.wait_for_input(std::chrono::milliseconds(100));
    }
  }
  // Drain whatever arrived with the close so its acknowledgements go out.
  conn.advance();
  reader.join();
  ::shutdown(fd, SHUT_RDWR);
  ::close(fd);
}

}  // namespace vnav
