#include "flash/net/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <thread>
#include <vector>

namespace flash {

namespace {

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::vector<u8> buf;
  std::size_t head = 0;
  bool closed = false;
};

class InProcTransport : public Transport {
 public:
  InProcTransport(std::shared_ptr<Pipe> out, std::shared_ptr<Pipe> in)
      : out_(std::move(out)), in_(std::move(in)) {}
  ~InProcTransport() override { close(); }

  void write(std::span<const u8> bytes) override {
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw TransportError("in-process channel closed");
    out_->buf.insert(out_->buf.end(), bytes.begin(), bytes.end());
    out_->cv.notify_all();
  }

  void read(std::span<u8> bytes) override {
    std::size_t got = 0;
    std::unique_lock lock(in_->mu);
    while (got < bytes.size()) {
      in_->cv.wait(lock, [&] { return in_->head < in_->buf.size() || in_->closed; });
      std::size_t avail = in_->buf.size() - in_->head;
      if (avail == 0) throw TransportError("in-process channel closed by peer");
      std::size_t take = std::min(avail, bytes.size() - got);
      std::memcpy(bytes.data() + got, in_->buf.data() + in_->head, take);
      in_->head += take;
      got += take;
      if (in_->head == in_->buf.size()) {
        in_->buf.clear();
        in_->head = 0;
      }
    }
  }

  void close() override {
    for (auto* p : {out_.get(), in_.get()}) {
      std::lock_guard lock(p->mu);
      p->closed = true;
      p->cv.notify_all();
    }
  }

  std::string describe() const override { return "in-process"; }

 private:
  std::shared_ptr<Pipe> out_, in_;
};

class TcpTransport : public Transport {
 public:
  TcpTransport(int fd, std::string peer) : fd_(fd), peer_(std::move(peer)) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpTransport() override { close(); }

  void write(std::span<const u8> bytes) override {
    std::size_t done = 0;
    while (done < bytes.size()) {
      ssize_t k = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
      if (k < 0) {
        if (errno == EINTR) continue;
        throw TransportError("send to " + peer_ + ": " + std::strerror(errno));
      }
      done += static_cast<std::size_t>(k);
    }
  }

  void read(std::span<u8> bytes) override {
    std::size_t done = 0;
    while (done < bytes.size()) {
      ssize_t k = ::recv(fd_, bytes.data() + done, bytes.size() - done, 0);
      if (k == 0) throw TransportError("connection to " + peer_ + " closed");
      if (k < 0) {
        if (errno == EINTR) continue;
        throw TransportError("recv from " + peer_ + ": " + std::strerror(errno));
      }
      done += static_cast<std::size_t>(k);
    }
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

  std::string describe() const override { return "tcp " + peer_; }

 private:
  int fd_;
  std::string peer_;
};

sockaddr_in resolve(const HostPort& hp) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  int rc = ::getaddrinfo(hp.host.c_str(), nullptr, &hints, &res);
  if (rc != 0 || res == nullptr) {
    throw TransportError("cannot resolve " + hp.host + ": " + ::gai_strerror(rc));
  }
  sockaddr_in sa = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  sa.sin_port = htons(hp.port);
  return sa;
}

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> channel_pair() {
  auto ab = std::make_shared<Pipe>();
  auto ba = std::make_shared<Pipe>();
  return {std::make_unique<InProcTransport>(ab, ba),
          std::make_unique<InProcTransport>(ba, ab)};
}

HostPort parse_addr(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw UsageError("address must be HOST:PORT, got '" + addr + "'");
  }
  HostPort hp;
  hp.host = addr.substr(0, colon);
  try {
    std::size_t used = 0;
    unsigned long port = std::stoul(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1 || port > 65535) throw std::out_of_range("");
    hp.port = static_cast<u16>(port);
  } catch (const std::logic_error&) {
    throw UsageError("bad port in '" + addr + "'");
  }
  return hp;
}

TcpListener::TcpListener(const std::string& addr) {
  HostPort hp = parse_addr(addr);
  sockaddr_in sa = resolve(hp);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0 ||
      ::listen(fd_, 1) != 0) {
    std::string err = std::strerror(errno);
    ::close(fd_);
    throw TransportError("listen on " + addr + ": " + err);
  }
  socklen_t len = sizeof sa;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len);
  port_ = ntohs(sa.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Transport> TcpListener::accept() {
  sockaddr_in peer{};
  socklen_t len = sizeof peer;
  int fd;
  do {
    fd = ::accept(fd_, reinterpret_cast<sockaddr*>(&peer), &len);
  } while (fd < 0 && errno == EINTR);
  if (fd < 0) throw TransportError(std::string("accept: ") + std::strerror(errno));
  char host[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &peer.sin_addr, host, sizeof host);
  return std::make_unique<TcpTransport>(
      fd, std::string(host) + ":" + std::to_string(ntohs(peer.sin_port)));
}

std::unique_ptr<Transport> tcp_connect(const std::string& addr, int retries) {
  HostPort hp = parse_addr(addr);
  sockaddr_in sa = resolve(hp);
  for (int attempt = 0;; ++attempt) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
    if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) == 0) {
      return std::make_unique<TcpTransport>(fd, addr);
    }
    std::string err = std::strerror(errno);
    ::close(fd);
    if (attempt >= retries) throw TransportError("connect to " + addr + ": " + err);
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

}  // namespace flash
