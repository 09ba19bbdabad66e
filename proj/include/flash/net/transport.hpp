#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>

#include "flash/common.hpp"

namespace flash {

// Reliable ordered duplex byte stream. read() fills the whole span or
// throws TransportError.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void write(std::span<const u8> bytes) = 0;
  virtual void read(std::span<u8> bytes) = 0;
  virtual void close() = 0;
  virtual std::string describe() const = 0;
};

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> channel_pair();

struct HostPort {
  std::string host;
  u16 port = 0;
};
// "host:port"; throws UsageError.
HostPort parse_addr(const std::string& addr);

class TcpListener {
 public:
  explicit TcpListener(const std::string& addr);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  // Bound port, useful after binding port 0.
  u16 port() const { return port_; }
  std::unique_ptr<Transport> accept();

 private:
  int fd_ = -1;
  u16 port_ = 0;
};

// Fails on the first refused connection unless `retries` is set; retries
// are spaced 50 ms apart.
std::unique_ptr<Transport> tcp_connect(const std::string& addr, int retries = 0);

}  // namespace flash
