#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "flpl/net/channel.h"

namespace flpl::net {

inline constexpr uint16_t kDefaultPort = 47017;

// Port from the FLPL_PORT environment variable, or kDefaultPort. Throws
// TransportError if the variable is set but not a valid port.
uint16_t PortFromEnvironment();

// Listening socket bound to `host`; port 0 picks an ephemeral port.
class TcpListener {
 public:
  TcpListener(const std::string& host, uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  uint16_t port() const { return port_; }
  // Blocks until a client connects.
  std::unique_ptr<Channel> Accept();

 private:
  int fd_ = -1;
  uint16_t port_ = 0;
};

// Connects, retrying for up to `timeout_ms` while the server is not yet up.
std::unique_ptr<Channel> TcpConnect(const std::string& host, uint16_t port, int timeout_ms = 5000);

}  // namespace flpl::net
