#pragma once

#include <stdexcept>
#include <string>

namespace flpl {

// Root of the library's exception hierarchy. Every error raised by flpl
// derives from this type so callers can catch library failures uniformly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flpl
