#pragma once

#include <stdexcept>

namespace lipres {

/// Every failure raised by the library. Messages carry the offending input
/// (file name, line number, word) where one exists.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lipres
