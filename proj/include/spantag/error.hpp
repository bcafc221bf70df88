#pragma once

#include <stdexcept>
#include <string>

namespace spantag {

// Raised for any malformed input or violated precondition that a caller can
// report to the user. Messages are single-line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spantag
