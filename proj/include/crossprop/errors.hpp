#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crossprop {

// Base class for all library errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration: bad key, bad value, inconsistent combination.
// CLI exit code 2.
class ConfigError : public Error {
  public:
    using Error::Error;
};

// Rejected input: shape mismatch, non-one-hot target, out-of-range argument.
class InvalidInput : public Error {
  public:
    using Error::Error;
};

// Malformed data stream. Carries the byte offset at which parsing failed.
// CLI exit code 3.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

// A parameter became non-finite after an optimizer step. The example index
// is -1 until the run harness fills it in. CLI exit code 4.
class DivergenceError : public Error {
  public:
    explicit DivergenceError(const std::string& what, long example_index = -1)
        : Error(what), example_index_(example_index) {}

    long example_index() const noexcept { return example_index_; }
    void set_example_index(long idx) noexcept { example_index_ = idx; }

  private:
    long example_index_;
};

}  // namespace crossprop
