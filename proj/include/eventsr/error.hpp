#pragma once

#include <stdexcept>
#include <string>

namespace eventsr
{

// Exit-code classes used by the command line tool:
// usage errors -> 1, data errors -> 2, numerical failures -> 3.

class UsageError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Raised by validation when an event violates sensor bounds or polarity.
class InvalidEventError : public DataError
{
public:
  InvalidEventError(std::size_t index, const std::string & what)
  : DataError("event " + std::to_string(index) + ": " + what), index_(index)
  {
  }
  std::size_t index() const { return index_; }

private:
  std::size_t index_;
};

/// Raised when a stream holds fewer events than a stack needs.
class InsufficientEventsError : public DataError
{
public:
  InsufficientEventsError(std::size_t needed, std::size_t available)
  : DataError(
      "insufficient events: need " + std::to_string(needed) + ", have " +
      std::to_string(available) + " (short by " + std::to_string(needed - available) + ")"),
    needed_(needed), available_(available)
  {
  }
  std::size_t needed() const { return needed_; }
  std::size_t available() const { return available_; }
  std::size_t shortfall() const { return needed_ - available_; }

private:
  std::size_t needed_;
  std::size_t available_;
};

}  // namespace eventsr
