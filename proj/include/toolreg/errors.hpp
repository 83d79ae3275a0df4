#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace toolreg {

/// Base of every error this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// core

class InvalidName : public Error {
 public:
  using Error::Error;
};

class InvalidSchema : public Error {
 public:
  InvalidSchema(std::string path, const std::string& message)
      : Error("invalid schema at " + (path.empty() ? std::string("/") : path) + ": " + message),
        path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class DuplicateParam : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string path, std::string expected, std::string found)
      : Error("argument " + (path.empty() ? std::string("<root>") : path) + ": expected " + expected + ", found " +
              found),
        path_(std::move(path)),
        expected_(std::move(expected)),
        found_(std::move(found)) {}

  const std::string& path() const noexcept { return path_; }
  const std::string& expected() const noexcept { return expected_; }
  const std::string& found() const noexcept { return found_; }

 private:
  std::string path_;
  std::string expected_;
  std::string found_;
};

/// Thrown by handlers when the failure is a transport problem (network,
/// broken pipe, remote unreachable). run_tool maps it to ErrorKind::transport;
/// every other exception maps to ErrorKind::execution.
class TransportError : public Error {
 public:
  using Error::Error;
};

// registry

class DuplicateName : public Error {
 public:
  using Error::Error;
};

class UnknownPrefix : public Error {
 public:
  using Error::Error;
};

class CollisionAfterReduce : public Error {
 public:
  using Error::Error;
};

// compat

class MalformedCall : public Error {
 public:
  MalformedCall(std::size_t index, std::string reason)
      : Error("malformed tool call at index " + std::to_string(index) + ": " + reason),
        index_(index),
        reason_(std::move(reason)) {}
  std::size_t index() const noexcept { return index_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t index_;
  std::string reason_;
};

// adapters

class FetchError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersion : public Error {
 public:
  using Error::Error;
};

class NameCollision : public Error {
 public:
  using Error::Error;
};

class RefResolutionError : public Error {
 public:
  using Error::Error;
};

class ConnectError : public TransportError {
 public:
  using TransportError::TransportError;
};

class HandshakeError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

class TransportClosed : public TransportError {
 public:
  using TransportError::TransportError;
};

class RpcError : public Error {
 public:
  RpcError(int code, const std::string& message)
      : Error("JSON-RPC error " + std::to_string(code) + ": " + message), code_(code) {}
  int code() const noexcept { return code_; }

 private:
  int code_;
};

// testkit

class BindError : public Error {
 public:
  using Error::Error;
};

}  // namespace toolreg
