#pragma once

#include <stdexcept>
#include <string>

namespace toolforge {

// Base class for all domain errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem-level failure (missing file, unwritable path). Carries the path.
class IoError : public Error {
 public:
  IoError(const std::string& what, const std::string& path)
      : Error(what + ": " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// A persisted artifact failed to parse. Carries the offending key path.
class CorruptionError : public Error {
 public:
  CorruptionError(const std::string& what, const std::string& key_path)
      : Error("corrupt data at '" + key_path + "': " + what), key_path_(key_path) {}
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

// A loaded artifact parsed but violates a library invariant. Names the invariant.
class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& invariant, const std::string& detail)
      : Error("integrity violation [" + invariant + "]: " + detail),
        invariant_(invariant) {}
  const std::string& invariant() const { return invariant_; }

 private:
  std::string invariant_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config: " + what) {}
};

// Chat/embedding backend failure: transport errors after retries, replies that
// stay malformed after the reformat retry, or a missing script entry.
class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what) : Error("provider: " + what) {}
};

}  // namespace toolforge
