#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "toolforge/errors.hpp"

namespace toolforge {

// Append-only JSON-lines writer. Default-constructed instances are null sinks,
// which keeps audit plumbing out of unit-test call sites.
class JsonlWriter {
 public:
  JsonlWriter() = default;

  explicit JsonlWriter(const std::string& path) : path_(path) {
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw IoError("cannot open audit log", path);
    out_.seekp(0, std::ios::end);
  }

  void write(const nlohmann::json& row) {
    if (path_.empty()) return;
    out_ << row.dump() << "\n";
    out_.flush();
    if (!out_) throw IoError("audit write failure", path_);
  }

  std::uint64_t offset() {
    if (path_.empty()) return 0;
    return static_cast<std::uint64_t>(out_.tellp());
  }

  bool active() const { return !path_.empty(); }

 private:
  std::string path_;
  std::ofstream out_;
};

// Rewind an audit file to a checkpointed byte offset (resume path).
void truncate_file(const std::string& path, std::uint64_t size);

}  // namespace toolforge
