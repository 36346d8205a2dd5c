#pragma once

#include <memory>
#include <string>
#include <string_view>

namespace mbsde {

/// Line-oriented text output; files ending in ".gz" are gzip-compressed.
class TextSink {
 public:
  explicit TextSink(const std::string& file);
  ~TextSink();
  TextSink(const TextSink&) = delete;
  TextSink& operator=(const TextSink&) = delete;

  void write(std::string_view text);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mbsde
