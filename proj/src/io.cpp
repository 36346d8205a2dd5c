#include "mbsde/io.hpp"

#include <zlib.h>

#include <cstdio>
#include <stdexcept>

namespace mbsde {

struct TextSink::Impl {
  std::FILE* plain = nullptr;
  gzFile gz = nullptr;
};

TextSink::TextSink(const std::string& file) : impl_(std::make_unique<Impl>()) {
  const bool compressed = file.size() > 3 && file.compare(file.size() - 3, 3, ".gz") == 0;
  if (compressed) {
    impl_->gz = gzopen(file.c_str(), "wb");
  } else {
    impl_->plain = std::fopen(file.c_str(), "w");
  }
  if (!impl_->gz && !impl_->plain) throw std::runtime_error("cannot open " + file + " for writing");
}

TextSink::~TextSink() {
  if (impl_->gz) gzclose(impl_->gz);
  if (impl_->plain) std::fclose(impl_->plain);
}

void TextSink::write(std::string_view text) {
  if (text.empty()) return;
  if (impl_->gz) {
    if (gzwrite(impl_->gz, text.data(), static_cast<unsigned>(text.size())) == 0)
      throw std::runtime_error("gzip write failed");
  } else if (std::fwrite(text.data(), 1, text.size(), impl_->plain) != text.size()) {
    throw std::runtime_error("write failed");
  }
}

}  // namespace mbsde
