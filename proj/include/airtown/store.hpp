#pragma once

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include <fcntl.h>
#include <unistd.h>

#include "airtown/error.hpp"

namespace airtown {

/// Single-directory persistence: whole-file snapshots replaced atomically
/// (write temp, fsync, rename) and append-only logs. A default-constructed
/// store is disabled and every operation is a no-op.
class file_store {
 public:
  file_store() = default;

  explicit file_store(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  bool enabled() const noexcept { return !dir_.empty(); }
  const std::filesystem::path& dir() const noexcept { return dir_; }

  void write_atomic(std::string_view name, std::string_view content) const {
    if (!enabled()) return;
    const auto target = dir_ / name;
    auto tmp = target;
    tmp += ".tmp";
    write_all(tmp, content, O_WRONLY | O_CREAT | O_TRUNC);
    std::filesystem::rename(tmp, target);
    sync_dir();
  }

  void append(std::string_view name, std::string_view content) const {
    if (!enabled()) return;
    write_all(dir_ / name, content, O_WRONLY | O_CREAT | O_APPEND);
  }

  std::optional<std::string> read(std::string_view name) const {
    if (!enabled()) return std::nullopt;
    std::ifstream in(dir_ / name, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

 private:
  static void write_all(const std::filesystem::path& path, std::string_view content, int flags) {
    const int fd = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
    if (fd < 0) {
      throw std::runtime_error("open " + path.string() + ": " + std::strerror(errno));
    }
    std::size_t written = 0;
    while (written < content.size()) {
      const auto n = ::write(fd, content.data() + written, content.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        const int err = errno;
        ::close(fd);
        throw std::runtime_error("write " + path.string() + ": " + std::strerror(err));
      }
      written += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
  }

  void sync_dir() const {
    const int fd = ::open(dir_.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (fd >= 0) {
      ::fsync(fd);
      ::close(fd);
    }
  }

  std::filesystem::path dir_;
};

}  // namespace airtown
