#include "varsnn/serialize.hpp"

namespace varsnn::io {

uint64_t file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  uint64_t h = fnv1a_init();
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    h = fnv1a_bytes(buf, static_cast<size_t>(is.gcount()), h);
  }
  return h;
}

}  // namespace varsnn::io
