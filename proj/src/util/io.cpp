#include "util/io.hpp"

#include <cstdio>
#include <fstream>

namespace pd {

namespace fs = std::filesystem;

std::vector<uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> buf(static_cast<size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(buf.data()), size)) {
    throw IoError("cannot read " + path.string());
  }
  return buf;
}

void atomic_write_file(const fs::path& path, const std::vector<uint8_t>& data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    if (!data.empty() &&
        !out.write(reinterpret_cast<const char*>(data.data()),
                   static_cast<std::streamsize>(data.size()))) {
      throw IoError("cannot write " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

void atomic_write_text(const fs::path& path, const std::string& text) {
  std::vector<uint8_t> bytes(text.begin(), text.end());
  atomic_write_file(path, bytes);
}

}  // namespace pd
