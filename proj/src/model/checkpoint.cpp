#include <cstring>

#include "model/model.hpp"
#include "util/io.hpp"

namespace pd::model {

namespace {
constexpr char kMagic[4] = {'P', 'K', 'D', 'C'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    w.str(name);
    w.u32(static_cast<uint32_t>(t.dims.size()));
    for (int d : t.dims) w.u32(static_cast<uint32_t>(d));
    w.bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  atomic_write_file(path, w.data());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("bad checkpoint magic in " + path.string());
  }
  if (r.u32() != kVersion) throw IoError("unsupported checkpoint version");
  const uint32_t count = r.u32();
  ParamStore store;
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw IoError("implausible tensor rank in checkpoint");
    std::vector<int> dims(rank);
    for (uint32_t d = 0; d < rank; ++d) dims[d] = static_cast<int>(r.u32());
    Tensor& t = store.add(name, dims);
    r.bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  if (!r.done()) throw IoError("trailing bytes in checkpoint " + path.string());
  return store;
}

void load_checkpoint_into(Model& model, const std::filesystem::path& path) {
  ParamStore loaded = load_checkpoint(path);
  for (const auto& name : model.params.names()) {
    if (!loaded.has(name)) {
      throw IoError("checkpoint missing parameter " + name);
    }
    Tensor& dst = model.params.at(name);
    const Tensor& src = loaded.at(name);
    if (src.dims != dst.dims) {
      throw IoError("checkpoint shape mismatch for " + name);
    }
    dst.data = src.data;
  }
  if (loaded.size() != model.params.size()) {
    throw IoError("checkpoint has extra parameters");
  }
}

}  // namespace pd::model
