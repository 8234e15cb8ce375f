#include "memos/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "memos/errors.hpp"

namespace memos {
namespace {

constexpr char kMagic[8] = {'M', 'E', 'M', 'O', 'S', 'W', 'T', '1'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::filesystem::path& file) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw LoadError("truncated weights file: " + file.string());
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

}  // namespace

void save_weights(const std::filesystem::path& file, const std::vector<nn::Param>& params) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw LoadError("cannot open for writing: " + file.string());
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, static_cast<uint32_t>(params.size()));
  for (const nn::Param& p : params) {
    put_u32(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(os, static_cast<uint32_t>(p.value->ndim()));
    for (int d = 0; d < p.value->ndim(); ++d) put_u32(os, static_cast<uint32_t>(p.value->dim(d)));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(p.value->data()),
             static_cast<std::streamsize>(p.value->size() * sizeof(float)));
  }
  if (!os) throw LoadError("write failed: " + file.string());
}

void load_weights(const std::filesystem::path& file, const std::vector<nn::Param>& params) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw LoadError("cannot open weights file: " + file.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw LoadError("bad magic in weights file: " + file.string());
  const uint32_t count = get_u32(is, file);
  if (count != params.size())
    throw LoadError("weights file " + file.string() + " holds " + std::to_string(count) +
                    " params, model expects " + std::to_string(params.size()));
  for (const nn::Param& p : params) {
    const uint32_t name_len = get_u32(is, file);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw LoadError("truncated weights file: " + file.string());
    if (name != p.name)
      throw LoadError("weights file " + file.string() + ": expected param '" + p.name + "', found '" +
                      name + "'");
    const uint32_t ndim = get_u32(is, file);
    if (static_cast<int>(ndim) != p.value->ndim())
      throw LoadError("weights file " + file.string() + ": rank mismatch for '" + name + "'");
    for (int d = 0; d < p.value->ndim(); ++d) {
      const uint32_t dim = get_u32(is, file);
      if (static_cast<int>(dim) != p.value->dim(d))
        throw LoadError("weights file " + file.string() + ": shape mismatch for '" + name + "'");
    }
    if (!is.read(reinterpret_cast<char*>(p.value->data()),
                 static_cast<std::streamsize>(p.value->size() * sizeof(float))))
      throw LoadError("truncated weights file: " + file.string());
  }
}

void save_checkpoint(const std::filesystem::path& dir, const std::vector<nn::Param>& params,
                     const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  save_weights(dir / "weights.bin", params);
  std::ofstream os(dir / "meta.json");
  if (!os) throw LoadError("cannot write checkpoint metadata in " + dir.string());
  os << meta.dump(2) << '\n';
}

nlohmann::json load_checkpoint_meta(const std::filesystem::path& dir) {
  std::ifstream is(dir / "meta.json");
  if (!is) throw LoadError("missing checkpoint metadata: " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    is >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("unparsable checkpoint metadata in " + dir.string() + ": " + e.what());
  }
  return meta;
}

void load_checkpoint_weights(const std::filesystem::path& dir, const std::vector<nn::Param>& params) {
  load_weights(dir / "weights.bin", params);
}

bool checkpoint_exists(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir / "weights.bin") && std::filesystem::exists(dir / "meta.json");
}

}  // namespace memos
