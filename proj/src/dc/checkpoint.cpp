#include "gcnav/dc/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>

#include "gcnav/errors.hpp"

namespace gcnav::dc {

namespace {

constexpr char kMagic[8] = {'G', 'C', 'N', 'V', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
  os.write(b, 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, const ParamStore*>>& groups) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  put_u64(os, kVersion);
  std::uint64_t count = 0;
  for (const auto& [prefix, store] : groups) count += store->size();
  put_u64(os, count);
  for (const auto& [prefix, store] : groups) {
    for (std::size_t i = 0; i < store->size(); ++i) {
      const std::string name = prefix + "/" + store->name(i);
      put_u64(os, name.size());
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      const Tensor& t = store->param(i);
      put_u64(os, t.rank());
      for (auto d : t.shape()) put_u64(os, d);
      for (double v : t.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!os) throw IoError("failed writing " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kMagic)) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  if (get_u64(is) != kVersion) throw IoError("unsupported checkpoint version");
  const std::uint64_t count = get_u64(is);
  CheckpointData data;
  for (std::uint64_t e = 0; e < count; ++e) {
    const std::uint64_t len = get_u64(is);
    if (len > 4096) throw IoError("corrupt checkpoint entry name");
    std::string name(len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(len))) throw IoError("checkpoint truncated");
    const std::uint64_t rank = get_u64(is);
    if (rank > 8) throw IoError("corrupt checkpoint rank");
    StoredTensor t;
    for (std::uint64_t r = 0; r < rank; ++r) t.shape.push_back(get_u64(is));
    const std::size_t n = numel(t.shape);
    if (n > (std::size_t{1} << 28)) throw IoError("corrupt checkpoint size");
    t.values.resize(n);
    for (double& v : t.values) v = std::bit_cast<double>(get_u64(is));
    data.emplace(std::move(name), std::move(t));
  }
  return data;
}

void restore(ParamStore& store, const std::string& prefix, const CheckpointData& data) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string name = prefix + "/" + store.name(i);
    const auto it = data.find(name);
    if (it == data.end()) throw IoError("checkpoint lacks " + name);
    Tensor& p = store.param(i);
    if (it->second.shape != p.shape()) {
      throw IoError("checkpoint shape mismatch for " + name + ": " + to_string(it->second.shape) +
                    " vs " + to_string(p.shape()));
    }
    std::copy(it->second.values.begin(), it->second.values.end(), p.mutable_data().begin());
  }
}

}  // namespace gcnav::dc
