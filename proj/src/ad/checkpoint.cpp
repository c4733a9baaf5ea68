#include "hce/ad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hce/common/error.hpp"

namespace hce::ad {

namespace {

constexpr char kMagic[8] = {'H', 'C', 'E', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get(std::istream& is, const std::string& what) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw DataError("checkpoint truncated while reading " + what);
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

std::string get_bytes(std::istream& is, std::uint64_t n, const std::string& what) {
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw DataError("checkpoint truncated while reading " + what);
  }
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kCheckpointVersion);
  const std::string manifest = ckpt.manifest.dump();
  put<std::uint64_t>(os, manifest.size());
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  put<std::uint64_t>(os, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
    for (Real v : t.values()) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
  }
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto mlen = get<std::uint64_t>(is, "manifest length");
  try {
    ckpt.manifest = nlohmann::json::parse(get_bytes(is, mlen, "manifest"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint manifest is not JSON: ") + e.what());
  }
  const auto count = get<std::uint64_t>(is, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto nlen = get<std::uint32_t>(is, "name length");
    std::string name = get_bytes(is, nlen, "name");
    const auto rank = get<std::uint32_t>(is, "rank");
    std::vector<std::size_t> shape;
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(is, "dimension")));
      n *= shape.back();
    }
    std::vector<Real> data(n);
    for (auto& v : data) v = static_cast<Real>(std::bit_cast<double>(get<std::uint64_t>(is, name)));
    ckpt.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return ckpt;
}

Checkpoint snapshot(const ParameterStore& store, nlohmann::json manifest) {
  Checkpoint c;
  c.manifest = std::move(manifest);
  for (const Parameter* p : store.all()) c.tensors.emplace(p->name, p->value);
  return c;
}

void restore(ParameterStore& store, const Checkpoint& ckpt) {
  for (Parameter* p : store.all()) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) throw DataError("checkpoint lacks parameter " + p->name);
    if (!it->second.same_shape(p->value)) {
      throw DataError("checkpoint shape mismatch for " + p->name + ": " + it->second.shape_str() +
                      " vs " + p->value.shape_str());
    }
    p->value = it->second;
  }
  store.bump_version();
}

}  // namespace hce::ad
