#include "hce/tool/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "hce/common/error.hpp"

namespace hce::tool {

namespace {

struct DigestCtx {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

  DigestCtx() {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("SHA-256 unavailable");
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx.get(), data, n); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
  }
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  DigestCtx d;
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  DigestCtx d;
  std::array<char, 1 << 16> buf;
  while (in.read(buf.data(), buf.size()) || in.gcount() > 0) d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  return d.hex();
}

std::string config_hash(const nlohmann::json& config) { return sha256_hex(config.dump()); }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void Manifest::add_data(const std::string& path) {
  if (!path.empty()) data_hashes[path] = sha256_file(path);
}

nlohmann::json Manifest::to_json() const {
  return {{"command", command},   {"argv", argv},       {"config", config},   {"config_hash", config_hash},
          {"data", data_hashes},  {"seed", seed},       {"started", started}, {"finished", finished},
          {"outputs", outputs}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  Manifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.value("argv", std::vector<std::string>{});
  m.config = j.value("config", nlohmann::json::object());
  m.config_hash = j.value("config_hash", "");
  m.data_hashes = j.value("data", std::map<std::string, std::string>{});
  m.seed = j.value("seed", std::uint64_t{0});
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.outputs = j.value("outputs", std::vector<std::string>{});
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << m.to_json().dump(2) << '\n';
}

}  // namespace hce::tool
