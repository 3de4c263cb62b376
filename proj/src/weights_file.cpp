#include "deshadow/weights_file.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "deshadow/error.hpp"

namespace deshadow {

static_assert(std::endian::native == std::endian::little, "weights files assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'D', 'S', 'W', 'B'};

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    fail(ErrorKind::Backbone, "truncated weights file " + path.string());
  }
  return value;
}

}  // namespace

void write_weights_file(const std::filesystem::path& path, const TensorBundle& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kWeightsFileVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    auto t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  out.flush();
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

TensorBundle read_weights_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Backbone, "weights file not found: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    fail(ErrorKind::Backbone, "not a weights file (bad magic): " + path.string());
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kWeightsFileVersion) {
    fail(ErrorKind::Backbone, "unsupported weights file version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, path);
  TensorBundle out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, path);
    if (name_len > 4096) fail(ErrorKind::Backbone, "corrupt weights file " + path.string());
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) fail(ErrorKind::Backbone, "truncated weights file " + path.string());
    const auto ndim = get<std::uint32_t>(in, path);
    if (ndim > 8) fail(ErrorKind::Backbone, "corrupt weights file " + path.string());
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) {
      d = get<std::int64_t>(in, path);
      if (d < 0) fail(ErrorKind::Backbone, "corrupt weights file " + path.string());
    }
    auto t = torch::empty(dims, torch::kFloat32);
    if (!in.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * sizeof(float)))) {
      fail(ErrorKind::Backbone, "truncated weights file " + path.string());
    }
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

}  // namespace deshadow
