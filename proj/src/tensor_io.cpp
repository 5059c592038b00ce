#include "htdn/tensor_io.hpp"

#include <string>

namespace htdn {

namespace {
constexpr char kMagic[4] = {'H', 'T', 'T', 'N'};
}

template <typename T>
void write_tensor(ByteWriter& out, const Tensor<T>& tensor) {
  out.raw(std::string_view(kMagic, 4));
  out.u16(kTensorFormatVersion);
  if (tensor.rank() > 0xFF) throw ContractError("tensor rank exceeds 255");
  out.u8(static_cast<std::uint8_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) out.u64(d);
  for (T v : tensor.values()) out.f32(static_cast<float>(v));
}

template <typename T>
Tensor<T> read_tensor(ByteReader& in) {
  const auto magic = in.raw(4);
  if (std::string_view(reinterpret_cast<const char*>(magic.data()), 4) != std::string_view(kMagic, 4)) {
    throw DataError("bad tensor magic at offset " + std::to_string(in.position() - 4));
  }
  const auto version = in.u16();
  if (version != kTensorFormatVersion) {
    throw DataError("unsupported tensor format version " + std::to_string(version));
  }
  const auto rank = in.u8();
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = in.u64();
    if (d == 0 || d > (std::size_t{1} << 40) || count > (std::size_t{1} << 40) / d) {
      throw DataError("implausible tensor dimension in blob");
    }
    count *= d;
  }
  if (in.remaining() < count * 4) throw DataError("truncated tensor data");
  std::vector<T> values(count);
  for (auto& v : values) v = static_cast<T>(in.f32());
  return Tensor<T>(std::move(shape), std::move(values));
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& tensor) {
  ByteWriter out;
  write_tensor(out, tensor);
  write_file_atomic(path, out.bytes());
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader in(bytes);
  auto t = read_tensor<T>(in);
  if (!in.at_end()) throw DataError("trailing bytes after tensor in " + path.string());
  return t;
}

template void write_tensor(ByteWriter&, const Tensor<float>&);
template void write_tensor(ByteWriter&, const Tensor<double>&);
template Tensor<float> read_tensor(ByteReader&);
template Tensor<double> read_tensor(ByteReader&);
template void save_tensor(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor(const std::filesystem::path&);
template Tensor<double> load_tensor(const std::filesystem::path&);

}  // namespace htdn
