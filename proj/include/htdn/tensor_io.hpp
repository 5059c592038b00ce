#pragma once

#include <cstdint>
#include <filesystem>

#include "htdn/binary_io.hpp"
#include "htdn/tensor.hpp"

namespace htdn {

// Tensor blob: "HTTN", version u16, rank u8, dims as u64, then float32
// little-endian values in row-major order.
inline constexpr std::uint16_t kTensorFormatVersion = 1;

template <typename T>
void write_tensor(ByteWriter& out, const Tensor<T>& tensor);

// Values are widened or narrowed to T; the result does not track gradients.
template <typename T>
Tensor<T> read_tensor(ByteReader& in);

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& tensor);
template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path);

}  // namespace htdn
