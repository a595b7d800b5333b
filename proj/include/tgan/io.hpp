#pragma once

#include <filesystem>

#include "tgan/tensor.hpp"

namespace tgan {

// "TNSR" binary tensor file:
//   bytes 0-3  magic "TNSR"
//   u32 LE     version = 1
//   u8         dtype (0 = f32, 1 = f64)
//   u8         ndim
//   ndim x u32 LE extents
//   payload    row-major, little-endian
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace tgan
