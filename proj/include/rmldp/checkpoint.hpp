#pragma once

// Binary tensor container:
//   "RMLDP1" | u64 count | per tensor:
//     u32 name length | UTF-8 name | u8 dtype (0 = f32, 1 = f64) |
//     u32 rank | u64 dims[rank] | row-major payload
// All integers and payload values are little-endian.

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "rmldp/param_set.hpp"

namespace rmldp {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

void write_checkpoint(std::ostream& out, const ParamSet& params, DType dtype = DType::f64);
ParamSet read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                     DType dtype = DType::f64);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace rmldp
