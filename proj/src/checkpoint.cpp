#include "rmldp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace rmldp {

namespace {

constexpr char kMagic[6] = {'R', 'M', 'L', 'D', 'P', '1'};

template <class U>
void put_uint(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <class U>
U get_uint(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw IoError("checkpoint: unexpected end of data");
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamSet& params, DType dtype) {
  out.write(kMagic, sizeof(kMagic));
  put_uint<std::uint64_t>(out, params.size());
  for (const auto& [name, tensor] : params) {
    put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
    put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto d : tensor.shape()) put_uint<std::uint64_t>(out, d);
    for (double v : tensor.values()) {
      if (dtype == DType::f64) {
        put_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      } else {
        put_uint<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }
  if (!out) throw IoError("checkpoint: write failed");
}

ParamSet read_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("checkpoint: bad magic (expected RMLDP1)");
  }
  const auto count = get_uint<std::uint64_t>(in);
  ParamSet params;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name_len = get_uint<std::uint32_t>(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError("checkpoint: truncated name");
    const auto tag = get_uint<std::uint8_t>(in);
    if (tag > 1) throw IoError("checkpoint: unknown dtype tag " + std::to_string(tag));
    const auto rank = get_uint<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_uint<std::uint64_t>(in));
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) {
      if (tag == static_cast<std::uint8_t>(DType::f64)) {
        v = std::bit_cast<double>(get_uint<std::uint64_t>(in));
      } else {
        v = std::bit_cast<float>(get_uint<std::uint32_t>(in));
      }
    }
    if (params.contains(name)) throw IoError("checkpoint: duplicate tensor '" + name + "'");
    params.set(name, Tensor(std::move(shape), std::move(values)));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, DType dtype) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(out, params, dtype);
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace rmldp
