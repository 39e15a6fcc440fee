#include "holivid/tensor_io.hpp"

#include <cstring>
#include <fstream>

#include "holivid/error.hpp"

namespace holivid {

namespace {

// Serialise scalars explicitly as little-endian so the format is stable even
// on big-endian hosts.
template <typename T>
void put_le(std::ostream& os, T v) {
  uint8_t b[sizeof(T)];
  uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(T));
  for (size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<uint8_t>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  uint8_t b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  uint64_t bits = 0;
  for (size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  T v;
  std::memcpy(&v, &bits, sizeof(T));
  return v;
}

}  // namespace

void write_flat_binary(const std::string& path, const std::array<int32_t, 4>& dims,
                       const std::vector<float>& values) {
  int64_t n = 1;
  for (int32_t d : dims) n *= d;
  if (n != static_cast<int64_t>(values.size()))
    throw ValidationError("flat binary: dims do not match value count");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("flat binary: cannot open for writing: " + path);
  for (int32_t d : dims) put_le<int32_t>(os, d);
  for (float v : values) put_le<float>(os, v);
  if (!os) throw ValidationError("flat binary: write failed: " + path);
}

void write_flat_binary(const std::string& path, const Tensor& t) {
  if (t.rank() != 4) throw ValidationError("flat binary: expected a rank-4 tensor");
  std::array<int32_t, 4> dims;
  for (int i = 0; i < 4; ++i) dims[static_cast<size_t>(i)] = static_cast<int32_t>(t.dim(i));
  std::vector<float> values(static_cast<size_t>(t.size()));
  const double* d = t.data();
  for (int64_t i = 0; i < t.size(); ++i) values[static_cast<size_t>(i)] = static_cast<float>(d[i]);
  write_flat_binary(path, dims, values);
}

FlatTensor read_flat_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("flat binary: cannot open: " + path);
  FlatTensor ft;
  int64_t n = 1;
  for (auto& d : ft.dims) {
    d = get_le<int32_t>(is);
    if (!is || d < 0) throw ValidationError("flat binary: bad header: " + path);
    n *= d;
  }
  ft.values.resize(static_cast<size_t>(n));
  for (auto& v : ft.values) v = get_le<float>(is);
  if (!is) throw ValidationError("flat binary: truncated payload: " + path);
  return ft;
}

}  // namespace holivid
