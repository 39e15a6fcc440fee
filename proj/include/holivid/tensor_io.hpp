#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "holivid/tensor.hpp"

namespace holivid {

// Flat binary tensor file: 4 little-endian int32 dimensions, then float32
// payload in C order.  Rank-4 by convention; lower-rank data pads with 1s.
struct FlatTensor {
  std::array<int32_t, 4> dims;
  std::vector<float> values;
};

void write_flat_binary(const std::string& path, const std::array<int32_t, 4>& dims,
                       const std::vector<float>& values);
// Convenience: down-converts a rank-4 double tensor.
void write_flat_binary(const std::string& path, const Tensor& t);
FlatTensor read_flat_binary(const std::string& path);

}  // namespace holivid
