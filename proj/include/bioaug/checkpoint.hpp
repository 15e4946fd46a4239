#ifndef BIOAUG_CHECKPOINT_HPP
#define BIOAUG_CHECKPOINT_HPP

#include <map>
#include <string>

#include "bioaug/tensor.hpp"

namespace bioaug {

// Named parameter tensors. std::map keeps iteration (and therefore
// checkpoint byte layout) deterministic.
using ParamStore = std::map<std::string, Tensor>;

// Binary little-endian checkpoint:
//   magic "BARL", version u32, tensor count u32, then per tensor:
//   name length u16 + UTF-8 name, rank u8, dims u32 each, f64 payload
//   row-major.
constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

size_t param_count(const ParamStore& params);

}  // namespace bioaug

#endif
