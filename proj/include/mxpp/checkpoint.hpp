#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mxpp/error.hpp"

namespace mxpp {

// On-disk tensor record: float32 payload, explicit shape.
struct CkptTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

// Binary container: magic "MXPP", u32 version, u32 tensor count, then per
// tensor u16 name length + name bytes, u8 dtype (0 = float32), u8 rank,
// rank x u32 extents, raw little-endian float payload. Names are unique and
// stored sorted.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    std::vector<CkptTensor> tensors;

    void put(const std::string& name, std::vector<int> shape, std::vector<float> data);
    const CkptTensor* find(const std::string& name) const;
    const CkptTensor& require(const std::string& name) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

} // namespace mxpp
