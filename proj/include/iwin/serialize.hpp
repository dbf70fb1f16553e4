#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "iwin/tensor.hpp"

namespace iwin {

// Weight container: 8-byte magic, little-endian u64 manifest length, a JSON
// manifest (name -> {shape, dtype, offset, nbytes} plus free-form meta), then
// raw little-endian f64 payloads. Round trips are bit-exact.
struct TensorArchive {
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> meta;
};

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& items,
                  const std::map<std::string, std::string>& meta = {});

TensorArchive load_tensors(const std::string& path);

}  // namespace iwin
