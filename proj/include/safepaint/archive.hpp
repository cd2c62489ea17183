#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "safepaint/nn/tensor.hpp"

namespace safepaint::archive {

/// Layout: "<header>\n", one line of compact JSON metadata (including a
/// "tensors" index of names and shapes), then every tensor's doubles in
/// index order, little-endian.
struct Archive {
  std::string header;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, nn::Tensor>> tensors;

  const nn::Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

void write(const std::string& path, const Archive& a);
/// Throws std::runtime_error when the header line differs from `expected_header`.
Archive read(const std::string& path, const std::string& expected_header);

}  // namespace safepaint::archive
