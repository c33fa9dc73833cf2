#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "esvforge/temporal_head.hpp"

namespace esvforge {

/// Layout (all integers little-endian):
///   magic "ESVHEAD\0", u32 version (1), u32 tensor count,
///   per tensor: u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64,
///   trailer: u32 CRC-32 of every preceding byte.
/// Tensor names: lstm.{l}.weight_ih, lstm.{l}.weight_hh, lstm.{l}.bias,
/// attention.weight, head.weight, norm.mean, norm.var, norm.scale,
/// norm.shift, norm.eps. Vectors are stored as n x 1.
inline constexpr std::uint32_t kParamFileVersion = 1;

using TensorMap = std::map<std::string, Matrix>;

std::vector<std::uint8_t> encode_tensors(const TensorMap& tensors);
TensorMap decode_tensors(const std::vector<std::uint8_t>& bytes);

TensorMap to_tensors(const HeadParams& params);
HeadParams from_tensors(const TensorMap& tensors);

void save_params(const HeadParams& params, const std::filesystem::path& path);
HeadParams load_params(const std::filesystem::path& path);

}  // namespace esvforge
