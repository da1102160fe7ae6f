#pragma once

// STTK tensor files: "STTK", u32 version, u32 rank, rank x u32 dims, then
// float32 payload. All integers and floats little-endian, row-major with the
// innermost dimension last.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stim/types.hpp"
#include "stim/video.hpp"

namespace stim {

inline constexpr std::uint32_t kTensorFileVersion = 1;

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;

    std::size_t element_count() const;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

Tensor to_tensor(const Matrix& m);
Matrix matrix_from_tensor(const Tensor& t);
Tensor to_tensor(const RowVector& v);

// [T][H][W][3]
Tensor to_tensor(const Video& video);
Video video_from_tensor(const Tensor& t);

// [n_t][n_s][C]; CLS is not stored.
Tensor to_tensor(const TokenGrid& grid);
TokenGrid grid_from_tensor(const Tensor& t);

}  // namespace stim
