#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsal/tensor.hpp"

namespace vsal {

/// Interleaved 8-bit image buffer (row-major, `channels` = 1 or 3).
struct ImageU8 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t& at(int y, int x, int c = 0) {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }
    std::uint8_t at(int y, int x, int c = 0) const {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }
};

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

// Conversions between 8-bit images and [0,1] tensors ([3,H,W] / [H,W]).
Tensor rgb_to_tensor(const ImageU8& img);
ImageU8 tensor_to_rgb(const Tensor& t);
Tensor gray_to_tensor(const ImageU8& img);
ImageU8 tensor_to_gray(const Tensor& t);

/// Round every value to the nearest 8-bit level (k/255).
Tensor quantize8(const Tensor& t);

}  // namespace vsal
