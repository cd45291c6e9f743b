#pragma once

#include <string>

#include "evdi/tensor.hpp"

namespace evdi {

// Binary PGM (1 channel) / PPM (3 channels) I/O for [C, H, W] images with
// values in [0, 1]. Values are clamped and quantized to `maxval` levels on
// write; a value of the form k/maxval survives a write/read cycle exactly.
void write_pnm(const std::string& path, const Tensor& image, int maxval = 65535);
Tensor read_pnm(const std::string& path);

// Quantize every value to the nearest k/maxval after clamping to [0, 1].
void quantize_unit(Tensor& t, int maxval = 65535);

}  // namespace evdi
