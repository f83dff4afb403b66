#pragma once

#include <string>

#include "depthfit/imaging.hpp"

namespace dfit {

// Plain raster I/O. PPM (P6/P3) for color images, PGM (P5/P2) for binary
// masks, PFM (little-endian, scale -1.0) for depth maps and float images.
// All throw std::runtime_error on malformed input or I/O failure.

void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

void write_pgm(const std::string& path, const BinaryMask& mask);
BinaryMask read_pgm(const std::string& path);

void write_pfm(const std::string& path, const Image& img);
Image read_pfm(const std::string& path);

void write_pfm_depth(const std::string& path, const DepthMap& depth);
DepthMap read_pfm_depth(const std::string& path);

} // namespace dfit
