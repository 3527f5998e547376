// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "shr/grid.hpp"

namespace shr {

/// Binary PGM (P5). Writing quantizes to 8 bits; reading accepts maxval up to
/// 65535 and rescales to [0, 1].
void write_pgm(const std::string& path, const Image& img);
Image read_pgm(const std::string& path);

/// 16-bit grayscale PNG for precision-sensitive fixtures. Reading also
/// accepts 8-bit grayscale.
void write_png16(const std::string& path, const Image& img);
Image read_png(const std::string& path);

/// Baseline JFIF encode at `quality` (1..100) followed by decode, all in
/// memory. The image is quantized to 8 bits first.
Image jpeg_roundtrip(const Image& img, int quality);

}  // namespace shr
