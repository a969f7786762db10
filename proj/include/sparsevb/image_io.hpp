#ifndef SPARSEVB_IMAGE_IO_HPP
#define SPARSEVB_IMAGE_IO_HPP

#include <string>

#include "sparsevb/tv.hpp"

namespace sparsevb {

// Binary P5 portable graymap, 16-bit big-endian samples. Values are
// mapped linearly from [lo, hi] to [0, 65535]; the default uses the image
// range. Reading maps back to [0, 1].
void write_pgm(const std::string& path, const ImageGrid& img);
void write_pgm(const std::string& path, const ImageGrid& img, double lo, double hi);
ImageGrid read_pgm(const std::string& path);

// Flat CSV: one-line header `p0=<N>` followed by p0^2 values, row-major,
// one per line. Lossless (17 significant digits).
void write_grid_csv(const std::string& path, const ImageGrid& img);
ImageGrid read_grid_csv(const std::string& path);

}  // namespace sparsevb

#endif
