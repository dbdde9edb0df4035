#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aberr/image.hpp"
#include "aberr/zernike.hpp"

namespace aberr::io {

namespace fs = std::filesystem;

/// Raw grid: "ABR1", u32 rows, u32 cols, 4 reserved zero bytes, then rows*cols
/// little-endian IEEE-754 doubles, row-major.
void write_grid(const fs::path& path, const Image& grid);
Image read_grid(const fs::path& path);

/// 16-bit binary PGM (P5, maxval 65535), value = round(clamp(pixel, 0, 1) * 65535).
void write_pgm16(const fs::path& path, const Image& img);

/// Reads P5/P2 PGM of any maxval, scaled to [0, 1].
Image read_pgm(const fs::path& path);

/// Min-max scaled 16-bit PGM for visualization plus a sidecar "<path>.json"
/// recording {"min", "max"} so the mapping can be inverted.
void write_pgm16_scaled(const fs::path& path, const Image& img);

struct LensRow {
  std::string lens_id;
  ZernikeVector coeffs;
};

/// CSV with header "lens_id,a2,...,a37"; values printed with 17 significant digits.
void write_lens_csv(const fs::path& path, const std::vector<LensRow>& lenses);
std::vector<LensRow> read_lens_csv(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

}  // namespace aberr::io
