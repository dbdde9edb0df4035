#pragma once

#include <filesystem>

#include "aberr/image.hpp"
#include "aberr/zernike.hpp"

namespace aberr::cli {

/// Oracle | predicted | difference, side by side with a 2-pixel gutter.
/// The first two panels share one linear scale; the difference panel is mapped
/// symmetrically so that zero lands on mid-gray. Writes a 16-bit PGM plus a
/// "<path>.json" sidecar with both scales.
void write_triptych(const std::filesystem::path& path, const Image& oracle, const Image& predicted);

/// Crops a wavefront to the bounding box of its aperture. Pixels outside the
/// aperture take the minimum aperture value so they render as background.
Image aperture_view(const WavefrontMap& w);

}  // namespace aberr::cli
