#include "montage.hpp"

#include <algorithm>
#include <cmath>

#include "aberr/error.hpp"
#include "aberr/io.hpp"
#include "json.hpp"

namespace aberr::cli {

namespace {
constexpr std::size_t kGutter = 2;
}

void write_triptych(const std::filesystem::path& path, const Image& oracle, const Image& predicted) {
  if (!oracle.same_shape(predicted)) throw ArgumentError("triptych panels differ in shape");
  const std::size_t rows = oracle.rows(), cols = oracle.cols();

  double lo = oracle.data()[0], hi = lo, dmax = 0.0;
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    lo = std::min({lo, oracle.data()[i], predicted.data()[i]});
    hi = std::max({hi, oracle.data()[i], predicted.data()[i]});
    dmax = std::max(dmax, std::abs(predicted.data()[i] - oracle.data()[i]));
  }
  const double span = hi > lo ? hi - lo : 1.0;
  const double dspan = dmax > 0.0 ? 2.0 * dmax : 1.0;

  Image out(rows, 3 * cols + 2 * kGutter, 1.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      out(r, c) = (oracle(r, c) - lo) / span;
      out(r, cols + kGutter + c) = (predicted(r, c) - lo) / span;
      out(r, 2 * (cols + kGutter) + c) = 0.5 + (predicted(r, c) - oracle(r, c)) / dspan;
    }
  io::write_pgm16(path, out);

  const nlohmann::json meta = {{"panels", {"oracle", "predicted", "difference"}},
                               {"value_min", lo},
                               {"value_max", hi},
                               {"difference_abs_max", dmax}};
  io::write_text(path.string() + ".json", meta.dump(2) + "\n");
}

Image aperture_view(const WavefrontMap& w) {
  const std::size_t n = w.grid.n();
  std::size_t r0 = n, r1 = 0, c0 = n, c1 = 0;
  double lo = 0.0;
  bool any = false;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      if (w.mask(r, c)) {
        r0 = std::min(r0, r), r1 = std::max(r1, r);
        c0 = std::min(c0, c), c1 = std::max(c1, c);
        lo = any ? std::min(lo, w.values(r, c)) : w.values(r, c);
        any = true;
      }
  if (!any) throw DegenerateApertureError("wavefront has an empty aperture");
  Image view(r1 - r0 + 1, c1 - c0 + 1);
  for (std::size_t r = r0; r <= r1; ++r)
    for (std::size_t c = c0; c <= c1; ++c) view(r - r0, c - c0) = w.mask(r, c) ? w.values(r, c) : lo;
  return view;
}

}  // namespace aberr::cli
