#include "aberr/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace aberr::io {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <class U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Skips whitespace and '#' comments in a PGM header.
std::size_t pgm_token(const std::string& s, std::size_t& pos, const fs::path& path) {
  while (pos < s.size()) {
    if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + s.size(), value);
  if (ec != std::errc()) throw IoError("malformed PGM header: " + path.string());
  pos = static_cast<std::size_t>(ptr - s.data());
  return value;
}

}  // namespace

void write_grid(const fs::path& path, const Image& grid) {
  std::string buf;
  buf.reserve(16 + grid.size() * 8);
  buf.append("ABR1");
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(grid.rows()));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(grid.cols()));
  put_le<std::uint32_t>(buf, 0);
  for (double v : grid.data()) put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(v));
  auto out = open_out(path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Image read_grid(const fs::path& path) {
  const std::string s = slurp(path);
  if (s.size() < 16 || s.compare(0, 4, "ABR1") != 0) throw IoError("not an ABR1 grid: " + path.string());
  const auto* p = reinterpret_cast<const unsigned char*>(s.data());
  const std::size_t rows = get_le<std::uint32_t>(p + 4);
  const std::size_t cols = get_le<std::uint32_t>(p + 8);
  if (s.size() != 16 + rows * cols * 8) throw IoError("ABR1 grid size mismatch: " + path.string());
  Image img(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i)
    img[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 16 + 8 * i));
  return img;
}

void write_pgm16(const fs::path& path, const Image& img) {
  std::string buf = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n65535\n";
  buf.reserve(buf.size() + img.size() * 2);
  for (double v : img.data()) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    buf.push_back(static_cast<char>(q >> 8));  // PGM stores 16-bit samples big-endian
    buf.push_back(static_cast<char>(q & 0xFF));
  }
  auto out = open_out(path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Image read_pgm(const fs::path& path) {
  const std::string s = slurp(path);
  if (s.size() < 2 || s[0] != 'P' || (s[1] != '5' && s[1] != '2'))
    throw IoError("not a PGM (P5/P2) file: " + path.string());
  const bool binary = s[1] == '5';
  std::size_t pos = 2;
  const std::size_t cols = pgm_token(s, pos, path);
  const std::size_t rows = pgm_token(s, pos, path);
  const std::size_t maxval = pgm_token(s, pos, path);
  if (cols == 0 || rows == 0 || maxval == 0 || maxval > 65535)
    throw IoError("unsupported PGM geometry: " + path.string());
  Image img(rows, cols);
  const double scale = 1.0 / static_cast<double>(maxval);
  if (binary) {
    ++pos;  // single whitespace after maxval
    const std::size_t bytes = maxval > 255 ? 2 : 1;
    if (s.size() < pos + rows * cols * bytes) throw IoError("truncated PGM: " + path.string());
    const auto* p = reinterpret_cast<const unsigned char*>(s.data() + pos);
    for (std::size_t i = 0; i < rows * cols; ++i) {
      const unsigned v = bytes == 2 ? (unsigned{p[2 * i]} << 8) | p[2 * i + 1] : p[i];
      img[i] = v * scale;
    }
  } else {
    for (std::size_t i = 0; i < rows * cols; ++i) img[i] = static_cast<double>(pgm_token(s, pos, path)) * scale;
  }
  return img;
}

void write_pgm16_scaled(const fs::path& path, const Image& img) {
  if (img.empty()) throw ArgumentError("cannot export an empty image");
  const auto [lo_it, hi_it] = std::minmax_element(img.data().begin(), img.data().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double span = hi > lo ? hi - lo : 1.0;
  Image scaled(img.rows(), img.cols());
  for (std::size_t i = 0; i < img.size(); ++i) scaled[i] = (img[i] - lo) / span;
  write_pgm16(path, scaled);
  nlohmann::json side = {{"min", lo}, {"max", hi}, {"mapping", "value = min + pixel/65535 * (max - min)"}};
  write_text(path.string() + ".json", side.dump(2) + "\n");
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw ArgumentError("cannot format double");
  return std::string(buf.data(), ptr);
}

void write_lens_csv(const fs::path& path, const std::vector<LensRow>& lenses) {
  std::string text = "lens_id";
  for (int j = kFirstNoll; j <= kLastNoll; ++j) text += ",a" + std::to_string(j);
  text += "\n";
  for (const auto& lens : lenses) {
    text += lens.lens_id;
    for (double v : lens.coeffs.span()) text += "," + format_double(v);
    text += "\n";
  }
  write_text(path, text);
}

std::vector<LensRow> read_lens_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("lens_id", 0) != 0)
    throw IoError("lens CSV missing header: " + path.string());
  std::vector<LensRow> lenses;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != kNumCoeffs + 1)
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 37 columns");
    std::vector<double> values(kNumCoeffs);
    for (std::size_t i = 0; i < kNumCoeffs; ++i) {
      const std::string& c = cells[i + 1];
      auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), values[i]);
      if (ec != std::errc() || ptr != c.data() + c.size())
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + c + "'");
    }
    lenses.push_back({cells[0], ZernikeVector(values)});
  }
  return lenses;
}

std::string read_text(const fs::path& path) { return slurp(path); }

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace aberr::io
