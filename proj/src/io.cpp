#include "ssi/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ssi::io {

namespace {

std::ofstream open_out(const fs::path &path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return os;
}

std::ifstream open_in(const fs::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw std::runtime_error("cannot open '" + path.string() + "'");
  return is;
}

void put_u32_le(std::ostream &os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

std::uint32_t get_u32_le(const unsigned char *b) {
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

/// Next whitespace-delimited PNM header token, skipping '#' comments.
std::string pnm_token(std::istream &is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty())
        return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

double parse_double(const std::string &s, const std::string &what) {
  double v = 0.0;
  const auto *end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw FormatError("malformed number '" + s + "' in " + what);
  return v;
}

long parse_int(const std::string &s, const std::string &what) {
  long v = 0;
  const auto *end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw FormatError("malformed integer '" + s + "' in " + what);
  return v;
}

std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ','))
    out.push_back(field);
  if (!line.empty() && line.back() == ',')
    out.emplace_back();
  return out;
}

} // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc())
    throw std::runtime_error("format_double failed");
  return std::string(buf.data(), ptr);
}

fs::path range_sidecar(const fs::path &pgm) { return fs::path(pgm.string() + ".range"); }

IntensityRange write_pgm16(const fs::path &path, const Image &img, std::optional<IntensityRange> range) {
  IntensityRange r = range ? *range : IntensityRange{img.pixels.minCoeff(), img.pixels.maxCoeff()};
  if (!(r.hi > r.lo))
    r.hi = r.lo + 1.0;
  auto os = open_out(path);
  os << "P5\n" << img.width() << ' ' << img.height() << "\n65535\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(img.pixels.size()) * 2);
  std::size_t i = 0;
  const double scale = 65535.0 / (r.hi - r.lo);
  for (Eigen::Index y = 0; y < img.height(); ++y) {
    for (Eigen::Index x = 0; x < img.width(); ++x) {
      const double q = std::clamp(std::round((img.pixels(y, x) - r.lo) * scale), 0.0, 65535.0);
      const auto v = static_cast<std::uint16_t>(q);
      buf[i++] = static_cast<unsigned char>(v >> 8);
      buf[i++] = static_cast<unsigned char>(v & 0xff);
    }
  }
  os.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os)
    throw std::runtime_error("failed writing '" + path.string() + "'");

  auto side = open_out(range_sidecar(path));
  side << "lo " << format_double(r.lo) << "\nhi " << format_double(r.hi) << '\n';
  return r;
}

Image read_pgm16(const fs::path &path) {
  auto is = open_in(path);
  const std::string what = path.string();
  if (pnm_token(is) != "P5")
    throw FormatError(what + ": not a binary graymap");
  const long w = parse_int(pnm_token(is), what);
  const long h = parse_int(pnm_token(is), what);
  const long maxval = parse_int(pnm_token(is), what);
  if (w <= 0 || h <= 0)
    throw FormatError(what + ": bad dimensions");
  if (maxval != 65535)
    throw FormatError(what + ": expected maxval 65535");

  IntensityRange r; // no sidecar: samples span [0, 1]
  if (fs::exists(range_sidecar(path))) {
    auto side = open_in(range_sidecar(path));
    std::string key, value;
    bool have_lo = false, have_hi = false;
    while (side >> key >> value) {
      if (key == "lo") {
        r.lo = parse_double(value, what + ".range");
        have_lo = true;
      } else if (key == "hi") {
        r.hi = parse_double(value, what + ".range");
        have_hi = true;
      } else {
        throw FormatError(what + ".range: unknown key '" + key + "'");
      }
    }
    if (!have_lo || !have_hi)
      throw FormatError(what + ".range: missing lo/hi");
  }

  std::vector<unsigned char> buf(static_cast<std::size_t>(w * h * 2));
  is.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (is.gcount() != static_cast<std::streamsize>(buf.size()))
    throw FormatError(what + ": truncated pixel data");

  Image img(w, h);
  const double step = (r.hi - r.lo) / 65535.0;
  std::size_t i = 0;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x, i += 2) {
      const unsigned v = (unsigned(buf[i]) << 8) | buf[i + 1];
      img.pixels(y, x) = r.lo + v * step;
    }
  }
  return img;
}

void write_ssif(const fs::path &path, const Image &img) {
  auto os = open_out(path);
  os.write("SSIF", 4);
  put_u32_le(os, static_cast<std::uint32_t>(img.width()));
  put_u32_le(os, static_cast<std::uint32_t>(img.height()));
  put_u32_le(os, 0);
  std::vector<unsigned char> buf(static_cast<std::size_t>(img.pixels.size()) * 4);
  std::size_t i = 0;
  for (Eigen::Index y = 0; y < img.height(); ++y) {
    for (Eigen::Index x = 0; x < img.width(); ++x) {
      const float f = static_cast<float>(img.pixels(y, x));
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int b = 0; b < 4; ++b)
        buf[i++] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
    }
  }
  os.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os)
    throw std::runtime_error("failed writing '" + path.string() + "'");
}

Image read_ssif(const fs::path &path) {
  auto is = open_in(path);
  const std::string what = path.string();
  std::array<unsigned char, 16> header{};
  is.read(reinterpret_cast<char *>(header.data()), 16);
  if (is.gcount() != 16 || std::memcmp(header.data(), "SSIF", 4) != 0)
    throw FormatError(what + ": missing SSIF header");
  const std::uint32_t w = get_u32_le(header.data() + 4);
  const std::uint32_t h = get_u32_le(header.data() + 8);
  if (get_u32_le(header.data() + 12) != 0)
    throw FormatError(what + ": reserved header field is not zero");
  if (w == 0 || h == 0)
    throw FormatError(what + ": bad dimensions");

  std::vector<unsigned char> buf(std::size_t(w) * h * 4);
  is.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (is.gcount() != static_cast<std::streamsize>(buf.size()))
    throw FormatError(what + ": truncated pixel data");
  Image img(w, h);
  std::size_t i = 0;
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x, i += 4) {
      const std::uint32_t bits = get_u32_le(buf.data() + i);
      float f;
      std::memcpy(&f, &bits, 4);
      img.pixels(y, x) = f;
    }
  }
  return img;
}

Image read_image(const fs::path &path) {
  const auto ext = path.extension().string();
  if (ext == ".pgm")
    return read_pgm16(path);
  if (ext == ".ssif")
    return read_ssif(path);
  throw FormatError("unsupported image extension '" + ext + "' (expected .pgm or .ssif)");
}

void write_shifts_csv(const fs::path &path, const std::vector<ShiftRow> &rows) {
  auto os = open_out(path);
  os << "frame,dx,dy,iterations,converged\n";
  for (const auto &r : rows)
    os << r.frame << ',' << format_double(r.dx) << ',' << format_double(r.dy) << ',' << r.iterations
       << ',' << (r.converged ? "true" : "false") << '\n';
}

std::vector<ShiftRow> read_shifts_csv(const fs::path &path) {
  auto is = open_in(path);
  const std::string what = path.string();
  std::string line;
  if (!std::getline(is, line) || line != "frame,dx,dy,iterations,converged")
    throw FormatError(what + ": unexpected CSV header");
  std::vector<ShiftRow> rows;
  while (std::getline(is, line)) {
    if (line.empty())
      continue;
    const auto f = split_csv(line);
    if (f.size() != 5)
      throw FormatError(what + ": expected 5 fields in '" + line + "'");
    ShiftRow r;
    r.frame = static_cast<int>(parse_int(f[0], what));
    r.dx = parse_double(f[1], what);
    r.dy = parse_double(f[2], what);
    r.iterations = static_cast<int>(parse_int(f[3], what));
    if (f[4] != "true" && f[4] != "false")
      throw FormatError(what + ": converged must be true/false");
    r.converged = f[4] == "true";
    rows.push_back(r);
  }
  return rows;
}

std::vector<ShiftRow> to_rows(const std::vector<registration::ShiftEstimate> &estimates) {
  std::vector<ShiftRow> rows;
  rows.reserve(estimates.size());
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const auto &e = estimates[k];
    rows.push_back({static_cast<int>(k), e.p.x(), e.p.y(), e.iterations, e.converged});
  }
  return rows;
}

std::string file_digest(const fs::path &path) {
  auto is = open_in(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buf{};
  while (is) {
    is.read(buf.data(), buf.size());
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

} // namespace ssi::io
