#pragma once

#include "ssi/image.hpp"
#include "ssi/registration.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ssi::io {

namespace fs = std::filesystem;

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Linear intensity window for 16-bit export: lo -> 0, hi -> 65535.
struct IntensityRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Sidecar holding the PGM intensity window, "<path>.range".
fs::path range_sidecar(const fs::path &pgm);

/// Binary P5 graymap, maxval 65535, big-endian samples. Values outside the window clip.
/// Without an explicit range the image's own min/max is used. Writes the sidecar too.
IntensityRange write_pgm16(const fs::path &path, const Image &img,
                           std::optional<IntensityRange> range = std::nullopt);
/// Reads a 16-bit graymap back through its sidecar window, or onto [0, 1] without one.
Image read_pgm16(const fs::path &path);

/// "SSIF" raw float stream: 16-byte header (magic, u32 width, u32 height, u32 reserved = 0),
/// then row-major little-endian float32 samples.
void write_ssif(const fs::path &path, const Image &img);
Image read_ssif(const fs::path &path);

/// Reads by extension: .pgm or .ssif.
Image read_image(const fs::path &path);

struct ShiftRow {
  int frame = 0;
  double dx = 0.0;
  double dy = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// CSV with header "frame,dx,dy,iterations,converged".
void write_shifts_csv(const fs::path &path, const std::vector<ShiftRow> &rows);
std::vector<ShiftRow> read_shifts_csv(const fs::path &path);

std::vector<ShiftRow> to_rows(const std::vector<registration::ShiftEstimate> &estimates);

/// 64-bit FNV-1a of the file contents, as 16 lowercase hex digits.
std::string file_digest(const fs::path &path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

} // namespace ssi::io
