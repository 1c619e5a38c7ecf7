// COVAREP CSV ingestion: parse 74-column per-frame feature files, filter to
// voiced frames, and cut the voiced stream into fixed-timestep windows.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace moodseq {

// Raised for malformed input files; the CLI maps it to exit code 3.
struct DataFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kCovarepColumns = 74;

struct CovarepMatrix {
  std::string path;
  std::size_t rows = 0;
  std::size_t vuv_col = 1;
  std::vector<double> values;  // rows x 74, row-major
  std::size_t nan_rows_dropped = 0;

  double at(std::size_t r, std::size_t c) const { return values[r * kCovarepColumns + c]; }
};

// Parses a comma-separated COVAREP file. Rows containing NaN are dropped and
// counted; a wrong column count or a non-numeric cell is a DataFormatError
// naming the file and position. The VUV column must hold only 0 or 1.
CovarepMatrix load_covarep(const std::string& path, std::size_t vuv_col = 1);

// Keeps VUV==1 frames, drops the VUV column, and partitions the voiced
// stream into consecutive non-overlapping windows of `timestep` frames
// (73 features each); the remainder is discarded. Output size is
// floor(voiced / timestep) windows of timestep*73 values.
std::vector<std::vector<double>> frame_sequences(const CovarepMatrix& m, std::size_t timestep);

// Voiced frames with the VUV column removed, as one stream (rows x 73).
std::vector<double> voiced_stream(const CovarepMatrix& m);

}  // namespace moodseq
