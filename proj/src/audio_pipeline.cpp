#include "moodseq/audio_pipeline.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace moodseq {

namespace {

double parse_cell(const std::string& cell, const std::string& path, std::size_t row,
                  std::size_t col) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  double v = 0;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw DataFormatError(path + ": non-numeric cell at row " + std::to_string(row + 1) +
                          ", column " + std::to_string(col + 1) + ": '" + cell + "'");
  return v;
}

}  // namespace

CovarepMatrix load_covarep(const std::string& path, std::size_t vuv_col) {
  if (vuv_col >= kCovarepColumns)
    throw DataFormatError(path + ": VUV column index " + std::to_string(vuv_col) +
                          " outside the 74-column layout");
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open COVAREP file: " + path);

  CovarepMatrix m;
  m.path = path;
  m.vuv_col = vuv_col;

  std::string line;
  std::size_t row = 0;
  std::vector<double> frame(kCovarepColumns);
  for (; std::getline(in, line); ++row) {
    if (line.empty() || line == "\r") {
      --row;
      continue;
    }
    std::size_t col = 0, start = 0;
    bool has_nan = false;
    while (true) {
      std::size_t comma = line.find(',', start);
      std::string cell = line.substr(start, comma == std::string::npos ? comma : comma - start);
      if (col >= kCovarepColumns)
        throw DataFormatError(path + ": expected 74 columns, found more at row " +
                              std::to_string(row + 1));
      double v = parse_cell(cell, path, row, col);
      if (std::isnan(v)) has_nan = true;
      frame[col++] = v;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (col != kCovarepColumns)
      throw DataFormatError(path + ": expected 74 columns, found " + std::to_string(col) +
                            " at row " + std::to_string(row + 1));
    if (has_nan) {
      ++m.nan_rows_dropped;
      continue;
    }
    const double vuv = frame[vuv_col];
    if (vuv != 0.0 && vuv != 1.0)
      throw DataFormatError(path + ": VUV flag must be 0 or 1, found " + std::to_string(vuv) +
                            " at row " + std::to_string(row + 1));
    m.values.insert(m.values.end(), frame.begin(), frame.end());
    ++m.rows;
  }
  return m;
}

std::vector<double> voiced_stream(const CovarepMatrix& m) {
  std::vector<double> out;
  for (std::size_t r = 0; r < m.rows; ++r) {
    if (m.at(r, m.vuv_col) != 1.0) continue;
    for (std::size_t c = 0; c < kCovarepColumns; ++c)
      if (c != m.vuv_col) out.push_back(m.at(r, c));
  }
  return out;
}

std::vector<std::vector<double>> frame_sequences(const CovarepMatrix& m, std::size_t timestep) {
  if (timestep == 0) throw std::invalid_argument("frame_sequences: timestep must be >= 1");
  const std::size_t feats = kCovarepColumns - 1;
  auto stream = voiced_stream(m);
  const std::size_t voiced = stream.size() / feats;
  std::vector<std::vector<double>> windows;
  windows.reserve(voiced / timestep);
  for (std::size_t w = 0; (w + 1) * timestep <= voiced; ++w)
    windows.emplace_back(stream.begin() + w * timestep * feats,
                         stream.begin() + (w + 1) * timestep * feats);
  return windows;
}

}  // namespace moodseq
