#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "rdsc/common/error.hpp"
#include "rdsc/harness/image_io.hpp"
#include "rdsc/tensor_core/spatial.hpp"

namespace rdsc {

struct IngestOptions {
  // 0 keeps native size. Otherwise centre-crop to the target aspect ratio and
  // resize bilinearly to target_h x target_w.
  std::size_t target_h = 0, target_w = 0;
};

struct Dataset {
  std::vector<std::string> ids;  // file stem
  std::vector<Tensor<float>> images;
  std::vector<std::string> warnings;

  std::size_t size() const { return images.size(); }
};

inline Tensor<float> fit_to(const Tensor<float>& img, std::size_t th, std::size_t tw) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  // Largest window with the target aspect ratio.
  std::size_t ch = h, cw = w;
  if (h * tw > w * th) ch = std::max<std::size_t>(1, w * th / tw);
  else cw = std::max<std::size_t>(1, h * tw / th);
  Tensor<float> out = crop(img, (h - ch) / 2, (w - cw) / 2, ch, cw);
  if (ch != th || cw != tw) out = resize_bilinear(out, th, tw);
  return out;
}

/// Every PPM/PGM/PNG file directly inside `dir`, ordered by filename.
inline Dataset ingest_dataset(const std::filesystem::path& dir, const IngestOptions& opt = {}) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw ArgumentError("dataset directory not found: " + dir.string());
  if ((opt.target_h == 0) != (opt.target_w == 0)) throw ArgumentError("ingest: give both target height and width, or neither");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && (is_png_path(e.path()) || is_pnm_path(e.path()))) files.push_back(e.path());
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  Dataset ds;
  for (const auto& f : files) {
    try {
      Tensor<float> img = read_image(f);
      if (opt.target_h) img = fit_to(img, opt.target_h, opt.target_w);
      ds.ids.push_back(f.stem().string());
      ds.images.push_back(std::move(img));
    } catch (const Error& e) {
      ds.warnings.push_back("skipped " + f.filename().string() + ": " + e.what());
    }
  }
  if (ds.images.empty()) throw ArgumentError("no readable images in " + dir.string());
  return ds;
}

}  // namespace rdsc
