#include "msv/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>


namespace msv {
inline namespace MSV_PRECISION_NS {

namespace {

constexpr const char* kManifestHeader = "id,image,mask,split,classes,seed";

std::string sample_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

}  // namespace

std::string split_for_index(std::size_t index) {
  switch (index % 10) {
    case 8: return "val";
    case 9: return "test";
    default: return "train";
  }
}

Dataset Dataset::subset(const std::string& split) const {
  Dataset d;
  d.classes = classes;
  for (const auto& s : samples) {
    if (s.split == split) d.samples.push_back(s);
  }
  return d;
}

Batch Dataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("Dataset::batch: no indices");
  const std::size_t h = samples.at(indices[0]).image.height;
  const std::size_t w = samples.at(indices[0]).image.width;
  std::vector<real> img;
  std::vector<std::int32_t> lab;
  img.reserve(indices.size() * h * w);
  lab.reserve(indices.size() * h * w);
  for (std::size_t i : indices) {
    const Sample& s = samples.at(i);
    if (s.image.height != h || s.image.width != w || s.mask.height != h ||
        s.mask.width != w) {
      throw DataError("sample " + s.id + " has extents that differ from the batch");
    }
    for (std::uint8_t p : s.image.pixels) img.push_back(static_cast<real>(p) / real(255));
    for (std::uint8_t p : s.mask.pixels) lab.push_back(p);
  }
  Batch b;
  b.images = Tensor(Shape{indices.size(), 1, h, w}, std::move(img));
  b.labels = Labels(indices.size(), h, w, std::move(lab));
  return b;
}

Dataset make_phantom_dataset(const SynthOptions& options) {
  Dataset d;
  d.classes = options.classes;
  for (std::size_t i = 0; i < options.count; ++i) {
    const auto spec = random_phantom_spec(options.seed + i, options.classes,
                                          options.height, options.width);
    Phantom p = generate_phantom(spec);
    d.samples.push_back({sample_id(i),
                         options.split.empty() ? split_for_index(i) : options.split,
                         std::move(p.image), std::move(p.mask)});
  }
  return d;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data,
                   const SynthOptions& options) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  std::ofstream manifest(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.csv").string());
  manifest << kManifestHeader << '\n';
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const Sample& s = data.samples[i];
    const std::string img = "images/" + s.id + ".pgm";
    const std::string mask = "masks/" + s.id + ".pgm";
    write_pgm(dir / img, s.image);
    write_pgm(dir / mask, s.mask);
    manifest << s.id << ',' << img << ',' << mask << ',' << s.split << ','
             << data.classes << ',' << options.seed + i << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.csv", std::ios::binary);
  if (!in) throw DataError("no manifest.csv in " + dir.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw DataError((dir / "manifest.csv").string() + ": unexpected header");
  }
  Dataset d;
  d.classes = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 6) {
      throw DataError("manifest line " + std::to_string(line_no) + ": expected 6 fields");
    }
    const std::size_t classes = std::stoul(f[4]);
    if (d.classes != 0 && classes != d.classes) {
      throw DataError("manifest line " + std::to_string(line_no) + ": class count changes");
    }
    d.classes = classes;
    Sample s{f[0], f[3], read_pgm(dir / f[1]), read_pgm(dir / f[2])};
    if (s.image.width != s.mask.width || s.image.height != s.mask.height) {
      throw DataError("sample " + s.id + ": image and mask extents differ");
    }
    for (std::size_t i = 0; i < s.mask.pixels.size(); ++i) {
      if (s.mask.pixels[i] >= classes) {
        throw DataError("sample " + s.id + ": mask value " +
                        std::to_string(s.mask.pixels[i]) + " at pixel (" +
                        std::to_string(i / s.mask.width) + ", " +
                        std::to_string(i % s.mask.width) + ") >= class count " +
                        std::to_string(classes));
      }
    }
    d.samples.push_back(std::move(s));
  }
  if (d.samples.empty()) throw DataError("manifest in " + dir.string() + " lists no samples");
  return d;
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv
