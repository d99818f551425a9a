#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "prgflow/image.hpp"

namespace prgflow {

// Indexed image source. Images are converted to the requested channel count
// (1 = luminance, 3 = RGB).
class Corpus {
 public:
  virtual ~Corpus() = default;
  virtual std::size_t size() const = 0;
  virtual ImagePlane image(std::size_t i) const = 0;
  virtual std::string describe() const = 0;
};

// All PNG/JPEG files in a directory, sorted by name.
class DirectoryCorpus final : public Corpus {
 public:
  DirectoryCorpus(const std::filesystem::path& dir, int channels);
  std::size_t size() const override { return files_.size(); }
  ImagePlane image(std::size_t i) const override;
  std::string describe() const override;

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> files_;
  int channels_;
};

// Deterministic synthetic textures generated on demand.
class ProceduralCorpus final : public Corpus {
 public:
  ProceduralCorpus(std::size_t count, int size, std::uint64_t seed, int channels);
  std::size_t size() const override { return count_; }
  ImagePlane image(std::size_t i) const override;
  std::string describe() const override;

 private:
  std::size_t count_;
  int size_;
  std::uint64_t seed_;
  int channels_;
};

// Multi-octave value noise with scattered soft-edged shapes, values in
// [0.05, 0.95]. `feature_px` sets the coarsest noise cell.
ImagePlane procedural_texture(int width, int height, std::uint64_t seed, int channels = 1, double feature_px = 48.0);

// "procedural:N[:SIZE]" or a directory path.
std::unique_ptr<Corpus> open_corpus(const std::string& spec, int channels, std::uint64_t seed);

}  // namespace prgflow
