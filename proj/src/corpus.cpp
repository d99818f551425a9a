#include "prgflow/corpus.hpp"

#include <algorithm>
#include <cmath>

#include "prgflow/errors.hpp"
#include "prgflow/image_io.hpp"
#include "prgflow/parallel.hpp"

namespace prgflow {
namespace {

double hash_unit(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return static_cast<double>(derive_seed(seed, a, b) >> 11) * 0x1.0p-53;
}

ImagePlane convert_channels(const ImagePlane& img, int channels) {
  if (img.channel_count() == channels) return img;
  if (channels == 1) return to_gray(img);
  if (channels == 3 && img.channel_count() == 1) {
    ImagePlane out(img.width(), img.height(), 3);
    for (int c = 0; c < 3; ++c) out.channel(c) = img.channel(0);
    return out;
  }
  throw ShapeError("cannot convert " + std::to_string(img.channel_count()) + "-channel image to " +
                   std::to_string(channels) + " channels");
}

// Value noise with C1 (smoothstep) interpolation between lattice values.
void add_value_noise(Plane& out, std::uint64_t seed, double cell, double amplitude) {
  const int h = static_cast<int>(out.rows()), w = static_cast<int>(out.cols());
  const int lw = static_cast<int>(std::floor((w - 1) / cell)) + 2, lh = static_cast<int>(std::floor((h - 1) / cell)) + 2;
  Plane lattice(lh, lw);
  for (int j = 0; j < lh; ++j)
    for (int i = 0; i < lw; ++i) lattice(j, i) = hash_unit(seed, i, j) - 0.5;
  std::vector<int> ix(w);
  std::vector<double> tx(w);
  for (int x = 0; x < w; ++x) {
    const double fx = x / cell;
    ix[x] = static_cast<int>(std::floor(fx));
    const double t = fx - ix[x];
    tx[x] = t * t * (3 - 2 * t);
  }
  for (int y = 0; y < h; ++y) {
    const double fy = y / cell;
    const int iy = static_cast<int>(std::floor(fy));
    double ty = fy - iy;
    ty = ty * ty * (3 - 2 * ty);
    for (int x = 0; x < w; ++x) {
      const double top = lattice(iy, ix[x]) * (1 - tx[x]) + lattice(iy, ix[x] + 1) * tx[x];
      const double bot = lattice(iy + 1, ix[x]) * (1 - tx[x]) + lattice(iy + 1, ix[x] + 1) * tx[x];
      out(y, x) += amplitude * (top * (1 - ty) + bot * ty);
    }
  }
}

void add_shapes(Plane& out, std::uint64_t seed, double feature_px) {
  const int w = static_cast<int>(out.cols()), h = static_cast<int>(out.rows());
  const int count = std::max(4, static_cast<int>(w * h / (feature_px * feature_px * 2)));
  for (int k = 0; k < count; ++k) {
    const double cx = hash_unit(seed, k, 0) * w, cy = hash_unit(seed, k, 1) * h;
    const double r = feature_px * (0.1 + 0.4 * hash_unit(seed, k, 2));
    const double level = hash_unit(seed, k, 3) - 0.5;
    const bool disc = hash_unit(seed, k, 4) < 0.5;
    const int x0 = std::max(0, static_cast<int>(cx - r - 2)), x1 = std::min(w - 1, static_cast<int>(cx + r + 2));
    const int y0 = std::max(0, static_cast<int>(cy - r - 2)), y1 = std::min(h - 1, static_cast<int>(cy + r + 2));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double d = disc ? std::hypot(dx, dy) - r : std::max(std::abs(dx), std::abs(dy)) - r;
        const double a = std::clamp(0.5 - d, 0.0, 1.0);  // one pixel soft edge
        out(y, x) += 0.6 * a * level;
      }
  }
}

Plane texture_plane(int width, int height, std::uint64_t seed, double feature_px) {
  Plane p = Plane::Zero(height, width);
  double cell = feature_px;
  for (int octave = 0; cell >= 1.5; ++octave, cell /= 2)
    add_value_noise(p, derive_seed(seed, 17, octave), cell, std::pow(cell / feature_px, 0.6));
  add_shapes(p, derive_seed(seed, 23), feature_px);
  const double lo = p.minCoeff(), hi = p.maxCoeff();
  if (hi - lo > 1e-12) p = 0.05 + 0.9 * (p - lo) / (hi - lo);
  else p.setConstant(0.5);
  return p;
}

}  // namespace

ImagePlane procedural_texture(int width, int height, std::uint64_t seed, int channels, double feature_px) {
  if (width < 1 || height < 1) throw ShapeError("texture size must be positive");
  if (channels != 1 && channels != 3) throw ShapeError("texture channels must be 1 or 3");
  if (!(feature_px >= 2)) throw DomainError("texture feature size must be >= 2 px");
  ImagePlane out(width, height, channels);
  const Plane base = texture_plane(width, height, seed, feature_px);
  for (int c = 0; c < channels; ++c) {
    if (channels == 1) {
      out.channel(c) = base;
    } else {
      // Mild per-channel tint so colour images are not exactly gray.
      const Plane tint = texture_plane(width, height, derive_seed(seed, 31, c), feature_px * 2);
      out.channel(c) = (0.8 * base + 0.2 * tint).cwiseMax(0.0).cwiseMin(1.0);
    }
  }
  return out;
}

DirectoryCorpus::DirectoryCorpus(const std::filesystem::path& dir, int channels) : dir_(dir), channels_(channels) {
  if (channels != 1 && channels != 3) throw DataError("corpus channels must be 1 or 3");
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw DataError("corpus directory not found: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files_.push_back(e.path());
  }
  std::sort(files_.begin(), files_.end());
  if (files_.empty()) throw DataError("corpus directory has no PNG/JPEG images: " + dir.string());
}

ImagePlane DirectoryCorpus::image(std::size_t i) const {
  if (i >= files_.size()) throw ShapeError("corpus index out of range");
  return convert_channels(read_image(files_[i]), channels_);
}

std::string DirectoryCorpus::describe() const {
  return dir_.string() + " (" + std::to_string(files_.size()) + " images)";
}

ProceduralCorpus::ProceduralCorpus(std::size_t count, int size, std::uint64_t seed, int channels)
    : count_(count), size_(size), seed_(seed), channels_(channels) {
  if (count == 0) throw DataError("procedural corpus must have at least one image");
  if (size < 1) throw DataError("procedural corpus image size must be positive");
  if (channels != 1 && channels != 3) throw DataError("corpus channels must be 1 or 3");
}

ImagePlane ProceduralCorpus::image(std::size_t i) const {
  if (i >= count_) throw ShapeError("corpus index out of range");
  const std::uint64_t s = derive_seed(seed_, i, 101);
  // Vary the feature scale per image.
  const double feature = 24.0 + 48.0 * (static_cast<double>(s >> 11) * 0x1.0p-53);
  return procedural_texture(size_, size_, s, channels_, feature);
}

std::string ProceduralCorpus::describe() const {
  return "procedural:" + std::to_string(count_) + ":" + std::to_string(size_);
}

std::unique_ptr<Corpus> open_corpus(const std::string& spec, int channels, std::uint64_t seed) {
  const std::string prefix = "procedural:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::string rest = spec.substr(prefix.size());
    const auto colon = rest.find(':');
    try {
      const std::size_t n = std::stoull(rest.substr(0, colon));
      const int size = colon == std::string::npos ? 320 : std::stoi(rest.substr(colon + 1));
      return std::make_unique<ProceduralCorpus>(n, size, seed, channels);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw DataError("bad procedural corpus spec '" + spec + "' (expected procedural:N[:SIZE])");
    }
  }
  return std::make_unique<DirectoryCorpus>(spec, channels);
}

}  // namespace prgflow
