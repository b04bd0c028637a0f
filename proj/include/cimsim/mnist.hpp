#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cimsim/rng.hpp"

namespace cimsim {

/// Labeled image set in memory; pixels are raw 0..255 intensities.
struct Dataset {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
  std::vector<std::uint8_t> labels;  // count

  int pixel_count() const { return rows * cols; }
  std::span<const std::uint8_t> image(int i) const {
    return {pixels.data() + static_cast<std::size_t>(i) * pixel_count(),
            static_cast<std::size_t>(pixel_count())};
  }
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::uint8_t b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("truncated IDX header: " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  const std::uint8_t b[4] = {std::uint8_t(v >> 24), std::uint8_t(v >> 16),
                             std::uint8_t(v >> 8), std::uint8_t(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

/// Parses the standard big-endian IDX pair (magic 0x803 for images, 0x801 for
/// labels). Rejects bad magic numbers, truncated payloads and count
/// mismatches with a diagnostic naming the offending file.
inline Dataset load_mnist(const std::string& images_path,
                          const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open IDX image file: " + images_path);
  const std::uint32_t img_magic = detail::read_be32(img, images_path);
  if (img_magic != 0x00000803u)
    throw std::runtime_error("bad IDX image magic in " + images_path);
  Dataset d;
  d.count = static_cast<int>(detail::read_be32(img, images_path));
  d.rows = static_cast<int>(detail::read_be32(img, images_path));
  d.cols = static_cast<int>(detail::read_be32(img, images_path));
  if (d.count < 0 || d.rows <= 0 || d.cols <= 0)
    throw std::runtime_error("implausible IDX dimensions in " + images_path);
  d.pixels.resize(static_cast<std::size_t>(d.count) * d.rows * d.cols);
  if (!img.read(reinterpret_cast<char*>(d.pixels.data()),
                static_cast<std::streamsize>(d.pixels.size())))
    throw std::runtime_error("truncated IDX image payload: " + images_path);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open IDX label file: " + labels_path);
  const std::uint32_t lab_magic = detail::read_be32(lab, labels_path);
  if (lab_magic != 0x00000801u)
    throw std::runtime_error("bad IDX label magic in " + labels_path);
  const int lab_count = static_cast<int>(detail::read_be32(lab, labels_path));
  if (lab_count != d.count)
    throw std::runtime_error("image/label count mismatch: " + labels_path);
  d.labels.resize(static_cast<std::size_t>(d.count));
  if (!lab.read(reinterpret_cast<char*>(d.labels.data()),
                static_cast<std::streamsize>(d.labels.size())))
    throw std::runtime_error("truncated IDX label payload: " + labels_path);
  return d;
}

/// Writes the dataset in the same bit-exact IDX layout load_mnist parses.
inline void save_idx(const Dataset& d, const std::string& images_path,
                     const std::string& labels_path) {
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot write IDX image file: " + images_path);
  detail::write_be32(img, 0x00000803u);
  detail::write_be32(img, static_cast<std::uint32_t>(d.count));
  detail::write_be32(img, static_cast<std::uint32_t>(d.rows));
  detail::write_be32(img, static_cast<std::uint32_t>(d.cols));
  img.write(reinterpret_cast<const char*>(d.pixels.data()),
            static_cast<std::streamsize>(d.pixels.size()));

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot write IDX label file: " + labels_path);
  detail::write_be32(lab, 0x00000801u);
  detail::write_be32(lab, static_cast<std::uint32_t>(d.count));
  lab.write(reinterpret_cast<const char*>(d.labels.data()),
            static_cast<std::streamsize>(d.labels.size()));
}

/// Deterministic sample without replacement: the first `count` entries of the
/// seeded Fisher-Yates permutation of [0, total), in draw order. count = 0
/// yields an empty selection; count >= total yields the identity ordering.
inline std::vector<int> subset_indices(int total, int count, std::uint64_t seed) {
  if (total < 0 || count < 0)
    throw std::invalid_argument("subset_indices: negative sizes");
  std::vector<int> all(static_cast<std::size_t>(total));
  std::iota(all.begin(), all.end(), 0);
  if (count >= total) return all;
  SequenceRng rng(seed, Stream::subset);
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.next_below(
                          static_cast<std::uint64_t>(total - i)));
    std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
  }
  all.resize(static_cast<std::size_t>(count));
  return all;
}

}  // namespace cimsim
