#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "safepaint/image.hpp"

namespace safepaint::corpus {

struct Item {
  std::string name;
  Image image;
};

/// Seeded RGB collage: two or three Voronoi cells, each filled with value
/// noise, oriented stripes or a checkerboard.
Image synth_texture(std::uint64_t seed, int size);

/// Name used for the i-th synthetic image ("synth_00042").
std::string synth_name(int index);

/// True when `name` belongs to the held-out split. The decision depends only
/// on the name and the seed.
bool is_held_out(const std::string& name, std::uint64_t seed, double fraction = 0.2);

struct Split {
  std::vector<Item> train;
  std::vector<Item> held_out;
};

/// Walks synth_00000, synth_00001, ... assigning each by is_held_out until
/// both splits hold the requested counts.
Split synthetic_split(std::uint64_t seed, int n_train, int n_held_out, int size, double fraction = 0.2);

/// Loads every PNG in `dir` (sorted by file name), center-cropped to a
/// square and resampled bilinearly to size x size, as RGB.
std::vector<Item> load_directory(const std::string& dir, int size);

/// Partitions loaded items by is_held_out on their names.
Split split_items(std::vector<Item> items, std::uint64_t seed, double fraction = 0.2);

void write_directory(const std::string& dir, const std::vector<Item>& items);

/// Center crop to a square, then bilinear resampling.
Image resize_square(const Image& img, int size);

}  // namespace safepaint::corpus
