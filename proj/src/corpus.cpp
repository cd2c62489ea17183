#include "safepaint/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <stdexcept>

#include "safepaint/io.hpp"
#include "safepaint/rng.hpp"

namespace safepaint::corpus {

namespace fs = std::filesystem;

namespace {

using Color = std::array<double, 3>;

Color random_color(Rng& rng) { return {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)}; }

double smoothstep(double t) { return t * t * (3 - 2 * t); }

// Per-pixel blend weight in [0,1] for one texture family.
class Pattern {
 public:
  Pattern(Rng& rng, int size) : kind_(rng.uniform_int(0, 2)) {
    a_ = random_color(rng);
    b_ = random_color(rng);
    switch (kind_) {
      case 0: {  // two-octave value noise
        cell_ = rng.uniform(10.0, 24.0);
        const int n = static_cast<int>(std::ceil(size / cell_ * 2)) + 3;
        lattice_side_ = n;
        lattice_.resize(static_cast<size_t>(n) * n);
        for (double& v : lattice_) v = rng.uniform();
        break;
      }
      case 1:  // sinusoidal stripes
        period_ = rng.uniform(8.0, 20.0);
        angle_ = rng.uniform(0.0, std::numbers::pi);
        phase_ = rng.uniform(0.0, 2 * std::numbers::pi);
        break;
      default:  // checkerboard
        cell_ = rng.uniform_int(6, 14);
        offset_x_ = rng.uniform_int(0, 13);
        offset_y_ = rng.uniform_int(0, 13);
        break;
    }
  }

  Color operator()(int y, int x) const {
    const double t = weight(y, x);
    return {a_[0] + (b_[0] - a_[0]) * t, a_[1] + (b_[1] - a_[1]) * t, a_[2] + (b_[2] - a_[2]) * t};
  }

 private:
  double lattice(int i, int j) const { return lattice_[static_cast<size_t>(i) * lattice_side_ + j]; }

  double value_noise(double fy, double fx) const {
    const int i = static_cast<int>(fy), j = static_cast<int>(fx);
    const double ty = smoothstep(fy - i), tx = smoothstep(fx - j);
    const double top = lattice(i, j) + (lattice(i, j + 1) - lattice(i, j)) * tx;
    const double bottom = lattice(i + 1, j) + (lattice(i + 1, j + 1) - lattice(i + 1, j)) * tx;
    return top + (bottom - top) * ty;
  }

  double weight(int y, int x) const {
    switch (kind_) {
      case 0:
        return (2 * value_noise(y / cell_, x / cell_) + value_noise(2 * y / cell_, 2 * x / cell_)) / 3;
      case 1: {
        const double u = x * std::cos(angle_) + y * std::sin(angle_);
        return 0.5 + 0.5 * std::sin(2 * std::numbers::pi * u / period_ + phase_);
      }
      default: {
        const int cy = (y + offset_y_) / static_cast<int>(cell_), cx = (x + offset_x_) / static_cast<int>(cell_);
        return ((cy + cx) % 2) ? 1.0 : 0.0;
      }
    }
  }

  int kind_;
  Color a_{}, b_{};
  double cell_ = 8, period_ = 8, angle_ = 0, phase_ = 0;
  int offset_x_ = 0, offset_y_ = 0;
  int lattice_side_ = 0;
  std::vector<double> lattice_;
};

}  // namespace

Image synth_texture(std::uint64_t seed, int size) {
  if (size < 8) throw std::invalid_argument("synth_texture: size must be at least 8");
  Rng rng(derive_seed(seed, 0x7e47));
  const int cells = rng.uniform_int(2, 3);
  std::vector<std::array<double, 2>> sites;
  std::vector<Pattern> patterns;
  for (int k = 0; k < cells; ++k) {
    sites.push_back({rng.uniform(0.0, size), rng.uniform(0.0, size)});
    patterns.emplace_back(rng, size);
  }
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      int owner = 0;
      double best = 1e300;
      for (int k = 0; k < cells; ++k) {
        const double d = std::hypot(y - sites[k][0], x - sites[k][1]);
        if (d < best) best = d, owner = k;
      }
      const Color c = patterns[owner](y, x);
      for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = std::clamp(c[ch], 0.0, 1.0);
    }
  return img;
}

std::string synth_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth_%05d", index);
  return buf;
}

bool is_held_out(const std::string& name, std::uint64_t seed, double fraction) {
  // FNV-1a over the name, then mixed with the seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  const std::uint64_t mixed = derive_seed(seed, h);
  return static_cast<double>(mixed >> 11) * 0x1.0p-53 < fraction;
}

Split synthetic_split(std::uint64_t seed, int n_train, int n_held_out, int size, double fraction) {
  if (n_train < 0 || n_held_out < 0) throw std::invalid_argument("synthetic_split: negative count");
  if (n_held_out > 0 && fraction <= 0) throw std::invalid_argument("synthetic_split: held-out fraction is zero");
  if (n_train > 0 && fraction >= 1) throw std::invalid_argument("synthetic_split: held-out fraction leaves no training data");
  Split s;
  for (int i = 0; static_cast<int>(s.train.size()) < n_train || static_cast<int>(s.held_out.size()) < n_held_out; ++i) {
    const std::string name = synth_name(i);
    auto& bucket = is_held_out(name, seed, fraction) ? s.held_out : s.train;
    const int want = &bucket == &s.train ? n_train : n_held_out;
    if (static_cast<int>(bucket.size()) >= want) continue;
    bucket.push_back({name, synth_texture(derive_seed(seed, static_cast<std::uint64_t>(i)), size)});
  }
  return s;
}

Image resize_square(const Image& img, int size) {
  if (size < 1) throw std::invalid_argument("resize_square: size must be positive");
  const int side = std::min(img.height, img.width);
  const int oy = (img.height - side) / 2, ox = (img.width - side) / 2;
  Image out(size, size, img.channels);
  const double scale = static_cast<double>(side) / size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double sy = std::clamp((y + 0.5) * scale - 0.5, 0.0, side - 1.0);
      const double sx = std::clamp((x + 0.5) * scale - 0.5, 0.0, side - 1.0);
      const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
      const int y1 = std::min(y0 + 1, side - 1), x1 = std::min(x0 + 1, side - 1);
      const double ty = sy - y0, tx = sx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double a = img.at(c, oy + y0, ox + x0), b = img.at(c, oy + y0, ox + x1);
        const double d = img.at(c, oy + y1, ox + x0), e = img.at(c, oy + y1, ox + x1);
        out.at(c, y, x) = (a + (b - a) * tx) * (1 - ty) + (d + (e - d) * tx) * ty;
      }
    }
  return out;
}

std::vector<Item> load_directory(const std::string& dir, int size) {
  if (!fs::is_directory(dir)) throw std::runtime_error("load_directory: not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Item> items;
  for (const auto& f : files) {
    Image img = to_rgb(io::read_png(f.string()));
    if (img.height != size || img.width != size) img = resize_square(img, size);
    items.push_back({f.stem().string(), std::move(img)});
  }
  return items;
}

Split split_items(std::vector<Item> items, std::uint64_t seed, double fraction) {
  Split s;
  for (auto& it : items) (is_held_out(it.name, seed, fraction) ? s.held_out : s.train).push_back(std::move(it));
  return s;
}

void write_directory(const std::string& dir, const std::vector<Item>& items) {
  fs::create_directories(dir);
  for (const auto& it : items) io::write_png((fs::path(dir) / (it.name + ".png")).string(), it.image);
}

}  // namespace safepaint::corpus
