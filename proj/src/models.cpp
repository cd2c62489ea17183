#include "safepaint/models.hpp"

#include <cmath>
#include <stdexcept>

#include "safepaint/archive.hpp"
#include "safepaint/masks.hpp"

namespace safepaint::models {

using namespace safepaint::nn;

namespace {

constexpr double kLeak = 0.2;
constexpr const char* kPyramidHeader = "safepaint-pyramid-v1";

Var squash01(const Var& x) { return add_scalar(scale(nn::tanh(x), 0.5), 0.5); }

}  // namespace

Tensor to_tensor(std::span<const Image> images) {
  if (images.empty()) throw std::invalid_argument("to_tensor: empty batch");
  const Image& f = images.front();
  Tensor t({static_cast<int>(images.size()), f.channels, f.height, f.width});
  for (size_t i = 0; i < images.size(); ++i) {
    require_same_shape(f, images[i], "to_tensor");
    std::copy(images[i].data.begin(), images[i].data.end(), t.data.begin() + i * f.data.size());
  }
  return t;
}

Tensor to_tensor(const Image& image) { return to_tensor(std::span<const Image>(&image, 1)); }

Tensor mask_tensor(std::span<const Mask> masks) {
  if (masks.empty()) throw std::invalid_argument("mask_tensor: empty batch");
  const Mask& f = masks.front();
  Tensor t({static_cast<int>(masks.size()), 1, f.height, f.width});
  for (size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].height != f.height || masks[i].width != f.width) throw ShapeError("mask_tensor: mixed mask shapes");
    for (size_t p = 0; p < f.size(); ++p) t.data[i * f.size() + p] = masks[i].data[p];
  }
  return t;
}

Tensor mask_tensor(const Mask& mask) { return mask_tensor(std::span<const Mask>(&mask, 1)); }

Image to_image(const Tensor& t, int index) {
  Image img(t.shape.h, t.shape.w, t.shape.c);
  std::copy_n(t.data.begin() + static_cast<size_t>(index) * img.data.size(), img.data.size(), img.data.begin());
  return img;
}

Generator::Generator(const GeneratorSpec& s, Rng& rng) : spec(s) {
  const int w = s.base_width;
  head = Conv2d({s.in_channels, w, 5, 1, 2, true, s.spectral}, rng);
  int ch = w;
  for (int i = 0; i < s.stages; ++i, ch *= 2) down.emplace_back(Conv2dOptions{ch, ch * 2, 3, 2, 1, true, s.spectral}, rng);
  for (int i = 0; i < s.residual_blocks; ++i)
    trunk.emplace_back(Conv2d({ch, ch, 3, 1, 1, true, s.spectral}, rng), Conv2d({ch, ch, 3, 1, 1, true, s.spectral}, rng));
  for (int i = 0; i < s.stages; ++i, ch /= 2) {
    up.emplace_back(Conv2dOptions{ch, ch / 2, 3, 1, 1, true, s.spectral}, rng);
    if (s.rwsa) attention.emplace_back(RwsaConfig{ch / 2, s.rwsa_reduction, ch / 2, s.spectral}, rng);
  }
  tail = Conv2d({w, 3, 5, 1, 2, true, s.spectral}, rng);
  if (!s.instance_norm) return;
  norms.emplace_back(w);
  for (const auto& d : down) norms.emplace_back(d.opts.out);
  for (const auto& t : trunk) {
    norms.emplace_back(t.first.opts.out);
    norms.emplace_back(t.second.opts.out);
  }
  for (const auto& u : up) norms.emplace_back(u.opts.out);
}

Var Generator::forward(const Var& x, const Tensor& mask, bool training) {
  if (x->shape().c != spec.in_channels)
    throw ShapeError("generator: expected " + std::to_string(spec.in_channels) + " input channels, got " +
                     std::to_string(x->shape().c));
  const int factor = 1 << spec.stages;
  if (x->shape().h % factor || x->shape().w % factor)
    throw ShapeError("generator: height and width must be multiples of " + std::to_string(factor));
  auto norm = norms.begin();
  auto normalize = [&](const Var& v) { return norms.empty() ? v : (norm++)->forward(v); };
  Var h = relu(normalize(head.forward(x, training)));
  for (auto& d : down) h = relu(normalize(d.forward(h, training)));
  for (auto& [a, b] : trunk) {
    const Var r = relu(normalize(a.forward(h, training)));
    h = add(h, normalize(b.forward(r, training)));
  }
  for (size_t i = 0; i < up.size(); ++i) {
    h = relu(normalize(up[i].forward(upsample_nearest2x(h), training)));
    if (spec.rwsa) h = attention[i].forward(h, mask, training);
  }
  return squash01(tail.forward(h, training));
}

void Generator::collect(const std::string& prefix, ParamRegistry& r) {
  head.collect(prefix + ".head", r);
  for (size_t i = 0; i < down.size(); ++i) down[i].collect(prefix + ".down" + std::to_string(i), r);
  for (size_t i = 0; i < trunk.size(); ++i) {
    trunk[i].first.collect(prefix + ".res" + std::to_string(i) + ".a", r);
    trunk[i].second.collect(prefix + ".res" + std::to_string(i) + ".b", r);
  }
  for (size_t i = 0; i < up.size(); ++i) up[i].collect(prefix + ".up" + std::to_string(i), r);
  for (size_t i = 0; i < attention.size(); ++i) attention[i].collect(prefix + ".rwsa" + std::to_string(i), r);
  tail.collect(prefix + ".tail", r);
  for (size_t i = 0; i < norms.size(); ++i) norms[i].collect(prefix + ".in" + std::to_string(i), r);
}

Discriminator::Discriminator(int w, Rng& rng) {
  layers.emplace_back(Conv2dOptions{3, w, 4, 2, 1, true, true}, rng);
  layers.emplace_back(Conv2dOptions{w, 2 * w, 4, 2, 1, true, true}, rng);
  layers.emplace_back(Conv2dOptions{2 * w, 4 * w, 4, 2, 1, true, true}, rng);
  layers.emplace_back(Conv2dOptions{4 * w, 1, 3, 1, 1, true, true}, rng);
}

Var Discriminator::forward(const Var& image, bool training) {
  if (image->shape().c != 3) throw ShapeError("discriminator: expects 3-channel images");
  Var h = image;
  for (size_t i = 0; i + 1 < layers.size(); ++i) h = leaky_relu(layers[i].forward(h, training), kLeak);
  return layers.back().forward(h, training);
}

void Discriminator::collect(const std::string& prefix, ParamRegistry& r) {
  for (size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".conv" + std::to_string(i), r);
}

DomainExtractor::DomainExtractor(int w, Rng& rng) {
  layers.emplace_back(Conv2dOptions{3, w, 3, 2, 1, true, false}, rng);
  layers.emplace_back(Conv2dOptions{w, 2 * w, 3, 2, 1, true, false}, rng);
  layers.emplace_back(Conv2dOptions{2 * w, 2 * w, 3, 2, 1, true, false}, rng);
  const double bound = 1.0 / std::sqrt(2.0 * w);
  Tensor hw({kDomainDim, 2 * w, 1, 1}), hb({1, kDomainDim, 1, 1});
  for (double& v : hw.data) v = rng.uniform(-bound, bound);
  for (double& v : hb.data) v = rng.uniform(-bound, bound);
  head_weight = parameter(std::move(hw));
  head_bias = parameter(std::move(hb));
}

Var DomainExtractor::forward(const Var& image, const Tensor& region) const {
  const Shape& s = image->shape();
  if (region.shape.n != s.n || region.shape.c != 1 || region.shape.h != s.h || region.shape.w != s.w)
    throw ShapeError("domain_extract: region " + region.shape.str() + " does not match image " + s.str());
  for (int n = 0; n < s.n; ++n) {
    double count = 0;
    for (size_t p = 0; p < s.plane(); ++p) count += region.data[n * s.plane() + p];
    if (count <= 0) throw std::invalid_argument("domain_extract: region is empty");
  }
  Var h = image;
  Tensor valid = region;
  for (const auto& layer : layers) {
    PartialOutput o = layer.forward(h, valid);
    h = leaky_relu(o.features, kLeak);
    valid = std::move(o.mask);
  }
  // Average over the positions that remained valid.
  Tensor inv_count({s.n, 1, 1, 1});
  const size_t plane = valid.shape.plane();
  for (int n = 0; n < s.n; ++n) {
    double count = 0;
    for (size_t p = 0; p < plane; ++p) count += valid.data[n * plane + p];
    inv_count.data[n] = 1.0 / count;
  }
  Var pooled = mul(sum_spatial(h), constant(std::move(inv_count)));
  return conv2d(pooled, head_weight, head_bias, 1, 0);
}

DomainExtractor DomainExtractor::detached() const {
  DomainExtractor d = *this;
  for (auto& l : d.layers) {
    l.weight = detach(l.weight);
    if (l.bias) l.bias = detach(l.bias);
  }
  d.head_weight = detach(head_weight);
  d.head_bias = detach(head_bias);
  return d;
}

void DomainExtractor::collect(const std::string& prefix, ParamRegistry& r) {
  for (size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".pconv" + std::to_string(i), r);
  r.add(prefix + ".head.weight", head_weight);
  r.add(prefix + ".head.bias", head_bias);
}

FeaturePyramid::FeaturePyramid(std::uint64_t seed) {
  Rng rng(seed);
  const int widths[kScales + 1] = {3, 8, 16, 32};
  for (int i = 0; i < kScales; ++i) {
    const int fan_in = widths[i] * 9;
    const double bound = std::sqrt(6.0 / fan_in);
    weights[i] = Tensor({widths[i + 1], widths[i], 3, 3});
    for (double& v : weights[i].data) v = rng.uniform(-bound, bound);
    biases[i] = Tensor({1, widths[i + 1], 1, 1}, 0.0);
  }
}

std::vector<Var> FeaturePyramid::forward(const Var& image) const {
  std::vector<Var> feats;
  Var h = add_scalar(image, -0.5);
  for (int i = 0; i < kScales; ++i) {
    if (i > 0) h = avg_pool2x(h);
    h = elu(conv2d(h, constant(weights[i]), constant(biases[i]), 1, 1));
    feats.push_back(h);
  }
  return feats;
}

void FeaturePyramid::load(const std::string& path) {
  archive::Archive a = archive::read(path, kPyramidHeader);
  for (int i = 0; i < kScales; ++i) {
    const auto& w = a.get("conv" + std::to_string(i) + ".weight");
    const auto& b = a.get("conv" + std::to_string(i) + ".bias");
    if (!(w.shape == weights[i].shape) || !(b.shape == biases[i].shape))
      throw std::runtime_error("feature pyramid weights in '" + path + "' have unexpected shapes");
    weights[i] = w;
    biases[i] = b;
  }
}

void FeaturePyramid::save(const std::string& path) const {
  archive::Archive a;
  a.header = kPyramidHeader;
  for (int i = 0; i < kScales; ++i) {
    a.tensors.emplace_back("conv" + std::to_string(i) + ".weight", weights[i]);
    a.tensors.emplace_back("conv" + std::to_string(i) + ".bias", biases[i]);
  }
  archive::write(path, a);
}

SafePaintModel::SafePaintModel(const ModelConfig& c) : cfg(c) {
  Rng g1_rng(derive_seed(c.seed, 1)), g2_rng(derive_seed(c.seed, 2)), d_rng(derive_seed(c.seed, 3)),
      p_rng(derive_seed(c.seed, 4));
  coarse = Generator(c.coarse_spec(), g1_rng);
  refine = Generator(c.refine_spec(), g2_rng);
  disc = Discriminator(c.disc_width, d_rng);
  extractor = DomainExtractor(c.extractor_width, p_rng);
}

PipelineOutputs SafePaintModel::forward(const Tensor& gt, const Tensor& mask, bool training, bool do_refine) {
  const Shape& s = gt.shape;
  if (s.c != 3) throw ShapeError("pipeline: expects 3-channel images");
  if (mask.shape.n != s.n || mask.shape.c != 1 || mask.shape.h != s.h || mask.shape.w != s.w)
    throw ShapeError("pipeline: mask " + mask.shape.str() + " does not match images " + s.str());
  Tensor keep(mask.shape), hole_input(s);
  for (size_t i = 0; i < keep.numel(); ++i) keep.data[i] = 1.0 - mask.data[i];
  const size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (size_t p = 0; p < plane; ++p) {
        const size_t i = (static_cast<size_t>(n) * s.c + c) * plane + p;
        hole_input.data[i] = mask.data[n * plane + p] ? 1.0 : gt.data[i];
      }
  Var m = constant(mask);
  Var known = mul(constant(gt), constant(keep));

  PipelineOutputs out;
  out.coarse_raw = coarse.forward(concat_channels({constant(std::move(hole_input)), m}), mask, training);
  out.coarse = add(known, mul(out.coarse_raw, m));
  if (!do_refine) return out;
  out.z_background = extractor.forward(out.coarse, keep);
  Var pattern = tile_spatial(out.z_background, s.h, s.w);
  out.refined_raw = refine.forward(concat_channels({out.coarse, m, pattern}), mask, training);
  out.refined = add(known, mul(out.refined_raw, m));
  return out;
}

ParamRegistry SafePaintModel::generator_registry() {
  ParamRegistry r;
  coarse.collect("g1", r);
  refine.collect("g2", r);
  extractor.collect("p", r);
  return r;
}

ParamRegistry SafePaintModel::discriminator_registry() {
  ParamRegistry r;
  disc.collect("d", r);
  return r;
}

ParamRegistry SafePaintModel::full_registry() {
  ParamRegistry r = generator_registry();
  ParamRegistry d = discriminator_registry();
  r.params.insert(r.params.end(), d.params.begin(), d.params.end());
  r.buffers.insert(r.buffers.end(), d.buffers.begin(), d.buffers.end());
  return r;
}

Image coarse_forward(SafePaintModel& model, const Image& input, const Mask& m) {
  require_mask_fits(input, m, "coarse_forward");
  NoGradGuard guard;
  PipelineOutputs o = model.forward(to_tensor(input), mask_tensor(m), false, false);
  return masks::composite(input, m, to_image(o.coarse_raw->value));
}

DomainVector domain_extract(const SafePaintModel& model, const Image& image, const Mask& region) {
  require_mask_fits(image, region, "domain_extract");
  if (region.count() == 0) throw std::invalid_argument("domain_extract: region is empty");
  NoGradGuard guard;
  Var z = model.extractor.forward(constant(to_tensor(image)), mask_tensor(region));
  DomainVector out{};
  std::copy_n(z->value.data.begin(), kDomainDim, out.begin());
  return out;
}

Tensor pattern_map(const DomainVector& z, int height, int width) {
  Tensor t({1, kDomainDim, height, width});
  for (int c = 0; c < kDomainDim; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) t.at(0, c, y, x) = z[c];
  return t;
}

Image refine_forward(SafePaintModel& model, const Image& coarse_img, const Mask& m, const Tensor& pattern) {
  require_mask_fits(coarse_img, m, "refine_forward");
  if (pattern.shape.c != kDomainDim || pattern.shape.h != coarse_img.height || pattern.shape.w != coarse_img.width)
    throw ShapeError("refine_forward: pattern map " + pattern.shape.str() + " does not match the image");
  NoGradGuard guard;
  Tensor mt = mask_tensor(m);
  Var x = concat_channels({constant(to_tensor(coarse_img)), constant(mt), constant(pattern)});
  Var raw = model.refine.forward(x, mt, false);
  return masks::composite(coarse_img, m, to_image(raw->value));
}

Tensor discriminate(SafePaintModel& model, const Image& image) {
  NoGradGuard guard;
  return model.disc.forward(constant(to_tensor(image)), false)->value;
}

Image inpaint(SafePaintModel& model, const Image& image, const Mask& m, bool do_refine) {
  Image coarse_img = coarse_forward(model, image, m);
  if (!do_refine) return coarse_img;
  const DomainVector zb = domain_extract(model, coarse_img, m.complement());
  return refine_forward(model, coarse_img, m, pattern_map(zb, image.height, image.width));
}

}  // namespace safepaint::models
