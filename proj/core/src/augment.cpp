#include "ddmc/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>

#include "ddmc/errors.hpp"
#include "ddmc/rng.hpp"

namespace ddmc {
namespace {

constexpr double kCropFractions[] = {0.6, 0.7, 0.8};
constexpr double kCropAnchors[] = {0.0, 0.5, 1.0};
constexpr double kJitterStrengths[] = {0.25, 0.5, 0.75, 1.0};
constexpr double kNoiseSigmas[] = {0.02, 0.05, 0.08, 0.1};

std::string fmt(const char* f, ...) {
  char buf[96];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Clockwise quarter turn of a square image: out(y,x) = in(h-1-x, y).
void rotate_cw(std::vector<double>& img, std::int64_t h, std::int64_t w,
               std::int64_t c) {
  std::vector<double> out(img.size());
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t ch = 0; ch < c; ++ch)
        out[std::size_t((y * w + x) * c + ch)] =
            img[std::size_t(((h - 1 - x) * w + y) * c + ch)];
  img = std::move(out);
}

void hflip(std::vector<double>& img, std::int64_t h, std::int64_t w,
           std::int64_t c) {
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w / 2; ++x)
      for (std::int64_t ch = 0; ch < c; ++ch)
        std::swap(img[std::size_t((y * w + x) * c + ch)],
                  img[std::size_t((y * w + (w - 1 - x)) * c + ch)]);
}

// Crop an anchored window and bilinearly resize it back to h x w. With
// fraction 1.0 the sample points land exactly on the source grid, so the
// image passes through unchanged.
void crop_resize(std::vector<double>& img, std::int64_t h, std::int64_t w,
                 std::int64_t c, double fraction, double ay, double ax) {
  const auto ch_ = std::max<std::int64_t>(1, std::llround(fraction * double(h)));
  const auto cw_ = std::max<std::int64_t>(1, std::llround(fraction * double(w)));
  const auto y0 = std::llround(ay * double(h - ch_));
  const auto x0 = std::llround(ax * double(w - cw_));
  std::vector<double> out(img.size());
  for (std::int64_t yo = 0; yo < h; ++yo) {
    const double sy = (double(yo) + 0.5) * double(ch_) / double(h) - 0.5;
    const double fy = std::floor(sy);
    const double dy = sy - fy;
    const auto iy0 = std::clamp<std::int64_t>(std::int64_t(fy), 0, ch_ - 1);
    const auto iy1 = std::clamp<std::int64_t>(std::int64_t(fy) + 1, 0, ch_ - 1);
    for (std::int64_t xo = 0; xo < w; ++xo) {
      const double sx = (double(xo) + 0.5) * double(cw_) / double(w) - 0.5;
      const double fx = std::floor(sx);
      const double dx = sx - fx;
      const auto ix0 = std::clamp<std::int64_t>(std::int64_t(fx), 0, cw_ - 1);
      const auto ix1 = std::clamp<std::int64_t>(std::int64_t(fx) + 1, 0, cw_ - 1);
      for (std::int64_t chn = 0; chn < c; ++chn) {
        auto at = [&](std::int64_t iy, std::int64_t ix) {
          return img[std::size_t(((y0 + iy) * w + (x0 + ix)) * c + chn)];
        };
        out[std::size_t((yo * w + xo) * c + chn)] =
            (1.0 - dy) * ((1.0 - dx) * at(iy0, ix0) + dx * at(iy0, ix1)) +
            dy * ((1.0 - dx) * at(iy1, ix0) + dx * at(iy1, ix1));
      }
    }
  }
  img = std::move(out);
}

void channel_jitter(std::vector<double>& img, std::int64_t h, std::int64_t w,
                    std::int64_t c, double s, Rng& rng) {
  for (std::int64_t chn = 0; chn < c; ++chn) {
    const double scale = rng.uniform(1.0 - 0.5 * s, 1.0 + 0.5 * s);
    const double offset = rng.uniform(-0.2 * s, 0.2 * s);
    for (std::int64_t p = 0; p < h * w; ++p) {
      auto& v = img[std::size_t(p * c + chn)];
      v = clamp01(v * scale + offset);
    }
  }
}

void pixel_noise(std::vector<double>& img, double sigma, Rng& rng) {
  for (auto& v : img) v = clamp01(v + rng.uniform(-sigma, sigma));
}

// Sequence indices enumerate length-1 ops first, then all length-2 and
// length-3 sequences in base-|space| order.
std::vector<AugmentationOp> decode_sequence(std::int64_t s,
                                            const std::vector<AugmentationOp>& space) {
  const auto n = std::int64_t(space.size());
  if (s < n) return {space[std::size_t(s)]};
  s -= n;
  if (s < n * n)
    return {space[std::size_t(s / n)], space[std::size_t(s % n)]};
  s -= n * n;
  return {space[std::size_t(s / (n * n))], space[std::size_t((s / n) % n)],
          space[std::size_t(s % n)]};
}

}  // namespace

std::string AugmentationOp::describe() const {
  switch (kind) {
    case AugKind::Rotate90:
      return fmt("rotate90(turns=%d)", quarter_turns);
    case AugKind::HorizontalFlip:
      return "hflip";
    case AugKind::CropResize:
      return fmt("crop(frac=%.2f,ay=%.1f,ax=%.1f)", crop_fraction,
                 crop_anchor_y, crop_anchor_x);
    case AugKind::ChannelJitter:
      return fmt("jitter(strength=%.2f)", jitter_strength);
    case AugKind::PixelNoise:
      return fmt("noise(sigma=%.3f)", noise_sigma);
  }
  return "?";
}

std::string AugmentationPipeline::describe() const {
  std::string out;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i) out += "+";
    out += ops[i].describe();
  }
  return out;
}

std::vector<AugmentationOp> augmentation_op_space() {
  std::vector<AugmentationOp> space;
  for (int t = 1; t <= 3; ++t) {
    AugmentationOp op;
    op.kind = AugKind::Rotate90;
    op.quarter_turns = t;
    space.push_back(op);
  }
  {
    AugmentationOp op;
    op.kind = AugKind::HorizontalFlip;
    space.push_back(op);
  }
  for (double f : kCropFractions)
    for (double ay : kCropAnchors)
      for (double ax : kCropAnchors) {
        AugmentationOp op;
        op.kind = AugKind::CropResize;
        op.crop_fraction = f;
        op.crop_anchor_y = ay;
        op.crop_anchor_x = ax;
        space.push_back(op);
      }
  for (double s : kJitterStrengths) {
    AugmentationOp op;
    op.kind = AugKind::ChannelJitter;
    op.jitter_strength = s;
    space.push_back(op);
  }
  for (double sg : kNoiseSigmas) {
    AugmentationOp op;
    op.kind = AugKind::PixelNoise;
    op.noise_sigma = sg;
    space.push_back(op);
  }
  return space;
}

std::int64_t pipeline_capacity() {
  const auto n = std::int64_t(augmentation_op_space().size());
  return n + n * n + n * n * n;
}

std::vector<AugmentationPipeline> sample_pipelines(int k, std::uint64_t seed) {
  if (k < 0) throw ConfigError("sample_pipelines: negative count");
  const auto space = augmentation_op_space();
  const auto cap = pipeline_capacity();
  if (std::int64_t(k) > cap)
    throw ConfigError("sample_pipelines: " + std::to_string(k) +
                      " pipelines requested but only " + std::to_string(cap) +
                      " distinct op sequences exist");

  // Partial Fisher-Yates over all sequence indices gives a uniform sample
  // without replacement in O(k) swaps.
  std::vector<std::int64_t> ids(static_cast<std::size_t>(cap));
  for (std::int64_t i = 0; i < cap; ++i) ids[std::size_t(i)] = i;
  Rng rng(derive_seed(seed, 0));
  std::vector<AugmentationPipeline> out;
  out.reserve(std::size_t(k));
  for (int i = 0; i < k; ++i) {
    const auto j = std::int64_t(i) +
                   std::int64_t(rng.next_below(std::uint64_t(cap - i)));
    std::swap(ids[std::size_t(i)], ids[std::size_t(j)]);
    AugmentationPipeline p;
    p.ops = decode_sequence(ids[std::size_t(i)], space);
    p.seed = derive_seed(seed, std::uint64_t(i) + 1);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> apply_pipeline(const AugmentationPipeline& p,
                                   const std::vector<double>& images,
                                   std::int64_t n, std::int64_t h,
                                   std::int64_t w, std::int64_t c) {
  const auto d = h * w * c;
  if (n < 0 || d <= 0 || std::int64_t(images.size()) != n * d)
    throw DimensionError("apply_pipeline: batch size does not match n*h*w*c");
  for (const auto& op : p.ops)
    if (op.kind == AugKind::Rotate90 && h != w)
      throw DimensionError("apply_pipeline: rotate90 needs square images");

  std::vector<double> out(images.size());
  std::vector<double> img(static_cast<std::size_t>(d));
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(images.data() + i * d, d, img.data());
    for (std::size_t j = 0; j < p.ops.size(); ++j) {
      const auto& op = p.ops[j];
      switch (op.kind) {
        case AugKind::Rotate90:
          for (int t = 0; t < op.quarter_turns; ++t) rotate_cw(img, h, w, c);
          break;
        case AugKind::HorizontalFlip:
          hflip(img, h, w, c);
          break;
        case AugKind::CropResize:
          crop_resize(img, h, w, c, op.crop_fraction, op.crop_anchor_y,
                      op.crop_anchor_x);
          break;
        case AugKind::ChannelJitter: {
          Rng rng(derive_seed(derive_seed(p.seed, j), std::uint64_t(i)));
          channel_jitter(img, h, w, c, op.jitter_strength, rng);
          break;
        }
        case AugKind::PixelNoise: {
          Rng rng(derive_seed(derive_seed(p.seed, j), std::uint64_t(i)));
          pixel_noise(img, op.noise_sigma, rng);
          break;
        }
      }
    }
    std::copy_n(img.data(), d, out.data() + i * d);
  }
  return out;
}

MixingWeights::MixingWeights(int k, double initial_weight)
    : raw(Tensor::zeros({1, 1})) {
  if (k < 1) throw ConfigError("MixingWeights: k must be at least 1");
  if (!(initial_weight > 0.0 && initial_weight < 1.0))
    throw ConfigError("MixingWeights: initial weight must lie in (0,1)");
  const double logit = std::log(initial_weight / (1.0 - initial_weight));
  raw = Tensor::param({1, k}, std::vector<double>(std::size_t(k), logit));
}

Tensor MixingWeights::weights() const { return logistic(raw); }

Tensor mix(const Tensor& clean, const Tensor& augmented, const Tensor& w_k) {
  if (clean.shape() != augmented.shape())
    throw DimensionError("mix: clean and augmented shapes differ");
  if (w_k.numel() != 1) throw DimensionError("mix: weight must be a scalar");
  const Tensor one = Tensor::scalar(1.0);
  return add(mul(clean, w_k), mul(augmented, sub(one, w_k)));
}

Tensor mix(const Tensor& clean, const Tensor& augmented,
           const MixingWeights& w, int k) {
  if (k < 0 || k >= w.k()) throw DimensionError("mix: representation index out of range");
  return mix(clean, augmented, slice_cols(w.weights(), k, k + 1));
}

Tensor hsic(const Tensor& xa, const Tensor& xb) {
  const auto n = xa.shape()[0];
  if (xb.shape()[0] != n) throw DimensionError("hsic: row counts differ");
  if (n < 2) throw DimensionError("hsic: needs at least 2 rows");

  // H = I - (1/n) 1 1^T centers across rows; constant, so it carries no
  // gradient of its own.
  std::vector<double> hdat(std::size_t(n * n), -1.0 / double(n));
  for (std::int64_t i = 0; i < n; ++i)
    hdat[std::size_t(i * n + i)] += 1.0;
  const Tensor H = Tensor::from({n, n}, std::move(hdat));

  const Tensor ga = matmul(xa, transpose(xa));
  const Tensor gb = matmul(xb, transpose(xb));
  const double m = double(n - 1) * double(n - 1);
  return scale(trace(matmul(matmul(ga, H), matmul(gb, H))), m);
}

Tensor coarse_loss(const std::vector<Tensor>& mixed) {
  const auto k = std::int64_t(mixed.size());
  if (k <= 1) return Tensor::scalar(0.0);
  const auto n = mixed[0].shape()[0];
  for (const auto& m : mixed)
    if (m.shape()[0] != n) throw DimensionError("coarse_loss: row counts differ");
  if (n < 2) throw DimensionError("coarse_loss: needs at least 2 rows");

  std::vector<double> hdat(std::size_t(n * n), -1.0 / double(n));
  for (std::int64_t i = 0; i < n; ++i)
    hdat[std::size_t(i * n + i)] += 1.0;
  const Tensor H = Tensor::from({n, n}, std::move(hdat));

  // Cache each batch's centered Gram so the pair loop costs one n^3 matmul
  // per ordered pair instead of re-deriving Grams from n x d batches.
  std::vector<Tensor> gh;
  gh.reserve(std::size_t(k));
  for (const auto& m : mixed)
    gh.push_back(matmul(matmul(m, transpose(m)), H));

  const double mult = double(n - 1) * double(n - 1);
  Tensor total = Tensor::scalar(0.0);
  bool first = true;
  for (std::int64_t a = 0; a < k; ++a)
    for (std::int64_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const Tensor term =
          scale(trace(matmul(gh[std::size_t(a)], gh[std::size_t(b)])), mult);
      total = first ? term : add(total, term);
      first = false;
    }
  return total;
}

}  // namespace ddmc
