#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "sgpbr/image.hpp"

namespace sgpbr {

/// 10 log10(1 / MSE) over pixels with mask > 0.5 (all pixels without a
/// mask), peak value 1. Identical images give +infinity.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b,
                   const ImageBuffer* mask = nullptr) {
  if (!a.same_shape(b)) throw InputError("psnr: image shapes differ");
  if (mask && (mask->width != a.width || mask->height != a.height)) {
    throw InputError("psnr: mask shape differs");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    if (mask && !(mask->data[p * mask->channels] > 0.5)) continue;
    for (int c = 0; c < a.channels; ++c) {
      const double d = a.data[p * a.channels + c] - b.data[p * b.channels + c];
      sum += d * d;
    }
    count += static_cast<std::size_t>(a.channels);
  }
  if (count == 0) throw InputError("psnr: empty mask");
  const double mse = sum / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const int half = size / 2;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - half;
    w[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= total;
  return w;
}

/// Separable 'valid' filtering of a single-channel plane.
inline std::vector<double> filter_valid(const std::vector<double>& img, int w, int h,
                                        const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        s += k[static_cast<std::size_t>(i)] *
             img[static_cast<std::size_t>(y) * w + x + i];
      }
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        s += k[static_cast<std::size_t>(i)] *
             tmp[static_cast<std::size_t>(y + i) * ow + x];
      }
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace detail

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5), data
/// range 1, mean over all valid windows and channels.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  constexpr int kWindow = 11;
  if (!a.same_shape(b)) throw InputError("ssim: image shapes differ");
  if (a.width < kWindow || a.height < kWindow) {
    throw InputError("ssim: image smaller than the 11x11 window");
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::vector<double> k = detail::gaussian_window(kWindow, 1.5);
  const int w = a.width, h = a.height;
  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x(a.pixel_count()), y(a.pixel_count()), xx(x.size()),
        yy(x.size()), xy(x.size());
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
      x[p] = a.data[p * a.channels + c];
      y[p] = b.data[p * b.channels + c];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = detail::filter_valid(x, w, h, k);
    const auto my = detail::filter_valid(y, w, h, k);
    const auto sxx = detail::filter_valid(xx, w, h, k);
    const auto syy = detail::filter_valid(yy, w, h, k);
    const auto sxy = detail::filter_valid(xy, w, h, k);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
      const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace sgpbr
