#pragma once

#include <Eigen/Dense>
#include <limits>

#include "avc/dynamic_attention.hpp"
#include "avc/tensor.hpp"

// Evaluation metrics: PSNR, SSIM, landmark distance, plus the 2-D PCA
// projection of real vs. generated frame distributions.
namespace avc::metrics {

inline double psnr(const Tensor& real, const Tensor& generated, double max_value = 1.0) {
  if (!real.same_shape(generated)) throw std::invalid_argument("psnr: shape mismatch");
  if (!(max_value > 0.0)) throw std::invalid_argument("psnr: max_value must be > 0");
  double mse = 0.0;
  for (std::size_t i = 0; i < real.numel(); ++i) {
    double d = real[i] - generated[i];
    mse += d * d;
  }
  mse /= double(real.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse);
}

namespace detail {
inline std::vector<double> gaussian_kernel(std::size_t window, double sigma) {
  std::vector<double> k(window);
  double c = (double(window) - 1.0) / 2.0, sum = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    double d = double(i) - c;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// [C,H,W] -> channel-mean grayscale [H,W]
inline Tensor to_gray(const Tensor& img) {
  if (img.rank() == 2) return img;
  if (img.rank() != 3) throw std::invalid_argument("expected [C,H,W] or [H,W] image");
  Tensor g({img.shape[1], img.shape[2]});
  for (std::size_t y = 0; y < g.shape[0]; ++y)
    for (std::size_t x = 0; x < g.shape[1]; ++x) {
      double s = 0.0;
      for (std::size_t c = 0; c < img.shape[0]; ++c) s += img.at3(c, y, x);
      g.at2(y, x) = s / double(img.shape[0]);
    }
  return g;
}
}  // namespace detail

// Mean local SSIM over all fully-contained Gaussian windows (sigma 1.5),
// standard constants C1=(k1 L)^2, C2=(k2 L)^2.
inline double ssim(const Tensor& real, const Tensor& generated, std::size_t window = 11,
                   double k1 = 0.01, double k2 = 0.03, double L = 1.0) {
  if (!real.same_shape(generated)) throw std::invalid_argument("ssim: shape mismatch");
  Tensor x = detail::to_gray(real);
  Tensor y = detail::to_gray(generated);
  std::size_t H = x.shape[0], W = x.shape[1];
  if (H < window || W < window)
    throw std::invalid_argument("ssim: image smaller than window");
  auto k = detail::gaussian_kernel(window, 1.5);
  double c1 = (k1 * L) * (k1 * L), c2 = (k2 * L) * (k2 * L);
  double acc = 0.0;
  std::size_t cnt = 0;
  for (std::size_t oy = 0; oy + window <= H; ++oy)
    for (std::size_t ox = 0; ox + window <= W; ++ox) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < window; ++i)
        for (std::size_t j = 0; j < window; ++j) {
          double w = k[i] * k[j];
          double xv = x.at2(oy + i, ox + j), yv = y.at2(oy + i, ox + j);
          mx += w * xv;
          my += w * yv;
          sxx += w * xv * xv;
          syy += w * yv * yv;
          sxy += w * xv * yv;
        }
      double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
      double den = (mx * mx + my * my + c1) * (vx + vy + c2);
      acc += num / den;
      ++cnt;
    }
  return acc / double(cnt);
}

// Mean Euclidean distance over frames and landmark points.
// Landmark tensors are [n,k,2] with (x, y) pixel coordinates.
inline double lmd(const Tensor& real_landmarks, const Tensor& generated_landmarks) {
  if (!real_landmarks.same_shape(generated_landmarks) || real_landmarks.rank() != 3 ||
      real_landmarks.shape[2] != 2)
    throw std::invalid_argument("lmd: landmark shape mismatch");
  std::size_t n = real_landmarks.shape[0], kpts = real_landmarks.shape[1];
  double acc = 0.0;
  for (std::size_t i = 0; i < n * kpts; ++i) {
    double dx = real_landmarks[2 * i] - generated_landmarks[2 * i];
    double dy = real_landmarks[2 * i + 1] - generated_landmarks[2 * i + 1];
    acc += std::sqrt(dx * dx + dy * dy);
  }
  return acc / double(n * kpts);
}

struct DetectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Landmark detector for this repository's renderer family: thresholds the
// dark mouth ellipse inside the region and reads off its extent. Returns
// [4,2]: left corner, right corner, top midpoint, bottom midpoint.
inline Tensor extract_landmarks(const Tensor& frame, const attn::Region& region,
                                double threshold = 0.25) {
  Tensor g = detail::to_gray(frame);
  region.validate(g.shape[0], g.shape[1]);
  std::size_t xmin = g.shape[1], xmax = 0, ymin = g.shape[0], ymax = 0;
  std::size_t dark = 0, total = 0;
  for (std::size_t y = region.y0; y < region.y1; ++y)
    for (std::size_t x = region.x0; x < region.x1; ++x) {
      ++total;
      if (g.at2(y, x) < threshold) {
        ++dark;
        xmin = std::min(xmin, x); xmax = std::max(xmax, x);
        ymin = std::min(ymin, y); ymax = std::max(ymax, y);
      }
    }
  if (dark == 0) throw DetectionError("no mouth pixels found in region");
  if (dark == total) throw DetectionError("region has no contrast (all pixels dark)");
  // Boundary-extent estimates: a dark pixel's true edge lies within half a
  // pixel of the cell boundary, so the extent is within 1 px of the drawn
  // ellipse extent.
  double cx = (double(xmin) + double(xmax) + 1.0) / 2.0;
  double cy = (double(ymin) + double(ymax) + 1.0) / 2.0;
  Tensor lm({4, 2});
  lm.at2(0, 0) = double(xmin); lm.at2(0, 1) = cy;
  lm.at2(1, 0) = double(xmax) + 1.0; lm.at2(1, 1) = cy;
  lm.at2(2, 0) = cx; lm.at2(2, 1) = double(ymin);
  lm.at2(3, 0) = cx; lm.at2(3, 1) = double(ymax) + 1.0;
  return lm;
}

struct PcaProjection {
  Tensor real_points;       // [n,2]
  Tensor generated_points;  // [m,2]
  std::vector<double> eigenvalues;  // descending, full spectrum
  double total_variance = 0.0;
};

// Fits PCA on the union of both frame sets (flattened) and projects both
// onto the top-2 components.
inline PcaProjection pca_project_2d(const std::vector<Tensor>& real_frames,
                                    const std::vector<Tensor>& generated_frames) {
  if (real_frames.size() < 3 || generated_frames.size() < 3)
    throw std::invalid_argument("pca_project_2d: need at least 3 frames per set");
  std::size_t d = real_frames[0].numel();
  std::size_t n = real_frames.size(), m = generated_frames.size();
  std::size_t N = n + m;
  Eigen::MatrixXd X(N, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) X(i, j) = real_frames[i][j];
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) X(n + i, j) = generated_frames[i][j];
  Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;
  // Dual (Gram) formulation: X X^T shares its nonzero spectrum with the
  // covariance, and projections onto a unit Gram eigenvector u are
  // sqrt((N-1) lambda) * u. Keeps the eigensolve at N x N for big images.
  Eigen::MatrixXd gram = (X * X.transpose()) / double(N - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.info() != Eigen::Success) throw std::runtime_error("PCA eigensolve failed");
  PcaProjection out;
  out.real_points = Tensor({n, 2});
  out.generated_points = Tensor({m, 2});
  for (int comp = 0; comp < 2; ++comp) {
    double lambda = std::max(es.eigenvalues()(N - 1 - comp), 0.0);
    Eigen::VectorXd coords =
        std::sqrt(double(N - 1) * lambda) * es.eigenvectors().col(N - 1 - comp);
    for (std::size_t i = 0; i < n; ++i) out.real_points.at2(i, comp) = coords(i);
    for (std::size_t i = 0; i < m; ++i) out.generated_points.at2(i, comp) = coords(n + i);
  }
  for (long i = long(N) - 1; i >= 0; --i)
    out.eigenvalues.push_back(std::max(es.eigenvalues()(i), 0.0));
  out.total_variance = gram.trace();
  return out;
}

struct MetricReport {
  std::vector<double> psnr_db, ssim_v, lmd_px;  // per sequence
  double psnr_mean = 0.0, ssim_mean = 0.0, lmd_mean = 0.0;

  void finalize() {
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return v.empty() ? 0.0 : s / double(v.size());
    };
    psnr_mean = mean(psnr_db);
    ssim_mean = mean(ssim_v);
    lmd_mean = mean(lmd_px);
  }
};

}  // namespace avc::metrics
