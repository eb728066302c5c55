#pragma once

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dcdsm/tensor.hpp"

namespace dcdsm {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(max_val^2 / MSE), capped at 100 dB when MSE < 1e-12.
double psnr(const Tensor& x, const Tensor& y, double max_val = 2.0);

/// Mean local SSIM over all valid 11x11 Gaussian windows (sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range max_val) of the channel-mean
/// grayscale images.
double ssim(const Tensor& x, const Tensor& y, double max_val = 2.0);

struct SeparationMetrics {
  /// Output k was matched with source k (false) or with the other source (true).
  bool swapped = false;
  double psnr1 = 0.0, psnr2 = 0.0;
  double ssim1 = 0.0, ssim2 = 0.0;

  double mean_psnr() const { return 0.5 * (psnr1 + psnr2); }
  double mean_ssim() const { return 0.5 * (ssim1 + ssim2); }
};

/// Keeps the output-to-source assignment with the larger mean PSNR; ties go
/// to the identity. psnr1/ssim1 always refer to source 1.
SeparationMetrics evaluate_separation(const std::pair<Tensor, Tensor>& outputs,
                                      const std::pair<Tensor, Tensor>& sources, double max_val = 2.0);

struct MetricReport {
  std::vector<std::string> ids;
  std::vector<SeparationMetrics> samples;

  double mean_psnr() const;
  double mean_ssim() const;
  void add(std::string id, const SeparationMetrics& m);
};

/// Human-readable table, one row per sample plus a mean row.
void write_metric_table(std::ostream& os, const MetricReport& r);
/// Header: sample,assignment,psnr1,psnr2,ssim1,ssim2,mean_psnr,mean_ssim
void write_metric_csv(std::ostream& os, const MetricReport& r);

}  // namespace dcdsm
