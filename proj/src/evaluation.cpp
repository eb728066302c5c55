#include "dcdsm/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <vector>

#include "dcdsm/error.hpp"

namespace dcdsm {

double psnr(const Tensor& x, const Tensor& y, double max_val) {
  require_same_shape(x, y, "psnr");
  if (!(max_val > 0.0)) throw InvalidArgument("psnr: max_val must be positive");
  const double m = mse(x, y);
  if (m < 1e-12) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / m));
}

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> g(kWindow);
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - (kWindow - 1) / 2.0;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Channel-mean grayscale of a [H,W] or [C,H,W] image.
std::vector<double> grayscale(const Tensor& x, std::size_t& h, std::size_t& w) {
  if (x.rank() != 2 && x.rank() != 3) throw ShapeError("ssim: expected [H,W] or [C,H,W], got " + shape_str(x.shape()));
  h = x.dim(x.rank() - 2);
  w = x.dim(x.rank() - 1);
  const std::size_t c = x.rank() == 3 ? x.dim(0) : 1;
  std::vector<double> g(h * w, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t q = 0; q < h * w; ++q) g[q] += x[ch * h * w + q];
  for (auto& v : g) v /= static_cast<double>(c);
  return g;
}

// Valid-mode separable Gaussian filtering.
std::vector<double> filter(const std::vector<double>& img, std::size_t h, std::size_t w, const std::vector<double>& g) {
  const std::size_t ho = h - kWindow + 1, wo = w - kWindow + 1;
  std::vector<double> rows(h * wo, 0.0), out(ho * wo, 0.0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < wo; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) s += g[k] * img[i * w + j + k];
      rows[i * wo + j] = s;
    }
  for (std::size_t i = 0; i < ho; ++i)
    for (std::size_t j = 0; j < wo; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) s += g[k] * rows[(i + k) * wo + j];
      out[i * wo + j] = s;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& x, const Tensor& y, double max_val) {
  require_same_shape(x, y, "ssim");
  std::size_t h = 0, w = 0;
  const std::vector<double> a = grayscale(x, h, w), b = grayscale(y, h, w);
  if (h < kWindow || w < kWindow)
    throw InvalidArgument("ssim: image " + shape_str(x.shape()) + " is smaller than the 11x11 window");
  const double c1 = (0.01 * max_val) * (0.01 * max_val), c2 = (0.03 * max_val) * (0.03 * max_val);
  const auto g = gaussian_window();
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t q = 0; q < a.size(); ++q) {
    aa[q] = a[q] * a[q];
    bb[q] = b[q] * b[q];
    ab[q] = a[q] * b[q];
  }
  const auto mu_a = filter(a, h, w, g), mu_b = filter(b, h, w, g);
  const auto e_aa = filter(aa, h, w, g), e_bb = filter(bb, h, w, g), e_ab = filter(ab, h, w, g);
  double total = 0.0;
  for (std::size_t q = 0; q < mu_a.size(); ++q) {
    const double va = e_aa[q] - mu_a[q] * mu_a[q], vb = e_bb[q] - mu_b[q] * mu_b[q];
    const double cov = e_ab[q] - mu_a[q] * mu_b[q];
    const double num = (2.0 * mu_a[q] * mu_b[q] + c1) * (2.0 * cov + c2);
    const double den = (mu_a[q] * mu_a[q] + mu_b[q] * mu_b[q] + c1) * (va + vb + c2);
    total += num / den;
  }
  return total / static_cast<double>(mu_a.size());
}

SeparationMetrics evaluate_separation(const std::pair<Tensor, Tensor>& outputs,
                                      const std::pair<Tensor, Tensor>& sources, double max_val) {
  const double id1 = psnr(outputs.first, sources.first, max_val), id2 = psnr(outputs.second, sources.second, max_val);
  const double sw1 = psnr(outputs.second, sources.first, max_val), sw2 = psnr(outputs.first, sources.second, max_val);
  SeparationMetrics m;
  m.swapped = sw1 + sw2 > id1 + id2;
  const Tensor& o1 = m.swapped ? outputs.second : outputs.first;
  const Tensor& o2 = m.swapped ? outputs.first : outputs.second;
  m.psnr1 = m.swapped ? sw1 : id1;
  m.psnr2 = m.swapped ? sw2 : id2;
  m.ssim1 = ssim(o1, sources.first, max_val);
  m.ssim2 = ssim(o2, sources.second, max_val);
  return m;
}

double MetricReport::mean_psnr() const {
  double s = 0.0;
  for (const auto& m : samples) s += m.mean_psnr();
  return samples.empty() ? 0.0 : s / static_cast<double>(samples.size());
}

double MetricReport::mean_ssim() const {
  double s = 0.0;
  for (const auto& m : samples) s += m.mean_ssim();
  return samples.empty() ? 0.0 : s / static_cast<double>(samples.size());
}

void MetricReport::add(std::string id, const SeparationMetrics& m) {
  ids.push_back(std::move(id));
  samples.push_back(m);
}

void write_metric_table(std::ostream& os, const MetricReport& r) {
  os << std::left << std::setw(14) << "sample" << std::setw(10) << "assign" << std::right << std::setw(10) << "PSNR1"
     << std::setw(10) << "PSNR2" << std::setw(9) << "SSIM1" << std::setw(9) << "SSIM2" << '\n';
  os << std::fixed;
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const auto& m = r.samples[i];
    os << std::left << std::setw(14) << r.ids[i] << std::setw(10) << (m.swapped ? "swapped" : "identity") << std::right
       << std::setprecision(4) << std::setw(10) << m.psnr1 << std::setw(10) << m.psnr2 << std::setw(9) << m.ssim1
       << std::setw(9) << m.ssim2 << '\n';
  }
  os << "mean PSNR " << std::setprecision(4) << r.mean_psnr() << " dB, mean SSIM " << r.mean_ssim() << '\n';
  os.unsetf(std::ios::floatfield);
}

void write_metric_csv(std::ostream& os, const MetricReport& r) {
  os << "sample,assignment,psnr1,psnr2,ssim1,ssim2,mean_psnr,mean_ssim\n" << std::setprecision(10);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const auto& m = r.samples[i];
    os << r.ids[i] << ',' << (m.swapped ? "swapped" : "identity") << ',' << m.psnr1 << ',' << m.psnr2 << ','
       << m.ssim1 << ',' << m.ssim2 << ',' << m.mean_psnr() << ',' << m.mean_ssim() << '\n';
  }
}

}  // namespace dcdsm
