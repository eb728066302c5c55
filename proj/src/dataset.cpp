#include "dcdsm/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "dcdsm/error.hpp"

namespace dcdsm {

const char* source_kind_name(SourceKind k) {
  switch (k) {
    case SourceKind::StripesBlobs: return "stripes-blobs";
    case SourceKind::RainToy: return "rain-toy";
    case SourceKind::SnowToy: return "snow-toy";
  }
  return "?";
}

SourceKind parse_source_kind(const std::string& name) {
  for (SourceKind k : {SourceKind::StripesBlobs, SourceKind::RainToy, SourceKind::SnowToy})
    if (name == source_kind_name(k)) return k;
  throw InvalidArgument("unknown dataset kind '" + name + "' (expected stripes-blobs, rain-toy or snow-toy)");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Validation: return "val";
  }
  return "?";
}

void DatasetSpec::validate() const {
  if (size < 8 || (size & (size - 1)) != 0)
    throw InvalidArgument("dataset size must be a power of two >= 8, got " + std::to_string(size));
  if (!(a_min >= 0.0 && a_min <= a_max && a_max <= 1.0))
    throw InvalidArgument("dataset mixing range must satisfy 0 <= a_min <= a_max <= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgument("dataset tau must lie in (0, 1]");
}

namespace {

constexpr std::size_t kChannels = 3;

Tensor stripes(RngStream& rng, std::size_t n) {
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double freq = rng.uniform(1.5, 4.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  Tensor img({kChannels, n, n});
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double mean = rng.uniform(-0.3, 0.3), amp = rng.uniform(0.3, 0.7);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double u = (std::cos(theta) * j + std::sin(theta) * i) / static_cast<double>(n);
        img.at({c, i, j}) = mean + amp * std::sin(2.0 * std::numbers::pi * freq * u + phase);
      }
  }
  return img;
}

// Smooth field: per-channel affine ramp plus a few wide Gaussian bumps.
Tensor smooth_field(RngStream& rng, std::size_t n, std::size_t bumps_min, std::size_t bumps_max, double base_lo,
                    double base_hi) {
  Tensor img({kChannels, n, n});
  const double nd = static_cast<double>(n);
  double base[kChannels], gx[kChannels], gy[kChannels];
  for (std::size_t c = 0; c < kChannels; ++c) {
    base[c] = rng.uniform(base_lo, base_hi);
    gx[c] = rng.uniform(-0.3, 0.3);
    gy[c] = rng.uniform(-0.3, 0.3);
  }
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        img.at({c, i, j}) = base[c] + gx[c] * (j / nd - 0.5) + gy[c] * (i / nd - 0.5);
  const std::size_t count = bumps_min + rng.uniform_int(bumps_max - bumps_min + 1);
  for (std::size_t b = 0; b < count; ++b) {
    const double cy = rng.uniform(0.0, nd), cx = rng.uniform(0.0, nd);
    const double sigma = rng.uniform(0.1, 0.22) * nd;
    double amp[kChannels];
    for (auto& a : amp) a = rng.uniform(-0.9, 0.9);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double r2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
        const double g = std::exp(-r2 / (2.0 * sigma * sigma));
        for (std::size_t c = 0; c < kChannels; ++c) img.at({c, i, j}) += amp[c] * g;
      }
  }
  return clamp(img, -1.0, 1.0);
}

Tensor streak_mask(RngStream& rng, std::size_t n) {
  Tensor m({n, n});
  const double nd = static_cast<double>(n);
  const double base_angle = rng.uniform(0.35, 0.6) * std::numbers::pi;
  const std::size_t count = 12 + rng.uniform_int(10);
  for (std::size_t s = 0; s < count; ++s) {
    const double angle = base_angle + rng.uniform(-0.05, 0.05) * std::numbers::pi;
    const double len = rng.uniform(0.2, 0.45) * nd;
    const double y0 = rng.uniform(0.0, nd), x0 = rng.uniform(0.0, nd);
    for (double r = 0.0; r <= len; r += 0.5) {
      const long y = std::lround(y0 + r * std::sin(angle)), x = std::lround(x0 + r * std::cos(angle));
      if (y >= 0 && x >= 0 && y < static_cast<long>(n) && x < static_cast<long>(n)) m.at({std::size_t(y), std::size_t(x)}) = 1.0;
    }
  }
  return m;
}

Tensor dot_mask(RngStream& rng, std::size_t n) {
  Tensor m({n, n});
  const double nd = static_cast<double>(n);
  const std::size_t count = static_cast<std::size_t>(nd * nd / 30.0) + rng.uniform_int(n);
  for (std::size_t d = 0; d < count; ++d) {
    const double cy = rng.uniform(0.0, nd), cx = rng.uniform(0.0, nd), r = rng.uniform(0.6, 1.6);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if ((i + 0.5 - cy) * (i + 0.5 - cy) + (j + 0.5 - cx) * (j + 0.5 - cx) <= r * r) m.at({i, j}) = 1.0;
  }
  return m;
}

// Overlay layer: a near-white tint on the mask and -1 elsewhere.
Tensor overlay_layer(RngStream& rng, const Tensor& mask, double lo) {
  const std::size_t n = mask.dim(0);
  Tensor img({kChannels, n, n}, -1.0);
  double tint[kChannels];
  const double level = rng.uniform(lo, 1.0);
  for (auto& t : tint) t = std::min(1.0, level + rng.uniform(-0.05, 0.05));
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t q = 0; q < n * n; ++q)
      if (mask[q] != 0.0) img[c * n * n + q] = tint[c];
  return img;
}

struct MaskedPair {
  Tensor background, overlay, mask;
};

MaskedPair masked_sources(RngStream& rng, const DatasetSpec& spec) {
  RngStream bg_rng = rng.child("background"), ov_rng = rng.child("overlay");
  MaskedPair p;
  p.background = smooth_field(bg_rng, spec.size, 2, 4, -0.5, 0.3);
  p.mask = spec.kind == SourceKind::RainToy ? streak_mask(ov_rng, spec.size) : dot_mask(ov_rng, spec.size);
  p.overlay = overlay_layer(ov_rng, p.mask, spec.kind == SourceKind::RainToy ? 0.6 : 0.85);
  return p;
}

}  // namespace

std::pair<Tensor, Tensor> synth_sources(RngStream& rng, const DatasetSpec& spec) {
  spec.validate();
  if (spec.kind == SourceKind::StripesBlobs) {
    RngStream r1 = rng.child("stripes"), r2 = rng.child("blobs");
    return {clamp(stripes(r1, spec.size), -1.0, 1.0), smooth_field(r2, spec.size, 2, 4, -0.6, 0.0)};
  }
  MaskedPair p = masked_sources(rng, spec);
  return {std::move(p.background), std::move(p.overlay)};
}

Tensor mix_linear(const Tensor& s1, const Tensor& s2, double a) {
  require_same_shape(s1, s2, "mix_linear");
  if (!(a >= 0.0 && a <= 1.0)) throw InvalidArgument("mix_linear: coefficient " + std::to_string(a) + " outside [0, 1]");
  Tensor out(s1.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * s1[i] + (1.0 - a) * s2[i];
  return out;
}

Tensor mix_mask(const Tensor& background, const Tensor& overlay, const Tensor& mask, double tau) {
  require_same_shape(background, overlay, "mix_mask");
  if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgument("mix_mask: tau " + std::to_string(tau) + " outside (0, 1]");
  for (double v : mask.data())
    if (v != 0.0 && v != 1.0) throw InvalidArgument("mix_mask: mask must be binary");
  const std::size_t plane = mask.size();
  if (mask.shape() != background.shape() && (background.size() % plane != 0 || mask.rank() != 2 ||
                                              background.rank() < 2 ||
                                              mask.dim(0) != background.dim(background.rank() - 2) ||
                                              mask.dim(1) != background.dim(background.rank() - 1)))
    throw InvalidArgument("mix_mask: mask " + shape_str(mask.shape()) + " does not fit " +
                          shape_str(background.shape()));
  Tensor out(background.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = mask[i % plane];
    out[i] = (1.0 - tau * m) * background[i] + tau * m * overlay[i];
  }
  return out;
}

MixtureSample make_sample(const DatasetSpec& spec, Split split, std::size_t index) {
  spec.validate();
  RngStream rng = RngStream(spec.seed, static_cast<std::uint64_t>(split)).child(index);
  MixtureSample s;
  if (spec.kind == SourceKind::StripesBlobs) {
    RngStream src = rng.child("sources"), mix = rng.child("mix");
    std::tie(s.source1, s.source2) = synth_sources(src, spec);
    s.mix.kind = MixKind::Linear;
    s.mix.coefficient = mix.uniform(spec.a_min, spec.a_max);
    s.mixture = mix_linear(s.source1, s.source2, s.mix.coefficient);
  } else {
    RngStream src = rng.child("sources");
    MaskedPair p = masked_sources(src, spec);
    s.mix.kind = MixKind::Mask;
    s.mix.coefficient = spec.tau;
    s.mixture = mix_mask(p.background, p.overlay, p.mask, spec.tau);
    s.source1 = std::move(p.background);
    s.source2 = std::move(p.overlay);
    s.mix.mask = std::move(p.mask);
  }
  return s;
}

std::vector<MixtureSample> make_split(const DatasetSpec& spec, Split split, std::size_t count) {
  std::vector<MixtureSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_sample(spec, split, i));
  return out;
}

std::string encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("save_image: expected [3,H,W], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + 3 * h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = image.at({c, i, j});
        if (!(v >= -1.0 && v <= 1.0))
          throw InvalidArgument("save_image: value " + std::to_string(v) + " outside [-1, 1]");
        const long b = std::clamp(std::lround(127.5 * (v + 1.0)), 0L, 255L);
        out[header + (i * w + j) * 3 + c] = static_cast<char>(static_cast<unsigned char>(b));
      }
  return out;
}

namespace {

// Header fields are separated by whitespace and may be interleaved with
// '#' comments running to end of line.
std::size_t skip_space(const std::string& s, std::size_t pos) {
  while (pos < s.size()) {
    if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  return pos;
}

std::size_t read_uint(const std::string& s, std::size_t& pos, const char* field) {
  pos = skip_space(s, pos);
  const std::size_t start = pos;
  std::size_t v = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    v = v * 10 + static_cast<std::size_t>(s[pos] - '0');
    if (v > (1u << 24)) throw ParseError(std::string("PPM ") + field + " is too large", start);
    ++pos;
  }
  if (pos == start) throw ParseError(std::string("PPM: expected ") + field, start);
  return v;
}

}  // namespace

Tensor decode_ppm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw ParseError("PPM: missing P6 magic", 0);
  std::size_t pos = 2;
  const std::size_t w = read_uint(bytes, pos, "width");
  const std::size_t h = read_uint(bytes, pos, "height");
  const std::size_t maxval_pos = skip_space(bytes, pos);
  const std::size_t maxval = read_uint(bytes, pos, "maxval");
  if (w == 0 || h == 0) throw ParseError("PPM: zero image extent", maxval_pos);
  if (maxval != 255) throw ParseError("PPM: only maxval 255 is supported, got " + std::to_string(maxval), maxval_pos);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ParseError("PPM: expected a single whitespace byte after maxval", pos);
  ++pos;
  const std::size_t need = 3 * w * h, have = bytes.size() - pos;
  if (have < need)
    throw ParseError("PPM: truncated pixel data, missing " + std::to_string(need - have) + " of " +
                         std::to_string(need) + " bytes",
                     bytes.size());
  Tensor img({3, h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < 3; ++c) {
        const auto b = static_cast<unsigned char>(bytes[pos + (i * w + j) * 3 + c]);
        img.at({c, i, j}) = b / 127.5 - 1.0;
      }
  return img;
}

void save_image(const std::filesystem::path& path, const Tensor& image) {
  const std::string bytes = encode_ppm(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InvalidArgument("failed writing " + path.string());
}

Tensor load_image(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_ppm(ss.str());
}

std::vector<ManifestEntry> write_corpus(const DatasetSpec& spec, const std::filesystem::path& dir) {
  spec.validate();
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (auto [split, count] : {std::pair{Split::Train, spec.train_count}, std::pair{Split::Test, spec.test_count}}) {
    for (std::size_t i = 0; i < count; ++i) {
      const MixtureSample s = make_sample(spec, split, i);
      std::ostringstream id;
      id << split_name(split) << "_" << std::setw(5) << std::setfill('0') << i;
      ManifestEntry e{id.str(), split_name(split), id.str() + "_s1.ppm", id.str() + "_s2.ppm", id.str() + "_mix.ppm",
                      s.mix.kind == MixKind::Linear ? "linear" : "mask", s.mix.coefficient};
      save_image(dir / e.source1, s.source1);
      save_image(dir / e.source2, s.source2);
      save_image(dir / e.mixture, s.mixture);
      entries.push_back(std::move(e));
    }
  }
  std::ofstream m(dir / "manifest.txt");
  if (!m) throw InvalidArgument("cannot write manifest in " + dir.string());
  m << std::setprecision(17);
  for (const auto& e : entries)
    m << e.id << ' ' << e.split << ' ' << e.source1 << ' ' << e.source2 << ' ' << e.mixture << ' ' << e.kind << ' '
      << e.coefficient << '\n';
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InvalidArgument("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(f, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string extra;
    if (!(ls >> e.id >> e.split >> e.source1 >> e.source2 >> e.mixture >> e.kind >> e.coefficient) || (ls >> extra))
      throw ParseError("manifest: expected 7 fields: id split source1 source2 mixture kind coefficient", line_start);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace dcdsm
