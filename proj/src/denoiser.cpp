#include "dcdsm/denoiser.hpp"

#include <cmath>

#include "dcdsm/error.hpp"

namespace dcdsm {

namespace {

std::size_t width_at(const UNetConfig& c, std::size_t level) { return c.base_width << level; }

}  // namespace

UNet::UNet(UNetConfig config, std::string prefix) : config_(config), prefix_(std::move(prefix)) {
  if (config_.depth < 1) throw InvalidArgument("unet: depth must be >= 1");
  if (config_.base_width < 1 || config_.in_channels < 1 || config_.out_channels < 1)
    throw InvalidArgument("unet: channel counts must be positive");
  if (config_.convs_per_level < 1) throw InvalidArgument("unet: convs_per_level must be >= 1");
  if (config_.time_embed_dim % 2 != 0) throw InvalidArgument("unet: time_embed_dim must be even");
}

void UNet::declare(ParamSet& params, RngStream* rng) const {
  const auto& c = config_;
  auto conv = [&](const std::string& n, std::size_t co, std::size_t ci, std::size_t k, bool zero = false) {
    params.add(name(n + ".w"), rng && !zero ? kaiming_conv(*rng, co, ci, k) : Tensor({co, ci, k, k}));
    params.add(name(n + ".b"), Tensor({co}));
  };
  auto extra = [&](const std::string& n, std::size_t width) {
    for (std::size_t j = 2; j <= c.convs_per_level; ++j) conv(n + "." + std::to_string(j), width, width, 3);
  };
  conv("in", c.base_width, c.in_channels, 3);
  if (c.time_embed_dim) {
    const double scale = std::sqrt(1.0 / static_cast<double>(c.time_embed_dim));
    params.add(name("time.w"), rng ? randn(*rng, {c.base_width, c.time_embed_dim}) * scale
                                   : Tensor({c.base_width, c.time_embed_dim}));
    params.add(name("time.b"), Tensor({c.base_width}));
  }
  extra("in", c.base_width);
  for (std::size_t i = 1; i <= c.depth; ++i) {
    conv("down" + std::to_string(i), width_at(c, i), width_at(c, i - 1), 3);
    extra("down" + std::to_string(i), width_at(c, i));
  }
  conv("mid", width_at(c, c.depth), width_at(c, c.depth), 3);
  extra("mid", width_at(c, c.depth));
  for (std::size_t i = c.depth; i >= 1; --i) {
    conv("up" + std::to_string(i), width_at(c, i - 1), width_at(c, i) + width_at(c, i - 1), 3);
    extra("up" + std::to_string(i), width_at(c, i - 1));
  }
  conv("out", c.out_channels, c.base_width, 3, c.zero_init_output);
}

std::size_t UNet::parameter_count() const {
  ParamSet p;
  declare(p, nullptr);
  return p.parameter_count();
}

Var UNet::forward(Tape& tape, const ParamSet& params, const Var& x, const Var& time_embedding) const {
  const auto& c = config_;
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != c.in_channels)
    throw ShapeError("unet: expected [N," + std::to_string(c.in_channels) + ",H,W], got " + shape_str(s));
  const std::size_t div = std::size_t{1} << c.depth;
  if (s[2] % div != 0 || s[3] % div != 0)
    throw ShapeError("unet: spatial extents of " + shape_str(s) + " must be divisible by " + std::to_string(div));
  auto conv = [&](const Var& in, const std::string& n, std::size_t stride) {
    return ad::conv2d(in, tape.param(params, name(n + ".w")), tape.param(params, name(n + ".b")), stride, 1);
  };
  auto extra = [&](Var h, const std::string& n) {
    for (std::size_t j = 2; j <= c.convs_per_level; ++j) h = ad::relu(conv(h, n + "." + std::to_string(j), 1));
    return h;
  };

  Var h = conv(x, "in", 1);
  if (c.time_embed_dim) {
    if (!time_embedding.valid()) throw InvalidArgument("unet: time embedding required");
    h = ad::add_channel(h, ad::linear(time_embedding, tape.param(params, name("time.w")),
                                      tape.param(params, name("time.b"))));
  }
  h = extra(ad::relu(h), "in");
  std::vector<Var> skips{h};
  for (std::size_t i = 1; i <= c.depth; ++i) {
    h = extra(ad::relu(conv(h, "down" + std::to_string(i), 2)), "down" + std::to_string(i));
    skips.push_back(h);
  }
  h = extra(ad::relu(conv(h, "mid", 1)), "mid");
  for (std::size_t i = c.depth; i >= 1; --i) {
    h = ad::upsample_nearest(h, 2, 2);
    h = ad::relu(conv(ad::concat_channels({h, skips[i - 1]}), "up" + std::to_string(i), 1));
    h = extra(h, "up" + std::to_string(i));
  }
  return conv(h, "out", 1);
}

UNetParams UNetParams::init(UNetConfig config, RngStream& rng) {
  UNetParams p{UNet(config), {}};
  p.net.declare(p.params, &rng);
  return p;
}

UNetParams UNetParams::zeros(UNetConfig config) {
  UNetParams p{UNet(config), {}};
  p.net.declare(p.params, nullptr);
  return p;
}

Tensor sinusoidal_embed(int t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw InvalidArgument("sinusoidal_embed: dim must be even and positive");
  if (t < 0) throw InvalidArgument("sinusoidal_embed: negative timestep");
  Tensor e({dim});
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double w = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    e[2 * k] = std::sin(t * w);
    e[2 * k + 1] = std::cos(t * w);
  }
  return e;
}

Tensor sinusoidal_embed(const std::vector<int>& t, std::size_t dim) {
  Tensor e({t.size(), dim});
  for (std::size_t n = 0; n < t.size(); ++n) {
    const Tensor row = sinusoidal_embed(t[n], dim);
    std::copy(row.ptr(), row.ptr() + dim, e.ptr() + n * dim);
  }
  return e;
}

Var predict_noise(Tape& tape, const UNet& net, const ParamSet& params, const Var& x_t, const Var& cond,
                  const std::vector<int>& t) {
  require_same_shape(x_t.value(), cond.value(), "predict_noise");
  if (x_t.shape().size() != 4 || x_t.shape()[0] != t.size())
    throw InvalidArgument("predict_noise: " + std::to_string(t.size()) + " timesteps for batch " +
                          shape_str(x_t.shape()));
  const std::size_t dim = net.config().time_embed_dim;
  const Var temb = dim ? tape.constant(sinusoidal_embed(t, dim)) : Var();
  return net.forward(tape, params, ad::concat_channels({x_t, cond}), temb);
}

Tensor predict_noise(const UNetParams& p, const Tensor& x_t, int t, const Tensor& cond) {
  Tape tape(false);
  const Tensor xb = as_batch(x_t);
  const Var out = predict_noise(tape, p.net, p.params, tape.constant(xb), tape.constant(as_batch(cond)),
                                std::vector<int>(xb.dim(0), t));
  return x_t.rank() == 3 ? out.value().reshaped(x_t.shape()) : out.value();
}

Tensor unet3_forward(const UNetParams& p, const Tensor& x) {
  Tape tape(false);
  const Var out = p.net.forward(tape, p.params, tape.constant(as_batch(x)), Var());
  if (x.rank() != 3) return out.value();
  const Shape& s = out.shape();
  return out.value().reshaped({s[1], s[2], s[3]});
}

UNetConfig unet3_config(std::size_t in_channels, std::size_t out_channels, std::size_t width) {
  return UNetConfig{in_channels, out_channels, width, 1, 0, false};
}

}  // namespace dcdsm
