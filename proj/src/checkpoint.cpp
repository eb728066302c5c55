#include "dcdsm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "dcdsm/error.hpp"

namespace dcdsm {

UNetConfig denoiser_config(const TrainConfig& cfg) {
  return UNetConfig{6, 3, cfg.base_width, cfg.depth, cfg.time_embed_dim, true, cfg.convs_per_level};
}

WfenConfig wfen_config(const TrainConfig& cfg) {
  return WfenConfig{3, cfg.wfen_features, cfg.wfen_width, cfg.wfca_grid_h, cfg.wfca_grid_w, cfg.wfca_hidden};
}

NoiseSchedule make_schedule(const TrainConfig& cfg) { return make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end); }

Models Models::init(const TrainConfig& cfg, const RngStream& rng) {
  RngStream r1 = rng.child("eps1"), r2 = rng.child("eps2"), r3 = rng.child("wfen1"), r4 = rng.child("wfen2");
  Models m{UNetParams::init(denoiser_config(cfg), r1), UNetParams::init(denoiser_config(cfg), r2),
           WfenParams::init(wfen_config(cfg), r3), WfenParams::init(wfen_config(cfg), r4)};
  for (ParamSet* p : {&m.eps1.params, &m.eps2.params, &m.wfen1.params, &m.wfen2.params}) p->quantize_to_f32();
  return m;
}

OptStates OptStates::init(const Models& m, const TrainConfig& cfg) {
  const AdamConfig a{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
  return {AdamState(m.eps1.params, a), AdamState(m.eps2.params, a), AdamState(m.wfen1.params, a),
          AdamState(m.wfen2.params, a)};
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'C', 'D', 'S', 'M', 'C', 'K', 'P'};

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    pod(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) pod(static_cast<std::uint32_t>(e));
    for (double v : t.data()) pod(static_cast<float>(v));
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <typename T>
  T pod(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(const char* what) {
    const auto n = pod<std::uint32_t>(what);
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = str("tensor name");
    const auto rank = pod<std::uint32_t>("tensor rank");
    if (rank == 0 || rank > 8) throw ParseError("checkpoint: bad rank " + std::to_string(rank), pos_);
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(pod<std::uint32_t>("tensor extent"));
    std::size_t count = 1;
    for (std::size_t e : shape) {
      if (e == 0 || count > (std::size_t{1} << 32) / e) throw ParseError("checkpoint: bad extents for '" + name + "'", pos_);
      count *= e;
    }
    need(count * sizeof(float), "tensor payload");
    Tensor t(shape);
    for (std::size_t i = 0; i < count; ++i) t[i] = pod<float>("tensor payload");
    return {std::move(name), std::move(t)};
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n)
      throw ParseError(std::string("checkpoint: truncated while reading ") + what, in_.size());
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

template <typename P, typename A>
struct NetView {
  const char* name;
  P* params;
  A* adam;
};

template <typename M, typename O>
auto nets(M& m, O& o) {
  using View = NetView<std::remove_reference_t<decltype((m.eps1.params))>, std::remove_reference_t<decltype((o.eps1))>>;
  return std::vector<View>{View{"eps1", &m.eps1.params, &o.eps1}, View{"eps2", &m.eps2.params, &o.eps2},
                           View{"wfen1", &m.wfen1.params, &o.wfen1}, View{"wfen2", &m.wfen2.params, &o.wfen2}};
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes().append(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  w.pod(c.config.hash());
  w.str(c.config.to_text());
  w.pod(c.iteration);
  w.pod(c.best_val_psnr);
  w.pod(c.rng.seed());
  w.pod(c.rng.stream_id());
  w.pod(c.rng.counter());
  const auto views = nets(c.models, c.opt);
  w.pod(static_cast<std::uint32_t>(views.size()));
  for (const auto& v : views) {
    w.str(v.name);
    w.pod(v.adam->step);
  }
  std::uint32_t count = 0;
  for (const auto& v : views) count += static_cast<std::uint32_t>(3 * v.params->count());
  w.pod(count);
  for (const auto& v : views) {
    for (std::size_t i = 0; i < v.params->count(); ++i) w.tensor(std::string(v.name) + "/" + v.params->name(i), v.params->value(i));
    for (std::size_t i = 0; i < v.params->count(); ++i)
      w.tensor(std::string(v.name) + ".m/" + v.params->name(i), v.adam->m.at(i));
    for (std::size_t i = 0; i < v.params->count(); ++i)
      w.tensor(std::string(v.name) + ".v/" + v.params->name(i), v.adam->v.at(i));
  }
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw ParseError("checkpoint: bad magic", 0);
  Reader r(bytes);
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.pod<char>("magic");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version), sizeof kMagic);
  const auto hash = r.pod<std::uint64_t>("config hash");
  const std::size_t text_pos = r.pos();
  const std::string text = r.str("config text");
  Checkpoint c;
  try {
    c.config = TrainConfig::parse(text);
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("checkpoint: stored config is invalid: ") + e.what(), text_pos);
  }
  if (c.config.hash() != hash || c.config.to_text() != text)
    throw ConfigMismatch("checkpoint: stored config does not match its recorded hash");
  c.iteration = r.pod<std::uint64_t>("iteration");
  c.best_val_psnr = r.pod<double>("best validation PSNR");
  const auto seed = r.pod<std::uint64_t>("rng seed");
  const auto stream = r.pod<std::uint64_t>("rng stream");
  const auto counter = r.pod<std::uint64_t>("rng counter");
  c.rng = RngStream(seed, stream, counter);

  // Build the architecture from the config, then overwrite every tensor.
  c.models = Models::init(c.config, RngStream(0, 0));
  c.opt = OptStates::init(c.models, c.config);
  const auto views = nets(c.models, c.opt);
  const auto n_opt = r.pod<std::uint32_t>("optimizer count");
  if (n_opt != views.size()) throw ParseError("checkpoint: expected 4 optimizers", r.pos());
  for (const auto& v : views) {
    const std::size_t at = r.pos();
    if (r.str("optimizer name") != v.name) throw ParseError(std::string("checkpoint: expected optimizer ") + v.name, at);
    v.adam->step = r.pod<std::uint64_t>("optimizer step");
  }
  const auto count = r.pod<std::uint32_t>("tensor count");
  std::size_t expected = 0;
  for (const auto& v : views) expected += 3 * v.params->count();
  if (count != expected)
    throw ParseError("checkpoint: " + std::to_string(count) + " tensors, config implies " + std::to_string(expected),
                     r.pos());
  for (const auto& v : views) {
    for (int kind = 0; kind < 3; ++kind)
      for (std::size_t i = 0; i < v.params->count(); ++i) {
        const std::size_t at = r.pos();
        auto [name, t] = r.tensor();
        const std::string want = std::string(v.name) + (kind == 0 ? "/" : kind == 1 ? ".m/" : ".v/") + v.params->name(i);
        if (name != want) throw ParseError("checkpoint: expected tensor '" + want + "', found '" + name + "'", at);
        Tensor& dst = kind == 0 ? v.params->value(i) : kind == 1 ? v.adam->m[i] : v.adam->v[i];
        if (dst.shape() != t.shape())
          throw ParseError("checkpoint: tensor '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
                               shape_str(dst.shape()),
                           at);
        dst = std::move(t);
      }
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes", r.pos());
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const std::string bytes = encode_checkpoint(c);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InvalidArgument("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

void check_config_hash(const Checkpoint& c, const TrainConfig& expected, bool force) {
  if (force || c.config.hash() == expected.hash()) return;
  throw ConfigMismatch("checkpoint was trained with a different config (hash " + std::to_string(c.config.hash()) +
                       " vs " + std::to_string(expected.hash()) + "); pass --force to use it anyway");
}

}  // namespace dcdsm
