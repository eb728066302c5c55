#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dcdsm/checkpoint.hpp"
#include "dcdsm/config.hpp"
#include "dcdsm/dataset.hpp"
#include "dcdsm/diffusion.hpp"
#include "dcdsm/error.hpp"
#include "dcdsm/evaluation.hpp"
#include "dcdsm/gradcheck_targets.hpp"
#include "dcdsm/spectral.hpp"
#include "dcdsm/suppression.hpp"
#include "dcdsm/trainer.hpp"
#include "dcdsm/wavelet.hpp"

namespace py = pybind11;
using namespace dcdsm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() == 0) throw ShapeError("expected an array with at least one axis");
  Shape s(a.shape(), a.shape() + a.ndim());
  return Tensor(s, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array a(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

py::tuple subbands_tuple(const WaveletSubbands& s) {
  return py::make_tuple(to_array(s.ll), to_array(s.lh), to_array(s.hl), to_array(s.hh));
}

Split parse_split(const std::string& name) {
  for (Split s : {Split::Train, Split::Test, Split::Validation})
    if (name == split_name(s)) return s;
  throw InvalidArgument("unknown split '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_dcdsm, m) {
  m.doc() = "Dual-branch conditional diffusion separation core";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericalContractError>(m, "NumericalContractError", PyExc_ArithmeticError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ConfigMismatch>(m, "ConfigMismatch", PyExc_RuntimeError);

  m.def("dwt2", [](const Array& x) { return subbands_tuple(dwt2(to_tensor(x))); }, py::arg("x"),
        "One-level Haar analysis of [C,H,W] or [N,C,H,W]; returns (LL, LH, HL, HH).");
  m.def(
      "idwt2",
      [](const Array& ll, const Array& lh, const Array& hl, const Array& hh) {
        return to_array(idwt2({to_tensor(ll), to_tensor(lh), to_tensor(hl), to_tensor(hh)}));
      },
      py::arg("ll"), py::arg("lh"), py::arg("hl"), py::arg("hh"));

  m.def(
      "fft2",
      [](const Array& x) {
        const ComplexTensor c = fft2(to_tensor(x));
        return py::make_tuple(to_array(c.re), to_array(c.im));
      },
      py::arg("x"), "2D DFT over the last two axes; returns (re, im).");
  m.def(
      "ifft2", [](const Array& re, const Array& im) { return to_array(ifft2({to_tensor(re), to_tensor(im)})); },
      py::arg("re"), py::arg("im"));

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_static("linear", &make_linear_schedule, py::arg("T"), py::arg("beta_start") = 1e-4,
                  py::arg("beta_end") = 0.02)
      .def_property_readonly("steps", &NoiseSchedule::steps)
      .def("beta", &NoiseSchedule::beta)
      .def("alpha", &NoiseSchedule::alpha)
      .def("alpha_bar", &NoiseSchedule::alpha_bar);
  m.def(
      "forward_sample",
      [](const Array& x0, int t, const Array& eps, const NoiseSchedule& s) {
        return to_array(forward_sample(to_tensor(x0), t, to_tensor(eps), s));
      },
      py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("schedule"));
  m.def(
      "posterior_mean",
      [](const Array& x_t, int t, const Array& eps, const NoiseSchedule& s, bool exact) {
        return to_array(posterior_mean(to_tensor(x_t), t, to_tensor(eps), s, exact));
      },
      py::arg("x_t"), py::arg("t"), py::arg("eps"), py::arg("schedule"), py::arg("alpha_bar_mean") = false);

  m.def(
      "wfen_loss",
      [](const Array& x1, const Array& x2, const Array& o1, const Array& o2, const Array& r1, const Array& r2) {
        return wfen_loss(to_tensor(x1), to_tensor(x2), to_tensor(o1), to_tensor(o2), to_tensor(r1), to_tensor(r2))
            .value;
      },
      py::arg("x_t1"), py::arg("x_t2"), py::arg("x_out1"), py::arg("x_out2"), py::arg("ref1"), py::arg("ref2"));
  m.def(
      "diffusion_loss",
      [](const Array& e1, const Array& p1, const Array& e2, const Array& p2) {
        return diffusion_loss(to_tensor(e1), to_tensor(p1), to_tensor(e2), to_tensor(p2));
      },
      py::arg("eps_true1"), py::arg("eps_pred1"), py::arg("eps_true2"), py::arg("eps_pred2"));
  m.def("total_loss", &total_loss, py::arg("l_diff"), py::arg("l_wfen"), py::arg("gamma"));

  m.def(
      "psnr", [](const Array& x, const Array& y, double max_val) { return psnr(to_tensor(x), to_tensor(y), max_val); },
      py::arg("x"), py::arg("y"), py::arg("max_val") = 2.0);
  m.def(
      "ssim", [](const Array& x, const Array& y, double max_val) { return ssim(to_tensor(x), to_tensor(y), max_val); },
      py::arg("x"), py::arg("y"), py::arg("max_val") = 2.0);

  m.def(
      "make_sample",
      [](const std::string& config_text, const std::string& split, std::size_t index) {
        const DatasetSpec spec = parse_dataset_spec(config_text);
        const MixtureSample s = make_sample(spec, parse_split(split), index);
        return py::make_tuple(to_array(s.source1), to_array(s.source2), to_array(s.mixture));
      },
      py::arg("spec_text") = "", py::arg("split") = "train", py::arg("index") = 0,
      "Synthesizes (source1, source2, mixture) from dataset.* key-value text.");
  m.def("encode_ppm", [](const Array& x) { return py::bytes(encode_ppm(to_tensor(x))); }, py::arg("image"));
  m.def("decode_ppm", [](const py::bytes& b) { return to_array(decode_ppm(std::string(b))); }, py::arg("data"));

  m.def(
      "config_text", [](const std::string& text) { return TrainConfig::parse(text).to_text(); },
      py::arg("text") = "", "Validates a config and returns its canonical form.");
  m.def(
      "train",
      [](const std::string& config_text, const std::filesystem::path& out) {
        const TrainResult r = [&] {
          py::gil_scoped_release release;
          return train(TrainConfig::parse(config_text));
        }();
        save_checkpoint(out, r.best);
        std::vector<std::pair<std::size_t, double>> v;
        for (const auto& rec : r.validations) v.emplace_back(rec.iteration, rec.mean_psnr);
        return v;
      },
      py::arg("config_text"), py::arg("out"),
      "Trains, writes the best checkpoint and returns (iteration, validation PSNR) pairs.");
  m.def(
      "separate",
      [](const std::filesystem::path& ckpt_path, const Array& mixture) {
        const Checkpoint ckpt = load_checkpoint(ckpt_path);
        const Tensor mix = to_tensor(mixture);
        std::pair<Tensor, Tensor> out;
        {
          py::gil_scoped_release release;
          out = separate(ckpt, mix, test_rng(ckpt.config));
        }
        return py::make_tuple(to_array(out.first), to_array(out.second));
      },
      py::arg("checkpoint"), py::arg("mixture"));

  m.def(
      "gradcheck",
      [](const std::string& target, std::uint64_t seed) {
        const GradcheckReport r = gradcheck_target(target, seed);
        return py::make_tuple(r.max_rel_err, r.passed);
      },
      py::arg("target"), py::arg("seed") = 0, "Returns (max relative error, passed).");
}
