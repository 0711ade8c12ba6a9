#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "mtl/checkpoint.hpp"
#include "mtl/error.hpp"
#include "mtl/experiment.hpp"
#include "mtl/glyphs.hpp"
#include "mtl/idx.hpp"
#include "mtl/overlay.hpp"
#include "mtl/trainers.hpp"

namespace py = pybind11;
using namespace mtl;

namespace {

using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image image_from(const F32& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d image array");
  Image img;
  img.rows = a.shape(0);
  img.cols = a.shape(1);
  img.pixels.assign(a.data(), a.data() + a.size());
  return img;
}

py::dict outcome_dict(const StepOutcome& o) {
  py::dict d;
  d["pre_losses"] = o.pre_losses;
  d["post_losses"] = o.post_losses;
  d["grad_norms"] = o.grad_norms;
  d["shared_grad_norms_pre"] = o.shared_grad_norms_pre;
  d["shared_grad_norms_post"] = o.shared_grad_norms_post;
  return d;
}

// JSON crosses the boundary as text; the Python side decodes it.
std::string json_text(const nlohmann::json& j) { return j.dump(); }

}  // namespace

PYBIND11_MODULE(_mtl, m) {
  m.doc() = "Native core: autodiff, overlay data, multitask trainers";

  // Translators run newest first, so the base class goes in first.
  const auto base = py::register_exception<Error>(m, "MtlError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<CheckpointMismatch>(m, "CheckpointMismatch", base);

  m.def("compose_overlay", [](const F32& a, const F32& b, std::size_t canvas) {
        const Image out = compose_overlay(image_from(a), image_from(b), canvas, canvas);
        F32 arr({static_cast<py::ssize_t>(out.rows), static_cast<py::ssize_t>(out.cols)});
        std::memcpy(arr.mutable_data(), out.pixels.data(), out.pixels.size() * sizeof(float));
        return arr;
      },
      py::arg("a"), py::arg("b"), py::arg("canvas") = kOverlayCanvas);

  m.def("parse_idx", [](py::bytes data) {
        const std::string s = data;
        const IdxFile f = parse_idx(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
        std::vector<py::ssize_t> shape(f.dims.begin(), f.dims.end());
        U8 arr(shape);
        if (!f.payload.empty()) std::memcpy(arr.mutable_data(), f.payload.data(), f.payload.size());
        return arr;
      },
      py::arg("data"), "Decodes an unsigned-byte IDX file into an array of its declared shape.");

  m.def("serialize_idx", [](const U8& arr) {
        IdxFile f;
        for (py::ssize_t i = 0; i < arr.ndim(); ++i) f.dims.push_back(static_cast<std::uint32_t>(arr.shape(i)));
        f.payload.assign(arr.data(), arr.data() + arr.size());
        const auto bytes = serialize_idx(f);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("array"));

  m.def("make_glyph_set", [](std::size_t count, std::uint64_t seed) {
        const auto set = make_glyph_set(count, seed);
        const auto n = static_cast<py::ssize_t>(count);
        U8 images({n, static_cast<py::ssize_t>(set.rows), static_cast<py::ssize_t>(set.cols)});
        std::memcpy(images.mutable_data(), set.pixels.data(), set.pixels.size());
        U8 labels(n);
        std::memcpy(labels.mutable_data(), set.labels.data(), count);
        return py::make_tuple(images, labels);
      },
      py::arg("count"), py::arg("seed"));

  m.def("quadratic_step", [](const std::string& trainer, std::vector<double> curvatures,
                             std::vector<std::vector<double>> optima, std::vector<double> theta, double alpha,
                             double beta, double head_step_size, std::vector<double> loss_weights) {
        TrainerConfig c;
        c.kind = parse_trainer_name(trainer);
        c.alpha = alpha;
        c.beta = beta;
        c.head_step_size = head_step_size;
        c.loss_weights = std::move(loss_weights);
        QuadraticObjective obj(QuadraticTaskSet(std::move(curvatures), std::move(optima)), std::move(theta));
        const StepOutcome out = train_step(obj, c);
        return py::make_tuple(std::vector<double>(obj.theta().begin(), obj.theta().end()), outcome_dict(out));
      },
      py::arg("trainer"), py::arg("curvatures"), py::arg("optima"), py::arg("theta"), py::arg("alpha") = 0.1,
      py::arg("beta") = 0.01, py::arg("head_step_size") = 0.01, py::arg("loss_weights") = std::vector<double>{},
      "One trainer step on quadratic tasks 0.5 c_i ||theta - mu_i||^2; returns (theta, outcome).");

  m.def("quadratic_demo", [](std::vector<double> curvatures, double alpha, double beta, std::size_t steps,
                             double theta0) {
        QuadraticDemoConfig c{std::move(curvatures), alpha, beta, steps, theta0};
        return quadratic_demo_csv(quadratic_demo(c));
      },
      py::arg("curvatures") = std::vector<double>{4.0, 1.0}, py::arg("alpha") = 0.1, py::arg("beta") = 0.01,
      py::arg("steps") = 20, py::arg("theta0") = 1.0, "CSV text, one row per regime, step and task.");

  m.def("model_step_losses", [](const std::string& trainer, std::uint64_t seed, std::size_t batch, std::size_t steps,
                                double step_size) {
        TrainerConfig c;
        c.kind = parse_trainer_name(trainer);
        c.alpha = c.beta = c.head_step_size = step_size;
        const auto src = make_glyph_set(std::max<std::size_t>(64, 2 * batch), derive_seed(seed, 3));
        const auto ds = build_overlay_dataset(src, src, {batch, 1, 1}, seed);
        std::vector<std::size_t> idx(batch);
        for (std::size_t i = 0; i < batch; ++i) idx[i] = i;
        const auto mb = make_batch(ds.split(SplitName::kTrain), idx);
        auto model = MultitaskModel::reference(2, seed);
        py::list out;
        for (std::size_t s = 0; s < steps; ++s) out.append(outcome_dict(train_step(model, mb, c)));
        return out;
      },
      py::arg("trainer"), py::arg("seed") = 0, py::arg("batch") = 16, py::arg("steps") = 1,
      py::arg("step_size") = 0.05, "Repeated steps of the reference model on one synthetic overlay batch.");

  m.def("normalize_config", [](const std::string& text) { return serialize_run_config(parse_run_config(text)); },
        py::arg("text"), "Parses and validates run-config text; returns its canonical form.");

  m.def("run_training", [](const std::string& text, bool resume) {
        const RunConfig c = parse_run_config(text);
        RunOptions opts;
        opts.resume = resume;
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_training(c, opts);
        }
        return py::make_tuple(r.exit_code, json_text(r.summary));
      },
      py::arg("config_text"), py::arg("resume") = false);

  m.def("evaluate_checkpoint", [](const std::string& text, const std::filesystem::path& checkpoint,
                                  const std::string& split) {
        const EvalReport r = evaluate_checkpoint(parse_run_config(text), checkpoint, parse_split_name(split));
        return json_text(to_json(r));
      },
      py::arg("config_text"), py::arg("checkpoint"), py::arg("split") = "test");

  m.attr("EXIT_OK") = kExitOk;
  m.attr("EXIT_FAILURE") = kExitFailure;
  m.attr("EXIT_CONFIG") = kExitConfig;
  m.attr("EXIT_DIVERGED") = kExitDiverged;
}
