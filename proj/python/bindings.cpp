#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "slimnam/inference.hpp"
#include "slimnam/model.hpp"
#include "slimnam/synth.hpp"
#include "slimnam/training.hpp"
#include "slimnam/wav.hpp"

namespace py = pybind11;
using namespace slimnam;

namespace
{
template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
std::span<const T> view(const Array<T>& a)
{
  if (a.ndim() != 1)
    throw InputError("expected a 1-D array");
  return {a.data(), static_cast<std::size_t>(a.size())};
}

template <typename T>
Array<T> to_array(const std::vector<T>& v)
{
  Array<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ActiveWidth width_or_full(const Model& m, std::optional<int> width)
{
  return ActiveWidth(width.value_or(m.config.channels));
}
} // namespace

PYBIND11_MODULE(_core, m)
{
  m.doc() = "Slimmable WaveNet amp models";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<WidthError>(m, "WidthError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<BufferError>(m, "BufferError", base.ptr());
  py::register_exception<LoadError>(m, "LoadError", base.ptr());
  py::register_exception<DegenerateTargetError>(m, "DegenerateTargetError", base.ptr());
  py::register_exception<WavError>(m, "WavError", base.ptr());

  py::class_<WaveNetConfig>(m, "WaveNetConfig")
    .def(py::init<>())
    .def(py::init([](int channels, int kernel_size, std::vector<int> dilations, double sample_rate) {
           WaveNetConfig c;
           c.channels = channels;
           c.kernel_size = kernel_size;
           c.dilations = std::move(dilations);
           c.sample_rate = sample_rate;
           validate(c);
           return c;
         }),
         py::arg("channels") = 8, py::arg("kernel_size") = 3,
         py::arg("dilations") = std::vector<int>{1, 2, 4, 8, 16, 32, 64, 128}, py::arg("sample_rate") = 48000.0)
    .def_readwrite("channels", &WaveNetConfig::channels)
    .def_readwrite("kernel_size", &WaveNetConfig::kernel_size)
    .def_readwrite("dilations", &WaveNetConfig::dilations)
    .def_readwrite("sample_rate", &WaveNetConfig::sample_rate)
    .def_readonly("input_dim", &WaveNetConfig::input_dim)
    .def_readonly("output_dim", &WaveNetConfig::output_dim)
    .def(py::self == py::self)
    .def("__repr__", [](const WaveNetConfig& c) {
      return "WaveNetConfig(channels=" + std::to_string(c.channels) + ", kernel_size=" + std::to_string(c.kernel_size)
             + ", layers=" + std::to_string(c.dilations.size()) + ")";
    });

  py::class_<Model>(m, "Model")
    .def_readonly("config", &Model::config)
    .def("parameters", [](const Model& model) { return to_array(flatten(model)); },
         "Flat parameter vector in model-file order.")
    .def("with_parameters",
         [](const Model& model, const Array<double>& flat) { return unflatten(model.config, view(flat)); })
    .def("slim", [](const Model& model, int width) { return materialize_slim(model, ActiveWidth(width)); },
         py::arg("width"))
    .def("save", [](const Model& model, const std::filesystem::path& p) { save_model(model, p); })
    .def("to_json", &model_to_string)
    .def(py::self == py::self);

  m.def("new_model", &new_model, py::arg("config"), py::arg("seed") = 0);
  m.def("zero_model", &zero_model, py::arg("config"));
  m.def("load_model", &load_model, py::arg("path"));
  m.def("model_from_json", &model_from_string, py::arg("text"));
  m.def("receptive_field", &receptive_field);
  m.def("parameter_count", &parameter_count);
  m.def(
    "flops_per_sample", [](const WaveNetConfig& c, int width) { return flops_per_sample(c, ActiveWidth(width)); },
    py::arg("config"), py::arg("width"));

  m.def(
    "forward",
    [](const Model& model, const Array<float>& x, std::optional<int> width) {
      return to_array(forward_batch<float>(model, width_or_full(model, width), view(x)));
    },
    py::arg("model"), py::arg("input"), py::arg("width") = py::none(), "Float32 whole-signal forward pass.");
  m.def(
    "forward_double",
    [](const Model& model, const Array<double>& x, std::optional<int> width) {
      return to_array(forward_batch<double>(model, width_or_full(model, width), view(x)));
    },
    py::arg("model"), py::arg("input"), py::arg("width") = py::none());

  py::class_<StreamEngine>(m, "StreamEngine")
    .def(py::init([](const Model& model, std::optional<int> width, std::size_t max_buffer) {
           return std::make_unique<StreamEngine>(model, width_or_full(model, width), max_buffer);
         }),
         py::arg("model"), py::arg("width") = py::none(), py::arg("max_buffer") = 4096)
    .def("process",
         [](StreamEngine& e, const Array<float>& x) {
           const auto in = view(x);
           Array<float> out(static_cast<py::ssize_t>(in.size()));
           e.process(in, std::span<float>(out.mutable_data(), in.size()));
           return out;
         })
    .def("set_active_width", [](StreamEngine& e, int w) { return e.set_active_width(ActiveWidth(w)).value; })
    .def_property_readonly("active_width", [](const StreamEngine& e) { return e.active_width().value; })
    .def_property_readonly("channels", &StreamEngine::channels)
    .def_property_readonly("max_buffer", &StreamEngine::max_buffer)
    .def("reset", &StreamEngine::reset);

  py::class_<RtfReport>(m, "RtfReport")
    .def_readonly("width", &RtfReport::width)
    .def_readonly("buffer_size", &RtfReport::buffer_size)
    .def_readonly("wall_seconds", &RtfReport::wall_seconds)
    .def_readonly("audio_seconds", &RtfReport::audio_seconds)
    .def_readonly("rtf", &RtfReport::rtf);
  m.def(
    "bench_rtf",
    [](const Model& model, int width, double seconds, std::size_t buffer, bool reset_each) {
      BenchOptions o;
      o.reset_width_each_buffer = reset_each;
      return bench_rtf(model, ActiveWidth(width), seconds, buffer, o);
    },
    py::arg("model"), py::arg("width"), py::arg("seconds") = 1.0, py::arg("buffer") = 64,
    py::arg("reset_width_each_buffer") = false);

  py::enum_<LossKind>(m, "LossKind").value("mse", LossKind::mse).value("esr", LossKind::esr);

  py::class_<TrainConfig>(m, "TrainConfig")
    .def(py::init<>())
    .def_readwrite("epochs", &TrainConfig::epochs)
    .def_readwrite("batch_size", &TrainConfig::batch_size)
    .def_readwrite("segment_len", &TrainConfig::segment_len)
    .def_readwrite("learning_rate", &TrainConfig::learning_rate)
    .def_readwrite("seed", &TrainConfig::seed)
    .def_readwrite("loss", &TrainConfig::loss)
    .def_property(
      "fixed_width", [](const TrainConfig& t) { return t.width_mode.random ? 0 : t.width_mode.fixed_width; },
      [](TrainConfig& t, int w) { t.width_mode = w > 0 ? WidthMode::Fixed(w) : WidthMode::Random(); },
      "0 for random-width training, otherwise the single width trained.");

  py::class_<EpochRecord>(m, "EpochRecord")
    .def_readonly("epoch", &EpochRecord::epoch)
    .def_readonly("mean_train_loss", &EpochRecord::mean_train_loss)
    .def_readonly("full_width_esr", &EpochRecord::full_width_esr);

  py::class_<DryWetDataset>(m, "DryWetDataset")
    .def_property_readonly("dry", [](const DryWetDataset& d) { return to_array(d.dry); })
    .def_property_readonly("wet", [](const DryWetDataset& d) { return to_array(d.wet); })
    .def_readonly("burn_in", &DryWetDataset::burn_in)
    .def_property_readonly("segment_count", [](const DryWetDataset& d) { return d.segments.size(); });
  py::class_<TrainingData>(m, "TrainingData")
    .def_readonly("train", &TrainingData::train)
    .def_readonly("validation", &TrainingData::validation);

  m.def(
    "split_holdout",
    [](const Array<double>& dry, const Array<double>& wet, double sr, double fraction, std::size_t segment_len,
       int rf) { return split_holdout(view(dry), view(wet), sr, fraction, segment_len, rf); },
    py::arg("dry"), py::arg("wet"), py::arg("sample_rate"), py::arg("holdout_fraction"), py::arg("segment_len"),
    py::arg("receptive_field"));

  py::class_<TrainResult>(m, "TrainResult")
    .def_readonly("model", &TrainResult::model)
    .def_readonly("history", &TrainResult::history)
    .def_readonly("step_widths", &TrainResult::step_widths)
    .def_readonly("width_draws", &TrainResult::width_draws);
  m.def(
    "train",
    [](const Model& model, const TrainingData& data, const TrainConfig& config,
       const std::function<void(const EpochRecord&)>& on_epoch) {
      py::gil_scoped_release release;
      std::function<void(const EpochRecord&)> cb;
      if (on_epoch)
        cb = [&](const EpochRecord& r) {
          py::gil_scoped_acquire acquire;
          on_epoch(r);
        };
      return train(model, data, config, cb);
    },
    py::arg("model"), py::arg("data"), py::arg("config"), py::arg("on_epoch") = nullptr);
  m.def(
    "evaluate_esr",
    [](const Model& model, const DryWetDataset& d, int width) { return evaluate_esr(model, d, ActiveWidth(width)); },
    py::arg("model"), py::arg("dataset"), py::arg("width"));
  m.def(
    "loss",
    [](const Array<double>& pred, const Array<double>& target, LossKind kind) {
      return loss(view(pred), view(target), kind);
    },
    py::arg("pred"), py::arg("target"), py::arg("kind") = LossKind::mse);
  m.def(
    "gradient",
    [](const Model& model, int width, const Array<double>& x, const Array<double>& y, LossKind kind) {
      const auto r = backward(model, ActiveWidth(width), view(x), view(y), kind);
      return py::make_tuple(r.loss, to_array(r.gradients.flat));
    },
    py::arg("model"), py::arg("width"), py::arg("input"), py::arg("target"), py::arg("kind") = LossKind::mse,
    "(loss, flat gradient) of one segment with the burn-in excluded.");

  m.def(
    "render_dry",
    [](double seconds, double sr, std::uint64_t seed) { return to_array(render_dry(seconds, sr, seed).samples); },
    py::arg("seconds"), py::arg("sample_rate") = 48000.0, py::arg("seed") = 1);
  m.def(
    "apply_amp",
    [](const Array<float>& dry, double sr) {
      AudioBuffer a;
      a.sample_rate = sr;
      const auto v = view(dry);
      a.samples.assign(v.begin(), v.end());
      return to_array(apply_amp(default_amp_spec(), a).samples);
    },
    py::arg("dry"), py::arg("sample_rate") = 48000.0, "Runs the default synthetic reference amp.");

  m.def(
    "read_wav",
    [](const std::filesystem::path& p) {
      auto a = read_wav(p);
      return py::make_tuple(to_array(a.samples), a.sample_rate);
    },
    py::arg("path"), "Returns (float32 samples, sample_rate).");
  m.def(
    "write_wav",
    [](const std::filesystem::path& p, const Array<float>& samples, double sr, bool pcm16) {
      AudioBuffer a;
      a.sample_rate = sr;
      const auto v = view(samples);
      a.samples.assign(v.begin(), v.end());
      write_wav(p, a, pcm16 ? WavFormat::pcm16 : WavFormat::float32);
    },
    py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 48000.0, py::arg("pcm16") = false);
}
