#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "tdgp/batching.hpp"
#include "tdgp/commands.hpp"
#include "tdgp/config.hpp"
#include "tdgp/dgp.hpp"
#include "tdgp/io.hpp"
#include "tdgp/metrics.hpp"
#include "tdgp/postprocess.hpp"
#include "tdgp/synthgen.hpp"

namespace py = pybind11;
using namespace tdgp;

namespace {

RunConfig config_from_text(const std::string& text) {
  return text.empty() ? RunConfig::defaults() : RunConfig::parse_text(text);
}

// trained model handle exposed to python
struct PyModel {
  DgpModel model;
  std::string config_echo;
  std::uint64_t seed = 0;
  std::uint64_t iterations = 0;
};

PyModel train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
              const std::string& config_text) {
  RunConfig cfg = config_from_text(config_text);
  PyModel out;
  Rng init_rng(derive_seed(cfg.seed(), "init"));
  out.model = DgpModel::init(cfg.architecture(static_cast<int>(x.cols())), x, init_rng);
  FitResult r = fit(out.model, x, y, cfg.train_config());
  out.config_echo = cfg.echo();
  out.seed = cfg.seed();
  out.iterations = static_cast<std::uint64_t>(r.trace.size());
  return out;
}

Eigen::MatrixXd smooth_lognormal(const Eigen::Ref<const Eigen::MatrixXd>& slice,
                                 double mu, double sigma, int radius) {
  ProbabilityMap map;
  map.values = ProbabilityVolume(static_cast<int>(slice.rows()),
                                 static_cast<int>(slice.cols()), 1, 0.0);
  map.mask = MaskVolume(static_cast<int>(slice.rows()), static_cast<int>(slice.cols()), 1, 1);
  for (int x = 0; x < map.values.nx; ++x)
    for (int y = 0; y < map.values.ny; ++y) map.values.at(x, y, 0) = slice(x, y);
  ProbabilityMap out = smooth(map, LognormalKernel2D::build(mu, sigma, radius));
  Eigen::MatrixXd result(slice.rows(), slice.cols());
  for (int x = 0; x < map.values.nx; ++x)
    for (int y = 0; y < map.values.ny; ++y) result(x, y) = out.values.at(x, y, 0);
  return result;
}

}  // namespace

PYBIND11_MODULE(pytdgp, m) {
  m.doc() = "temporal deep Gaussian process pipeline (C++ core bindings)";

  py::register_exception<TdgpError>(m, "TdgpError");

  py::class_<PyModel>(m, "Model")
      .def_readonly("seed", &PyModel::seed)
      .def_readonly("iterations", &PyModel::iterations)
      .def_readonly("config_echo", &PyModel::config_echo)
      .def("predict_proba",
           [](const PyModel& self, const Eigen::MatrixXd& x, int s_pred,
              std::uint64_t seed) { return predict_proba(self.model, x, s_pred, seed); },
           py::arg("x"), py::arg("s_pred") = 20, py::arg("seed") = 0)
      .def("elbo",
           [](const PyModel& self, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
              int s_train, std::uint64_t seed) {
             Rng rng(seed);
             std::vector<EpsDraw> draws;
             for (int s = 0; s < s_train; ++s)
               draws.push_back(draw_eps(self.model, x.rows(), rng));
             ElboReport r = elbo_eval(self.model, x, y, draws);
             return py::make_tuple(r.expected_log_lik, r.kl_total, r.elbo);
           },
           py::arg("x"), py::arg("y"), py::arg("s_train") = 1, py::arg("seed") = 0)
      .def("save",
           [](const PyModel& self, const std::string& path) {
             write_checkpoint(path, self.model, self.config_echo, self.seed,
                              self.iterations);
           },
           py::arg("path"));

  m.def("train", &train, py::arg("x"), py::arg("y"), py::arg("config") = "",
        "Fit the model on a V x T matrix with {0,1} labels; config is the same\n"
        "key = value text the CLI accepts.");

  m.def("load",
        [](const std::string& path) {
          LoadedCheckpoint ckpt = read_checkpoint(path);
          PyModel out;
          out.model = std::move(ckpt.model);
          out.config_echo = std::move(ckpt.config_echo);
          out.seed = ckpt.seed;
          out.iterations = ckpt.iterations;
          return out;
        },
        py::arg("path"));

  m.def("make_batches",
        [](const std::vector<std::uint8_t>& y, std::uint64_t seed) {
          return make_epoch_batches(make_class_index(y), seed).batches;
        },
        py::arg("y"), py::arg("seed") = 0,
        "One epoch of balanced batches: every batch holds the whole small class\n"
        "plus as many large-class indices, drawn without replacement.");

  m.def("confusion",
        [](const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth) {
          if (pred.size() != truth.size())
            throw data_error("confusion: length mismatch");
          LabelVolume p(static_cast<int>(pred.size()), 1, 1, 0);
          LabelVolume t(static_cast<int>(truth.size()), 1, 1, 0);
          MaskVolume mask(static_cast<int>(pred.size()), 1, 1, 1);
          p.data = pred;
          t.data = truth;
          ConfusionCounts c = tdgp::confusion(p, t, mask);
          return py::make_tuple(c.tp, c.fp, c.fn, c.tn);
        },
        py::arg("pred"), py::arg("truth"));

  m.def("dice", [](long tp, long fp, long fn) { return dsc({tp, fp, fn, 0}); });
  m.def("jaccard", [](long tp, long fp, long fn) { return tdgp::jaccard({tp, fp, fn, 0}); });

  m.def("smooth_lognormal", &smooth_lognormal, py::arg("slice"), py::arg("mu") = 0.0,
        py::arg("sigma") = 0.75, py::arg("radius") = 3,
        "Convolve one 2D slice with the radially symmetric log-normal kernel.");

  m.def("gradcheck",
        [](const std::string& config_text) { return cmd_gradcheck(config_from_text(config_text)); },
        py::arg("config") = "",
        "Max relative error of the model gradient against finite differences.");

  m.def("synth_patient",
        [](const std::string& config_text, int index) {
          SynthConfig scfg = config_from_text(config_text).synth_config();
          SynthPatient sp = gen_patient(scfg, index);
          py::dict out;
          out["patient_id"] = sp.volume.patient_id;
          out["shape"] = py::make_tuple(sp.volume.nx, sp.volume.ny, sp.volume.nz,
                                        sp.volume.nt);
          out["volume"] = sp.volume.data;
          out["labels"] = sp.labels.data;
          out["brain"] = sp.brain.data;
          return out;
        },
        py::arg("config") = "", py::arg("index") = 0);
}
