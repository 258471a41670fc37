#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "wmrl/agents/online.hpp"
#include "wmrl/core/error.hpp"
#include "wmrl/core/runtime.hpp"
#include "wmrl/data/generate.hpp"
#include "wmrl/pipeline/experiment.hpp"
#include "wmrl/pipeline/grad_suites.hpp"

namespace py = pybind11;
using namespace wmrl;

namespace {

py::dict record_dict(const pipeline::EvalRecord& r) {
  py::dict d;
  d["phase"] = agents::to_string(r.phase);
  d["iter"] = r.iteration;
  d["env_steps"] = r.env_steps;
  d["mean_return"] = r.mean_return;
  d["std_return"] = r.std_return;
  d["normalized_score"] = r.normalized_score;
  return d;
}

py::list curve_list(const std::vector<pipeline::EvalRecord>& curve) {
  py::list out;
  for (const auto& r : curve) out.append(record_dict(r));
  return out;
}

pipeline::ExperimentConfig config_from(const py::dict& values) {
  pipeline::ExperimentConfig cfg;
  for (const auto& [k, v] : values) {
    std::string text = py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "true" : "false") : py::str(v).cast<std::string>();
    cfg.set(k.cast<std::string>(), text);
  }
  return cfg;
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::usage: return "usage";
    case ErrorKind::config: return "config";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
    case ErrorKind::training: return "training";
    case ErrorKind::calibration: return "calibration";
  }
  return "unknown";
}

// Whole dataset as one batch of columns.
data::Batch all_rows(const data::OfflineDataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return ds.transitions.gather(idx);
}

}  // namespace

PYBIND11_MODULE(wmrl, m) {
  m.doc() = "World-model augmented offline-to-online RL";
  tune_allocator();

  // Carries the library's error kind as `.kind`.
  static py::handle error_type = py::exception<Error>(m, "Error").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object instance = py::reinterpret_borrow<py::object>(error_type)(e.what());
      instance.attr("kind") = kind_name(e.kind());
      PyErr_SetObject(error_type.ptr(), instance.ptr());
    }
  });

  m.def("env_names", &envs::env_names);
  m.def(
      "rollout",
      [](const std::string& env, const std::vector<Eigen::VectorXd>& actions, std::uint64_t seed) {
        auto e = envs::make_env(env);
        nn::Matrix obs(static_cast<Eigen::Index>(actions.size() + 1), e->spec().obs_dim);
        Eigen::VectorXd rewards(static_cast<Eigen::Index>(actions.size()));
        obs.row(0) = e->reset(seed).transpose();
        for (std::size_t t = 0; t < actions.size(); ++t) {
          const auto r = e->step(actions[t]);
          obs.row(static_cast<Eigen::Index>(t + 1)) = r.observation.transpose();
          rewards[static_cast<Eigen::Index>(t)] = r.reward;
        }
        return py::make_tuple(obs, rewards);
      },
      py::arg("env"), py::arg("actions"), py::arg("seed") = 0,
      "Observations (T+1 rows) and rewards of an open-loop action sequence.");

  py::class_<envs::ReferenceScores>(m, "ReferenceScores")
      .def_readonly("env_name", &envs::ReferenceScores::env_name)
      .def_readonly("random_ref", &envs::ReferenceScores::random_ref)
      .def_readonly("expert_ref", &envs::ReferenceScores::expert_ref)
      .def_readonly("episodes_used", &envs::ReferenceScores::episodes_used)
      .def_readonly("seed", &envs::ReferenceScores::seed);
  m.def("load_references", &envs::load_references, py::arg("path"));
  m.def(
      "normalized_score",
      [](double ret, double random_ref, double expert_ref) {
        envs::ReferenceScores refs;
        refs.episodes_used = 1;
        refs.random_ref = random_ref;
        refs.expert_ref = expert_ref;
        return pipeline::normalized_score(ret, refs);
      },
      py::arg("ret"), py::arg("random_ref"), py::arg("expert_ref"));

  py::class_<data::OfflineDataset>(m, "Dataset")
      .def_property_readonly("env_name", [](const data::OfflineDataset& d) { return d.env_name; })
      .def_property_readonly("flavor", [](const data::OfflineDataset& d) { return data::to_string(d.flavor); })
      .def_property_readonly("seed", [](const data::OfflineDataset& d) { return d.seed; })
      .def("__len__", &data::OfflineDataset::size)
      .def("arrays",
           [](const data::OfflineDataset& d) {
             const auto b = all_rows(d);
             py::dict out;
             out["states"] = b.states;
             out["actions"] = b.actions;
             out["rewards"] = b.rewards;
             out["next_states"] = b.next_states;
             out["dones"] = b.dones;
             return out;
           })
      .def("save", [](const data::OfflineDataset& d, const std::filesystem::path& p) { data::save_dataset(d, p); });
  m.def("load_dataset", &data::load_dataset, py::arg("path"));
  m.def(
      "generate_dataset",
      [](const std::string& env, const std::string& flavor, std::size_t size, std::uint64_t seed,
         const std::optional<std::filesystem::path>& medium, const std::optional<std::filesystem::path>& expert) {
        std::optional<agents::AgentCheckpoint> med, exp;
        if (medium) med = agents::AgentCheckpoint::load(*medium);
        if (expert) exp = agents::AgentCheckpoint::load(*expert);
        return data::generate_dataset(env, data::parse_flavor(flavor), size, seed, med ? &*med : nullptr,
                                      exp ? &*exp : nullptr);
      },
      py::arg("env"), py::arg("flavor"), py::arg("size"), py::arg("seed") = 0, py::arg("medium_ckpt") = py::none(),
      py::arg("expert_ckpt") = py::none());

  py::class_<agents::AgentCheckpoint>(m, "Agent")
      .def_static("load", &agents::AgentCheckpoint::load, py::arg("path"))
      .def_property_readonly("env_name", [](const agents::AgentCheckpoint& c) { return c.env_name; })
      .def_property_readonly("phase", [](const agents::AgentCheckpoint& c) { return agents::to_string(c.phase); })
      .def_property_readonly("iteration", [](const agents::AgentCheckpoint& c) { return c.iteration; })
      .def_property_readonly("env_steps", [](const agents::AgentCheckpoint& c) { return c.env_steps; })
      .def("act", &agents::AgentCheckpoint::act, py::arg("observation"))
      .def(
          "q_values",
          [](const agents::AgentCheckpoint& c, const nn::Matrix& states, const nn::Matrix& actions) {
            const nn::Matrix in = agents::concat_cols(c.norm_stats.normalize(states), actions);
            return py::make_tuple(nn::Matrix(c.critic1.predict(in)), nn::Matrix(c.critic2.predict(in)));
          },
          py::arg("states"), py::arg("actions"))
      .def(
          "evaluate",
          [](const agents::AgentCheckpoint& c, const std::filesystem::path& refs, std::size_t episodes,
             std::uint64_t seed) {
            return record_dict(
                pipeline::evaluate_policy(c, c.env_name, episodes, seed, envs::load_references(refs)));
          },
          py::arg("refs"), py::arg("episodes") = 10, py::arg("seed") = 0);

  py::class_<wm::WorldModel>(m, "WorldModel")
      .def_static("load", &wm::WorldModel::load, py::arg("path"))
      .def("save", &wm::WorldModel::save, py::arg("path"))
      .def_readonly("obs_dim", &wm::WorldModel::obs_dim)
      .def_readonly("act_dim", &wm::WorldModel::act_dim)
      .def_readonly("latent_dim", &wm::WorldModel::latent_dim)
      .def(
          "predict",
          [](const wm::WorldModel& model, const nn::Matrix& states, const nn::Matrix& actions, bool sample,
             std::uint64_t seed) {
            Rng rng(seed);
            const nn::Matrix s = model.norm_stats.normalize(states);
            const auto mode = sample ? wm::EncodeMode::sample : wm::EncodeMode::mean;
            return nn::Matrix(model.norm_stats.denormalize(wm::generate_next_state(model, s, actions, rng, mode)));
          },
          py::arg("states"), py::arg("actions"), py::arg("sample") = false, py::arg("seed") = 0,
          "Next raw states for raw states and actions.");
  m.def(
      "train_world_model",
      [](const data::OfflineDataset& ds, std::size_t iterations, std::uint64_t seed, std::size_t hidden,
         std::size_t hidden_layers, double norm_epsilon) {
        wm::WorldModelConfig cfg;
        cfg.hidden = hidden;
        cfg.hidden_layers = hidden_layers;
        Rng init(derive_seed(seed, "wm"));
        auto model = wm::WorldModel::create(ds.obs_dim(), ds.act_dim(), cfg, init);
        wm::WmTrainConfig tc;
        tc.iterations = iterations;
        tc.seed = derive_seed(seed, "wm-train");
        py::list losses;
        for (const auto& p : wm::train_world_model(model, ds, data::compute_norm_stats(ds, norm_epsilon), tc)) {
          losses.append(py::make_tuple(p.iteration, p.loss.total));
        }
        return py::make_tuple(std::move(model), losses);
      },
      py::arg("dataset"), py::arg("iterations") = 10000, py::arg("seed") = 0, py::arg("hidden") = 512,
      py::arg("hidden_layers") = 3, py::arg("norm_epsilon") = 1e-3,
      "Returns (model, [(iteration, loss)]).");
  m.def("kl_to_standard_normal", &wm::kl_to_standard_normal, py::arg("mu"), py::arg("log_var"));
  m.def("kl_from_standard_normal", &wm::kl_from_standard_normal, py::arg("mu"), py::arg("log_var"));

  m.def("config_keys", &pipeline::ExperimentConfig::keys);
  m.def(
      "resolve_config", [](const py::dict& values) { return config_from(values).to_text(); }, py::arg("values"),
      "Validated key=value text for a dict of overrides.");
  m.def(
      "run_experiment",
      [](const py::dict& values) {
        const auto cfg = config_from(values);
        std::optional<pipeline::ExperimentResult> r;
        {
          py::gil_scoped_release release;
          r = pipeline::run_experiment(cfg);
        }
        py::dict out;
        out["manifest"] = r->manifest;
        out["curve"] = curve_list(r->curve);
        return out;
      },
      py::arg("config"));
  m.def(
      "load_curve", [](const std::filesystem::path& p) { return curve_list(pipeline::load_curve(p)); },
      py::arg("path"));
  m.def(
      "grad_check",
      [](std::uint64_t seed) {
        pipeline::GradSuiteOptions opts;
        opts.seed = seed;
        py::list out;
        for (const auto& r : pipeline::run_grad_suites(opts)) out.append(py::make_tuple(r.name, r.max_rel_error, r.pass));
        return out;
      },
      py::arg("seed") = 0, "[(suite, max relative error, pass)]");
  m.def("sha256_hex", [](const py::bytes& b) { return pipeline::sha256_hex(std::string(b)); });
}
