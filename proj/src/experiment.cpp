#include "eit/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace eit {

using nlohmann::json;

Method parse_method(const std::string& name) {
  if (name == "alg1") return Method::Alg1;
  if (name == "alg2") return Method::Alg2;
  if (name == "l1") return Method::L1;
  if (name == "l2") return Method::L2;
  if (name == "tv") return Method::TV;
  throw std::invalid_argument("unknown method '" + name + "'");
}

std::string method_name(Method method) {
  switch (method) {
    case Method::Alg1: return "alg1";
    case Method::Alg2: return "alg2";
    case Method::L1: return "l1";
    case Method::L2: return "l2";
    case Method::TV: return "tv";
  }
  return "?";
}

NoiseScale parse_noise_scale(const std::string& name) {
  if (name == "max-abs") return NoiseScale::MaxAbs;
  if (name == "per-channel") return NoiseScale::PerChannel;
  if (name == "absolute") return NoiseScale::Absolute;
  throw std::invalid_argument("unknown noise scale '" + name + "'");
}

std::string noise_scale_name(NoiseScale scale) {
  switch (scale) {
    case NoiseScale::MaxAbs: return "max-abs";
    case NoiseScale::PerChannel: return "per-channel";
    case NoiseScale::Absolute: return "absolute";
  }
  return "?";
}

std::uint64_t default_seed(PhantomId phantom, double epsilon) {
  return 20170000ULL + 1000ULL * static_cast<std::uint64_t>(phantom) +
         static_cast<std::uint64_t>(std::llround(epsilon * 1e5));
}

SyntheticData synthesize_data(const ForwardModel& fine_model, const ConductivityField& sigma,
                              const NoiseSpec& noise) {
  if (!(noise.epsilon >= 0.0)) throw std::invalid_argument("synthesize_data: negative noise level");
  SyntheticData out;
  out.clean = fine_model.predict(sigma);
  out.noisy = out.clean;
  if (noise.epsilon > 0.0) {
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double peak = out.clean.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < out.noisy.size(); ++i) {
      double scale = 1.0;
      switch (noise.scale) {
        case NoiseScale::MaxAbs: scale = peak; break;
        case NoiseScale::PerChannel: scale = std::abs(out.clean[i]); break;
        case NoiseScale::Absolute: scale = 1.0; break;
      }
      out.noisy[i] += noise.epsilon * scale * normal(rng);
    }
  }
  out.noise_norm = (out.noisy - out.clean).norm();
  return out;
}

InversionConfig paper_config(Method method, PhantomId phantom, double epsilon) {
  InversionConfig c;
  c.beta = 0.1;
  if (epsilon <= 0.0) {
    c.mu = 1e-10;
    switch (phantom) {
      case PhantomId::B: c.alpha0 = 1e-6; c.q_alpha = 0.8; break;
      case PhantomId::C: c.alpha0 = 1e-7; c.q_alpha = 0.5; break;
      default: c.alpha0 = 1e-6; c.q_alpha = 0.6; break;
    }
    return c;
  }
  // noisy rows: nearest tabulated level
  const bool low = std::abs(epsilon - 1e-3) <= std::abs(epsilon - 3e-3);
  c.q_alpha = 0.6;
  if (method == Method::Alg2) {
    c.alpha0 = low ? 1e-5 : 1e-3;
    c.mu = low ? 1e-6 : 1e-4;
  } else {
    c.alpha0 = low ? 1e-4 : 1e-3;
    c.mu = low ? 1e-6 : 1e-5;
  }
  return c;
}

ExperimentSpec default_spec(Method method, PhantomId phantom, double epsilon) {
  ExperimentSpec spec;
  spec.method = method;
  spec.phantom = phantom;
  spec.noise.epsilon = epsilon;
  spec.noise.seed = default_seed(phantom, epsilon);
  spec.config = paper_config(method, phantom, epsilon);
  return spec;
}

std::shared_ptr<const ExperimentContext> ExperimentContext::build(const MeshSpec& spec) {
  auto ctx = std::make_shared<ExperimentContext>();
  ctx->mesh_spec = spec;
  const auto layout = ElectrodeLayout::uniform(spec.electrodes, spec.contact_impedance, spec.coverage);
  ctx->fine = std::make_shared<const TriMesh>(
      spec.fine_path.empty() ? generate_disk_mesh(spec.fine_elements, layout) : load_mesh(spec.fine_path));
  ctx->coarse = std::make_shared<const TriMesh>(spec.coarse_path.empty()
                                                    ? generate_disk_mesh(spec.coarse_elements, layout)
                                                    : load_mesh(spec.coarse_path));
  if (ctx->fine->id() == ctx->coarse->id()) {
    throw std::invalid_argument("experiment: simulation and inversion meshes are identical");
  }
  ctx->fine_model = std::make_shared<const ForwardModel>(
      ForwardModel::adjacent(ctx->fine, layout, spec.include_driven, spec.current_amplitude));
  ctx->coarse_model = std::make_shared<const ForwardModel>(
      ForwardModel::adjacent(ctx->coarse, layout, spec.include_driven, spec.current_amplitude));
  ctx->transfer = build_transfer(*ctx->fine, *ctx->coarse);
  ctx->R = adjacency_difference_operator(*ctx->coarse);
  ctx->phi = HaarTransform(ctx->coarse->element_count());
  return ctx;
}

double relative_error(const ConductivityField& sigma, const ConductivityField& truth) {
  if (sigma.mesh_id != truth.mesh_id) throw std::invalid_argument("relative_error: mesh mismatch");
  return relative_error(sigma.values, truth.values);
}

namespace {

std::string stop_name(StopReason stop) {
  return stop == StopReason::Discrepancy ? "discrepancy" : "outer_max";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

void write_image_csv(const TriMesh& mesh, const Eigen::VectorXd& sigma, const Eigen::VectorXd& truth,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "element,x1,y1,x2,y2,x3,y3,cx,cy,conductivity,resistivity,truth_conductivity\n";
  for (int e = 0; e < mesh.element_count(); ++e) {
    out << e;
    for (int v : mesh.elements()[e]) out << ',' << mesh.nodes()[v].x << ',' << mesh.nodes()[v].y;
    const Point c = mesh.barycenter(e);
    out << ',' << c.x << ',' << c.y << ',' << sigma[e] << ',' << 1.0 / sigma[e] << ','
        << (truth.size() == sigma.size() ? truth[e] : std::numeric_limits<double>::quiet_NaN())
        << '\n';
  }
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
  const auto context = ExperimentContext::build(spec.mesh);
  return run_experiment(spec, *context, out_dir);
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const ExperimentContext& ctx,
                                const std::filesystem::path& out_dir) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.spec = spec;
  try {
    const Phantom phantom = Phantom::make(spec.phantom);
    const ConductivityField truth_fine = build_phantom(phantom, *ctx.fine);
    const SyntheticData data = synthesize_data(*ctx.fine_model, truth_fine, spec.noise);
    report.noise_norm = data.noise_norm;
    report.truth = ctx.transfer.apply(truth_fine.values);

    InversionConfig config = spec.config;
    config.noise_norm = data.noise_norm;
    const auto background = ConductivityField::constant(*ctx.coarse, phantom.background_conductivity());
    const RunOptions options{report.truth};
    const ForwardModel& model = *ctx.coarse_model;

    SplitBregmanState state;
    switch (spec.method) {
      case Method::Alg1:
        state = run_algorithm1(model, data.noisy, config, ctx.phi, ctx.R, background, options);
        break;
      case Method::Alg2:
        state = run_algorithm2(model, data.noisy, config, ctx.R, background, background, options);
        break;
      case Method::L1:
        state = run_l1(model, data.noisy, config, spec.l1_domain, ctx.phi, background, ctx.R,
                       background, options);
        break;
      case Method::L2:
        state = run_l2(model, data.noisy, config, ctx.phi, ctx.R, background, options);
        break;
      case Method::TV: {
        TvConfig tv = TvConfig::mirroring(config);
        tv.gamma = spec.tv_gamma;
        state = run_tv(model, data.noisy, tv, ctx.R, background, options);
        break;
      }
    }
    report.history = state.history;
    report.reconstruction = state.sigma.values;
    report.relative_error = relative_error(state.sigma.values, report.truth);
    report.residual = state.history.back().residual;
    report.iterations = state.k;
    report.stop_reason = stop_name(state.stop);
    for (const auto& h : state.history) report.cg_failures += h.cg_failures;
  } catch (const InversionError& e) {
    report.status = "failed";
    report.message = e.what();
    report.history = e.history();
    report.iterations = e.history().empty() ? 0 : e.history().back().k;
  } catch (const std::exception& e) {
    report.status = "failed";
    report.message = e.what();
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    report.history_path = (out_dir / "history.csv").string();
    write_history_csv(report.history, report.history_path);
    if (report.reconstruction.size() == ctx.coarse->element_count()) {
      report.image_path = (out_dir / "image.csv").string();
      write_image_csv(*ctx.coarse, report.reconstruction, report.truth, report.image_path);
    }
    write_text(out_dir / "report.json", report_to_json(report));
  }
  return report;
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "beta") return SweepAxis::Beta;
  if (name == "mu") return SweepAxis::Mu;
  if (name == "epsilon" || name == "noise") return SweepAxis::Epsilon;
  throw std::invalid_argument("unknown sweep axis '" + name + "'");
}

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Beta: return "beta";
    case SweepAxis::Mu: return "mu";
    case SweepAxis::Epsilon: return "epsilon";
  }
  return "?";
}

SweepResult sweep(SweepAxis axis, const std::vector<double>& values, const ExperimentSpec& base,
                  const std::filesystem::path& out_dir, unsigned workers) {
  if (values.empty()) throw std::invalid_argument("sweep: no values");
  const auto context = ExperimentContext::build(base.mesh);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());

  std::vector<ExperimentSpec> specs;
  for (double v : values) {
    ExperimentSpec spec = base;
    switch (axis) {
      case SweepAxis::Beta: spec.config.beta = v; break;
      case SweepAxis::Mu: spec.config.mu = v; break;
      case SweepAxis::Epsilon:
        spec.noise.epsilon = v;
        spec.noise.seed = default_seed(spec.phantom, v);
        break;
    }
    specs.push_back(spec);
  }

  auto point_dir = [&](std::size_t i) -> std::filesystem::path {
    if (out_dir.empty()) return {};
    std::ostringstream name;
    name << axis_name(axis) << '_' << std::setprecision(6) << values[i];
    return out_dir / name.str();
  };

  SweepResult result;
  result.values = values;
  result.reports.resize(values.size());
  for (std::size_t first = 0; first < specs.size(); first += workers) {
    const std::size_t last = std::min(specs.size(), first + workers);
    std::vector<std::future<ExperimentReport>> running;
    for (std::size_t i = first; i < last; ++i) {
      running.push_back(std::async(std::launch::async, [&, i] {
        return run_experiment(specs[i], *context, point_dir(i));
      }));
    }
    for (std::size_t i = first; i < last; ++i) result.reports[i] = running[i - first].get();
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir / ("sweep_" + axis_name(axis) + ".csv"));
    csv << std::setprecision(std::numeric_limits<double>::max_digits10);
    csv << axis_name(axis) << ",method,phantom,RE,residual,iterations,status\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto& r = result.reports[i];
      csv << values[i] << ',' << method_name(r.spec.method) << ',' << phantom_name(r.spec.phantom)
          << ',' << r.relative_error << ',' << r.residual << ',' << r.iterations << ',' << r.status
          << '\n';
    }
  }
  return result;
}

namespace {

json config_json(const InversionConfig& c) {
  return json{{"alpha0", c.alpha0},       {"q_alpha", c.q_alpha},
              {"beta", c.beta},           {"mu", c.mu},
              {"tau", c.tau},             {"inner_max", c.inner_max},
              {"outer_max", c.outer_max}, {"cg_tol", c.cg_tol},
              {"cg_max", c.cg_max},       {"residual_floor", c.residual_floor},
              {"lambda", c.lambda},       {"reset_bregman", c.reset_bregman},
              {"strict_cg", c.strict_cg}};
}

InversionConfig config_from_json(const json& j) {
  InversionConfig c;
  c.alpha0 = j.at("alpha0").get<double>();
  c.q_alpha = j.at("q_alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.mu = j.at("mu").get<double>();
  c.tau = j.at("tau").get<double>();
  c.inner_max = j.at("inner_max").get<int>();
  c.outer_max = j.at("outer_max").get<int>();
  c.cg_tol = j.at("cg_tol").get<double>();
  c.cg_max = j.at("cg_max").get<int>();
  c.residual_floor = j.at("residual_floor").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.reset_bregman = j.at("reset_bregman").get<bool>();
  c.strict_cg = j.at("strict_cg").get<bool>();
  c.validate();
  return c;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
  const auto& s = report.spec;
  json j;
  j["spec"] = {
      {"method", method_name(s.method)},
      {"phantom", phantom_name(s.phantom)},
      {"noise", {{"epsilon", s.noise.epsilon}, {"seed", s.noise.seed}, {"scale", noise_scale_name(s.noise.scale)}}},
      {"config", config_json(s.config)},
      {"tv_gamma", s.tv_gamma},
      {"l1_domain", s.l1_domain == SparsityDomainKind::Transform ? "transform" : "space"},
      {"mesh",
       {{"fine_elements", s.mesh.fine_elements},
        {"coarse_elements", s.mesh.coarse_elements},
        {"fine_path", s.mesh.fine_path},
        {"coarse_path", s.mesh.coarse_path},
        {"electrodes", s.mesh.electrodes},
        {"contact_impedance", s.mesh.contact_impedance},
        {"coverage", s.mesh.coverage},
        {"include_driven", s.mesh.include_driven},
        {"current_amplitude", s.mesh.current_amplitude}}},
  };
  j["status"] = report.status;
  j["message"] = report.message;
  j["relative_error"] = nullable(report.relative_error);
  j["residual"] = nullable(report.residual);
  j["noise_norm"] = report.noise_norm;
  j["iterations"] = report.iterations;
  j["stop_reason"] = report.stop_reason;
  j["cg_failures"] = report.cg_failures;
  j["wall_seconds"] = report.wall_seconds;
  j["history_path"] = report.history_path;
  j["image_path"] = report.image_path;
  return j.dump(2) + "\n";
}

ExperimentSpec spec_from_json(const std::string& json_text) {
  const json root = json::parse(json_text);
  const json& j = root.contains("spec") ? root.at("spec") : root;
  ExperimentSpec s;
  s.method = parse_method(j.at("method").get<std::string>());
  s.phantom = parse_phantom(j.at("phantom").get<std::string>());
  s.noise.epsilon = j.at("noise").at("epsilon").get<double>();
  s.noise.seed = j.at("noise").at("seed").get<std::uint64_t>();
  s.noise.scale = parse_noise_scale(j.at("noise").at("scale").get<std::string>());
  s.config = config_from_json(j.at("config"));
  s.tv_gamma = j.at("tv_gamma").get<double>();
  s.l1_domain = j.at("l1_domain").get<std::string>() == "space" ? SparsityDomainKind::Space
                                                                : SparsityDomainKind::Transform;
  const json& m = j.at("mesh");
  s.mesh.fine_elements = m.at("fine_elements").get<int>();
  s.mesh.coarse_elements = m.at("coarse_elements").get<int>();
  s.mesh.fine_path = m.at("fine_path").get<std::string>();
  s.mesh.coarse_path = m.at("coarse_path").get<std::string>();
  s.mesh.electrodes = m.at("electrodes").get<int>();
  s.mesh.contact_impedance = m.at("contact_impedance").get<double>();
  s.mesh.coverage = m.at("coverage").get<double>();
  s.mesh.include_driven = m.at("include_driven").get<bool>();
  s.mesh.current_amplitude = m.at("current_amplitude").get<double>();
  return s;
}

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

}  // namespace

ExperimentSpec spec_from_report_file(const std::filesystem::path& path) {
  return spec_from_json(read_json(path).dump());
}

double relative_error_from_report_file(const std::filesystem::path& path) {
  const json j = read_json(path);
  const auto& re = j.at("relative_error");
  return re.is_null() ? std::numeric_limits<double>::quiet_NaN() : re.get<double>();
}

}  // namespace eit
