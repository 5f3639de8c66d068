#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "eit/baselines.hpp"
#include "eit/forward.hpp"
#include "eit/haar.hpp"
#include "eit/inversion.hpp"
#include "eit/mesh.hpp"
#include "eit/phantom.hpp"

namespace eit {

enum class Method { Alg1, Alg2, L1, L2, TV };

Method parse_method(const std::string& name);
std::string method_name(Method method);

/// Reference amplitude the noise level multiplies.
enum class NoiseScale { MaxAbs, PerChannel, Absolute };

NoiseScale parse_noise_scale(const std::string& name);
std::string noise_scale_name(NoiseScale scale);

struct NoiseSpec {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  NoiseScale scale = NoiseScale::MaxAbs;
};

/// Fixed seed per (phantom, noise level).
std::uint64_t default_seed(PhantomId phantom, double epsilon);

struct SyntheticData {
  Eigen::VectorXd clean;
  Eigen::VectorXd noisy;
  double noise_norm = 0.0;
};

/// U_noisy = U_clean + epsilon * s * n with n standard normal from `noise.seed`.
SyntheticData synthesize_data(const ForwardModel& fine_model, const ConductivityField& sigma,
                              const NoiseSpec& noise);

struct MeshSpec {
  int fine_elements = 1968;
  int coarse_elements = 492;
  std::string fine_path;    // load instead of generating when set
  std::string coarse_path;
  int electrodes = 16;
  double contact_impedance = 0.05;
  double coverage = 0.5;
  bool include_driven = false;
  double current_amplitude = 0.1;  // injected current per drive
};

struct ExperimentSpec {
  Method method = Method::Alg1;
  PhantomId phantom = PhantomId::A;
  NoiseSpec noise;
  InversionConfig config;
  double tv_gamma = 0.0;  // nonpositive: default smoothing
  SparsityDomainKind l1_domain = SparsityDomainKind::Transform;
  MeshSpec mesh;
};

/// Parameter tables for the elastic-net runs: noise-free per phantom, noisy per method and level.
InversionConfig paper_config(Method method, PhantomId phantom, double epsilon);
/// Spec with paper_config, default seed and default meshes.
ExperimentSpec default_spec(Method method, PhantomId phantom, double epsilon);

/// Meshes, forward models and operators shared by every run on the same MeshSpec.
struct ExperimentContext {
  MeshSpec mesh_spec;
  MeshPtr fine;
  MeshPtr coarse;
  std::shared_ptr<const ForwardModel> fine_model;
  std::shared_ptr<const ForwardModel> coarse_model;
  MeshTransfer transfer;
  Eigen::SparseMatrix<double> R;
  HaarTransform phi{0};

  /// Throws if the fine and coarse discretizations coincide.
  static std::shared_ptr<const ExperimentContext> build(const MeshSpec& spec);
};

struct ExperimentReport {
  ExperimentSpec spec;
  std::string status = "ok";  // "ok" or "failed"
  std::string message;
  double relative_error = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
  double noise_norm = 0.0;
  int iterations = 0;
  int cg_failures = 0;  // CG solves that stopped at cg_max
  std::string stop_reason;
  double wall_seconds = 0.0;
  std::string history_path;
  std::string image_path;
  std::vector<HistoryRecord> history;
  Eigen::VectorXd reconstruction;
  Eigen::VectorXd truth;  // on the inversion mesh
};

/// Simulates on the fine mesh, inverts on the coarse one. Writes history.csv,
/// image.csv and report.json into `out_dir` when it is non-empty.
ExperimentReport run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir = {});
ExperimentReport run_experiment(const ExperimentSpec& spec, const ExperimentContext& context,
                                const std::filesystem::path& out_dir = {});

enum class SweepAxis { Beta, Mu, Epsilon };
SweepAxis parse_axis(const std::string& name);
std::string axis_name(SweepAxis axis);

struct SweepResult {
  std::vector<double> values;
  std::vector<ExperimentReport> reports;
};

/// One run per value, executed concurrently (at most `workers` at a time; 0 = hardware threads).
/// Failed points are recorded and the sweep continues. Writes sweep_<axis>.csv when out_dir is set.
SweepResult sweep(SweepAxis axis, const std::vector<double>& values, const ExperimentSpec& base,
                  const std::filesystem::path& out_dir = {}, unsigned workers = 0);

/// relative_error of a field against the truth on the same mesh.
double relative_error(const ConductivityField& sigma, const ConductivityField& truth);

std::string report_to_json(const ExperimentReport& report);
ExperimentSpec spec_from_json(const std::string& json_text);
ExperimentSpec spec_from_report_file(const std::filesystem::path& path);
double relative_error_from_report_file(const std::filesystem::path& path);

/// Element-wise image data: vertices, barycenter, conductivity, resistivity and truth.
void write_image_csv(const TriMesh& mesh, const Eigen::VectorXd& sigma, const Eigen::VectorXd& truth,
                     const std::filesystem::path& path);

}  // namespace eit
