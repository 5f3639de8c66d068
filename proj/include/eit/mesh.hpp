#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace eit {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Triangle = std::array<int, 3>;
using Edge = std::array<int, 2>;

/// Electrode description shared by the forward model and the mesh generator.
struct ElectrodeLayout {
  int count = 16;
  std::vector<double> contact_impedances;  // one z_l per electrode
  double coverage_fraction = 0.5;

  /// Uniform layout: `count` electrodes with identical contact impedance.
  static ElectrodeLayout uniform(int count, double impedance = 0.05, double coverage = 0.5);

  /// Throws std::invalid_argument if count < 2, any z_l <= 0 or coverage is not in (0, 1).
  void validate() const;
};

/// Two-dimensional P1 triangulation of the unit disk with boundary electrodes.
///
/// Immutable once constructed. The constructor derives boundary edges and
/// element adjacency and rejects meshes violating any of:
///   - every element has positive signed area;
///   - boundary nodes lie on the unit circle (1e-9);
///   - electrode edge sets are boundary edges, disjoint and contiguous arcs.
class TriMesh {
 public:
  /// `electrodes[l]` lists the node pairs of the boundary edges under electrode l.
  TriMesh(std::vector<Point> nodes, std::vector<Triangle> elements,
          const std::vector<std::vector<Edge>>& electrodes);

  const std::vector<Point>& nodes() const { return nodes_; }
  const std::vector<Triangle>& elements() const { return elements_; }
  const std::vector<Edge>& boundary_edges() const { return boundary_edges_; }
  /// Per electrode, indices into boundary_edges(), ordered along the arc.
  const std::vector<std::vector<int>>& electrode_edges() const { return electrode_edges_; }
  /// One entry per interior edge: the two elements sharing it, first < second.
  const std::vector<std::pair<int, int>>& element_adjacency() const { return adjacency_; }

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int element_count() const { return static_cast<int>(elements_.size()); }
  int electrode_count() const { return static_cast<int>(electrode_edges_.size()); }

  double area(int element) const { return areas_[element]; }
  const std::vector<double>& areas() const { return areas_; }
  Point barycenter(int element) const;
  double total_area() const;

  /// Content fingerprint; two meshes with the same id are the same discretization.
  std::uint64_t id() const { return id_; }

 private:
  std::vector<Point> nodes_;
  std::vector<Triangle> elements_;
  std::vector<Edge> boundary_edges_;
  std::vector<std::vector<int>> electrode_edges_;
  std::vector<std::pair<int, int>> adjacency_;
  std::vector<double> areas_;
  std::uint64_t id_ = 0;
};

using MeshPtr = std::shared_ptr<const TriMesh>;

double signed_area(const Point& a, const Point& b, const Point& c);

/// Structured polar-ring triangulation of the unit disk.
///
/// Ring node counts are multiples of the electrode count, so the mesh (and the
/// electrode arcs) is invariant under rotation by one electrode pitch. Electrodes
/// are equispaced and numbered clockwise, electrode 0 centred at the top.
/// The element count lands within 15% of `target_elements`.
TriMesh generate_disk_mesh(int target_elements, const ElectrodeLayout& layout);

/// Plain-text mesh format: NODES / ELEMENTS / ELECTRODES sections, 1-based indices.
TriMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const TriMesh& mesh, const std::filesystem::path& path);

/// Fine-to-coarse element map used to express a fine-mesh field on a coarse mesh.
struct MeshTransfer {
  struct Entry {
    int fine_element;
    double weight;
  };
  /// coarse element -> contributing fine elements with weights summing to its area
  std::vector<std::vector<Entry>> fine_to_coarse;
  /// fine element -> owning coarse element
  std::vector<int> owner;

  /// Area-weighted average of a fine element field per coarse element.
  Eigen::VectorXd apply(const Eigen::VectorXd& fine_values) const;
};

/// Locates each fine barycenter in the coarse mesh. Throws std::runtime_error if a
/// barycenter lies outside every coarse element after tolerance inflation.
MeshTransfer build_transfer(const TriMesh& fine, const TriMesh& coarse);

/// Index of the element containing p, or -1. `tolerance` inflates barycentric bounds.
int locate_point(const TriMesh& mesh, const Point& p, double tolerance = 1e-12);

/// Interior-edge difference operator: row per adjacency pair, +1 / -1 on the two elements.
Eigen::SparseMatrix<double> adjacency_difference_operator(const TriMesh& mesh);

}  // namespace eit
