#pragma once

#include <string>
#include <vector>

#include "eit/forward.hpp"
#include "eit/mesh.hpp"

namespace eit {

enum class PhantomId { A, B, C, Background };

struct Inclusion {
  Point center;
  double radius;
  double resistivity;  // ohm m
};

/// Piecewise-constant disk phantom described in resistivities.
struct Phantom {
  PhantomId id = PhantomId::Background;
  std::vector<Inclusion> inclusions;
  double background_resistivity = 4.0;

  /// A: two inclusions, B: three, C: five; 4 ohm m background, 1 and 8 ohm m inclusions.
  static Phantom make(PhantomId id);
  /// Throws unless inclusions are inside the disk, pairwise disjoint and resistivities positive.
  void validate() const;
  double background_conductivity() const { return 1.0 / background_resistivity; }
};

PhantomId parse_phantom(const std::string& name);
std::string phantom_name(PhantomId id);

/// Element conductivity = 1 / resistivity of the region holding the element barycenter.
ConductivityField build_phantom(PhantomId id, const TriMesh& mesh);
ConductivityField build_phantom(const Phantom& phantom, const TriMesh& mesh);

/// Connected components (through shared edges) of elements whose value differs from `background`
/// by more than `tolerance`; neighbouring elements join only when their values match.
int count_inclusion_regions(const TriMesh& mesh, const Eigen::VectorXd& values, double background,
                            double tolerance = 1e-12);

}  // namespace eit
