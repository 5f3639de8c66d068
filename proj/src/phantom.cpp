#include "eit/phantom.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace eit {

namespace {

constexpr double kConductive = 1.0;  // ohm m
constexpr double kResistive = 8.0;   // ohm m

}  // namespace

Phantom Phantom::make(PhantomId id) {
  Phantom p;
  p.id = id;
  switch (id) {
    case PhantomId::A:
      p.inclusions = {{{-0.40, 0.30}, 0.22, kConductive}, {{0.35, -0.35}, 0.22, kResistive}};
      break;
    case PhantomId::B:
      p.inclusions = {{{-0.45, 0.25}, 0.20, kConductive},
                      {{0.40, 0.35}, 0.18, kResistive},
                      {{0.05, -0.50}, 0.20, kConductive}};
      break;
    case PhantomId::C:
      p.inclusions = {{{-0.50, 0.30}, 0.15, kConductive},
                      {{0.00, 0.55}, 0.15, kResistive},
                      {{0.50, 0.25}, 0.15, kConductive},
                      {{-0.30, -0.45}, 0.15, kResistive},
                      {{0.35, -0.45}, 0.15, kConductive}};
      break;
    case PhantomId::Background:
      break;
  }
  p.validate();
  return p;
}

void Phantom::validate() const {
  if (!(background_resistivity > 0.0)) throw std::invalid_argument("Phantom: bad background");
  for (std::size_t i = 0; i < inclusions.size(); ++i) {
    const auto& a = inclusions[i];
    if (!(a.resistivity > 0.0) || !(a.radius > 0.0)) {
      throw std::invalid_argument("Phantom: inclusion radius and resistivity must be positive");
    }
    if (std::hypot(a.center.x, a.center.y) + a.radius >= 1.0) {
      throw std::invalid_argument("Phantom: inclusion touches the boundary");
    }
    for (std::size_t j = i + 1; j < inclusions.size(); ++j) {
      const auto& b = inclusions[j];
      if (std::hypot(a.center.x - b.center.x, a.center.y - b.center.y) <= a.radius + b.radius) {
        throw std::invalid_argument("Phantom: inclusions overlap");
      }
    }
  }
}

PhantomId parse_phantom(const std::string& name) {
  if (name == "A" || name == "a") return PhantomId::A;
  if (name == "B" || name == "b") return PhantomId::B;
  if (name == "C" || name == "c") return PhantomId::C;
  if (name == "background" || name == "0") return PhantomId::Background;
  throw std::invalid_argument("unknown phantom '" + name + "'");
}

std::string phantom_name(PhantomId id) {
  switch (id) {
    case PhantomId::A: return "A";
    case PhantomId::B: return "B";
    case PhantomId::C: return "C";
    case PhantomId::Background: return "background";
  }
  return "?";
}

ConductivityField build_phantom(PhantomId id, const TriMesh& mesh) {
  return build_phantom(Phantom::make(id), mesh);
}

ConductivityField build_phantom(const Phantom& phantom, const TriMesh& mesh) {
  phantom.validate();
  Eigen::VectorXd values(mesh.element_count());
  for (int e = 0; e < mesh.element_count(); ++e) {
    const Point c = mesh.barycenter(e);
    double resistivity = phantom.background_resistivity;
    for (const auto& inc : phantom.inclusions) {
      if (std::hypot(c.x - inc.center.x, c.y - inc.center.y) < inc.radius) {
        resistivity = inc.resistivity;
        break;
      }
    }
    values[e] = 1.0 / resistivity;
  }
  return ConductivityField::on(mesh, std::move(values));
}

int count_inclusion_regions(const TriMesh& mesh, const Eigen::VectorXd& values, double background,
                            double tolerance) {
  const int n = mesh.element_count();
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto inside = [&](int e) { return std::abs(values[e] - background) > tolerance; };
  for (const auto& [a, b] : mesh.element_adjacency()) {
    if (inside(a) && inside(b) && std::abs(values[a] - values[b]) <= tolerance) {
      parent[find(a)] = find(b);
    }
  }
  int regions = 0;
  for (int e = 0; e < n; ++e) {
    if (inside(e) && find(e) == e) ++regions;
  }
  return regions;
}

}  // namespace eit
