#include "eit/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace eit {

namespace {

std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

class Fnv1a {
 public:
  template <typename T>
  void add(const T& value) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(&value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      hash_ ^= bytes[i];
      hash_ *= 1099511628211ULL;
    }
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 14695981039346656037ULL;
};

}  // namespace

ElectrodeLayout ElectrodeLayout::uniform(int count, double impedance, double coverage) {
  ElectrodeLayout layout;
  layout.count = count;
  layout.contact_impedances.assign(static_cast<std::size_t>(std::max(count, 0)), impedance);
  layout.coverage_fraction = coverage;
  layout.validate();
  return layout;
}

void ElectrodeLayout::validate() const {
  if (count < 2) {
    throw std::invalid_argument("ElectrodeLayout: at least two electrodes are required");
  }
  if (static_cast<int>(contact_impedances.size()) != count) {
    throw std::invalid_argument("ElectrodeLayout: one contact impedance per electrode");
  }
  for (double z : contact_impedances) {
    if (!(z > 0.0)) {
      throw std::invalid_argument("ElectrodeLayout: contact impedances must be positive");
    }
  }
  if (!(coverage_fraction > 0.0 && coverage_fraction < 1.0)) {
    throw std::invalid_argument("ElectrodeLayout: coverage fraction must lie in (0, 1)");
  }
}

double signed_area(const Point& a, const Point& b, const Point& c) {
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

TriMesh::TriMesh(std::vector<Point> nodes, std::vector<Triangle> elements,
                 const std::vector<std::vector<Edge>>& electrodes)
    : nodes_(std::move(nodes)), elements_(std::move(elements)) {
  const int n_nodes = node_count();
  if (n_nodes < 3 || elements_.empty()) {
    throw std::invalid_argument("TriMesh: empty mesh");
  }

  areas_.reserve(elements_.size());
  for (std::size_t e = 0; e < elements_.size(); ++e) {
    for (int v : elements_[e]) {
      if (v < 0 || v >= n_nodes) {
        throw std::invalid_argument("TriMesh: element " + std::to_string(e) +
                                    " references a missing node");
      }
    }
    const auto& t = elements_[e];
    const double a = signed_area(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]);
    if (!(a > 0.0)) {
      throw std::invalid_argument("TriMesh: element " + std::to_string(e) +
                                  " is degenerate or clockwise");
    }
    areas_.push_back(a);
  }

  // edge -> first owning element (and local orientation) until the second owner shows up
  struct EdgeOwner {
    int element;
    Edge oriented;
    int owners;
  };
  std::unordered_map<std::uint64_t, EdgeOwner> owners;
  owners.reserve(elements_.size() * 2);
  for (int e = 0; e < element_count(); ++e) {
    const auto& t = elements_[e];
    for (int k = 0; k < 3; ++k) {
      const int a = t[k];
      const int b = t[(k + 1) % 3];
      auto [it, inserted] = owners.try_emplace(edge_key(a, b), EdgeOwner{e, {a, b}, 1});
      if (!inserted) {
        if (++it->second.owners > 2) {
          throw std::invalid_argument("TriMesh: edge shared by more than two elements");
        }
        adjacency_.emplace_back(std::min(it->second.element, e), std::max(it->second.element, e));
      }
    }
  }

  std::unordered_map<std::uint64_t, int> boundary_index;
  for (int e = 0; e < element_count(); ++e) {
    const auto& t = elements_[e];
    for (int k = 0; k < 3; ++k) {
      const auto key = edge_key(t[k], t[(k + 1) % 3]);
      const auto& owner = owners.at(key);
      if (owner.owners == 1) {
        boundary_index.emplace(key, static_cast<int>(boundary_edges_.size()));
        boundary_edges_.push_back(owner.oriented);
      }
    }
  }

  for (const auto& edge : boundary_edges_) {
    for (int v : edge) {
      const double r = std::hypot(nodes_[v].x, nodes_[v].y);
      if (std::abs(r - 1.0) > 1e-9) {
        throw std::invalid_argument("TriMesh: boundary node " + std::to_string(v) +
                                    " is off the unit circle");
      }
    }
  }

  std::vector<int> claimed(boundary_edges_.size(), -1);
  for (std::size_t l = 0; l < electrodes.size(); ++l) {
    const auto& pairs = electrodes[l];
    if (pairs.empty()) {
      throw std::invalid_argument("TriMesh: electrode " + std::to_string(l) + " has no edges");
    }
    std::vector<int> edges;
    std::map<int, std::vector<int>> incident;  // node -> electrode-local edges
    for (const auto& pair : pairs) {
      const auto it = boundary_index.find(edge_key(pair[0], pair[1]));
      if (it == boundary_index.end()) {
        throw std::invalid_argument("TriMesh: electrode " + std::to_string(l) +
                                    " uses a non-boundary edge");
      }
      if (claimed[it->second] != -1) {
        throw std::invalid_argument("TriMesh: electrodes " + std::to_string(claimed[it->second]) +
                                    " and " + std::to_string(l) + " overlap");
      }
      claimed[it->second] = static_cast<int>(l);
      incident[pair[0]].push_back(static_cast<int>(edges.size()));
      incident[pair[1]].push_back(static_cast<int>(edges.size()));
      edges.push_back(it->second);
    }

    // a contiguous open arc is a path: two endpoints of degree one, the rest degree two
    int start = -1;
    int endpoints = 0;
    for (const auto& [node, inc] : incident) {
      if (inc.size() == 1) {
        ++endpoints;
        if (start == -1) start = node;
      } else if (inc.size() != 2) {
        throw std::invalid_argument("TriMesh: electrode " + std::to_string(l) + " is not an arc");
      }
    }
    if (endpoints != 2) {
      throw std::invalid_argument("TriMesh: electrode " + std::to_string(l) +
                                  " is not a contiguous arc");
    }
    std::vector<int> ordered;
    std::vector<bool> used(edges.size(), false);
    int node = start;
    while (ordered.size() < edges.size()) {
      int next_local = -1;
      for (int local : incident[node]) {
        if (!used[local]) next_local = local;
      }
      if (next_local == -1) {
        throw std::invalid_argument("TriMesh: electrode " + std::to_string(l) +
                                    " is not a contiguous arc");
      }
      used[next_local] = true;
      ordered.push_back(edges[next_local]);
      const auto& be = boundary_edges_[edges[next_local]];
      node = be[0] == node ? be[1] : be[0];
    }
    electrode_edges_.push_back(std::move(ordered));
  }

  Fnv1a hash;
  for (const auto& p : nodes_) {
    hash.add(p.x);
    hash.add(p.y);
  }
  for (const auto& t : elements_) hash.add(t);
  for (const auto& arc : electrode_edges_) {
    hash.add(static_cast<int>(arc.size()));
    for (int e : arc) hash.add(e);
  }
  id_ = hash.value();
}

Point TriMesh::barycenter(int element) const {
  const auto& t = elements_[element];
  return {(nodes_[t[0]].x + nodes_[t[1]].x + nodes_[t[2]].x) / 3.0,
          (nodes_[t[0]].y + nodes_[t[1]].y + nodes_[t[2]].y) / 3.0};
}

double TriMesh::total_area() const {
  double sum = 0.0;
  for (double a : areas_) sum += a;
  return sum;
}

namespace {

struct RingPlan {
  int rings = 0;                 // number of rings outside the centre node
  std::vector<int> counts;       // nodes per ring, counts.back() == boundary
  int elements = 0;
};

RingPlan plan_rings(int target, int electrodes, int per_sector) {
  const int boundary = electrodes * per_sector;
  RingPlan best;
  double best_score = std::numeric_limits<double>::infinity();
  const int max_rings = std::max(1, std::min(4 * per_sector, 200));
  for (int rings = 1; rings <= max_rings; ++rings) {
    for (int step = 0; step <= 80; ++step) {
      const double stretch = 0.6 + 0.01 * step;
      const double growth = stretch * per_sector / rings;
      std::vector<int> counts;
      int inner_sum = 0;
      for (int i = 1; i < rings; ++i) {
        const int units = std::clamp(static_cast<int>(std::lround(growth * i)), 1, per_sector);
        counts.push_back(units * electrodes);
        inner_sum += units * electrodes;
      }
      counts.push_back(boundary);
      const int elements = 2 * inner_sum + boundary;
      const double score = std::abs(elements - target) / static_cast<double>(target) +
                           0.05 * std::abs(stretch - 1.0);
      if (score < best_score) {
        best_score = score;
        best = RingPlan{rings, std::move(counts), elements};
      }
    }
  }
  return best;
}

}  // namespace

TriMesh generate_disk_mesh(int target_elements, const ElectrodeLayout& layout) {
  layout.validate();
  if (target_elements < 64) {
    throw std::invalid_argument("generate_disk_mesh: target_elements must be at least 64");
  }
  const int electrodes = layout.count;
  const double coverage = layout.coverage_fraction;

  // near-equilateral elements want a boundary of about sqrt(2 pi T) edges
  const double raw_sector = std::sqrt(2.0 * std::numbers::pi * target_elements) / electrodes;
  if (2 * electrodes > target_elements) {
    throw std::invalid_argument(
        "generate_disk_mesh: too few elements to give every electrode a boundary edge and a gap");
  }
  int per_sector = std::max(2, static_cast<int>(std::ceil(raw_sector)));
  int under = -1;
  for (int p = per_sector; p <= per_sector + 32; ++p) {
    const double exact = coverage * p;
    const auto rounded = std::lround(exact);
    if (std::abs(exact - static_cast<double>(rounded)) < 1e-9 && rounded >= 1 && rounded <= p - 1) {
      per_sector = p;
      under = static_cast<int>(rounded);
      break;
    }
  }
  if (under == -1) {
    under = std::clamp(static_cast<int>(std::lround(coverage * per_sector)), 1, per_sector - 1);
  }

  const RingPlan plan = plan_rings(target_elements, electrodes, per_sector);
  const int boundary = plan.counts.back();
  const double theta0 = std::numbers::pi / 2.0 - std::numbers::pi * under / boundary;

  std::vector<Point> nodes;
  nodes.push_back({0.0, 0.0});
  std::vector<int> ring_start;
  for (int i = 1; i <= plan.rings; ++i) {
    const int n = plan.counts[i - 1];
    ring_start.push_back(static_cast<int>(nodes.size()));
    const double radius = i == plan.rings ? 1.0 : static_cast<double>(i) / plan.rings;
    for (int j = 0; j < n; ++j) {
      const double theta = theta0 + 2.0 * std::numbers::pi * j / n;
      nodes.push_back({radius * std::cos(theta), radius * std::sin(theta)});
    }
  }

  std::vector<Triangle> elements;
  elements.reserve(static_cast<std::size_t>(plan.elements));
  {
    const int n = plan.counts[0];
    const int s = ring_start[0];
    for (int j = 0; j < n; ++j) {
      elements.push_back({0, s + j, s + (j + 1) % n});
    }
  }
  for (int i = 1; i < plan.rings; ++i) {
    const int na = plan.counts[i - 1];
    const int nb = plan.counts[i];
    const int sa = ring_start[i - 1];
    const int sb = ring_start[i];
    int ia = 0;
    int ib = 0;
    while (ia < na || ib < nb) {
      // exact comparison of the next angular positions (ib+1)/nb and (ia+1)/na
      const bool outer = ia == na || (ib < nb && static_cast<long>(ib + 1) * na <=
                                                     static_cast<long>(ia + 1) * nb);
      if (outer) {
        elements.push_back({sa + ia % na, sb + ib % nb, sb + (ib + 1) % nb});
        ++ib;
      } else {
        elements.push_back({sa + ia % na, sb + ib % nb, sa + (ia + 1) % na});
        ++ia;
      }
    }
  }

  std::vector<std::vector<Edge>> electrode_edges(static_cast<std::size_t>(electrodes));
  const int sb = ring_start.back();
  for (int l = 0; l < electrodes; ++l) {
    const int first = ((-l * per_sector) % boundary + boundary) % boundary;
    for (int t = 0; t < under; ++t) {
      const int j = (first + t) % boundary;
      electrode_edges[l].push_back({sb + j, sb + (j + 1) % boundary});
    }
  }

  return TriMesh(std::move(nodes), std::move(elements), electrode_edges);
}

TriMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_mesh: cannot open " + path.string());
  }
  enum class Section { None, Nodes, Elements, Electrodes } section = Section::None;
  std::vector<Point> nodes;
  std::vector<Triangle> elements;
  std::vector<std::vector<Edge>> electrodes;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("load_mesh: " + path.string() + ":" + std::to_string(line_no) +
                             ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string head;
    if (!(fields >> head)) continue;
    if (head == "NODES") {
      section = Section::Nodes;
      continue;
    }
    if (head == "ELEMENTS") {
      section = Section::Elements;
      continue;
    }
    if (head == "ELECTRODES") {
      section = Section::Electrodes;
      continue;
    }
    const int index = std::stoi(head);
    switch (section) {
      case Section::Nodes: {
        Point p;
        if (!(fields >> p.x >> p.y) || index != static_cast<int>(nodes.size()) + 1) {
          fail("bad node record");
        }
        nodes.push_back(p);
        break;
      }
      case Section::Elements: {
        Triangle t;
        if (!(fields >> t[0] >> t[1] >> t[2]) || index != static_cast<int>(elements.size()) + 1) {
          fail("bad element record");
        }
        for (int& v : t) --v;
        elements.push_back(t);
        break;
      }
      case Section::Electrodes: {
        if (index < 1) fail("bad electrode index");
        if (static_cast<int>(electrodes.size()) < index) electrodes.resize(index);
        int a = 0;
        int b = 0;
        bool any = false;
        while (fields >> a) {
          if (!(fields >> b)) fail("odd number of electrode edge nodes");
          electrodes[index - 1].push_back({a - 1, b - 1});
          any = true;
        }
        if (!any) fail("electrode without edges");
        break;
      }
      case Section::None:
        fail("record outside of a section");
    }
  }
  for (auto& t : elements) {
    for (int v : t) {
      if (v < 0 || v >= static_cast<int>(nodes.size())) {
        throw std::runtime_error("load_mesh: element references a missing node");
      }
    }
    if (signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]) < 0.0) std::swap(t[1], t[2]);
  }
  return TriMesh(std::move(nodes), std::move(elements), electrodes);
}

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_mesh: cannot write " + path.string());
  }
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "NODES " << mesh.node_count() << '\n';
  for (int i = 0; i < mesh.node_count(); ++i) {
    out << i + 1 << ' ' << mesh.nodes()[i].x << ' ' << mesh.nodes()[i].y << '\n';
  }
  out << "ELEMENTS " << mesh.element_count() << '\n';
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& t = mesh.elements()[e];
    out << e + 1 << ' ' << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  out << "ELECTRODES " << mesh.electrode_count() << '\n';
  for (int l = 0; l < mesh.electrode_count(); ++l) {
    out << l + 1;
    for (int be : mesh.electrode_edges()[l]) {
      const auto& edge = mesh.boundary_edges()[be];
      out << ' ' << edge[0] + 1 << ' ' << edge[1] + 1;
    }
    out << '\n';
  }
}

int locate_point(const TriMesh& mesh, const Point& p, double tolerance) {
  const auto& nodes = mesh.nodes();
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& t = mesh.elements()[e];
    const double area = mesh.area(e);
    const double l0 = signed_area(p, nodes[t[1]], nodes[t[2]]) / area;
    const double l1 = signed_area(nodes[t[0]], p, nodes[t[2]]) / area;
    const double l2 = 1.0 - l0 - l1;
    if (l0 >= -tolerance && l1 >= -tolerance && l2 >= -tolerance) return e;
  }
  return -1;
}

Eigen::VectorXd MeshTransfer::apply(const Eigen::VectorXd& fine_values) const {
  if (fine_values.size() != static_cast<Eigen::Index>(owner.size())) {
    throw std::invalid_argument("MeshTransfer::apply: field does not live on the fine mesh");
  }
  Eigen::VectorXd coarse(static_cast<Eigen::Index>(fine_to_coarse.size()));
  for (std::size_t c = 0; c < fine_to_coarse.size(); ++c) {
    double sum = 0.0;
    double weight = 0.0;
    for (const auto& entry : fine_to_coarse[c]) {
      sum += entry.weight * fine_values[entry.fine_element];
      weight += entry.weight;
    }
    coarse[static_cast<Eigen::Index>(c)] = sum / weight;
  }
  return coarse;
}

MeshTransfer build_transfer(const TriMesh& fine, const TriMesh& coarse) {
  MeshTransfer transfer;
  transfer.fine_to_coarse.resize(static_cast<std::size_t>(coarse.element_count()));
  transfer.owner.resize(static_cast<std::size_t>(fine.element_count()));
  for (int f = 0; f < fine.element_count(); ++f) {
    const int c = locate_point(coarse, fine.barycenter(f), 1e-12);
    if (c < 0) {
      throw std::runtime_error("build_transfer: fine element " + std::to_string(f) +
                               " lies outside the coarse mesh");
    }
    transfer.owner[f] = c;
    transfer.fine_to_coarse[c].push_back({f, fine.area(f)});
  }
  for (int c = 0; c < coarse.element_count(); ++c) {
    auto& entries = transfer.fine_to_coarse[c];
    if (entries.empty()) {
      // coarse element smaller than the fine spacing: sample the fine field at its centre
      const int f = locate_point(fine, coarse.barycenter(c), 1e-12);
      if (f < 0) {
        throw std::runtime_error("build_transfer: coarse element " + std::to_string(c) +
                                 " has no fine counterpart");
      }
      entries.push_back({f, coarse.area(c)});
      continue;
    }
    double sum = 0.0;
    for (const auto& entry : entries) sum += entry.weight;
    const double scale = coarse.area(c) / sum;
    for (auto& entry : entries) entry.weight *= scale;
  }
  return transfer;
}

Eigen::SparseMatrix<double> adjacency_difference_operator(const TriMesh& mesh) {
  const auto& pairs = mesh.element_adjacency();
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(pairs.size() * 2);
  for (std::size_t row = 0; row < pairs.size(); ++row) {
    entries.emplace_back(static_cast<int>(row), pairs[row].first, 1.0);
    entries.emplace_back(static_cast<int>(row), pairs[row].second, -1.0);
  }
  Eigen::SparseMatrix<double> R(static_cast<Eigen::Index>(pairs.size()), mesh.element_count());
  R.setFromTriplets(entries.begin(), entries.end());
  return R;
}

}  // namespace eit
