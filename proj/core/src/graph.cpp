#include "stpn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "stpn/container.hpp"

namespace stpn {

const char* to_string(RelationKind kind) {
  switch (kind) {
    case RelationKind::distance: return "distance";
    case RelationKind::od: return "od";
    case RelationKind::do_: return "do";
  }
  return "?";
}

RelationKind relation_from_string(const std::string& name) {
  if (name == "distance") return RelationKind::distance;
  if (name == "od") return RelationKind::od;
  if (name == "do") return RelationKind::do_;
  throw std::invalid_argument("unknown relation kind '" + name + "' (expected distance, od, do)");
}

std::optional<std::size_t> MultiGraph::index_of(const std::string& code) const {
  for (std::size_t i = 0; i < airports.size(); ++i)
    if (airports[i].code == code) return i;
  return std::nullopt;
}

void MultiGraph::validate() const {
  const std::size_t n = airports.size();
  const Matrix* od = nullptr;
  const Matrix* dor = nullptr;
  for (const auto& r : relations) {
    const Matrix& a = r.adjacency;
    if (a.rows() != n || a.cols() != n) {
      throw std::invalid_argument(std::string("relation ") + to_string(r.kind) + " is " +
                                  a.shape_string() + " for " + std::to_string(n) + " airports");
    }
    for (double v : a.values())
      if (!(v >= 0.0)) throw std::invalid_argument(std::string("negative weight in ") + to_string(r.kind));
    if (r.kind == RelationKind::distance && a != a.transposed())
      throw std::invalid_argument("distance adjacency is not symmetric");
    if (r.kind == RelationKind::od) od = &a;
    if (r.kind == RelationKind::do_) dor = &a;
  }
  if (od && dor && *dor != od->transposed())
    throw std::invalid_argument("do adjacency is not the transpose of od");
}

Matrix great_circle_distances(const std::vector<Airport>& airports) {
  constexpr double kEarthRadiusKm = 6371.0;
  constexpr double kDeg = std::numbers::pi / 180.0;
  const std::size_t n = airports.size();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double lat1 = airports[i].lat * kDeg, lat2 = airports[j].lat * kDeg;
      const double dlat = lat2 - lat1;
      const double dlon = (airports[j].lon - airports[i].lon) * kDeg;
      const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                       std::cos(lat1) * std::cos(lat2) * std::sin(dlon / 2) * std::sin(dlon / 2);
      const double km = 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
      d(i, j) = km;
      d(j, i) = km;
    }
  return d;
}

double default_sigma(const Matrix& dist) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < dist.rows(); ++i)
    for (std::size_t j = i + 1; j < dist.cols(); ++j) {
      sum += dist(i, j);
      ++count;
    }
  if (count == 0) return 1.0;
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (std::size_t i = 0; i < dist.rows(); ++i)
    for (std::size_t j = i + 1; j < dist.cols(); ++j) ss += (dist(i, j) - mean) * (dist(i, j) - mean);
  const double sd = std::sqrt(ss / static_cast<double>(count));
  return sd > 0.0 ? sd : 1.0;
}

Matrix distance_adjacency(const Matrix& dist, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("distance_adjacency: sigma must be positive");
  if (dist.rows() != dist.cols()) throw ShapeError("distance matrix must be square");
  const std::size_t n = dist.rows();
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (dist(i, i) != 0.0) throw std::invalid_argument("distance matrix diagonal must be zero");
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dist(i, j);
      if (d < 0.0 || d != dist(j, i))
        throw std::invalid_argument("distance matrix must be symmetric and non-negative");
      const double w = std::exp(-(d * d) / (sigma * sigma));
      a(i, j) = w <= 0.1 ? 0.0 : w;
    }
  }
  return a;
}

Matrix od_adjacency(const Matrix& flow) {
  if (flow.rows() != flow.cols()) throw ShapeError("flow matrix must be square");
  double fmax = 0.0;
  for (double f : flow.values()) {
    if (f < 0.0) throw std::invalid_argument("od_adjacency: negative flow");
    fmax = std::max(fmax, f);
  }
  if (fmax <= 0.0) throw std::invalid_argument("od_adjacency: all-zero flow gives a degenerate graph");
  Matrix a(flow.rows(), flow.cols());
  for (std::size_t i = 0; i < flow.rows(); ++i)
    for (std::size_t j = 0; j < flow.cols(); ++j) {
      const double f = flow(i, j);
      // 20 f < 3 fmax is f < 0.15 fmax without rounding 0.15 (exact for counts).
      a(i, j) = 20.0 * f < 3.0 * fmax ? 0.0 : f / (1.5 * fmax);
    }
  return a;
}

Matrix do_adjacency(const Matrix& od) { return od.transposed(); }

Matrix row_normalize(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) {
      if (v < 0.0) throw std::invalid_argument("row_normalize: negative entry");
      s += v;
    }
    if (s > 0.0)
      for (double& v : out.row(i)) v /= s;
  }
  return out;
}

std::vector<Matrix> power_series(const Matrix& a_hat, int order) {
  if (order < 0) throw std::invalid_argument("power_series: order must be >= 0");
  if (a_hat.rows() != a_hat.cols()) throw ShapeError("power_series: matrix must be square");
  std::vector<Matrix> out;
  out.push_back(Matrix::identity(a_hat.rows()));
  for (int k = 1; k <= order; ++k) out.push_back(matmul(out.back(), a_hat));
  return out;
}

MultiGraph build_multigraph(const std::vector<Airport>& airports, const Matrix& train_flow,
                            const GraphOptions& options) {
  MultiGraph g;
  g.airports = airports;
  const std::size_t n = airports.size();
  std::optional<Matrix> od;
  for (RelationKind kind : options.relations) {
    switch (kind) {
      case RelationKind::distance: {
        Matrix dist = options.distances_km ? *options.distances_km : great_circle_distances(airports);
        if (dist.rows() != n) throw ShapeError("distance matrix does not match airport count");
        g.sigma_km = options.sigma_km ? *options.sigma_km : default_sigma(dist);
        g.relations.push_back({kind, distance_adjacency(dist, g.sigma_km)});
        break;
      }
      case RelationKind::od:
      case RelationKind::do_: {
        if (!od) {
          if (train_flow.rows() != n) throw ShapeError("flow matrix does not match airport count");
          od = od_adjacency(train_flow);
        }
        g.relations.push_back({kind, kind == RelationKind::od ? *od : do_adjacency(*od)});
        break;
      }
    }
  }
  g.validate();
  return g;
}

std::vector<DiffusionTerm> diffusion_supports(const MultiGraph& graph, int order,
                                              bool include_identity) {
  std::vector<DiffusionTerm> terms;
  for (std::size_t q = 0; q < graph.relations.size(); ++q) {
    auto powers = power_series(row_normalize(graph.relations[q].adjacency), order);
    for (std::size_t k = include_identity ? 0 : 1; k < powers.size(); ++k)
      terms.push_back({q, k, std::move(powers[k]), k == 0});
  }
  return terms;
}

nlohmann::json graph_to_json(const MultiGraph& graph) {
  nlohmann::json doc;
  doc["format"] = "stpn-graph";
  doc["version"] = kGraphFormatVersion;
  doc["sigma_km"] = graph.sigma_km;
  doc["airports"] = nlohmann::json::array();
  for (const auto& a : graph.airports)
    doc["airports"].push_back({{"code", a.code}, {"lat", a.lat}, {"lon", a.lon}});
  doc["relations"] = nlohmann::json::array();
  for (const auto& r : graph.relations) {
    doc["relations"].push_back({{"kind", to_string(r.kind)},
                                {"rows", r.adjacency.rows()},
                                {"cols", r.adjacency.cols()},
                                {"data", encode_doubles(r.adjacency.values())}});
  }
  return doc;
}

MultiGraph graph_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format") != "stpn-graph") throw FormatError("not a graph artifact");
    if (doc.at("version").get<int>() != kGraphFormatVersion) {
      throw FormatError("graph artifact version " + doc.at("version").dump() + ", expected " +
                        std::to_string(kGraphFormatVersion));
    }
    MultiGraph g;
    g.sigma_km = doc.at("sigma_km").get<double>();
    for (const auto& a : doc.at("airports"))
      g.airports.push_back({a.at("code").get<std::string>(), a.at("lat").get<double>(),
                            a.at("lon").get<double>()});
    for (const auto& r : doc.at("relations")) {
      g.relations.push_back({relation_from_string(r.at("kind").get<std::string>()),
                             Matrix(r.at("rows").get<std::size_t>(), r.at("cols").get<std::size_t>(),
                                    decode_doubles(r.at("data").get<std::string>()))});
    }
    g.validate();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed graph artifact: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("malformed graph artifact: ") + e.what());
  }
}

void save_graph(const MultiGraph& graph, const std::filesystem::path& path) {
  write_file(path, graph_to_json(graph).dump(2) + "\n");
}

MultiGraph load_graph(const std::filesystem::path& path) {
  try {
    return graph_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace stpn
