#pragma once

// Multi-relational airport graph: Gaussian distance kernel, origin-destination
// and destination-origin flow adjacencies, random-walk normalization and the
// diffusion power series.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stpn/tensor.hpp"

namespace stpn {

struct Airport {
  std::string code;
  double lat = 0.0;
  double lon = 0.0;
};

enum class RelationKind { distance, od, do_ };

const char* to_string(RelationKind kind);
RelationKind relation_from_string(const std::string& name);

struct Relation {
  RelationKind kind;
  Matrix adjacency;
};

struct MultiGraph {
  std::vector<Airport> airports;
  std::vector<Relation> relations;
  /// Gaussian kernel width used for the distance relation (km), 0 if absent.
  double sigma_km = 0.0;

  std::size_t size() const { return airports.size(); }
  std::optional<std::size_t> index_of(const std::string& code) const;
  /// Checks the structural invariants (non-negative weights, symmetric
  /// distance relation, do == od^T); throws std::invalid_argument.
  void validate() const;
};

/// Pairwise haversine distances in kilometres.
Matrix great_circle_distances(const std::vector<Airport>& airports);

/// Population standard deviation of the off-diagonal pairwise distances
/// (each unordered pair counted once).
double default_sigma(const Matrix& dist);

/// exp(-d^2 / sigma^2), with entries <= 0.1 set to 0.
Matrix distance_adjacency(const Matrix& dist, double sigma);

/// Flow F scaled by its maximum F_max: 0 where F < 0.15 F_max, otherwise
/// F / (1.5 F_max). `flow` must come from training rows only.
Matrix od_adjacency(const Matrix& flow);

Matrix do_adjacency(const Matrix& od);

/// Divides each row by its sum; all-zero rows stay zero.
Matrix row_normalize(const Matrix& a);

/// [I, A, A^2, ..., A^K].
std::vector<Matrix> power_series(const Matrix& a_hat, int order);

struct GraphOptions {
  std::vector<RelationKind> relations{RelationKind::distance, RelationKind::od, RelationKind::do_};
  /// Kernel width in km; defaults to default_sigma() of the distances.
  std::optional<double> sigma_km;
  /// Optional precomputed distances; otherwise great-circle from lat/lon.
  std::optional<Matrix> distances_km;
};

MultiGraph build_multigraph(const std::vector<Airport>& airports, const Matrix& train_flow,
                            const GraphOptions& options = {});

/// One diffusion support: the k-th power of relation q's transition matrix.
struct DiffusionTerm {
  std::size_t relation = 0;
  std::size_t order = 0;
  Matrix matrix;
  bool identity = false;
};

/// Row-normalizes every relation and expands its power series. Orders run
/// from 0 (identity) when `include_identity` is set, otherwise from 1.
std::vector<DiffusionTerm> diffusion_supports(const MultiGraph& graph, int order,
                                              bool include_identity);

nlohmann::json graph_to_json(const MultiGraph& graph);
MultiGraph graph_from_json(const nlohmann::json& doc);
void save_graph(const MultiGraph& graph, const std::filesystem::path& path);
MultiGraph load_graph(const std::filesystem::path& path);

inline constexpr int kGraphFormatVersion = 1;

}  // namespace stpn
