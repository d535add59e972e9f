#pragma once

// Planar st-graph machinery: combinatorial embeddings of a parallel pair of
// reduction paths, face extraction, the refinement order between embeddings,
// zig-zag detection, and diamond enumeration.
//
// An embedding is encoded by rotation data: at every vertex, the
// top-to-bottom order of incoming edges and of outgoing edges when the graph
// is drawn with its source on the left, its target on the right, and all
// edges flowing left to right. For a connected graph with a fixed outer
// boundary this data determines the drawing up to ambient isotopy. Mirror
// images carry reversed rotation data and are deliberately kept distinct.

#include <string>
#include <utility>
#include <vector>

#include "cohere/graph.hpp"
#include "cohere/rewriting.hpp"
#include "cohere/terms.hpp"

namespace cohere {

// An st-graph together with rotation data. Vertices and edges are kept
// sorted so that indices are reproducible across runs.
struct EmbeddedStGraph {
  std::vector<CanonicalTerm> vertices;  // sorted by term order
  std::vector<Step> edges;              // sorted; position = edge id
  std::vector<int> edge_tail;           // vertex index per edge
  std::vector<int> edge_head;           // vertex index per edge
  int s = -1;                           // source vertex index
  int t = -1;                           // target vertex index
  std::vector<std::vector<int>> in_order;   // per vertex: edge ids, topmost first
  std::vector<std::vector<int>> out_order;  // per vertex: edge ids, topmost first

  bool operator==(const EmbeddedStGraph& o) const;
  bool operator!=(const EmbeddedStGraph& o) const { return !(*this == o); }
};

// One interior region of an embedded st-graph. Both sides run from `source`
// to `target`; `left` is the upper side (nearer the leftmost boundary path).
// In an acyclic embedded st-graph every region has this parallel-pair form
// with a unique source and target.
struct Face {
  std::vector<Step> left;
  std::vector<Step> right;
  CanonicalTerm source{Term::gen("_")};
  CanonicalTerm target{Term::gen("_")};
};

// An embedded st-graph whose outer boundary is the designated parallel pair:
// `alpha` drawn as the leftmost path from s to t, `beta` as the rightmost,
// with every other edge inside the region they bound. Two subdivisions are
// equal exactly when graph and rotation data coincide.
struct Subdivision {
  EmbeddedStGraph emb;
  std::vector<Step> alpha;
  std::vector<Step> beta;
  std::vector<Face> faces;  // interior regions, in trace order

  bool operator==(const Subdivision& o) const;
  bool operator!=(const Subdivision& o) const { return !(*this == o); }
};

// All embeddings of all st-subgraphs spanned between the endpoints of
// `alpha` and `beta` that contain both paths, up to combinatorial
// equivalence, in a deterministic order. The two paths must be parallel
// edge-paths of `g`. Throws ValidationError when the span between the
// endpoints touches the exploration frontier of `g` (the subdivision set
// would not be trustworthy) or contains a directed cycle.
std::vector<Subdivision> enumerate_subdivisions(const ReductionGraph& g,
                                                const std::vector<Step>& alpha,
                                                const std::vector<Step>& beta);

// The interior regions of a subdivision, recomputed from its rotation data.
std::vector<Face> faces_of(const Subdivision& sub);

// True when s1 is coarser than (or equal to) s2: s1's graph is a subgraph of
// s2's, with the same outer pair, drawn the same way (restricting s2's
// rotation data to s1's edges reproduces s1's rotation data). Total: pairs
// that do not satisfy the inclusion simply compare false.
bool refinement_leq(const Subdivision& s1, const Subdivision& s2);

// Maxima of the finite refinement poset.
std::vector<Subdivision> maximal_subdivisions(const std::vector<Subdivision>& subs);

// True when no subdivision of the pair carries an undirected connection
// between an interior vertex of `alpha` and an interior vertex of `beta`
// (endpoints excluded). A pair sharing an interior vertex is never a
// diamond; a pair of single edges vacuously is. Preconditions as in
// enumerate_subdivisions.
bool is_diamond(const ReductionGraph& g, const std::vector<Step>& alpha,
                const std::vector<Step>& beta);

struct DiamondScan {
  // Unordered pairs with the lexicographically smaller path first; sorted.
  std::vector<std::pair<std::vector<Step>, std::vector<Step>>> diamonds;
  // Set when the path enumeration hit max_path_length with room to grow or
  // when some candidate pair had to be skipped because its span touches the
  // exploration frontier.
  bool truncated = false;
};

// All diamonds rooted at `source` whose paths are no longer than
// lim.max_path_length.
DiamondScan enumerate_diamonds(const ReductionGraph& g, const CanonicalTerm& source,
                               const Limits& lim = {});

// DOT rendering: source ranked left, target right, faces listed in comments.
std::string to_dot(const TwoStructure& s, const Subdivision& sub);

// JSON rendering of the combinatorial embedding (vertex/edge tables,
// rotation data, boundary paths, faces).
std::string to_json(const TwoStructure& s, const Subdivision& sub);

}  // namespace cohere
