#pragma once

// Reduction graphs: bounded breadth-first exploration of the step relation
// on canonical terms, directed path enumeration between vertices, cycle
// detection with replayable witnesses, termination certificates via ranking
// functions, and DOT export.
//
// Vertices are canonical terms, so the object-level quotient is applied
// before the graph is built.  Edges are the steps produced by
// enumerate_steps; identity instances are filtered there, so the graph never
// carries identity loops.  Exploration is deterministic: level-by-level
// breadth-first with the global term order as tiebreak within a level, so
// equal seeds and limits always yield the identical graph, and enlarging
// limits only ever adds vertices and edges.

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cohere/rewriting.hpp"
#include "cohere/terms.hpp"

namespace cohere {

// Resource bounds for exploration and path enumeration.
struct Limits {
  // Maximum number of vertices explore may create.
  int max_vertices = 4096;
  // Maximum breadth-first depth; vertices discovered at this depth are kept
  // but not expanded (and are marked as frontier).
  int max_depth = 256;
  // Maximum number of edges in a path returned by hom_paths.
  int max_path_length = 256;
  // Forwarded to enumerate_steps; negative means the per-rule default (one
  // unit per distinct rule variable).
  int unit_budget = -1;
  // Maximum nesting depth for the decision procedure's recursive face
  // closure (see coherence.hpp).  Graph operations ignore this field.
  int recursion_depth = 8;
};

// A finite, explicitly explored portion of the rewrite relation.  Immutable
// once returned by explore.
struct ReductionGraph {
  // Sorted, duplicate-free.
  std::vector<CanonicalTerm> vertices;
  // Out-edges keyed by their source vertex; each list is sorted and
  // duplicate-free, and every edge endpoint is a vertex.  A vertex absent
  // from `frontier` has exactly its enumerate_steps out-edges.
  std::map<CanonicalTerm, std::vector<Step>> out;
  // Vertices whose out-edges may be incomplete because a limit was hit.
  std::set<CanonicalTerm> frontier;
  // True when seeds themselves were dropped because max_vertices was too
  // small to hold them.
  bool seeds_truncated = false;

  bool contains(const CanonicalTerm& v) const;
  // Empty list for unknown vertices.
  const std::vector<Step>& out_edges(const CanonicalTerm& v) const;
  bool is_frontier(const CanonicalTerm& v) const;
  // No truncation anywhere: every vertex's out-edges are complete.
  bool complete() const { return frontier.empty() && !seeds_truncated; }
  std::size_t edge_count() const;
  bool acyclic() const;
};

// Breadth-first closure of the seeds under enumerate_steps, up to the given
// limits.  Truncation is recorded in the result, never an error.
ReductionGraph explore(const TwoStructure& s,
                       const std::vector<CanonicalTerm>& seeds,
                       const Limits& lim = {});

// All directed edge-paths src -> tgt of length <= lim.max_path_length, in
// lexicographic edge order (a path precedes its proper extensions).  When
// src == tgt this includes the empty path.  Exact precisely when every
// vertex reachable from src within the length bound is fully explored and
// the graph is acyclic; with cycles, the length bound is the only cutoff.
// Vertices not in the graph yield no paths.
std::vector<std::vector<Step>> hom_paths(const ReductionGraph& g,
                                         const CanonicalTerm& src,
                                         const CanonicalTerm& tgt,
                                         const Limits& lim = {});

// A candidate termination measure.  To certify, the value must strictly
// decrease across every step between ground canonical terms.
struct Ranking {
  std::string name;
  std::function<long long(const CanonicalTerm&)> value;
};

struct RankingReport {
  bool ok = false;
  // First violation found, with the ranking values at its endpoints.
  std::optional<Step> counterexample;
  long long source_value = 0;
  long long target_value = 0;
  int terms_checked = 0;
  int steps_checked = 0;
};

// Exhaustively checks that the ranking strictly decreases across every step
// out of every ground canonical term up to max_term_size (over the
// signature's generators; repetition_free restricts to terms where no
// generator repeats).
RankingReport verify_ranking(const TwoStructure& s, const Ranking& r,
                             int max_term_size, bool repetition_free = false,
                             int unit_budget = -1);

// A closed edge-path witnessing a directed cycle (every cycle yields a
// quasicycle: follow it forever, and every vertex on it reaches the base).
struct QuasicycleWitness {
  CanonicalTerm base{Term::gen("_")};
  std::vector<Step> cycle;  // nonempty; chains base -> ... -> base
};

// First directed cycle of the explored graph in deterministic search order,
// if any.
std::optional<QuasicycleWitness> find_cycle(const ReductionGraph& g);

// Quasicycle-freeness is undecidable in general, so the verdict is
// three-valued and Free always carries a certificate.
struct QuasicycleVerdict {
  enum class Kind { Free, Found, Unknown };
  enum class Certificate { None, ExhaustedAcyclic, Ranking };

  Kind kind = Kind::Unknown;
  Certificate certificate = Certificate::None;
  // Set when kind == Found.
  std::optional<QuasicycleWitness> witness;
  // Set when certificate == Ranking.
  std::string ranking_name;
  // Set when kind == Unknown.
  std::string reason;
};

// Explores from the seeds and classifies: Found with a replayable witness
// when the explored region contains a directed cycle; Free(ExhaustedAcyclic)
// when exploration completed with no truncation and no cycle;
// Free(Ranking) when a ranking is supplied and strictly decreases across
// every explored edge (the ranking's global validity should be established
// separately, e.g. with verify_ranking); otherwise Unknown with the reason.
QuasicycleVerdict detect_quasicycle(const TwoStructure& s,
                                    const std::vector<CanonicalTerm>& seeds,
                                    const Limits& lim = {},
                                    const Ranking* ranking = nullptr);

std::string print_verdict(const TwoStructure& s, const QuasicycleVerdict& v);

// GraphViz rendering: vertices labelled with printed terms, edges with
// "rule@position" (plus the segment when the step rewrites one).
// Frontier vertices are drawn dashed.
std::string to_dot(const TwoStructure& s, const ReductionGraph& g);

}  // namespace cohere
