#include "cohere/planar.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace cohere {

namespace {

// --- span between the endpoints of a parallel pair -------------------------

// The region every candidate subgraph lives in: vertices reachable from s
// and co-reachable from t, with all edges of the reduction graph between
// them. Indices into `verts`/`edges` are stable because both are sorted.
struct SpanData {
  std::vector<CanonicalTerm> verts;  // sorted
  std::vector<Step> edges;           // sorted
  std::vector<int> tail;             // per edge: index into verts
  std::vector<int> head;
  int s = -1;
  int t = -1;
  std::vector<int> alpha_ids;  // edge ids in path order
  std::vector<int> beta_ids;
  std::vector<int> boundary_ids;  // sorted union of the above
  std::vector<int> free_ids;      // sorted complement
};

using ReverseAdj = std::map<CanonicalTerm, std::vector<CanonicalTerm>>;

ReverseAdj reverse_adjacency(const ReductionGraph& g) {
  ReverseAdj radj;
  for (const CanonicalTerm& v : g.vertices)
    for (const Step& st : g.out_edges(v)) radj[CanonicalTerm{st.target}].push_back(v);
  return radj;
}

std::set<CanonicalTerm> forward_closure(const ReductionGraph& g, const CanonicalTerm& from) {
  std::set<CanonicalTerm> seen{from};
  std::queue<CanonicalTerm> work;
  work.push(from);
  while (!work.empty()) {
    CanonicalTerm v = work.front();
    work.pop();
    for (const Step& st : g.out_edges(v)) {
      CanonicalTerm w{st.target};
      if (seen.insert(w).second) work.push(w);
    }
  }
  return seen;
}

std::set<CanonicalTerm> backward_closure(const ReverseAdj& radj, const CanonicalTerm& from) {
  std::set<CanonicalTerm> seen{from};
  std::queue<CanonicalTerm> work;
  work.push(from);
  while (!work.empty()) {
    CanonicalTerm v = work.front();
    work.pop();
    auto it = radj.find(v);
    if (it == radj.end()) continue;
    for (const CanonicalTerm& w : it->second)
      if (seen.insert(w).second) work.push(w);
  }
  return seen;
}

// Vertices lying on some directed s-to-t walk of g.
std::vector<CanonicalTerm> span_vertices(const ReductionGraph& g, const ReverseAdj& radj,
                                         const CanonicalTerm& s, const CanonicalTerm& t) {
  std::set<CanonicalTerm> fwd = forward_closure(g, s);
  std::set<CanonicalTerm> bwd = backward_closure(radj, t);
  std::vector<CanonicalTerm> out;
  std::set_intersection(fwd.begin(), fwd.end(), bwd.begin(), bwd.end(),
                        std::back_inserter(out));
  return out;  // std::set iterates in sorted order
}

void validate_path(const ReductionGraph& g, const std::vector<Step>& path,
                   const char* which) {
  if (path.empty())
    throw ValidationError(std::string(which) + " path must be nonempty");
  for (std::size_t i = 0; i + 1 < path.size(); ++i)
    if (path[i].target != path[i + 1].source)
      throw ValidationError(std::string(which) + " path steps do not chain");
  for (const Step& st : path) {
    const std::vector<Step>& outs = g.out_edges(CanonicalTerm{st.source});
    if (std::find(outs.begin(), outs.end(), st) == outs.end())
      throw ValidationError(std::string(which) + " path step is not an edge of the graph");
  }
}

int vertex_id(const SpanData& span, const CanonicalTerm& v) {
  auto it = std::lower_bound(span.verts.begin(), span.verts.end(), v);
  if (it == span.verts.end() || *it != v) return -1;
  return static_cast<int>(it - span.verts.begin());
}

int edge_id(const SpanData& span, const Step& st) {
  auto it = std::lower_bound(span.edges.begin(), span.edges.end(), st);
  if (it == span.edges.end() || *it != st) return -1;
  return static_cast<int>(it - span.edges.begin());
}

bool span_acyclic(const SpanData& span) {
  // Iterative three-color depth-first search over span edges.
  int n = static_cast<int>(span.verts.size());
  std::vector<std::vector<int>> adj(n);
  for (std::size_t e = 0; e < span.edges.size(); ++e)
    adj[span.tail[e]].push_back(span.head[e]);
  std::vector<int> color(n, 0);  // 0 white, 1 grey, 2 black
  for (int root = 0; root < n; ++root) {
    if (color[root] != 0) continue;
    std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
    color[root] = 1;
    while (!stack.empty()) {
      auto& [v, next_child] = stack.back();
      if (next_child < adj[v].size()) {
        int w = adj[v][next_child++];
        if (color[w] == 1) return false;
        if (color[w] == 0) {
          color[w] = 1;
          stack.emplace_back(w, 0);
        }
      } else {
        color[v] = 2;
        stack.pop_back();
      }
    }
  }
  return true;
}

SpanData build_span(const ReductionGraph& g, const ReverseAdj& radj,
                    const std::vector<Step>& alpha, const std::vector<Step>& beta) {
  validate_path(g, alpha, "first");
  validate_path(g, beta, "second");
  if (alpha.front().source != beta.front().source ||
      alpha.back().target != beta.back().target)
    throw ValidationError("paths are not parallel: endpoints differ");

  CanonicalTerm s{alpha.front().source};
  CanonicalTerm t{alpha.back().target};

  SpanData span;
  span.verts = span_vertices(g, radj, s, t);
  for (const CanonicalTerm& v : span.verts)
    if (g.is_frontier(v))
      throw ValidationError(
          "span not fully explored: a vertex between the endpoints is on the "
          "exploration frontier; raise the limits");

  for (const CanonicalTerm& v : span.verts) {
    for (const Step& st : g.out_edges(v)) {
      if (vertex_id(span, CanonicalTerm{st.target}) >= 0) span.edges.push_back(st);
    }
  }
  std::sort(span.edges.begin(), span.edges.end());
  span.tail.reserve(span.edges.size());
  span.head.reserve(span.edges.size());
  for (const Step& st : span.edges) {
    span.tail.push_back(vertex_id(span, CanonicalTerm{st.source}));
    span.head.push_back(vertex_id(span, CanonicalTerm{st.target}));
  }
  span.s = vertex_id(span, s);
  span.t = vertex_id(span, t);

  if (!span_acyclic(span))
    throw ValidationError("span between the endpoints contains a directed cycle");

  std::set<int> boundary;
  for (const Step& st : alpha) {
    int id = edge_id(span, st);
    span.alpha_ids.push_back(id);
    boundary.insert(id);
  }
  for (const Step& st : beta) {
    int id = edge_id(span, st);
    span.beta_ids.push_back(id);
    boundary.insert(id);
  }
  span.boundary_ids.assign(boundary.begin(), boundary.end());
  for (int e = 0; e < static_cast<int>(span.edges.size()); ++e)
    if (!boundary.count(e)) span.free_ids.push_back(e);
  return span;
}

// --- candidate subgraphs ----------------------------------------------------

// A subgraph of the span re-indexed into its own vertex/edge id space (local
// edge k corresponds to span edge edge_ids[k], and edge_ids is sorted, so
// local ids keep the global edge order).
struct LocalGraph {
  std::vector<int> vert_ids;  // span vertex ids, sorted
  std::vector<int> edge_ids;  // span edge ids, sorted
  std::vector<int> tail;      // per local edge: local vertex index
  std::vector<int> head;
  std::vector<std::vector<int>> in_at;   // per local vertex: local edge ids, ascending
  std::vector<std::vector<int>> out_at;
  int s = -1;
  int t = -1;
  std::vector<int> alpha_l;  // local edge ids in path order
  std::vector<int> beta_l;
};

LocalGraph build_local(const SpanData& span, const std::vector<int>& edge_ids) {
  LocalGraph lg;
  lg.edge_ids = edge_ids;
  std::set<int> verts;
  for (int e : edge_ids) {
    verts.insert(span.tail[e]);
    verts.insert(span.head[e]);
  }
  lg.vert_ids.assign(verts.begin(), verts.end());
  auto local_vertex = [&lg](int span_vertex) {
    return static_cast<int>(std::lower_bound(lg.vert_ids.begin(), lg.vert_ids.end(),
                                             span_vertex) -
                            lg.vert_ids.begin());
  };
  auto local_edge = [&lg](int span_edge) {
    return static_cast<int>(std::lower_bound(lg.edge_ids.begin(), lg.edge_ids.end(),
                                             span_edge) -
                            lg.edge_ids.begin());
  };
  lg.in_at.resize(lg.vert_ids.size());
  lg.out_at.resize(lg.vert_ids.size());
  for (std::size_t k = 0; k < edge_ids.size(); ++k) {
    int e = edge_ids[k];
    lg.tail.push_back(local_vertex(span.tail[e]));
    lg.head.push_back(local_vertex(span.head[e]));
    lg.out_at[lg.tail[k]].push_back(static_cast<int>(k));
    lg.in_at[lg.head[k]].push_back(static_cast<int>(k));
  }
  lg.s = local_vertex(span.s);
  lg.t = local_vertex(span.t);
  for (int e : span.alpha_ids) lg.alpha_l.push_back(local_edge(e));
  for (int e : span.beta_ids) lg.beta_l.push_back(local_edge(e));
  return lg;
}

// Every vertex must lie on a directed s-to-t path within the subgraph.
bool st_ok(const LocalGraph& lg) {
  int n = static_cast<int>(lg.vert_ids.size());
  std::vector<char> fwd(n, 0), bwd(n, 0);
  std::queue<int> work;
  fwd[lg.s] = 1;
  work.push(lg.s);
  while (!work.empty()) {
    int v = work.front();
    work.pop();
    for (int e : lg.out_at[v])
      if (!fwd[lg.head[e]]) {
        fwd[lg.head[e]] = 1;
        work.push(lg.head[e]);
      }
  }
  bwd[lg.t] = 1;
  work.push(lg.t);
  while (!work.empty()) {
    int v = work.front();
    work.pop();
    for (int e : lg.in_at[v])
      if (!bwd[lg.tail[e]]) {
        bwd[lg.tail[e]] = 1;
        work.push(lg.tail[e]);
      }
  }
  for (int v = 0; v < n; ++v)
    if (!fwd[v] || !bwd[v]) return false;
  return true;
}

// --- rotation systems and face tracing --------------------------------------

// Darts: local edge e contributes forward dart 2e (leaving the tail) and
// reverse dart 2e+1 (leaving the head). With edges drawn left to right, the
// clockwise order around a vertex is: forward darts of the out-edges top to
// bottom, then reverse darts of the in-edges bottom to top. A face's
// successor of dart d is the clockwise successor of d's reverse at the
// vertex the reverse is anchored at; tracing therefore walks each region
// with the region on the dart's left.
struct FaceTrace {
  std::vector<std::vector<int>> orbits;  // in order of their smallest dart
  int outer = -1;                        // orbit index holding the boundary walk
  bool valid = false;
};

FaceTrace trace_faces(const LocalGraph& lg, const std::vector<std::vector<int>>& in_rot,
                      const std::vector<std::vector<int>>& out_rot) {
  FaceTrace ft;
  int edge_count = static_cast<int>(lg.edge_ids.size());
  std::vector<int> next(2 * static_cast<std::size_t>(edge_count), -1);
  for (std::size_t v = 0; v < lg.vert_ids.size(); ++v) {
    std::vector<int> cw;
    for (int e : out_rot[v]) cw.push_back(2 * e);
    for (auto it = in_rot[v].rbegin(); it != in_rot[v].rend(); ++it)
      cw.push_back(2 * *it + 1);
    for (std::size_t i = 0; i < cw.size(); ++i) {
      int d = cw[i];
      int succ = cw[(i + 1) % cw.size()];
      next[static_cast<std::size_t>(d ^ 1)] = succ;
    }
  }

  std::vector<char> visited(2 * static_cast<std::size_t>(edge_count), 0);
  for (int d0 = 0; d0 < 2 * edge_count; ++d0) {
    if (visited[d0]) continue;
    std::vector<int> orbit;
    int d = d0;
    do {
      visited[d] = 1;
      orbit.push_back(d);
      d = next[d];
    } while (d != d0);
    ft.orbits.push_back(std::move(orbit));
  }

  // Sphericity: with the subgraph connected (st-filtered), a rotation system
  // is planar exactly when Euler's relation holds.
  long long euler = static_cast<long long>(lg.vert_ids.size()) - edge_count +
                    static_cast<long long>(ft.orbits.size());
  if (euler != 2) return ft;

  // The outer region, walked clockwise, must be exactly the first path
  // forward followed by the second path backward: that makes alpha the
  // leftmost path, beta the rightmost, and everything else interior.
  std::vector<int> expected;
  for (int e : lg.alpha_l) expected.push_back(2 * e);
  for (auto it = lg.beta_l.rbegin(); it != lg.beta_l.rend(); ++it)
    expected.push_back(2 * *it + 1);
  int d = expected[0];
  for (int want : expected) {
    if (d != want) return ft;
    d = next[d];
  }
  if (d != expected[0]) return ft;

  for (std::size_t i = 0; i < ft.orbits.size(); ++i)
    if (std::find(ft.orbits[i].begin(), ft.orbits[i].end(), expected[0]) !=
        ft.orbits[i].end())
      ft.outer = static_cast<int>(i);
  ft.valid = true;
  return ft;
}

Face parse_face(const SpanData& span, const LocalGraph& lg, const std::vector<int>& orbit) {
  int n = static_cast<int>(orbit.size());
  auto is_forward = [](int d) { return (d & 1) == 0; };
  int transitions = 0;
  for (int i = 0; i < n; ++i)
    if (is_forward(orbit[i]) != is_forward(orbit[(i + 1) % n])) ++transitions;
  if (transitions != 2)
    throw Error("internal: face without a unique source and target");
  int start = -1;
  for (int i = 0; i < n; ++i)
    if (is_forward(orbit[i]) && !is_forward(orbit[(i - 1 + n) % n])) start = i;

  Face face;
  std::vector<int> left_rev;
  for (int i = 0; i < n; ++i) {
    int d = orbit[(start + i) % n];
    if (is_forward(d))
      face.right.push_back(span.edges[lg.edge_ids[d >> 1]]);
    else
      left_rev.push_back(d >> 1);
  }
  for (auto it = left_rev.rbegin(); it != left_rev.rend(); ++it)
    face.left.push_back(span.edges[lg.edge_ids[*it]]);
  face.source = CanonicalTerm{face.right.front().source};
  face.target = CanonicalTerm{face.right.back().target};
  if (face.left.front().source != face.right.front().source ||
      face.left.back().target != face.right.back().target)
    throw Error("internal: face sides are not parallel");
  return face;
}

Subdivision make_subdivision(const SpanData& span, const LocalGraph& lg,
                             const std::vector<std::vector<int>>& in_rot,
                             const std::vector<std::vector<int>>& out_rot,
                             const FaceTrace& ft, const std::vector<Step>& alpha,
                             const std::vector<Step>& beta) {
  Subdivision sub;
  for (int v : lg.vert_ids) sub.emb.vertices.push_back(span.verts[v]);
  for (int e : lg.edge_ids) sub.emb.edges.push_back(span.edges[e]);
  sub.emb.edge_tail = lg.tail;
  sub.emb.edge_head = lg.head;
  sub.emb.s = lg.s;
  sub.emb.t = lg.t;
  sub.emb.in_order = in_rot;
  sub.emb.out_order = out_rot;
  sub.alpha = alpha;
  sub.beta = beta;
  for (std::size_t i = 0; i < ft.orbits.size(); ++i)
    if (static_cast<int>(i) != ft.outer)
      sub.faces.push_back(parse_face(span, lg, ft.orbits[i]));
  return sub;
}

// Rotation data is a linear order per side of each vertex, but the
// embedding invariant is the cyclic dart order. At interior vertices the
// seam between the out-block and the in-block pins the cycle, so distinct
// linear data means distinct embeddings. The source has only out-edges and
// the target only in-edges (the span is acyclic), so there the cycle must
// be anchored or every rotation of one drawing would be counted again:
// geometrically the leftmost path starts on top, so the source's out-list
// is pinned to begin with alpha's first edge and the target's in-list with
// alpha's last edge.
void init_rotations(const LocalGraph& lg, std::vector<std::vector<int>>& in_rot,
                    std::vector<std::vector<int>>& out_rot) {
  in_rot = lg.in_at;
  out_rot = lg.out_at;
  auto anchor = [](std::vector<int>& list, int first) {
    list.erase(std::find(list.begin(), list.end(), first));
    list.insert(list.begin(), first);
  };
  anchor(out_rot[lg.s], lg.alpha_l.front());
  anchor(in_rot[lg.t], lg.alpha_l.back());
}

// Odometer over the per-vertex permutations of in- and out-lists, keeping
// the endpoint anchors fixed. Returns false once every list has wrapped
// back to its base state.
bool advance_rotations(const LocalGraph& lg, std::vector<std::vector<int>>& in_rot,
                       std::vector<std::vector<int>>& out_rot) {
  for (std::size_t v = 0; v < in_rot.size(); ++v) {
    auto in_begin = in_rot[v].begin();
    if (static_cast<int>(v) == lg.t && !in_rot[v].empty()) ++in_begin;
    if (std::next_permutation(in_begin, in_rot[v].end())) return true;
    auto out_begin = out_rot[v].begin();
    if (static_cast<int>(v) == lg.s && !out_rot[v].empty()) ++out_begin;
    if (std::next_permutation(out_begin, out_rot[v].end())) return true;
  }
  return false;
}

// Visits sorted-id edge subsets (boundary always included) in ascending
// size, lexicographic within a size. Stops early when fn returns true.
bool for_each_candidate(const SpanData& span, const std::function<bool(const std::vector<int>&)>& fn) {
  int n = static_cast<int>(span.free_ids.size());
  for (int k = 0; k <= n; ++k) {
    std::vector<int> pick(k);
    for (int i = 0; i < k; ++i) pick[i] = i;
    while (true) {
      std::vector<int> chosen;
      chosen.reserve(k);
      for (int i : pick) chosen.push_back(span.free_ids[i]);
      std::vector<int> subset;
      subset.reserve(span.boundary_ids.size() + chosen.size());
      std::merge(span.boundary_ids.begin(), span.boundary_ids.end(), chosen.begin(),
                 chosen.end(), std::back_inserter(subset));
      if (fn(subset)) return true;
      // next k-combination
      int i = k - 1;
      while (i >= 0 && pick[i] == n - k + i) --i;
      if (i < 0) break;
      ++pick[i];
      for (int j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
  }
  return false;
}

bool subdivision_less(const Subdivision& a, const Subdivision& b) {
  if (a.emb.edges != b.emb.edges) return a.emb.edges < b.emb.edges;
  if (a.emb.in_order != b.emb.in_order) return a.emb.in_order < b.emb.in_order;
  return a.emb.out_order < b.emb.out_order;
}

// Undirected connectivity from the interior of alpha to the interior of
// beta, ignoring s and t: the combinatorial form of a zig-zag. Vertex and
// adjacency data are in span-vertex ids.
bool zigzag_connected(const std::vector<std::vector<int>>& undirected_adj, int s, int t,
                      const std::set<int>& from, const std::set<int>& to) {
  if (from.empty() || to.empty()) return false;
  std::set<int> seen;
  std::queue<int> work;
  for (int v : from) {
    if (v == s || v == t) continue;
    seen.insert(v);
    work.push(v);
  }
  while (!work.empty()) {
    int v = work.front();
    work.pop();
    if (to.count(v)) return true;
    for (int w : undirected_adj[v]) {
      if (w == s || w == t) continue;
      if (seen.insert(w).second) work.push(w);
    }
  }
  return false;
}

std::set<int> interior_vertices(const SpanData& span, const std::vector<int>& path_ids) {
  std::set<int> out;
  for (std::size_t i = 0; i + 1 < path_ids.size(); ++i)
    out.insert(span.head[path_ids[i]]);
  return out;
}

}  // namespace

// --- public API --------------------------------------------------------------

bool EmbeddedStGraph::operator==(const EmbeddedStGraph& o) const {
  return vertices == o.vertices && edges == o.edges && edge_tail == o.edge_tail &&
         edge_head == o.edge_head && s == o.s && t == o.t && in_order == o.in_order &&
         out_order == o.out_order;
}

bool Subdivision::operator==(const Subdivision& o) const {
  return emb == o.emb && alpha == o.alpha && beta == o.beta;
}

std::vector<Subdivision> enumerate_subdivisions(const ReductionGraph& g,
                                                const std::vector<Step>& alpha,
                                                const std::vector<Step>& beta) {
  ReverseAdj radj = reverse_adjacency(g);
  SpanData span = build_span(g, radj, alpha, beta);
  std::vector<Subdivision> out;
  for_each_candidate(span, [&](const std::vector<int>& subset) {
    LocalGraph lg = build_local(span, subset);
    if (!st_ok(lg)) return false;
    std::vector<std::vector<int>> in_rot, out_rot;
    init_rotations(lg, in_rot, out_rot);
    do {
      FaceTrace ft = trace_faces(lg, in_rot, out_rot);
      if (ft.valid)
        out.push_back(make_subdivision(span, lg, in_rot, out_rot, ft, alpha, beta));
    } while (advance_rotations(lg, in_rot, out_rot));
    return false;
  });
  std::sort(out.begin(), out.end(), subdivision_less);
  return out;
}

std::vector<Face> faces_of(const Subdivision& sub) {
  // Re-trace from the stored rotation data alone.
  LocalGraph lg;
  int n = static_cast<int>(sub.emb.vertices.size());
  int m = static_cast<int>(sub.emb.edges.size());
  lg.vert_ids.resize(n);
  lg.edge_ids.resize(m);
  for (int i = 0; i < n; ++i) lg.vert_ids[i] = i;
  for (int e = 0; e < m; ++e) lg.edge_ids[e] = e;
  lg.tail = sub.emb.edge_tail;
  lg.head = sub.emb.edge_head;
  lg.s = sub.emb.s;
  lg.t = sub.emb.t;
  auto edge_index = [&sub](const Step& st) {
    auto it = std::lower_bound(sub.emb.edges.begin(), sub.emb.edges.end(), st);
    if (it == sub.emb.edges.end() || *it != st)
      throw ValidationError("boundary step missing from the embedded graph");
    return static_cast<int>(it - sub.emb.edges.begin());
  };
  for (const Step& st : sub.alpha) lg.alpha_l.push_back(edge_index(st));
  for (const Step& st : sub.beta) lg.beta_l.push_back(edge_index(st));

  SpanData shim;
  shim.verts = sub.emb.vertices;
  shim.edges = sub.emb.edges;
  shim.tail = sub.emb.edge_tail;
  shim.head = sub.emb.edge_head;

  FaceTrace ft = trace_faces(lg, sub.emb.in_order, sub.emb.out_order);
  if (!ft.valid) throw ValidationError("rotation data is not a planar embedding");
  std::vector<Face> faces;
  for (std::size_t i = 0; i < ft.orbits.size(); ++i)
    if (static_cast<int>(i) != ft.outer) faces.push_back(parse_face(shim, lg, ft.orbits[i]));
  return faces;
}

bool refinement_leq(const Subdivision& s1, const Subdivision& s2) {
  if (s1.alpha != s2.alpha || s1.beta != s2.beta) return false;
  if (!std::includes(s2.emb.edges.begin(), s2.emb.edges.end(), s1.emb.edges.begin(),
                     s1.emb.edges.end()))
    return false;
  auto in_s1 = [&s1](const Step& st) {
    return std::binary_search(s1.emb.edges.begin(), s1.emb.edges.end(), st);
  };
  auto s1_edge_index = [&s1](const Step& st) {
    return static_cast<int>(std::lower_bound(s1.emb.edges.begin(), s1.emb.edges.end(), st) -
                            s1.emb.edges.begin());
  };
  for (std::size_t v1 = 0; v1 < s1.emb.vertices.size(); ++v1) {
    auto it = std::lower_bound(s2.emb.vertices.begin(), s2.emb.vertices.end(),
                               s1.emb.vertices[v1]);
    if (it == s2.emb.vertices.end() || *it != s1.emb.vertices[v1]) return false;
    std::size_t v2 = static_cast<std::size_t>(it - s2.emb.vertices.begin());
    auto restricted = [&](const std::vector<int>& order2) {
      std::vector<int> kept;
      for (int e2 : order2) {
        const Step& st = s2.emb.edges[e2];
        if (in_s1(st)) kept.push_back(s1_edge_index(st));
      }
      return kept;
    };
    if (restricted(s2.emb.in_order[v2]) != s1.emb.in_order[v1]) return false;
    if (restricted(s2.emb.out_order[v2]) != s1.emb.out_order[v1]) return false;
  }
  return true;
}

std::vector<Subdivision> maximal_subdivisions(const std::vector<Subdivision>& subs) {
  std::vector<Subdivision> out;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < subs.size() && !dominated; ++j) {
      if (i == j) continue;
      if (refinement_leq(subs[i], subs[j]) && !(subs[i] == subs[j])) dominated = true;
    }
    if (!dominated) out.push_back(subs[i]);
  }
  return out;
}

bool is_diamond(const ReductionGraph& g, const std::vector<Step>& alpha,
                const std::vector<Step>& beta) {
  ReverseAdj radj = reverse_adjacency(g);
  SpanData span = build_span(g, radj, alpha, beta);

  std::set<int> int_a = interior_vertices(span, span.alpha_ids);
  std::set<int> int_b = interior_vertices(span, span.beta_ids);
  for (int v : int_a)
    if (int_b.count(v)) return false;  // shared interior vertex: zero-length zig-zag

  // Over the full span first: no undirected connection there means no
  // subgraph can carry one either.
  std::vector<std::vector<int>> undirected(span.verts.size());
  for (std::size_t e = 0; e < span.edges.size(); ++e) {
    undirected[span.tail[e]].push_back(span.head[e]);
    undirected[span.head[e]].push_back(span.tail[e]);
  }
  if (!zigzag_connected(undirected, span.s, span.t, int_a, int_b)) return true;

  // Some connection exists; a zig-zag subdivision needs an st-subgraph that
  // keeps it and still embeds with the pair as outer boundary.
  bool witness = for_each_candidate(span, [&](const std::vector<int>& subset) {
    LocalGraph lg = build_local(span, subset);
    if (!st_ok(lg)) return false;
    std::vector<std::vector<int>> sub_undirected(span.verts.size());
    for (std::size_t k = 0; k < lg.edge_ids.size(); ++k) {
      int e = lg.edge_ids[k];
      sub_undirected[span.tail[e]].push_back(span.head[e]);
      sub_undirected[span.head[e]].push_back(span.tail[e]);
    }
    if (!zigzag_connected(sub_undirected, span.s, span.t, int_a, int_b)) return false;
    std::vector<std::vector<int>> in_rot, out_rot;
    init_rotations(lg, in_rot, out_rot);
    do {
      if (trace_faces(lg, in_rot, out_rot).valid) return true;
    } while (advance_rotations(lg, in_rot, out_rot));
    return false;
  });
  return !witness;
}

DiamondScan enumerate_diamonds(const ReductionGraph& g, const CanonicalTerm& source,
                               const Limits& lim) {
  DiamondScan scan;
  if (!g.contains(source)) return scan;
  ReverseAdj radj = reverse_adjacency(g);

  std::map<CanonicalTerm, std::vector<std::vector<Step>>> by_target;
  std::vector<Step> path;
  auto dfs = [&](auto&& self, const CanonicalTerm& v) -> void {
    if (g.is_frontier(v)) scan.truncated = true;
    const std::vector<Step>& outs = g.out_edges(v);
    if (static_cast<int>(path.size()) >= lim.max_path_length) {
      if (!outs.empty()) scan.truncated = true;
      return;
    }
    for (const Step& st : outs) {
      path.push_back(st);
      CanonicalTerm w{st.target};
      by_target[w].push_back(path);
      self(self, w);
      path.pop_back();
    }
  };
  dfs(dfs, source);

  for (auto& [target, paths] : by_target) {
    if (paths.size() < 2) continue;
    std::sort(paths.begin(), paths.end());
    bool frontier_span = false;
    for (const CanonicalTerm& v : span_vertices(g, radj, source, target))
      if (g.is_frontier(v)) frontier_span = true;
    if (frontier_span) {
      scan.truncated = true;
      continue;
    }
    for (std::size_t i = 0; i < paths.size(); ++i)
      for (std::size_t j = i + 1; j < paths.size(); ++j)
        if (is_diamond(g, paths[i], paths[j]))
          scan.diamonds.emplace_back(paths[i], paths[j]);
  }
  std::sort(scan.diamonds.begin(), scan.diamonds.end());
  return scan;
}

std::string to_dot(const TwoStructure& s, const Subdivision& sub) {
  auto escape = [](const std::string& text) {
    std::string out;
    for (char ch : text) {
      if (ch == '"' || ch == '\\') out += '\\';
      out += ch;
    }
    return out;
  };
  std::string dot = "digraph subdivision {\n  rankdir=LR;\n";
  for (std::size_t i = 0; i < sub.faces.size(); ++i) {
    const Face& f = sub.faces[i];
    dot += "  // face " + std::to_string(i) + ": " +
           escape(print_term(s.sig, f.source.term)) + " => " +
           escape(print_term(s.sig, f.target.term)) + " (" +
           std::to_string(f.left.size()) + " left, " + std::to_string(f.right.size()) +
           " right)\n";
  }
  for (std::size_t v = 0; v < sub.emb.vertices.size(); ++v) {
    dot += "  v" + std::to_string(v) + " [label=\"" +
           escape(print_term(s.sig, sub.emb.vertices[v].term)) + "\"];\n";
  }
  dot += "  { rank=source; v" + std::to_string(sub.emb.s) + "; }\n";
  dot += "  { rank=sink; v" + std::to_string(sub.emb.t) + "; }\n";
  for (std::size_t e = 0; e < sub.emb.edges.size(); ++e) {
    const Step& st = sub.emb.edges[e];
    std::string label = st.rule + "@" + print_position(st.pos);
    if (st.seg_begin >= 0)
      label += "[" + std::to_string(st.seg_begin) + ".." + std::to_string(st.seg_end) + ")";
    dot += "  v" + std::to_string(sub.emb.edge_tail[e]) + " -> v" +
           std::to_string(sub.emb.edge_head[e]) + " [label=\"" + escape(label) + "\"];\n";
  }
  dot += "}\n";
  return dot;
}

std::string to_json(const TwoStructure& s, const Subdivision& sub) {
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (const CanonicalTerm& v : sub.emb.vertices)
    j["vertices"].push_back(print_term(s.sig, v.term));
  j["s"] = sub.emb.s;
  j["t"] = sub.emb.t;
  j["edges"] = nlohmann::json::array();
  for (std::size_t e = 0; e < sub.emb.edges.size(); ++e) {
    const Step& st = sub.emb.edges[e];
    nlohmann::json edge;
    edge["id"] = e;
    edge["tail"] = sub.emb.edge_tail[e];
    edge["head"] = sub.emb.edge_head[e];
    edge["rule"] = st.rule;
    edge["position"] = print_position(st.pos);
    if (st.seg_begin >= 0) {
      edge["segment"] = {st.seg_begin, st.seg_end};
    }
    edge["label"] = print_step(s, st);
    j["edges"].push_back(edge);
  }
  j["rotation"] = nlohmann::json::array();
  for (std::size_t v = 0; v < sub.emb.vertices.size(); ++v) {
    nlohmann::json rot;
    rot["vertex"] = v;
    rot["in"] = sub.emb.in_order[v];
    rot["out"] = sub.emb.out_order[v];
    j["rotation"].push_back(rot);
  }
  auto edge_index = [&sub](const Step& st) {
    return static_cast<int>(std::lower_bound(sub.emb.edges.begin(), sub.emb.edges.end(), st) -
                            sub.emb.edges.begin());
  };
  j["alpha"] = nlohmann::json::array();
  for (const Step& st : sub.alpha) j["alpha"].push_back(edge_index(st));
  j["beta"] = nlohmann::json::array();
  for (const Step& st : sub.beta) j["beta"].push_back(edge_index(st));
  j["faces"] = nlohmann::json::array();
  for (const Face& f : sub.faces) {
    nlohmann::json face;
    face["left"] = nlohmann::json::array();
    for (const Step& st : f.left) face["left"].push_back(edge_index(st));
    face["right"] = nlohmann::json::array();
    for (const Step& st : f.right) face["right"].push_back(edge_index(st));
    face["source"] = print_term(s.sig, f.source.term);
    face["target"] = print_term(s.sig, f.target.term);
    j["faces"].push_back(face);
  }
  return j.dump(2) + "\n";
}

}  // namespace cohere
