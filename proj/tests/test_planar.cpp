#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "cohere/graph.hpp"
#include "cohere/planar.hpp"
#include "cohere/rewriting.hpp"
#include "cohere/terms.hpp"

using namespace cohere;

namespace {

using PathVec = std::vector<Step>;
using StepSet = std::set<Step>;

// --- independent oracle ------------------------------------------------------
//
// A second, separately written enumeration of the embedded subgraphs between
// two parallel paths: subgraphs as plain Step sets explored by recursive
// include/exclude, per-vertex reachability by recursive search, permutations
// by recursive insertion, and face walking over (edge, direction) darts held
// in ordered maps.  The counts asserted on the small fixtures below were
// additionally worked out by hand on paper and are frozen inline.

struct OracleDart {
  int edge = 0;
  bool forward = true;
  auto operator<=>(const OracleDart&) const = default;
};

// Implementation-independent fingerprint of one embedded subgraph: the edge
// set plus, per vertex, the clockwise cyclic dart order normalized to start
// at its smallest dart.  Using the cyclic order (rather than the linear in-
// and out-lists) makes the fingerprint a true embedding invariant: at a
// vertex whose edges all sit on one side, every rotation of the same cycle
// describes the same drawing, and normalization collapses them.
using OracleCycle = std::vector<std::pair<Step, bool>>;

struct Embedding {
  std::vector<Step> edges;
  std::vector<std::pair<Term, OracleCycle>> rotations;
  auto operator<=>(const Embedding&) const = default;
};

OracleCycle normalize_cycle(OracleCycle c) {
  if (c.empty()) return c;
  std::rotate(c.begin(), std::min_element(c.begin(), c.end()), c.end());
  return c;
}

void permutations_rec(std::vector<int>& remaining, std::vector<int>& acc,
                      std::vector<std::vector<int>>& out) {
  if (remaining.empty()) {
    out.push_back(acc);
    return;
  }
  for (std::size_t i = 0; i < remaining.size(); ++i) {
    int picked = remaining[i];
    remaining.erase(remaining.begin() + static_cast<long>(i));
    acc.push_back(picked);
    permutations_rec(remaining, acc, out);
    acc.pop_back();
    remaining.insert(remaining.begin() + static_cast<long>(i), picked);
  }
}

std::vector<std::vector<int>> all_permutations(const std::vector<int>& items) {
  std::vector<int> remaining = items;
  std::vector<int> acc;
  std::vector<std::vector<int>> out;
  permutations_rec(remaining, acc, out);
  return out;
}

// Directed reachability inside an explicit edge set, by recursive search.
bool reaches(const std::vector<Step>& edges, const Term& from, const Term& to,
             std::set<Term>& seen) {
  if (from == to) return true;
  if (!seen.insert(from).second) return false;
  for (const Step& st : edges)
    if (st.source == from && reaches(edges, st.target, to, seen)) return true;
  return false;
}

bool oracle_st_graph(const std::vector<Step>& edges, const Term& s, const Term& t) {
  std::set<Term> verts;
  for (const Step& st : edges) {
    verts.insert(st.source);
    verts.insert(st.target);
  }
  for (const Term& w : verts) {
    std::set<Term> seen1, seen2;
    if (!reaches(edges, s, w, seen1)) return false;
    if (!reaches(edges, w, t, seen2)) return false;
  }
  return true;
}

struct OracleFaces {
  bool valid = false;
  std::vector<std::vector<OracleDart>> inner;  // orbits other than the boundary
};

// Walks the faces of one rotation assignment.  in_rot/out_rot give, per
// vertex, the in- and out-edges top to bottom (indices into `edges`).
OracleFaces oracle_trace(const std::vector<Step>& edges,
                         const std::map<Term, std::vector<int>>& in_rot,
                         const std::map<Term, std::vector<int>>& out_rot,
                         const PathVec& alpha, const PathVec& beta) {
  OracleFaces result;
  auto index_of = [&edges](const Step& st) {
    return static_cast<int>(std::find(edges.begin(), edges.end(), st) - edges.begin());
  };

  std::set<Term> verts;
  for (const Step& st : edges) {
    verts.insert(st.source);
    verts.insert(st.target);
  }
  std::map<OracleDart, OracleDart> succ;
  for (const Term& v : verts) {
    std::vector<OracleDart> cw;
    auto out_it = out_rot.find(v);
    if (out_it != out_rot.end())
      for (int e : out_it->second) cw.push_back(OracleDart{e, true});
    auto in_it = in_rot.find(v);
    if (in_it != in_rot.end())
      for (auto it = in_it->second.rbegin(); it != in_it->second.rend(); ++it)
        cw.push_back(OracleDart{*it, false});
    for (std::size_t i = 0; i < cw.size(); ++i) {
      OracleDart d = cw[i];
      OracleDart flipped{d.edge, !d.forward};
      succ[flipped] = cw[(i + 1) % cw.size()];
    }
  }

  std::set<OracleDart> pending;
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    pending.insert(OracleDart{e, true});
    pending.insert(OracleDart{e, false});
  }
  std::vector<std::vector<OracleDart>> orbits;
  while (!pending.empty()) {
    OracleDart start = *pending.begin();
    std::vector<OracleDart> orbit;
    OracleDart d = start;
    do {
      pending.erase(d);
      orbit.push_back(d);
      d = succ.at(d);
    } while (!(d == start));
    orbits.push_back(orbit);
  }

  long long euler = static_cast<long long>(verts.size()) -
                    static_cast<long long>(edges.size()) +
                    static_cast<long long>(orbits.size());
  if (euler != 2) return result;

  std::vector<OracleDart> expected;
  for (const Step& st : alpha) expected.push_back(OracleDart{index_of(st), true});
  for (auto it = beta.rbegin(); it != beta.rend(); ++it)
    expected.push_back(OracleDart{index_of(*it), false});
  OracleDart d = expected[0];
  for (const OracleDart& want : expected) {
    if (!(d == want)) return result;
    d = succ.at(d);
  }
  if (!(d == expected[0])) return result;

  result.valid = true;
  for (const auto& orbit : orbits)
    if (std::find(orbit.begin(), orbit.end(), expected[0]) == orbit.end())
      result.inner.push_back(orbit);
  return result;
}

// Every embedded st-subgraph between the endpoints of the pair, as a set of
// fingerprints.
std::set<Embedding> oracle_subdivisions(const ReductionGraph& g, const PathVec& alpha,
                                        const PathVec& beta) {
  Term s = alpha.front().source;
  Term t = alpha.back().target;

  // Span by fixpoint scans over the whole edge list.
  std::vector<std::pair<Term, Step>> all_edges;
  for (const CanonicalTerm& v : g.vertices)
    for (const Step& st : g.out_edges(v)) all_edges.emplace_back(v.term, st);
  std::set<Term> fwd{s};
  for (bool grew = true; grew;) {
    grew = false;
    for (const auto& [from, st] : all_edges)
      if (fwd.count(from) && fwd.insert(st.target).second) grew = true;
  }
  std::set<Term> bwd{t};
  for (bool grew = true; grew;) {
    grew = false;
    for (const auto& [from, st] : all_edges)
      if (bwd.count(st.target) && bwd.insert(from).second) grew = true;
  }

  StepSet boundary(alpha.begin(), alpha.end());
  boundary.insert(beta.begin(), beta.end());
  std::vector<Step> free_edges;
  for (const auto& [from, st] : all_edges)
    if (fwd.count(from) && bwd.count(from) && fwd.count(st.target) &&
        bwd.count(st.target) && !boundary.count(st))
      free_edges.push_back(st);

  std::set<Embedding> found;
  auto consider = [&](const StepSet& chosen) {
    std::vector<Step> edges(boundary.begin(), boundary.end());
    edges.insert(edges.end(), chosen.begin(), chosen.end());
    std::sort(edges.begin(), edges.end());
    if (!oracle_st_graph(edges, s, t)) return;

    std::map<Term, std::vector<int>> base_in, base_out;
    for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
      base_out[edges[e].source].push_back(e);
      base_in[edges[e].target].push_back(e);
    }
    std::set<Term> verts;
    for (const Step& st : edges) {
      verts.insert(st.source);
      verts.insert(st.target);
    }

    // Per-vertex permutation choices, then an odometer over them.
    std::vector<Term> vert_list(verts.begin(), verts.end());
    std::vector<std::vector<std::vector<int>>> in_choices, out_choices;
    for (const Term& v : vert_list) {
      in_choices.push_back(all_permutations(base_in[v]));
      out_choices.push_back(all_permutations(base_out[v]));
    }
    std::vector<std::size_t> pick(2 * vert_list.size(), 0);
    while (true) {
      std::map<Term, std::vector<int>> in_rot, out_rot;
      for (std::size_t i = 0; i < vert_list.size(); ++i) {
        in_rot[vert_list[i]] = in_choices[i][pick[2 * i]];
        out_rot[vert_list[i]] = out_choices[i][pick[2 * i + 1]];
      }
      if (oracle_trace(edges, in_rot, out_rot, alpha, beta).valid) {
        Embedding emb;
        emb.edges = edges;
        for (const Term& v : vert_list) {
          OracleCycle cycle;
          for (int e : out_rot[v]) cycle.emplace_back(edges[e], true);
          const std::vector<int>& ins = in_rot[v];
          for (auto it = ins.rbegin(); it != ins.rend(); ++it)
            cycle.emplace_back(edges[*it], false);
          emb.rotations.emplace_back(v, normalize_cycle(cycle));
        }
        found.insert(emb);
      }
      std::size_t slot = 0;
      for (; slot < pick.size(); ++slot) {
        std::size_t limit = (slot % 2 == 0) ? in_choices[slot / 2].size()
                                            : out_choices[slot / 2].size();
        if (++pick[slot] < limit) break;
        pick[slot] = 0;
      }
      if (slot == pick.size()) break;
    }
  };

  std::function<void(std::size_t, StepSet&)> rec = [&](std::size_t i, StepSet& chosen) {
    if (i == free_edges.size()) {
      consider(chosen);
      return;
    }
    rec(i + 1, chosen);
    chosen.insert(free_edges[i]);
    rec(i + 1, chosen);
    chosen.erase(free_edges[i]);
  };
  StepSet chosen;
  rec(0, chosen);
  return found;
}

Embedding fingerprint(const Subdivision& sub) {
  Embedding e;
  e.edges = sub.emb.edges;
  for (std::size_t v = 0; v < sub.emb.vertices.size(); ++v) {
    OracleCycle cycle;
    for (int id : sub.emb.out_order[v]) cycle.emplace_back(sub.emb.edges[id], true);
    const std::vector<int>& ins = sub.emb.in_order[v];
    for (auto it = ins.rbegin(); it != ins.rend(); ++it)
      cycle.emplace_back(sub.emb.edges[*it], false);
    e.rotations.emplace_back(sub.emb.vertices[v].term, normalize_cycle(cycle));
  }
  return e;
}

std::set<Embedding> fingerprints(const std::vector<Subdivision>& subs) {
  std::set<Embedding> out;
  for (const Subdivision& sub : subs) out.insert(fingerprint(sub));
  return out;
}

// Compares the implementation's subdivisions with the oracle's, and checks
// that the implementation emitted exactly one representative per embedding
// (distinct linear rotation data must never describe the same drawing).
void check_against_oracle(const ReductionGraph& g, const std::vector<Subdivision>& subs,
                          const PathVec& alpha, const PathVec& beta) {
  std::set<Embedding> mine = fingerprints(subs);
  CHECK(mine.size() == subs.size());
  CHECK(mine == oracle_subdivisions(g, alpha, beta));
}

// --- structural invariants ---------------------------------------------------

// Checks one returned subdivision against everything its encoding promises:
// index consistency, boundary membership, Euler's relation via the oracle
// tracer, the two-sided incidence of every edge, and per-face shape.
void check_subdivision(const ReductionGraph& g, const Subdivision& sub) {
  const EmbeddedStGraph& emb = sub.emb;
  std::size_t n = emb.vertices.size();
  std::size_t m = emb.edges.size();
  REQUIRE(emb.edge_tail.size() == m);
  REQUIRE(emb.edge_head.size() == m);
  REQUIRE(emb.in_order.size() == n);
  REQUIRE(emb.out_order.size() == n);
  CHECK(std::is_sorted(emb.vertices.begin(), emb.vertices.end()));
  CHECK(std::is_sorted(emb.edges.begin(), emb.edges.end()));

  for (std::size_t e = 0; e < m; ++e) {
    CHECK(emb.vertices[emb.edge_tail[e]].term == emb.edges[e].source);
    CHECK(emb.vertices[emb.edge_head[e]].term == emb.edges[e].target);
    // every edge is a real edge of the reduction graph
    const std::vector<Step>& outs = g.out_edges(emb.vertices[emb.edge_tail[e]]);
    CHECK(std::find(outs.begin(), outs.end(), emb.edges[e]) != outs.end());
  }

  // rotation lists partition the incidences
  std::vector<int> seen_in(m, 0), seen_out(m, 0);
  for (std::size_t v = 0; v < n; ++v) {
    for (int e : emb.in_order[v]) {
      CHECK(emb.edge_head[e] == static_cast<int>(v));
      ++seen_in[e];
    }
    for (int e : emb.out_order[v]) {
      CHECK(emb.edge_tail[e] == static_cast<int>(v));
      ++seen_out[e];
    }
  }
  for (std::size_t e = 0; e < m; ++e) {
    CHECK(seen_in[e] == 1);
    CHECK(seen_out[e] == 1);
  }

  CHECK(emb.vertices[emb.s].term == sub.alpha.front().source);
  CHECK(emb.vertices[emb.t].term == sub.alpha.back().target);

  // boundary paths are edges of the subgraph
  auto has_edge = [&emb](const Step& st) {
    return std::binary_search(emb.edges.begin(), emb.edges.end(), st);
  };
  for (const Step& st : sub.alpha) CHECK(has_edge(st));
  for (const Step& st : sub.beta) CHECK(has_edge(st));

  // the oracle tracer accepts the stored rotation data
  std::map<Term, std::vector<int>> in_rot, out_rot;
  for (std::size_t v = 0; v < n; ++v) {
    in_rot[emb.vertices[v].term] = emb.in_order[v];
    out_rot[emb.vertices[v].term] = emb.out_order[v];
  }
  OracleFaces traced = oracle_trace(emb.edges, in_rot, out_rot, sub.alpha, sub.beta);
  CHECK(traced.valid);
  CHECK(traced.inner.size() == sub.faces.size());

  // every face: parallel sides from one source to one target, nonempty
  for (const Face& f : sub.faces) {
    REQUIRE(!f.left.empty());
    REQUIRE(!f.right.empty());
    CHECK(f.left.front().source == f.source.term);
    CHECK(f.right.front().source == f.source.term);
    CHECK(f.left.back().target == f.target.term);
    CHECK(f.right.back().target == f.target.term);
    for (std::size_t i = 0; i + 1 < f.left.size(); ++i)
      CHECK(f.left[i].target == f.left[i + 1].source);
    for (std::size_t i = 0; i + 1 < f.right.size(); ++i)
      CHECK(f.right[i].target == f.right[i + 1].source);
  }

  // each edge is on exactly two region sides: inner faces plus the outer walk
  std::map<int, int> incident;
  auto edge_index = [&emb](const Step& st) {
    return static_cast<int>(std::lower_bound(emb.edges.begin(), emb.edges.end(), st) -
                            emb.edges.begin());
  };
  for (const Face& f : sub.faces) {
    for (const Step& st : f.left) ++incident[edge_index(st)];
    for (const Step& st : f.right) ++incident[edge_index(st)];
  }
  for (const Step& st : sub.alpha) ++incident[edge_index(st)];
  for (const Step& st : sub.beta) ++incident[edge_index(st)];
  for (std::size_t e = 0; e < m; ++e) CHECK(incident[static_cast<int>(e)] == 2);

  // recomputing the faces from the rotation data reproduces them
  std::vector<Face> recomputed = faces_of(sub);
  REQUIRE(recomputed.size() == sub.faces.size());
  for (std::size_t i = 0; i < recomputed.size(); ++i) {
    CHECK(recomputed[i].left == sub.faces[i].left);
    CHECK(recomputed[i].right == sub.faces[i].right);
    CHECK(recomputed[i].source == sub.faces[i].source);
    CHECK(recomputed[i].target == sub.faces[i].target);
  }
}

void check_poset_laws(const std::vector<Subdivision>& subs) {
  std::vector<Subdivision> maxima = maximal_subdivisions(subs);
  CHECK(!maxima.empty());
  for (std::size_t i = 0; i < subs.size(); ++i) {
    CHECK(refinement_leq(subs[i], subs[i]));
    bool covered = false;
    for (const Subdivision& top : maxima)
      if (refinement_leq(subs[i], top)) covered = true;
    CHECK(covered);
    for (std::size_t j = 0; j < subs.size(); ++j) {
      if (refinement_leq(subs[i], subs[j]) && refinement_leq(subs[j], subs[i]))
        CHECK(subs[i] == subs[j]);
      for (std::size_t k = 0; k < subs.size(); ++k)
        if (refinement_leq(subs[i], subs[j]) && refinement_leq(subs[j], subs[k]))
          CHECK(refinement_leq(subs[i], subs[k]));
    }
  }
}

// --- fixtures ------------------------------------------------------------------

// Unary relabelling square: I(I(A)) resolves either side first, then the two
// nested redexes collapse to H(A).
struct NestedFix {
  TwoStructure s;

  NestedFix() {
    s.name = "nested";
    s.sig.add_symbol("I", 1);
    s.sig.add_symbol("J", 1);
    s.sig.add_symbol("H", 1);
    s.sig.add_generator("A");
    s.theory = ObjectTheory::empty();
    s.rules.push_back(make_rule(s.sig, s.theory, "tau", parse_term(s.sig, "I(x)"),
                                parse_term(s.sig, "J(x)")));
    s.rules.push_back(make_rule(s.sig, s.theory, "mu", parse_term(s.sig, "I(J(x))"),
                                parse_term(s.sig, "H(x)")));
    s.rules.push_back(make_rule(s.sig, s.theory, "nu", parse_term(s.sig, "J(I(x))"),
                                parse_term(s.sig, "H(x)")));
  }

  CanonicalTerm c(const std::string& text) const {
    return canonicalize(s.sig, s.theory, parse_term(s.sig, text));
  }
};

// Binary tensor whose sides rewrite independently.
struct DisjointFix {
  TwoStructure s;

  DisjointFix() {
    s.name = "disjoint";
    s.sig.add_symbol("I", 1);
    s.sig.add_symbol("J", 1);
    s.sig.add_symbol("H", 1);
    s.sig.add_symbol("ot", 2, /*infix=*/true);
    s.sig.add_generator("A");
    s.theory = ObjectTheory::empty();
    s.rules.push_back(make_rule(s.sig, s.theory, "tau", parse_term(s.sig, "I(x)"),
                                parse_term(s.sig, "J(x)")));
    s.rules.push_back(make_rule(s.sig, s.theory, "jig",
                                parse_term(s.sig, "(J(x) ot I(x))"),
                                parse_term(s.sig, "H(x)")));
    s.rules.push_back(make_rule(s.sig, s.theory, "zag",
                                parse_term(s.sig, "(I(x) ot J(x))"),
                                parse_term(s.sig, "H(x)")));
  }

  CanonicalTerm c(const std::string& text) const {
    return canonicalize(s.sig, s.theory, parse_term(s.sig, text));
  }
};

// The square P -> Q/R -> W plus configurable connecting rules, covering the
// four classic ways a connection between the two boundary interiors can be
// drawn.
struct SquareFix {
  TwoStructure s;

  SquareFix(const std::vector<std::string>& extra_symbols,
            const std::vector<std::tuple<std::string, std::string, std::string>>& extra) {
    s.name = "square";
    for (const char* sym : {"P", "Q", "R", "W"}) s.sig.add_symbol(sym, 1);
    for (const std::string& sym : extra_symbols) s.sig.add_symbol(sym, 1);
    s.sig.add_generator("A");
    s.theory = ObjectTheory::empty();
    auto rule = [this](const std::string& label, const std::string& lhs,
                       const std::string& rhs) {
      s.rules.push_back(make_rule(s.sig, s.theory, label, parse_term(s.sig, lhs),
                                  parse_term(s.sig, rhs)));
    };
    rule("a", "P(x)", "Q(x)");
    rule("b", "P(x)", "R(x)");
    rule("c", "Q(x)", "W(x)");
    rule("d", "R(x)", "W(x)");
    for (const auto& [label, lhs, rhs] : extra) rule(label, lhs, rhs);
  }

  CanonicalTerm c(const std::string& text) const {
    return canonicalize(s.sig, s.theory, parse_term(s.sig, text));
  }

  // The square pair from P(A) to W(A), plus the explored graph.
  std::tuple<ReductionGraph, PathVec, PathVec> square_pair() const {
    ReductionGraph g = explore(s, {c("P(A)")});
    PathVec alpha, beta;
    for (const Step& st : g.out_edges(c("P(A)"))) {
      if (st.rule == "a") alpha.push_back(st);
      if (st.rule == "b") beta.push_back(st);
    }
    REQUIRE(alpha.size() == 1);
    REQUIRE(beta.size() == 1);
    for (const Step& st : g.out_edges(c("Q(A)")))
      if (st.rule == "c") alpha.push_back(st);
    for (const Step& st : g.out_edges(c("R(A)")))
      if (st.rule == "d") beta.push_back(st);
    REQUIRE(alpha.size() == 2);
    REQUIRE(beta.size() == 2);
    return {g, alpha, beta};
  }
};

// Four internally disjoint routes between the same endpoints.
struct RoutesFix {
  TwoStructure s;

  RoutesFix() {
    s.name = "routes";
    s.sig.add_symbol("S", 1);
    s.sig.add_symbol("T", 1);
    for (const char* sym : {"U1", "U2", "U3", "U4"}) s.sig.add_symbol(sym, 1);
    s.sig.add_generator("A");
    s.theory = ObjectTheory::empty();
    for (int i = 1; i <= 4; ++i) {
      std::string u = "U" + std::to_string(i);
      s.rules.push_back(make_rule(s.sig, s.theory, "r" + std::to_string(i),
                                  parse_term(s.sig, "S(x)"),
                                  parse_term(s.sig, u + "(x)")));
      s.rules.push_back(make_rule(s.sig, s.theory, "q" + std::to_string(i),
                                  parse_term(s.sig, u + "(x)"),
                                  parse_term(s.sig, "T(x)")));
    }
  }

  CanonicalTerm c(const std::string& text) const {
    return canonicalize(s.sig, s.theory, parse_term(s.sig, text));
  }
};

// Doubled-up rails (two rules with the same body) plus a direct shortcut,
// producing parallel edges and boundary paths of different lengths.
struct RailsFix {
  TwoStructure s;

  RailsFix() {
    s.name = "rails";
    s.sig.add_symbol("P", 1);
    s.sig.add_symbol("M", 1);
    s.sig.add_symbol("W", 1);
    s.sig.add_generator("A");
    s.theory = ObjectTheory::empty();
    auto rule = [this](const std::string& label, const std::string& lhs,
                       const std::string& rhs) {
      s.rules.push_back(make_rule(s.sig, s.theory, label, parse_term(s.sig, lhs),
                                  parse_term(s.sig, rhs)));
    };
    rule("pa", "P(x)", "M(x)");
    rule("pb", "P(x)", "M(x)");
    rule("ma", "M(x)", "W(x)");
    rule("mb", "M(x)", "W(x)");
    rule("pw", "P(x)", "W(x)");
  }

  CanonicalTerm c(const std::string& text) const {
    return canonicalize(s.sig, s.theory, parse_term(s.sig, text));
  }
};

// Two paths sharing their first edge.
struct PrefixFix {
  TwoStructure s;

  PrefixFix() {
    s.name = "prefix";
    s.sig.add_symbol("P", 1);
    s.sig.add_symbol("V", 1);
    s.sig.add_symbol("W", 1);
    s.sig.add_generator("A");
    s.theory = ObjectTheory::empty();
    s.rules.push_back(make_rule(s.sig, s.theory, "f", parse_term(s.sig, "P(x)"),
                                parse_term(s.sig, "V(x)")));
    s.rules.push_back(make_rule(s.sig, s.theory, "ga", parse_term(s.sig, "V(x)"),
                                parse_term(s.sig, "W(x)")));
    s.rules.push_back(make_rule(s.sig, s.theory, "gb", parse_term(s.sig, "V(x)"),
                                parse_term(s.sig, "W(x)")));
  }

  CanonicalTerm c(const std::string& text) const {
    return canonicalize(s.sig, s.theory, parse_term(s.sig, text));
  }
};

// A non-terminating system with one persistent inner redex: reducts of I(A)
// keep growing, and every pair of distinct routes to a common reduct except
// the first H(I(A)) fork can be bridged through an interior vertex.
struct TowerFix {
  TwoStructure s;

  TowerFix() {
    s.name = "tower";
    for (const char* sym : {"I", "F", "G", "H"}) s.sig.add_symbol(sym, 1);
    s.sig.add_generator("A");
    s.theory = ObjectTheory::empty();
    auto rule = [this](const std::string& label, const std::string& lhs,
                       const std::string& rhs) {
      s.rules.push_back(make_rule(s.sig, s.theory, label, parse_term(s.sig, lhs),
                                  parse_term(s.sig, rhs)));
    };
    rule("ig", "I(x)", "G(I(x))");
    rule("if", "I(x)", "F(I(x))");
    rule("ff", "F(x)", "F(F(x))");
    rule("gg", "G(x)", "G(G(x))");
    rule("fh", "F(x)", "H(x)");
    rule("gh", "G(x)", "H(x)");
  }

  CanonicalTerm c(const std::string& text) const {
    return canonicalize(s.sig, s.theory, parse_term(s.sig, text));
  }
};

// A rule whose instances are self-loops.
struct LoopFix {
  TwoStructure s;

  LoopFix() {
    s.name = "loop";
    s.sig.add_symbol("F", 1);
    s.sig.add_generator("A");
    s.theory = ObjectTheory::empty();
    s.rules.push_back(make_rule(s.sig, s.theory, "spin", parse_term(s.sig, "F(x)"),
                                parse_term(s.sig, "F(x)")));
  }

  CanonicalTerm c(const std::string& text) const {
    return canonicalize(s.sig, s.theory, parse_term(s.sig, text));
  }
};

// --- helpers -------------------------------------------------------------------

Step find_step(const ReductionGraph& g, const CanonicalTerm& from, const std::string& rule,
               const CanonicalTerm& to) {
  for (const Step& st : g.out_edges(from))
    if (st.rule == rule && CanonicalTerm{st.target} == to) return st;
  REQUIRE_MESSAGE(false, "no such step");
  return Step{};
}

PathVec make_path(const ReductionGraph& g, CanonicalTerm from,
                  const std::vector<std::pair<std::string, CanonicalTerm>>& hops) {
  PathVec path;
  for (const auto& [rule, target] : hops) {
    path.push_back(find_step(g, from, rule, target));
    from = target;
  }
  return path;
}

std::pair<PathVec, PathVec> ordered_pair(const PathVec& a, const PathVec& b) {
  return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

}  // namespace

TEST_CASE("bare square: one embedding with a single two-sided region") {
  NestedFix fix;
  ReductionGraph g = explore(fix.s, {fix.c("I(I(A))")});
  REQUIRE(g.complete());

  PathVec alpha = make_path(g, fix.c("I(I(A))"),
                            {{"tau", fix.c("J(I(A))")}, {"tau", fix.c("J(J(A))")}});
  PathVec beta = make_path(g, fix.c("I(I(A))"),
                           {{"tau", fix.c("I(J(A))")}, {"tau", fix.c("J(J(A))")}});

  std::vector<Subdivision> subs = enumerate_subdivisions(g, alpha, beta);
  REQUIRE(subs.size() == 1);  // frozen by hand: nothing else fits between them
  const Subdivision& sq = subs[0];
  CHECK(sq.emb.vertices.size() == 4);
  CHECK(sq.emb.edges.size() == 4);
  REQUIRE(sq.faces.size() == 1);
  CHECK(sq.faces[0].left == alpha);
  CHECK(sq.faces[0].right == beta);
  CHECK(sq.faces[0].source == fix.c("I(I(A))"));
  CHECK(sq.faces[0].target == fix.c("J(J(A))"));
  check_subdivision(g, sq);

  check_against_oracle(g, subs, alpha, beta);

  CHECK(is_diamond(g, alpha, beta));
  CHECK(is_diamond(g, beta, alpha));

  // the mirrored pair also has exactly one embedding
  std::vector<Subdivision> mirrored = enumerate_subdivisions(g, beta, alpha);
  CHECK(mirrored.size() == 1);
  check_against_oracle(g, mirrored, beta, alpha);

  // determinism
  CHECK(enumerate_subdivisions(g, alpha, beta) == subs);
}

TEST_CASE("nested rewrites: the two drawn forks are the only diamonds") {
  NestedFix fix;
  ReductionGraph g = explore(fix.s, {fix.c("I(I(A))")});
  CanonicalTerm root = fix.c("I(I(A))");

  PathVec sq_a = make_path(g, root, {{"tau", fix.c("J(I(A))")}, {"tau", fix.c("J(J(A))")}});
  PathVec sq_b = make_path(g, root, {{"tau", fix.c("I(J(A))")}, {"tau", fix.c("J(J(A))")}});
  PathVec h_a = make_path(g, root, {{"tau", fix.c("J(I(A))")}, {"nu", fix.c("H(A)")}});
  PathVec h_b = make_path(g, root, {{"tau", fix.c("I(J(A))")}, {"mu", fix.c("H(A)")}});

  std::vector<Subdivision> h_subs = enumerate_subdivisions(g, h_a, h_b);
  REQUIRE(h_subs.size() == 1);  // J(J(A)) has no route onward, so it cannot join
  CHECK(h_subs[0].emb.edges.size() == 4);
  CHECK(h_subs[0].faces.size() == 1);
  check_subdivision(g, h_subs[0]);
  check_against_oracle(g, h_subs, h_a, h_b);
  CHECK(is_diamond(g, h_a, h_b));

  DiamondScan scan = enumerate_diamonds(g, root);
  CHECK(!scan.truncated);
  REQUIRE(scan.diamonds.size() == 2);
  std::set<std::pair<PathVec, PathVec>> got(scan.diamonds.begin(), scan.diamonds.end());
  CHECK(got.count(ordered_pair(sq_a, sq_b)) == 1);
  CHECK(got.count(ordered_pair(h_a, h_b)) == 1);

  check_poset_laws(h_subs);
}

TEST_CASE("independent tensor factors: same two diamonds") {
  DisjointFix fix;
  ReductionGraph g = explore(fix.s, {fix.c("(I(A) ot I(A))")});
  REQUIRE(g.complete());
  CanonicalTerm root = fix.c("(I(A) ot I(A))");

  PathVec sq_a = make_path(g, root, {{"tau", fix.c("(J(A) ot I(A))")},
                                     {"tau", fix.c("(J(A) ot J(A))")}});
  PathVec sq_b = make_path(g, root, {{"tau", fix.c("(I(A) ot J(A))")},
                                     {"tau", fix.c("(J(A) ot J(A))")}});
  PathVec h_a = make_path(g, root, {{"tau", fix.c("(J(A) ot I(A))")}, {"jig", fix.c("H(A)")}});
  PathVec h_b = make_path(g, root, {{"tau", fix.c("(I(A) ot J(A))")}, {"zag", fix.c("H(A)")}});

  std::vector<Subdivision> sq_subs = enumerate_subdivisions(g, sq_a, sq_b);
  REQUIRE(sq_subs.size() == 1);
  check_against_oracle(g, sq_subs, sq_a, sq_b);
  check_subdivision(g, sq_subs[0]);
  CHECK(is_diamond(g, sq_a, sq_b));
  CHECK(is_diamond(g, h_a, h_b));

  DiamondScan scan = enumerate_diamonds(g, root);
  CHECK(!scan.truncated);
  REQUIRE(scan.diamonds.size() == 2);
  std::set<std::pair<PathVec, PathVec>> got(scan.diamonds.begin(), scan.diamonds.end());
  CHECK(got.count(ordered_pair(sq_a, sq_b)) == 1);
  CHECK(got.count(ordered_pair(h_a, h_b)) == 1);
}

TEST_CASE("connections between the boundary interiors kill the diamond") {
  // Four ways to connect the interiors of the two routes; each admits the
  // bare square plus the frozen number of connected embeddings.
  auto run = [](const SquareFix& fix, std::size_t expected_count) {
    auto [g, alpha, beta] = fix.square_pair();
    REQUIRE(g.complete());
    std::vector<Subdivision> subs = enumerate_subdivisions(g, alpha, beta);
    std::string label = fix.s.name + " count";
    CAPTURE(label);
    CHECK(subs.size() == expected_count);
    check_against_oracle(g, subs, alpha, beta);
    for (const Subdivision& sub : subs) check_subdivision(g, sub);
    check_poset_laws(subs);
    CHECK(!is_diamond(g, alpha, beta));
    CHECK(!is_diamond(g, beta, alpha));
  };

  SUBCASE("direct chord, downward") {
    SquareFix fix({}, {{"z", "Q(x)", "R(x)"}});
    run(fix, 2);  // bare square + square with the chord
  }
  SUBCASE("direct chord, upward") {
    SquareFix fix({}, {{"z", "R(x)", "Q(x)"}});
    run(fix, 2);
  }
  SUBCASE("interior sink vertex") {
    SquareFix fix({"E"}, {{"u", "Q(x)", "E(x)"}, {"v", "R(x)", "E(x)"}, {"w", "E(x)", "W(x)"}});
    run(fix, 4);  // bare, Q-detour, R-detour, both
  }
  SUBCASE("interior source vertex") {
    SquareFix fix({"E"}, {{"u", "P(x)", "E(x)"}, {"v", "E(x)", "Q(x)"}, {"w", "E(x)", "R(x)"}});
    run(fix, 4);
  }
}

TEST_CASE("parallel routes: placements multiply but the pair stays a diamond") {
  RoutesFix fix;
  ReductionGraph g = explore(fix.s, {fix.c("S(A)")});
  REQUIRE(g.complete());

  PathVec alpha = make_path(g, fix.c("S(A)"), {{"r1", fix.c("U1(A)")}, {"q1", fix.c("T(A)")}});
  PathVec beta = make_path(g, fix.c("S(A)"), {{"r2", fix.c("U2(A)")}, {"q2", fix.c("T(A)")}});

  std::vector<Subdivision> subs = enumerate_subdivisions(g, alpha, beta);
  // frozen by hand: bare square, route 3 alone, route 4 alone, and the two
  // vertical orders of routes 3 and 4 together
  REQUIRE(subs.size() == 5);
  check_against_oracle(g, subs, alpha, beta);
  for (const Subdivision& sub : subs) check_subdivision(g, sub);

  std::vector<Subdivision> maxima = maximal_subdivisions(subs);
  REQUIRE(maxima.size() == 2);
  CHECK(maxima[0].emb.edges.size() == 8);
  CHECK(maxima[1].emb.edges.size() == 8);
  CHECK(maxima[0].emb.edges == maxima[1].emb.edges);  // same subgraph...
  CHECK(!(maxima[0] == maxima[1]));                   // ...drawn two ways
  CHECK(!refinement_leq(maxima[0], maxima[1]));
  CHECK(!refinement_leq(maxima[1], maxima[0]));
  CHECK(maxima[0].faces.size() == 3);  // three stacked regions
  CHECK(maxima[1].faces.size() == 3);
  check_poset_laws(subs);

  // interior routes never connect the two boundary interiors
  CHECK(is_diamond(g, alpha, beta));

  // a pair drawn from routes 3 and 4 is unrelated to this one
  PathVec other_a =
      make_path(g, fix.c("S(A)"), {{"r3", fix.c("U3(A)")}, {"q3", fix.c("T(A)")}});
  PathVec other_b =
      make_path(g, fix.c("S(A)"), {{"r4", fix.c("U4(A)")}, {"q4", fix.c("T(A)")}});
  std::vector<Subdivision> other = enumerate_subdivisions(g, other_a, other_b);
  REQUIRE(other.size() == 5);
  CHECK(!refinement_leq(subs[0], other[0]));
  CHECK(!refinement_leq(other[0], subs[0]));

  // every unordered pair of the four routes is a diamond: 6 of them
  DiamondScan scan = enumerate_diamonds(g, fix.c("S(A)"));
  CHECK(!scan.truncated);
  CHECK(scan.diamonds.size() == 6);
}

TEST_CASE("parallel edges, shared prefixes, and a degenerate pair") {
  RailsFix fix;
  ReductionGraph g = explore(fix.s, {fix.c("P(A)")});
  REQUIRE(g.complete());
  CanonicalTerm p = fix.c("P(A)");
  CanonicalTerm m = fix.c("M(A)");
  CanonicalTerm w = fix.c("W(A)");

  SUBCASE("two stacked two-sided regions around a shared interior vertex") {
    PathVec alpha = make_path(g, p, {{"pa", m}, {"ma", w}});
    PathVec beta = make_path(g, p, {{"pb", m}, {"mb", w}});
    std::vector<Subdivision> subs = enumerate_subdivisions(g, alpha, beta);
    // frozen: the shortcut edge cannot join (it would need the shared vertex
    // twice), parallel rails admit exactly one drawing
    REQUIRE(subs.size() == 1);
    check_against_oracle(g, subs, alpha, beta);
    REQUIRE(subs[0].faces.size() == 2);
    CHECK(subs[0].faces[0].left.size() == 1);
    CHECK(subs[0].faces[0].right.size() == 1);
    check_subdivision(g, subs[0]);
    // shared interior vertex: never a diamond
    CHECK(!is_diamond(g, alpha, beta));
  }

  SUBCASE("boundary paths of different lengths") {
    PathVec alpha = make_path(g, p, {{"pa", m}, {"ma", w}});
    PathVec beta = make_path(g, p, {{"pw", w}});
    std::vector<Subdivision> subs = enumerate_subdivisions(g, alpha, beta);
    // frozen: bare triangle, plus pb, plus mb, plus both
    REQUIRE(subs.size() == 4);
    check_against_oracle(g, subs, alpha, beta);
    for (const Subdivision& sub : subs) check_subdivision(g, sub);
    check_poset_laws(subs);
    std::vector<Subdivision> maxima = maximal_subdivisions(subs);
    REQUIRE(maxima.size() == 1);
    CHECK(maxima[0].emb.edges.size() == 5);
    CHECK(maxima[0].faces.size() == 3);
    // one boundary has no interior at all, so nothing can connect them
    CHECK(is_diamond(g, alpha, beta));
    CHECK(is_diamond(g, beta, alpha));
  }

  SUBCASE("a path against itself") {
    PathVec edge = make_path(g, p, {{"pw", w}});
    std::vector<Subdivision> subs = enumerate_subdivisions(g, edge, edge);
    REQUIRE(subs.size() == 1);
    CHECK(subs[0].emb.edges.size() == 1);
    CHECK(subs[0].faces.empty());
    check_against_oracle(g, subs, edge, edge);
    CHECK(is_diamond(g, edge, edge));

    // against itself with an interior vertex: the zero-length connection
    PathVec rail = make_path(g, p, {{"pa", m}, {"ma", w}});
    CHECK(!is_diamond(g, rail, rail));
  }
}

TEST_CASE("shared first edge appears on the outer boundary twice") {
  PrefixFix fix;
  ReductionGraph g = explore(fix.s, {fix.c("P(A)")});
  PathVec alpha = make_path(g, fix.c("P(A)"),
                            {{"f", fix.c("V(A)")}, {"ga", fix.c("W(A)")}});
  PathVec beta = make_path(g, fix.c("P(A)"),
                           {{"f", fix.c("V(A)")}, {"gb", fix.c("W(A)")}});
  std::vector<Subdivision> subs = enumerate_subdivisions(g, alpha, beta);
  REQUIRE(subs.size() == 1);
  CHECK(subs[0].emb.edges.size() == 3);
  REQUIRE(subs[0].faces.size() == 1);
  CHECK(subs[0].faces[0].left == PathVec{alpha[1]});
  CHECK(subs[0].faces[0].right == PathVec{beta[1]});
  check_against_oracle(g, subs, alpha, beta);
  check_subdivision(g, subs[0]);
  // the fork vertex is interior to both paths
  CHECK(!is_diamond(g, alpha, beta));
}

TEST_CASE("unbounded growth keeps exactly one diamond at every depth") {
  TowerFix fix;
  CanonicalTerm root = fix.c("I(A)");

  // depth-2 pairs, explored one level deeper so their spans are closed
  ReductionGraph g3 = explore(fix.s, {root}, Limits{.max_depth = 3});
  DiamondScan scan2 = enumerate_diamonds(g3, root, Limits{.max_path_length = 2});
  CHECK(scan2.truncated);  // longer routes exist
  REQUIRE(scan2.diamonds.size() == 1);

  PathVec via_g = make_path(g3, root, {{"ig", fix.c("G(I(A))")}, {"gh", fix.c("H(I(A))")}});
  PathVec via_f = make_path(g3, root, {{"if", fix.c("F(I(A))")}, {"fh", fix.c("H(I(A))")}});
  CHECK(scan2.diamonds[0] == ordered_pair(via_g, via_f));

  ReductionGraph g4 = explore(fix.s, {root}, Limits{.max_depth = 4});
  DiamondScan scan3 = enumerate_diamonds(g4, root, Limits{.max_path_length = 3});
  CHECK(scan3.truncated);
  REQUIRE(scan3.diamonds.size() == 1);  // frozen: worked out by hand
  CHECK(scan3.diamonds[0] == ordered_pair(via_g, via_f));

  // the lone diamond's own subdivision set: just the square
  std::vector<Subdivision> subs = enumerate_subdivisions(g3, via_g, via_f);
  REQUIRE(subs.size() == 1);
  check_against_oracle(g3, subs, via_g, via_f);
  // stable under deeper exploration
  CHECK(enumerate_subdivisions(g4, via_g, via_f) == subs);

  // a mixed-symbol fork, by contrast, is bridged through the first fork's
  // target and is not a diamond
  PathVec to_hf_f = make_path(
      g4, root, {{"if", fix.c("F(I(A))")}, {"ff", fix.c("F(F(I(A)))")},
                 {"fh", fix.c("H(F(I(A)))")}});
  PathVec to_hf_g = make_path(
      g4, root, {{"ig", fix.c("G(I(A))")}, {"if", fix.c("G(F(I(A)))")},
                 {"gh", fix.c("H(F(I(A)))")}});
  CHECK(!is_diamond(g4, to_hf_f, to_hf_g));
}

TEST_CASE("validation rejects malformed pairs and unreliable spans") {
  NestedFix fix;
  ReductionGraph g = explore(fix.s, {fix.c("I(I(A))")});
  CanonicalTerm root = fix.c("I(I(A))");
  PathVec alpha = make_path(g, root, {{"tau", fix.c("J(I(A))")}, {"tau", fix.c("J(J(A))")}});
  PathVec beta = make_path(g, root, {{"tau", fix.c("I(J(A))")}, {"tau", fix.c("J(J(A))")}});
  PathVec h_path = make_path(g, root, {{"tau", fix.c("J(I(A))")}, {"nu", fix.c("H(A)")}});

  SUBCASE("empty path") {
    CHECK_THROWS_AS(enumerate_subdivisions(g, {}, beta), ValidationError);
    CHECK_THROWS_AS(is_diamond(g, alpha, {}), ValidationError);
  }
  SUBCASE("different endpoints") {
    CHECK_THROWS_AS(enumerate_subdivisions(g, alpha, h_path), ValidationError);
    CHECK_THROWS_AS(is_diamond(g, alpha, h_path), ValidationError);
  }
  SUBCASE("broken chain") {
    PathVec shuffled{alpha[1], alpha[0]};
    CHECK_THROWS_AS(enumerate_subdivisions(g, shuffled, beta), ValidationError);
  }
  SUBCASE("forged step") {
    PathVec forged = alpha;
    forged[1].rule = "mu";
    CHECK_THROWS_AS(enumerate_subdivisions(g, forged, beta), ValidationError);
  }
  SUBCASE("span touching the exploration frontier") {
    ReductionGraph shallow = explore(fix.s, {root}, Limits{.max_depth = 2});
    PathVec ha = make_path(shallow, root, {{"tau", fix.c("J(I(A))")}, {"nu", fix.c("H(A)")}});
    PathVec hb = make_path(shallow, root, {{"tau", fix.c("I(J(A))")}, {"mu", fix.c("H(A)")}});
    CHECK_THROWS_WITH_AS(enumerate_subdivisions(shallow, ha, hb),
                         doctest::Contains("span not fully explored"), ValidationError);
    CHECK_THROWS_AS(is_diamond(shallow, ha, hb), ValidationError);
  }
  SUBCASE("cyclic span") {
    LoopFix loop;
    ReductionGraph lg = explore(loop.s, {loop.c("F(A)")});
    PathVec spin{lg.out_edges(loop.c("F(A)")).front()};
    CHECK_THROWS_WITH_AS(enumerate_subdivisions(lg, spin, spin),
                         doctest::Contains("cycle"), ValidationError);
  }
  SUBCASE("scan from a vertex outside the graph") {
    DiamondScan scan = enumerate_diamonds(g, fix.c("H(H(A))"));
    CHECK(scan.diamonds.empty());
    CHECK(!scan.truncated);
  }
}

TEST_CASE("faces recompute from rotation data alone") {
  RoutesFix fix;
  ReductionGraph g = explore(fix.s, {fix.c("S(A)")});
  PathVec alpha = make_path(g, fix.c("S(A)"), {{"r1", fix.c("U1(A)")}, {"q1", fix.c("T(A)")}});
  PathVec beta = make_path(g, fix.c("S(A)"), {{"r2", fix.c("U2(A)")}, {"q2", fix.c("T(A)")}});
  std::vector<Subdivision> subs = enumerate_subdivisions(g, alpha, beta);

  for (const Subdivision& sub : subs) {
    std::vector<Face> again = faces_of(sub);
    REQUIRE(again.size() == sub.faces.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
      CHECK(again[i].left == sub.faces[i].left);
      CHECK(again[i].right == sub.faces[i].right);
    }
  }

  // corrupting the rotation data makes the embedding invalid
  Subdivision broken = subs[0];
  std::reverse(broken.emb.out_order[broken.emb.s].begin(),
               broken.emb.out_order[broken.emb.s].end());
  CHECK_THROWS_AS(faces_of(broken), ValidationError);
}

TEST_CASE("renderings stay in sync with the embedding") {
  NestedFix fix;
  ReductionGraph g = explore(fix.s, {fix.c("I(I(A))")});
  PathVec alpha = make_path(g, fix.c("I(I(A))"),
                            {{"tau", fix.c("J(I(A))")}, {"tau", fix.c("J(J(A))")}});
  PathVec beta = make_path(g, fix.c("I(I(A))"),
                           {{"tau", fix.c("I(J(A))")}, {"tau", fix.c("J(J(A))")}});
  Subdivision sub = enumerate_subdivisions(g, alpha, beta).at(0);

  std::string dot = to_dot(fix.s, sub);
  CHECK(dot.find("digraph subdivision") != std::string::npos);
  CHECK(dot.find("rankdir=LR") != std::string::npos);
  CHECK(dot.find("rank=source") != std::string::npos);
  CHECK(dot.find("rank=sink") != std::string::npos);
  CHECK(dot.find("tau@e") != std::string::npos);
  CHECK(std::count(dot.begin(), dot.end(), '\n') >= 10);

  std::string text = to_json(fix.s, sub);
  // structure probes without a JSON library on the oracle side
  CHECK(text.find("\"vertices\"") != std::string::npos);
  CHECK(text.find("\"rotation\"") != std::string::npos);
  CHECK(text.find("\"faces\"") != std::string::npos);
  CHECK(text.find("\"alpha\"") != std::string::npos);
  CHECK(text.find("\"beta\"") != std::string::npos);
}
