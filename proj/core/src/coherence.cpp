#include "cohere/coherence.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace cohere {

namespace {

// --- region calculus --------------------------------------------------------------
//
// A step rewrites either a whole subterm (pos, no segment) or a child range
// [b, e) of a flattened associative node (pos, b, e).  Classification and
// the closure oracle's exchange moves only need how two such regions sit
// relative to each other, so the calculus below works on bare positions and
// ranges without consulting the rules.

struct Region {
  Position pos;
  int b = -1;
  int e = -1;

  bool is_segment() const { return b >= 0; }
};

Region region_of_step(const Step& st) {
  return Region{st.pos, st.seg_begin, st.seg_end};
}

const Term* safe_subterm(const Term& t, const Position& p) {
  const Term* cur = &t;
  for (int i : p) {
    if (!cur->is_app() || i < 0 ||
        i >= static_cast<int>(cur->children().size()))
      return nullptr;
    cur = &cur->children()[i];
  }
  return cur;
}

// A full-span segment covers the same slice as the whole node, so regions
// are compared with full spans promoted to whole-subterm form.
Region normalize_region(const Term& src, Region r) {
  if (r.is_segment()) {
    const Term* node = safe_subterm(src, r.pos);
    if (node && node->is_app() && r.b == 0 &&
        r.e == static_cast<int>(node->children().size())) {
      r.b = -1;
      r.e = -1;
    }
  }
  return r;
}

bool prefix_of(const Position& a, const Position& b) {
  return a.size() <= b.size() && std::equal(a.begin(), a.end(), b.begin());
}

enum class RegionRel { Disjoint, Equal, FirstInside, SecondInside, Partial };

RegionRel relate_regions(const Term& src, Region a, Region b) {
  a = normalize_region(src, a);
  b = normalize_region(src, b);
  if (a.pos == b.pos) {
    if (!a.is_segment() && !b.is_segment()) return RegionRel::Equal;
    if (!a.is_segment()) return RegionRel::SecondInside;
    if (!b.is_segment()) return RegionRel::FirstInside;
    if (a.b == b.b && a.e == b.e) return RegionRel::Equal;
    if (a.e <= b.b || b.e <= a.b) return RegionRel::Disjoint;
    if (b.b <= a.b && a.e <= b.e) return RegionRel::FirstInside;
    if (a.b <= b.b && b.e <= a.e) return RegionRel::SecondInside;
    return RegionRel::Partial;
  }
  if (prefix_of(a.pos, b.pos)) {
    if (!a.is_segment()) return RegionRel::SecondInside;
    int j = b.pos[a.pos.size()];
    return (a.b <= j && j < a.e) ? RegionRel::SecondInside
                                 : RegionRel::Disjoint;
  }
  if (prefix_of(b.pos, a.pos)) {
    if (!b.is_segment()) return RegionRel::FirstInside;
    int j = a.pos[b.pos.size()];
    return (b.b <= j && j < b.e) ? RegionRel::FirstInside
                                 : RegionRel::Disjoint;
  }
  return RegionRel::Disjoint;
}

Term region_slice(const Term& src, const Region& r) {
  const Term& node = subterm_at(src, r.pos);
  if (!r.is_segment()) return node;
  if (r.b == 0 && r.e == static_cast<int>(node.children().size())) return node;
  if (r.e - r.b == 1) return node.children()[r.b];
  return Term::app(node.head(),
                   {node.children().begin() + r.b,
                    node.children().begin() + r.e});
}

// Candidate variable-image regions of a term, judged by shape alone: every
// whole subterm, plus every proper child range of width >= 2 (only nodes
// with >= 3 children have those).  An image of a well-typed match is always
// one of these slices, so membership of a slice in a step's substitution
// images identifies the regions that step treats as opaque arguments.
std::vector<Region> shape_regions(const Term& t) {
  std::vector<Region> out;
  for (const Position& p : positions(t)) {
    out.push_back(Region{p, -1, -1});
    const Term& node = subterm_at(t, p);
    if (!node.is_app()) continue;
    int k = static_cast<int>(node.children().size());
    if (k < 3) continue;
    for (int b = 0; b < k; ++b)
      for (int e = b + 2; e <= k; ++e) {
        if (b == 0 && e == k) continue;
        out.push_back(Region{p, b, e});
      }
  }
  return out;
}

Term substitute_raw(const Term& t, const Substitution& sub) {
  if (t.is_var()) {
    auto it = sub.find(t.head());
    return it == sub.end() ? t : it->second;
  }
  if (!t.is_app()) return t;
  std::vector<Term> kids;
  kids.reserve(t.children().size());
  for (const Term& c : t.children()) kids.push_back(substitute_raw(c, sub));
  return Term::app(t.head(), std::move(kids));
}

// True when the inner region rewrites inside a slice the outer step binds
// to one of its variables (equality counts: rewriting exactly the image is
// still below the pattern).
bool nested_under(const Term& src, const Step& outer, const Region& inner) {
  Region outer_region = region_of_step(outer);
  for (const Region& r : shape_regions(src)) {
    if (relate_regions(src, r, outer_region) != RegionRel::FirstInside)
      continue;
    Term slice = region_slice(src, r);
    bool image = false;
    for (const auto& [v, img] : outer.subst)
      if (img == slice) {
        image = true;
        break;
      }
    if (!image) continue;
    RegionRel rel = relate_regions(src, inner, r);
    if (rel == RegionRel::Equal || rel == RegionRel::FirstInside) return true;
  }
  return false;
}

// Rebases a step of `src` onto the slice at P (which must contain the
// step's region).  The target is transported structurally; when the
// rewrite collapsed the sliced node the whole rewritten subterm is used.
Step rebase_step(const Term& src, const Step& st, const Region& P,
                 const Term& peak) {
  Step out = st;
  out.source = peak;
  if (!P.is_segment()) {
    out.pos = Position(st.pos.begin() + P.pos.size(), st.pos.end());
  } else if (st.pos == P.pos) {
    out.pos = {};
    out.seg_begin = st.seg_begin - P.b;
    out.seg_end = st.seg_end - P.b;
  } else {
    out.pos = {st.pos[P.pos.size()] - P.b};
    out.pos.insert(out.pos.end(), st.pos.begin() + P.pos.size() + 1,
                   st.pos.end());
  }
  const Term* src_node = safe_subterm(src, P.pos);
  const Term* tgt_node = safe_subterm(st.target, P.pos);
  Term transported = st.target;
  if (tgt_node && src_node) {
    if (!P.is_segment()) {
      transported = *tgt_node;
    } else if (tgt_node->is_app() && tgt_node->head() == src_node->head()) {
      int delta = static_cast<int>(tgt_node->children().size()) -
                  static_cast<int>(src_node->children().size());
      int b = P.b;
      int e = P.e + delta;
      if (b >= 0 && b < e && e <= static_cast<int>(tgt_node->children().size()))
        transported = region_slice(st.target, Region{P.pos, b, e});
      else
        transported = *tgt_node;
    } else {
      transported = *tgt_node;
    }
  }
  out.target = transported;
  return out;
}

CriticalSpan overlap_of(const Term& src, const Step& s1, const Step& s2,
                        Region P) {
  P = normalize_region(src, P);
  CriticalSpan cs;
  cs.peak = region_slice(src, P);
  cs.left = rebase_step(src, s1, P, cs.peak);
  cs.right = rebase_step(src, s2, P, cs.peak);
  return cs;
}

SpanClass classify_steps(const Term& src, const Step& s1, const Step& s2) {
  Region r1 = region_of_step(s1);
  Region r2 = region_of_step(s2);
  SpanClass out;
  switch (relate_regions(src, r1, r2)) {
    case RegionRel::Disjoint:
      out.kind = SpanClass::Kind::Disjoint;
      return out;
    case RegionRel::Equal:
      out.kind = SpanClass::Kind::Overlap;
      out.overlap = overlap_of(src, s1, s2, r1);
      return out;
    case RegionRel::Partial: {
      // Only same-node child ranges overlap partially; the union range is
      // the smallest region containing both redexes.
      Region a = normalize_region(src, r1);
      Region b = normalize_region(src, r2);
      Region u{a.pos, std::min(a.b, b.b), std::max(a.e, b.e)};
      out.kind = SpanClass::Kind::Overlap;
      out.overlap = overlap_of(src, s1, s2, u);
      return out;
    }
    case RegionRel::FirstInside:
      if (nested_under(src, s2, r1)) {
        out.kind = SpanClass::Kind::Nested;
        return out;
      }
      out.kind = SpanClass::Kind::Overlap;
      out.overlap = overlap_of(src, s1, s2, r2);
      return out;
    case RegionRel::SecondInside:
      if (nested_under(src, s1, r2)) {
        out.kind = SpanClass::Kind::Nested;
        return out;
      }
      out.kind = SpanClass::Kind::Overlap;
      out.overlap = overlap_of(src, s1, s2, r1);
      return out;
  }
  return out;
}

// --- context morphisms ------------------------------------------------------------

// Wraps morphism arguments back into a term shape: associative symbols are
// declared binary, so longer child lists fold right-associated; a single
// part stands alone.
Morphism fold_app(const TwoStructure& s, const std::string& symbol,
                  std::vector<Morphism> parts) {
  if (parts.size() == 1) return std::move(parts.front());
  if (s.theory.is_assoc(symbol) && parts.size() > 2) {
    Morphism acc = std::move(parts.back());
    for (int i = static_cast<int>(parts.size()) - 2; i >= 0; --i)
      acc = Morphism::app(s, symbol, {std::move(parts[i]), std::move(acc)});
    return acc;
  }
  return Morphism::app(s, symbol, std::move(parts));
}

// The morphism that applies `inner` at the region of `base` and is the
// identity everywhere else.
Morphism build_context(const TwoStructure& s, const Term& base,
                       const Region& r, const Morphism& inner) {
  if (r.pos.empty()) {
    if (!r.is_segment()) return inner;
    const auto& kids = base.children();
    int n = static_cast<int>(kids.size());
    if (r.b == 0 && r.e == n) return inner;
    std::vector<Morphism> parts;
    for (int i = 0; i < r.b; ++i)
      parts.push_back(Morphism::identity(s, kids[i]));
    parts.push_back(inner);
    for (int i = r.e; i < n; ++i)
      parts.push_back(Morphism::identity(s, kids[i]));
    return fold_app(s, base.head(), std::move(parts));
  }
  int j = r.pos.front();
  Region rest{Position(r.pos.begin() + 1, r.pos.end()), r.b, r.e};
  std::vector<Morphism> parts;
  const auto& kids = base.children();
  for (int i = 0; i < static_cast<int>(kids.size()); ++i)
    parts.push_back(i == j ? build_context(s, kids[i], rest, inner)
                           : Morphism::identity(s, kids[i]));
  return fold_app(s, base.head(), std::move(parts));
}

// The morphism of a pattern term with one argument morphism per variable
// (identity of the image where no rewrite happens).
Morphism pattern_morphism(const TwoStructure& s, const Term& pattern,
                          const std::map<std::string, Morphism>& args) {
  if (pattern.is_var()) return args.at(pattern.head());
  if (!pattern.is_app()) return Morphism::identity(s, pattern);
  std::vector<Morphism> parts;
  parts.reserve(pattern.children().size());
  for (const Term& c : pattern.children())
    parts.push_back(pattern_morphism(s, c, args));
  if (parts.empty()) return Morphism::identity(s, pattern);
  return fold_app(s, pattern.head(), std::move(parts));
}

Morphism path_to_morphism(const TwoStructure& s, const CanonicalTerm& src,
                          const std::vector<Step>& path) {
  if (path.empty()) return identity_of(s, src);
  std::vector<Morphism> factors;
  factors.reserve(path.size());
  for (const Step& st : path) factors.push_back(step_to_morphism(s, st));
  return Morphism::comp(s, std::move(factors));
}

// --- decision procedure -----------------------------------------------------------

// One parallel pair under decision, normalized so that the smaller side
// comes first.  Keys are ordered lexicographically; the recursion below
// only descends into faces whose key is strictly below the innermost
// active key, which makes the chain of active keys strictly decreasing and
// the recursion therefore terminating regardless of the face structure.
struct DecideKey {
  CanonicalTerm source{Term::gen("_")};
  std::vector<Step> lo;
  std::vector<Step> hi;
};

DecideKey make_key(const CanonicalTerm& source, const std::vector<Step>& a,
                   const std::vector<Step>& b) {
  DecideKey k;
  k.source = source;
  if (b < a) {
    k.lo = b;
    k.hi = a;
  } else {
    k.lo = a;
    k.hi = b;
  }
  return k;
}

bool key_less(const DecideKey& a, const DecideKey& b) {
  if (auto c = a.source <=> b.source; c != 0) return c < 0;
  if (auto c = a.lo <=> b.lo; c != 0) return c < 0;
  return a.hi < b.hi;
}

struct DecideCtx {
  const TwoStructure& s;
  const ReductionGraph& g;
  const Limits& lim;
  std::vector<DecideKey> active;
};

// The one-vertex witness for an empty parallel pair.
EqualWitness degenerate_witness(const CanonicalTerm& source) {
  EqualWitness w;
  w.sub.emb.vertices = {source};
  w.sub.emb.s = 0;
  w.sub.emb.t = 0;
  w.sub.emb.in_order = {{}};
  w.sub.emb.out_order = {{}};
  return w;
}

// A chain equal to itself needs no interior: the witness is the path drawn
// as both boundary sides, with no faces between them.
EqualWitness bare_path_witness(const CanonicalTerm& source,
                               const std::vector<Step>& path) {
  EqualWitness w;
  std::vector<CanonicalTerm> verts;
  verts.push_back(source);
  for (const Step& st : path) verts.push_back(CanonicalTerm{st.target});
  CanonicalTerm target = verts.back();
  std::sort(verts.begin(), verts.end());
  verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
  auto index_of = [&](const CanonicalTerm& v) {
    return static_cast<int>(
        std::lower_bound(verts.begin(), verts.end(), v) - verts.begin());
  };
  EmbeddedStGraph& emb = w.sub.emb;
  emb.vertices = verts;
  emb.s = index_of(source);
  emb.t = index_of(target);
  emb.edges = path;
  std::sort(emb.edges.begin(), emb.edges.end());
  emb.in_order.assign(verts.size(), {});
  emb.out_order.assign(verts.size(), {});
  for (int e = 0; e < static_cast<int>(emb.edges.size()); ++e) {
    int tail = index_of(CanonicalTerm{emb.edges[e].source});
    int head = index_of(CanonicalTerm{emb.edges[e].target});
    emb.edge_tail.push_back(tail);
    emb.edge_head.push_back(head);
    emb.out_order[tail].push_back(e);
    emb.in_order[head].push_back(e);
  }
  w.sub.alpha = path;
  w.sub.beta = path;
  return w;
}

Verdict decide_core(DecideCtx& ctx, const CanonicalTerm& source,
                    const std::vector<Step>& left,
                    const std::vector<Step>& right, int depth) {
  Verdict v;  // defaults to ResourceExhausted
  if (left == right) {
    if (left.empty()) {
      v.kind = Verdict::Kind::Equal;
      v.witness = degenerate_witness(source);
      return v;
    }
    std::set<CanonicalTerm> seen{source};
    bool distinct = true;
    for (const Step& st : left)
      if (!seen.insert(CanonicalTerm{st.target}).second) {
        distinct = false;
        break;
      }
    if (distinct) {
      v.kind = Verdict::Kind::Equal;
      v.witness = bare_path_witness(source, left);
      return v;
    }
    // A self-revisiting chain bounds a cycle; fall through so the span
    // enumeration reports it.
  }
  if (left.empty() || right.empty()) {
    // Parallel endpoints with one empty side: the other side returns to
    // its own source, so the span between the endpoints contains a
    // directed cycle and no subdivision can be trusted.
    v.record.reason =
        "span between the endpoints contains a directed cycle: one side is "
        "empty and the other is a nonempty loop";
    return v;
  }

  std::vector<Subdivision> subs;
  try {
    subs = enumerate_subdivisions(ctx.g, left, right);
  } catch (const ValidationError& err) {
    v.record.reason = err.what();
    return v;
  }

  for (const Subdivision& sub : subs) {
    ++v.record.subdivisions_checked;
    std::vector<FaceProof> proofs;
    bool closed = true;
    for (const Face& face : sub.faces) {
      ++v.record.faces_checked;
      std::optional<Justification> direct =
          face_instance_steps(ctx.s, face.source, face.left, face.right);
      if (direct) {
        FaceProof fp;
        fp.direct = std::move(*direct);
        proofs.push_back(std::move(fp));
        continue;
      }
      bool proved = false;
      if (depth < ctx.lim.recursion_depth) {
        DecideKey key = make_key(face.source, face.left, face.right);
        if (key_less(key, ctx.active.back())) {
          ctx.active.push_back(key);
          Verdict child = decide_core(ctx, face.source, face.left,
                                      face.right, depth + 1);
          ctx.active.pop_back();
          v.record.recursive_calls += 1 + child.record.recursive_calls;
          v.record.subdivisions_checked += child.record.subdivisions_checked;
          v.record.faces_checked += child.record.faces_checked;
          if (child.kind == Verdict::Kind::Equal) {
            FaceProof fp;
            fp.nested =
                std::make_shared<EqualWitness>(std::move(*child.witness));
            proofs.push_back(std::move(fp));
            proved = true;
          }
        }
      }
      if (!proved) {
        closed = false;
        break;
      }
    }
    if (closed) {
      v.kind = Verdict::Kind::Equal;
      v.witness = EqualWitness{sub, std::move(proofs)};
      return v;
    }
  }
  v.kind = Verdict::Kind::NotEqual;
  v.record.exhaustive = true;
  return v;
}

// --- critical spans ---------------------------------------------------------------

int count_subst_units(const ObjectTheory& theory, const Substitution& sub) {
  int n = 0;
  for (const auto& [v, img] : sub) n += count_units(theory, img);
  return n;
}

// Finds the applications of `rule` on `peak` whose matching substitution
// is exactly `want`, scanning the same redex regions (whole subterms, and
// child ranges of width >= 2 on flattened associative nodes, whole matches
// normalized to the full span) and computing the same unit count as the
// step enumeration, so the produced steps instantiate verbatim.
std::vector<Step> rediscover_steps(const TwoStructure& s, const Term& peak,
                                   const Rule& rule, const Substitution& want,
                                   int unit_budget) {
  std::vector<Step> out;
  if (is_identity_instance(s, rule.label, want)) return out;
  const int budget =
      unit_budget < 0 ? static_cast<int>(rule.vars.size()) : unit_budget;
  const int want_units = count_subst_units(s.theory, want);
  auto try_region = [&](const Position& p, int b, int e, const Term& slice) {
    for (const Substitution& m :
         match_modulo(s.sig, s.theory, rule.lhs, CanonicalTerm{slice},
                      budget)) {
      if (m != want) continue;
      Step st;
      st.rule = rule.label;
      st.pos = p;
      st.seg_begin = b;
      st.seg_end = e;
      st.units_inserted =
          std::max(0, want_units - count_units(s.theory, slice));
      st.subst = want;
      st.source = peak;
      Term repl = substitute_raw(rule.rhs, want);
      Term raw = b < 0 ? replace_at(peak, p, repl)
                       : replace_segment(peak, p, b, e, repl);
      st.target = canonicalize(s.sig, s.theory, raw).term;
      out.push_back(std::move(st));
      break;
    }
  };
  for (const Position& p : positions(peak)) {
    const Term& sub = subterm_at(peak, p);
    if (sub.is_app() && s.theory.is_assoc(sub.head())) {
      int n = static_cast<int>(sub.children().size());
      try_region(p, 0, n, sub);
      for (int b = 0; b < n; ++b)
        for (int e = b + 2; e <= n; ++e) {
          if (b == 0 && e == n) continue;
          Term slice = Term::app(sub.head(), {sub.children().begin() + b,
                                              sub.children().begin() + e});
          try_region(p, b, e, slice);
        }
    } else {
      try_region(p, -1, -1, sub);
    }
  }
  return out;
}

void collect_vars_preorder(const Term& t, std::vector<std::string>& out,
                           std::set<std::string>& seen) {
  if (t.is_var()) {
    if (seen.insert(t.head()).second) out.push_back(t.head());
    return;
  }
  if (!t.is_app()) return;
  for (const Term& c : t.children()) collect_vars_preorder(c, out, seen);
}

// Renames the span's variables to x1, x2, ... in order of first occurrence
// in the peak, so that renaming-equivalent spans become identical.
void rename_span(CriticalSpan& cs) {
  std::vector<std::string> order;
  std::set<std::string> seen;
  collect_vars_preorder(cs.peak, order, seen);
  Substitution ren;
  for (std::size_t i = 0; i < order.size(); ++i)
    ren.emplace(order[i], Term::var("x" + std::to_string(i + 1)));
  cs.peak = substitute_raw(cs.peak, ren);
  for (Step* st : {&cs.left, &cs.right}) {
    st->source = substitute_raw(st->source, ren);
    st->target = substitute_raw(st->target, ren);
    Substitution renamed;
    for (const auto& [v, img] : st->subst)
      renamed.emplace(v, substitute_raw(img, ren));
    st->subst = std::move(renamed);
  }
}

bool pure_renaming(const Substitution& sub) {
  std::set<std::string> images;
  for (const auto& [v, img] : sub) {
    if (!img.is_var()) return false;
    if (!images.insert(img.head()).second) return false;
  }
  return true;
}

// Non-variable regions of a rule pattern where another pattern can be
// superposed: whole subterms everywhere, plus child ranges of width >= 2 on
// associative nodes (the full span stands for the whole node and is left to
// the whole-subterm case).
std::vector<Region> superposition_regions(const ObjectTheory& theory,
                                          const Term& lhs) {
  std::vector<Region> out;
  for (const Position& p : positions(lhs)) {
    const Term& node = subterm_at(lhs, p);
    if (node.is_var()) continue;
    out.push_back(Region{p, -1, -1});
    if (!node.is_app() || !theory.is_assoc(node.head())) continue;
    int n = static_cast<int>(node.children().size());
    for (int b = 0; b < n; ++b)
      for (int e = b + 2; e <= n; ++e) {
        if (b == 0 && e == n) continue;
        out.push_back(Region{p, b, e});
      }
  }
  return out;
}

// --- closure oracle moves ----------------------------------------------------------

using MovePair = std::pair<std::vector<Step>, std::vector<Step>>;

// Redex regions of a canonical term, in the order the step enumeration
// scans them; used to place axiom instances under whole-term contexts.
std::vector<Region> redex_regions(const ObjectTheory& theory, const Term& t) {
  std::vector<Region> out;
  for (const Position& p : positions(t)) {
    const Term& node = subterm_at(t, p);
    if (node.is_app() && theory.is_assoc(node.head())) {
      int n = static_cast<int>(node.children().size());
      out.push_back(Region{p, 0, n});
      for (int b = 0; b < n; ++b)
        for (int e = b + 2; e <= n; ++e) {
          if (b == 0 && e == n) continue;
          out.push_back(Region{p, b, e});
        }
    } else {
      out.push_back(Region{p, -1, -1});
    }
  }
  return out;
}

std::vector<MovePair> moves_at(const TwoStructure& s, const CanonicalTerm& u,
                               const Limits& lim) {
  std::vector<MovePair> out;
  auto add_both = [&](std::vector<Step> a, std::vector<Step> b) {
    if (a == b) return;
    out.emplace_back(a, b);
    out.emplace_back(std::move(b), std::move(a));
  };

  std::vector<Step> steps = enumerate_steps(s, u, lim.unit_budget);

  // Functoriality: two rewrites of disjoint regions exchange.  The joint
  // target is computed by replacing both redexes in one pass (the later
  // region first, so the earlier coordinates stay valid) and each
  // transported step is recovered from the enumeration by rule,
  // substitution and target; ambiguous recoveries are skipped.
  auto doc_key = [](const Step& st) {
    Position k = st.pos;
    if (st.seg_begin >= 0) k.push_back(st.seg_begin);
    return k;
  };
  auto apply_raw = [&](const Term& t, const Step& st) {
    Term repl = substitute_raw(s.rule(st.rule)->rhs, st.subst);
    return st.seg_begin >= 0
               ? replace_segment(t, st.pos, st.seg_begin, st.seg_end, repl)
               : replace_at(t, st.pos, repl);
  };
  auto find_unique = [&](const CanonicalTerm& from, const Step& like,
                         const CanonicalTerm& to) -> std::optional<Step> {
    std::optional<Step> found;
    for (const Step& st : enumerate_steps(s, from, lim.unit_budget)) {
      if (st.rule != like.rule || st.subst != like.subst) continue;
      if (CanonicalTerm{st.target} != to) continue;
      if (found) return std::nullopt;
      found = st;
    }
    return found;
  };
  for (std::size_t i = 0; i < steps.size(); ++i)
    for (std::size_t j = i + 1; j < steps.size(); ++j) {
      const Step& e1 = steps[i];
      const Step& e2 = steps[j];
      if (relate_regions(u.term, region_of_step(e1), region_of_step(e2)) !=
          RegionRel::Disjoint)
        continue;
      Term raw = doc_key(e1) > doc_key(e2) ? apply_raw(apply_raw(u.term, e1), e2)
                                           : apply_raw(apply_raw(u.term, e2), e1);
      CanonicalTerm w = canonicalize(s.sig, s.theory, raw);
      std::optional<Step> e2p = find_unique(CanonicalTerm{e1.target}, e2, w);
      std::optional<Step> e1p = find_unique(CanonicalTerm{e2.target}, e1, w);
      if (!e2p || !e1p) continue;
      add_both({e1, *e2p}, {e2, *e1p});
    }

  // Naturality: a rewrite inside one variable image of a step exchanges
  // with the step itself.  Both routes of the square are built as whole-term
  // morphisms and sequentialized; instances that fail to compose (for
  // example through unit-elided argument positions) are skipped.
  for (const Step& e : steps) {
    const Rule* rho = s.rule(e.rule);
    if (!rho) continue;
    Region rg = region_of_step(e);
    for (const std::string& x : rho->vars) {
      auto image = e.subst.find(x);
      if (image == e.subst.end()) continue;
      for (const Step& arg :
           enumerate_steps(s, CanonicalTerm{image->second}, lim.unit_budget)) {
        try {
          Morphism arg_m = step_to_morphism(s, arg);
          std::vector<Morphism> diag_args;
          std::vector<Morphism> id_args;
          std::map<std::string, Morphism> rhs_args;
          for (const std::string& v : rho->vars) {
            Morphism idv = Morphism::identity(s, e.subst.at(v));
            diag_args.push_back(v == x ? arg_m : idv);
            id_args.push_back(idv);
            rhs_args.emplace(v, v == x ? arg_m : idv);
          }
          Morphism diag = build_context(
              s, u.term, rg, Morphism::lift(s, rho->label, std::move(diag_args)));
          Morphism stepwise = build_context(
              s, u.term, rg,
              Morphism::comp(s, Morphism::lift(s, rho->label, std::move(id_args)),
                             pattern_morphism(s, rho->rhs, rhs_args)));
          add_both(sequentialize(s, diag), sequentialize(s, stepwise));
        } catch (const Error&) {
          continue;
        }
      }
    }
  }

  // Stored axioms, instantiated at every matching redex region under the
  // whole-term context, in both orientations.  An empty side yields an
  // insertion/deletion move.
  for (const Equation& eq : s.equations) {
    if (eq.identity_instance) continue;
    const Term& lhs_src = eq.left->source();
    const int budget = lim.unit_budget < 0
                           ? static_cast<int>(term_vars(lhs_src).size())
                           : lim.unit_budget;
    for (const Region& rg : redex_regions(s.theory, u.term)) {
      Term slice = region_slice(u.term, rg);
      for (const Substitution& m :
           match_modulo(s.sig, s.theory, lhs_src, CanonicalTerm{slice},
                        budget)) {
        try {
          Morphism ml =
              build_context(s, u.term, rg, substitute_morphism(s, *eq.left, m));
          Morphism mr =
              build_context(s, u.term, rg, substitute_morphism(s, *eq.right, m));
          add_both(sequentialize(s, ml), sequentialize(s, mr));
        } catch (const Error&) {
          continue;
        }
      }
    }
  }
  return out;
}

bool renaming_canonical(const Term& t, const std::vector<std::string>& gens) {
  std::vector<std::string> firsts;
  std::set<std::string> seen;
  std::vector<const Term*> stack{&t};
  while (!stack.empty()) {
    const Term* cur = stack.back();
    stack.pop_back();
    if (cur->is_gen()) {
      if (seen.insert(cur->head()).second) firsts.push_back(cur->head());
    } else if (cur->is_app()) {
      for (auto it = cur->children().rbegin(); it != cur->children().rend();
           ++it)
        stack.push_back(&*it);
    }
  }
  if (firsts.size() > gens.size()) return false;
  return std::equal(firsts.begin(), firsts.end(), gens.begin());
}

// --- rendering helpers --------------------------------------------------------------

std::string justification_kind_name(Justification::Kind k) {
  switch (k) {
    case Justification::Kind::IdentityFace:
      return "identity";
    case Justification::Kind::Functoriality:
      return "functoriality";
    case Justification::Kind::Naturality:
      return "naturality";
    case Justification::Kind::Axiom:
      return "axiom";
  }
  return "unknown";
}

nlohmann::json witness_to_json(const TwoStructure& s, const EqualWitness& w) {
  nlohmann::json out;
  out["subdivision"] = nlohmann::json::parse(to_json(s, w.sub));
  nlohmann::json faces = nlohmann::json::array();
  for (const FaceProof& fp : w.faces) {
    nlohmann::json f;
    if (fp.direct) {
      f["kind"] = justification_kind_name(fp.direct->kind);
      f["label"] = fp.direct->label;
      f["position"] = print_position(fp.direct->pos);
      f["reversed"] = fp.direct->reversed;
      nlohmann::json sub = nlohmann::json::object();
      for (const auto& [v, img] : fp.direct->subst)
        sub[v] = print_term(s.sig, img);
      f["subst"] = sub;
    } else if (fp.nested) {
      f["kind"] = "nested";
      f["witness"] = witness_to_json(s, *fp.nested);
    } else {
      f["kind"] = "unproved";
    }
    faces.push_back(std::move(f));
  }
  out["faces"] = std::move(faces);
  return out;
}

nlohmann::json steps_to_json(const TwoStructure& s,
                             const std::vector<Step>& steps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Step& st : steps) arr.push_back(print_step(s, st));
  return arr;
}

std::string dot_escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out;
}

}  // namespace

// --- public API ---------------------------------------------------------------------

bool CriticalSpan::operator==(const CriticalSpan& o) const {
  return (*this <=> o) == 0;
}

std::strong_ordering CriticalSpan::operator<=>(const CriticalSpan& o) const {
  if (auto c = peak <=> o.peak; c != 0) return c;
  if (auto c = left <=> o.left; c != 0) return c;
  return right <=> o.right;
}

Verdict decide_commutes_steps(const TwoStructure& s, const ReductionGraph& g,
                              const CanonicalTerm& source,
                              const std::vector<Step>& left,
                              const std::vector<Step>& right,
                              const Limits& lim) {
  auto replay = [&](const std::vector<Step>& side) {
    CanonicalTerm cur = source;
    for (const Step& st : side) {
      if (CanonicalTerm{st.source} != cur)
        throw ValidationError(
            "step chain is broken: a step's stored source does not match "
            "the chain position");
      CanonicalTerm next = apply_step(s, cur, st);
      if (CanonicalTerm{st.target} != next)
        throw ValidationError(
            "step chain is broken: a step stores a target that replay "
            "contradicts");
      cur = next;
    }
    return cur;
  };
  CanonicalTerm lt = replay(left);
  CanonicalTerm rt = replay(right);
  if (lt != rt)
    throw TypeError("the two sides are not parallel: targets differ");

  DecideCtx ctx{s, g, lim, {}};
  ctx.active.push_back(make_key(source, left, right));
  return decide_core(ctx, source, left, right, 0);
}

Verdict decide_commutes(const TwoStructure& s, const Morphism& m1,
                        const Morphism& m2, const Limits& lim) {
  if (m1.source_canonical() != m2.source_canonical() ||
      m1.target_canonical() != m2.target_canonical())
    throw TypeError("the two reductions are not parallel");
  std::vector<Step> left = sequentialize(s, m1);
  std::vector<Step> right = sequentialize(s, m2);
  CanonicalTerm src = m1.source_canonical();
  ReductionGraph g = explore(s, {src}, lim);
  return decide_commutes_steps(s, g, src, left, right, lim);
}

bool verify_witness(const TwoStructure& s, const EqualWitness& w) {
  if (w.sub.alpha.empty() && w.sub.beta.empty() && w.sub.faces.empty() &&
      w.sub.emb.edges.empty() && w.faces.empty())
    return true;
  try {
    std::vector<Face> traced = faces_of(w.sub);
    if (traced.size() != w.sub.faces.size()) return false;
    for (std::size_t i = 0; i < traced.size(); ++i) {
      const Face& a = traced[i];
      const Face& b = w.sub.faces[i];
      if (a.left != b.left || a.right != b.right || a.source != b.source ||
          a.target != b.target)
        return false;
    }
    if (w.faces.size() != traced.size()) return false;
    for (std::size_t i = 0; i < traced.size(); ++i) {
      const Face& face = w.sub.faces[i];
      const FaceProof& fp = w.faces[i];
      if (fp.direct) {
        std::optional<Justification> found =
            face_instance_steps(s, face.source, face.left, face.right);
        if (!found) return false;
        if (found->kind != fp.direct->kind ||
            found->label != fp.direct->label ||
            found->subst != fp.direct->subst ||
            found->pos != fp.direct->pos ||
            found->reversed != fp.direct->reversed)
          return false;
      } else if (fp.nested) {
        if (fp.nested->sub.alpha != face.left ||
            fp.nested->sub.beta != face.right)
          return false;
        if (!verify_witness(s, *fp.nested)) return false;
      } else {
        return false;
      }
    }
    return true;
  } catch (const Error&) {
    return false;
  }
}

MacLaneReport maclane_report(const TwoStructure& s, int max_term_size,
                             const Limits& lim) {
  MacLaneReport r;
  std::vector<std::string> gens(s.sig.generators().begin(),
                                s.sig.generators().end());
  for (const CanonicalTerm& src :
       enumerate_canonical_terms(s.sig, s.theory, gens, max_term_size)) {
    if (!renaming_canonical(src.term, gens)) continue;
    r.sources.push_back(src);
    ReductionGraph g = explore(s, {src}, lim);
    if (!g.complete()) r.truncated = true;
    if (std::optional<QuasicycleWitness> cyc = find_cycle(g)) {
      // Diamond enumeration assumes an acyclic span; record the cycle and
      // leave this source undecided rather than mislabeling its pairs.
      if (!r.quasicycle) r.quasicycle = std::move(*cyc);
      continue;
    }
    DiamondScan scan = enumerate_diamonds(g, src, lim);
    if (scan.truncated) r.truncated = true;
    for (const auto& [a, b] : scan.diamonds) {
      Morphism ma = path_to_morphism(s, src, a);
      Morphism mb = path_to_morphism(s, src, b);
      if (!is_general_position(s, ma) || !is_general_position(s, mb))
        continue;
      ++r.diamonds;
      CanonicalTerm tgt =
          a.empty() ? (b.empty() ? src : CanonicalTerm{b.back().target})
                    : CanonicalTerm{a.back().target};
      Verdict v = decide_commutes_steps(s, g, src, a, b, lim);
      switch (v.kind) {
        case Verdict::Kind::Equal:
          ++r.commuting;
          break;
        case Verdict::Kind::NotEqual:
          r.counterexamples.push_back(ScanCounterexample{src, tgt, a, b});
          break;
        case Verdict::Kind::ResourceExhausted:
          r.undecided.push_back(ScanCounterexample{src, tgt, a, b});
          break;
      }
    }
  }
  return r;
}

SpanClass classify_span(const ReductionGraph& g, const Step& step1,
                        const Step& step2) {
  if (step1.source != step2.source)
    throw ValidationError("span steps do not start at the same source");
  CanonicalTerm src{step1.source};
  const std::vector<Step>& outs = g.out_edges(src);
  if (std::find(outs.begin(), outs.end(), step1) == outs.end() ||
      std::find(outs.begin(), outs.end(), step2) == outs.end())
    throw ValidationError(
        "span step is not an explored edge out of its source");
  return classify_steps(src.term, step1, step2);
}

std::vector<CriticalSpan> critical_spans(const TwoStructure& s,
                                         const Limits& lim) {
  std::vector<CriticalSpan> out;
  const bool free_theory = s.theory.pairs().empty();
  for (std::size_t i = 0; i < s.rules.size(); ++i) {
    const Rule& r1 = s.rules[i];
    for (std::size_t j = 0; j < s.rules.size(); ++j) {
      const Rule& r2 = s.rules[j];
      Substitution apart;
      for (const std::string& v : r2.vars)
        apart.emplace(v, Term::var("$" + v));
      Term lhs2 = substitute_raw(r2.lhs, apart);
      const int budget =
          lim.unit_budget >= 0
              ? lim.unit_budget
              : static_cast<int>(r1.vars.size() + r2.vars.size());
      for (const Region& rg : superposition_regions(s.theory, r1.lhs)) {
        Term slice = region_slice(r1.lhs, rg);
        const bool whole_root = rg.pos.empty() && !rg.is_segment();
        std::vector<Substitution> unifiers;
        if (free_theory) {
          if (std::optional<Substitution> u = unify_syntactic(slice, lhs2))
            unifiers.push_back(std::move(*u));
        } else {
          unifiers = unify_modulo(s.sig, s.theory,
                                  canonicalize(s.sig, s.theory, slice).term,
                                  canonicalize(s.sig, s.theory, lhs2).term,
                                  budget, 4096);
        }
        for (const Substitution& sigma : unifiers) {
          // A root-to-root unifier of a rule with itself that merely
          // renames variables is the trivial self-overlap.
          if (i == j && whole_root && pure_renaming(sigma)) continue;
          Term peak =
              canonicalize(s.sig, s.theory, substitute_raw(r1.lhs, sigma))
                  .term;
          Substitution want_left;
          for (const std::string& v : r1.vars) {
            auto it = sigma.find(v);
            want_left.emplace(
                v, it == sigma.end()
                       ? Term::var(v)
                       : canonicalize(s.sig, s.theory, it->second).term);
          }
          Substitution want_right;
          for (const std::string& v : r2.vars) {
            auto it = sigma.find("$" + v);
            want_right.emplace(
                v, it == sigma.end()
                       ? Term::var("$" + v)
                       : canonicalize(s.sig, s.theory, it->second).term);
          }
          std::vector<Step> lefts =
              rediscover_steps(s, peak, r1, want_left, lim.unit_budget);
          std::vector<Step> rights =
              rediscover_steps(s, peak, r2, want_right, lim.unit_budget);
          for (const Step& sl : lefts)
            for (const Step& sr : rights) {
              if (sl == sr) continue;
              SpanClass sc = classify_steps(peak, sl, sr);
              if (sc.kind != SpanClass::Kind::Overlap) continue;
              CriticalSpan cs = *sc.overlap;
              rename_span(cs);
              if (cs.right < cs.left) std::swap(cs.left, cs.right);
              out.push_back(std::move(cs));
            }
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

BruteForceResult brute_force_equal(const TwoStructure& s, const Morphism& m1,
                                   const Morphism& m2, const Limits& lim) {
  if (m1.source_canonical() != m2.source_canonical() ||
      m1.target_canonical() != m2.target_canonical())
    throw TypeError("the closure oracle needs a parallel pair");
  std::vector<Step> start = sequentialize(s, m1);
  std::vector<Step> goal = sequentialize(s, m2);
  CanonicalTerm src = m1.source_canonical();

  BruteForceResult res;
  std::set<std::vector<Step>> visited{start};
  if (start == goal) {
    res.kind = BruteForceResult::Kind::Equal;
    res.states_explored = 1;
    return res;
  }
  std::map<CanonicalTerm, std::vector<MovePair>> cache;
  auto moves_for = [&](const CanonicalTerm& u) -> const std::vector<MovePair>& {
    auto it = cache.find(u);
    if (it == cache.end()) it = cache.emplace(u, moves_at(s, u, lim)).first;
    return it->second;
  };

  std::deque<std::vector<Step>> queue{start};
  bool length_pruned = false;
  while (!queue.empty()) {
    std::vector<Step> path = std::move(queue.front());
    queue.pop_front();
    std::vector<CanonicalTerm> verts{src};
    for (const Step& st : path) verts.push_back(CanonicalTerm{st.target});
    for (std::size_t i = 0; i < verts.size(); ++i) {
      for (const MovePair& mv : moves_for(verts[i])) {
        const std::vector<Step>& a = mv.first;
        const std::vector<Step>& b = mv.second;
        if (!a.empty()) {
          if (i + a.size() > path.size()) continue;
          if (!std::equal(a.begin(), a.end(), path.begin() + i)) continue;
        }
        std::vector<Step> next(path.begin(), path.begin() + i);
        next.insert(next.end(), b.begin(), b.end());
        next.insert(next.end(), path.begin() + i + a.size(), path.end());
        if (static_cast<int>(next.size()) > lim.max_path_length) {
          length_pruned = true;
          continue;
        }
        if (visited.count(next)) continue;
        if (static_cast<int>(visited.size()) >= lim.max_vertices) {
          res.kind = BruteForceResult::Kind::Exhausted;
          res.states_explored = static_cast<int>(visited.size());
          return res;
        }
        visited.insert(next);
        if (next == goal) {
          res.kind = BruteForceResult::Kind::Equal;
          res.states_explored = static_cast<int>(visited.size());
          return res;
        }
        queue.push_back(std::move(next));
      }
    }
  }
  res.kind = length_pruned ? BruteForceResult::Kind::Exhausted
                           : BruteForceResult::Kind::NotEqual;
  res.states_explored = static_cast<int>(visited.size());
  return res;
}

std::string print_verdict(const TwoStructure& s, const Verdict& v) {
  (void)s;
  std::ostringstream out;
  switch (v.kind) {
    case Verdict::Kind::Equal:
      out << "Equal: witness closes "
          << (v.witness ? v.witness->faces.size() : 0) << " face(s) ("
          << v.record.subdivisions_checked << " subdivision(s), "
          << v.record.recursive_calls << " recursive call(s))";
      break;
    case Verdict::Kind::NotEqual:
      out << "NotEqual: no subdivision closes the pair ("
          << v.record.subdivisions_checked << " subdivision(s), "
          << v.record.faces_checked << " face(s) checked)";
      break;
    case Verdict::Kind::ResourceExhausted:
      out << "ResourceExhausted: " << v.record.reason;
      break;
  }
  return out.str();
}

std::string to_json(const TwoStructure& s, const Verdict& v) {
  nlohmann::json out;
  switch (v.kind) {
    case Verdict::Kind::Equal:
      out["kind"] = "equal";
      break;
    case Verdict::Kind::NotEqual:
      out["kind"] = "not-equal";
      break;
    case Verdict::Kind::ResourceExhausted:
      out["kind"] = "resource-exhausted";
      break;
  }
  if (v.witness) out["witness"] = witness_to_json(s, *v.witness);
  nlohmann::json rec;
  rec["subdivisions_checked"] = v.record.subdivisions_checked;
  rec["faces_checked"] = v.record.faces_checked;
  rec["recursive_calls"] = v.record.recursive_calls;
  rec["exhaustive"] = v.record.exhaustive;
  rec["reason"] = v.record.reason;
  out["record"] = std::move(rec);
  return out.dump(2) + "\n";
}

std::string to_json(const TwoStructure& s, const MacLaneReport& r) {
  nlohmann::json out;
  nlohmann::json sources = nlohmann::json::array();
  for (const CanonicalTerm& t : r.sources)
    sources.push_back(print_term(s.sig, t.term));
  out["sources"] = std::move(sources);
  out["diamonds"] = r.diamonds;
  out["commuting"] = r.commuting;
  auto pairs = [&](const std::vector<ScanCounterexample>& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const ScanCounterexample& c : list) {
      nlohmann::json e;
      e["source"] = print_term(s.sig, c.source.term);
      e["target"] = print_term(s.sig, c.target.term);
      e["left"] = steps_to_json(s, c.left);
      e["right"] = steps_to_json(s, c.right);
      arr.push_back(std::move(e));
    }
    return arr;
  };
  out["counterexamples"] = pairs(r.counterexamples);
  out["undecided"] = pairs(r.undecided);
  out["truncated"] = r.truncated;
  if (r.quasicycle) {
    nlohmann::json q;
    q["base"] = print_term(s.sig, r.quasicycle->base.term);
    q["cycle"] = steps_to_json(s, r.quasicycle->cycle);
    out["quasicycle"] = std::move(q);
  } else {
    out["quasicycle"] = nullptr;
  }
  out["coherent_at_bound"] = r.coherent_at_bound();
  return out.dump(2) + "\n";
}

std::string to_dot(const TwoStructure& s, const EqualWitness& w) {
  const Subdivision& sub = w.sub;
  std::string dot = "digraph witness {\n  rankdir=LR;\n";
  for (std::size_t v = 0; v < sub.emb.vertices.size(); ++v) {
    dot += "  v" + std::to_string(v) + " [label=\"" +
           dot_escape(print_term(s.sig, sub.emb.vertices[v].term)) + "\"];\n";
  }
  dot += "  { rank=source; v" + std::to_string(sub.emb.s) + "; }\n";
  dot += "  { rank=sink; v" + std::to_string(sub.emb.t) + "; }\n";
  for (std::size_t e = 0; e < sub.emb.edges.size(); ++e) {
    const Step& st = sub.emb.edges[e];
    std::string label = st.rule + "@" + print_position(st.pos);
    if (st.seg_begin >= 0)
      label += "[" + std::to_string(st.seg_begin) + ".." +
               std::to_string(st.seg_end) + ")";
    dot += "  v" + std::to_string(sub.emb.edge_tail[e]) + " -> v" +
           std::to_string(sub.emb.edge_head[e]) + " [label=\"" +
           dot_escape(label) + "\"];\n";
  }
  std::size_t n = std::min(sub.faces.size(), w.faces.size());
  for (std::size_t i = 0; i < n; ++i) {
    const FaceProof& fp = w.faces[i];
    std::string color = "plum";
    std::string label;
    if (fp.direct) {
      switch (fp.direct->kind) {
        case Justification::Kind::IdentityFace:
          color = "gray80";
          break;
        case Justification::Kind::Functoriality:
          color = "lightblue";
          break;
        case Justification::Kind::Naturality:
          color = "palegreen";
          break;
        case Justification::Kind::Axiom:
          color = "orange";
          break;
      }
      label = print_justification(*fp.direct);
    } else if (fp.nested) {
      label = "nested (" + std::to_string(fp.nested->faces.size()) + " faces)";
    } else {
      label = "unproved";
    }
    dot += "  f" + std::to_string(i) + " [shape=note, style=filled, fillcolor=" +
           color + ", label=\"" + dot_escape(label) + "\"];\n";
    const Face& face = sub.faces[i];
    auto vertex_index = [&](const CanonicalTerm& t) -> int {
      auto it = std::find(sub.emb.vertices.begin(), sub.emb.vertices.end(), t);
      return it == sub.emb.vertices.end()
                 ? -1
                 : static_cast<int>(it - sub.emb.vertices.begin());
    };
    int si = vertex_index(face.source);
    int ti = vertex_index(face.target);
    if (si >= 0)
      dot += "  f" + std::to_string(i) + " -> v" + std::to_string(si) +
             " [style=dotted, arrowhead=none];\n";
    if (ti >= 0)
      dot += "  f" + std::to_string(i) + " -> v" + std::to_string(ti) +
             " [style=dotted, arrowhead=none];\n";
  }
  dot += "}\n";
  return dot;
}

}  // namespace cohere
