#pragma once

// Decision procedures for 2-cell equality between parallel reduction paths.
//
// Two parallel composites of rewrite steps are congruent exactly when some
// planar subdivision of the region they bound has every interior face
// justified by a single generating cell (an identity, a functoriality or
// naturality square, or a stored axiom).  decide_commutes searches the
// subdivisions of the explored span for such a witness, recursing into
// composite faces up to a bounded depth; the witness it returns re-verifies
// face by face.  maclane_report runs that decision over every diamond
// reachable from small general-position sources, which bounds a coherence
// check for the whole structure.  classify_span and critical_spans analyse
// how two steps from a common source interact (disjoint, nested inside a
// variable image, or genuinely overlapping) and enumerate the finitely many
// overlap shapes a rule system admits.  brute_force_equal is an independent
// oracle: a breadth-first closure over step sequences under square swaps,
// naturality exchanges, and axiom replacements, used to cross-validate the
// subdivision search.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cohere/graph.hpp"
#include "cohere/planar.hpp"
#include "cohere/rewriting.hpp"
#include "cohere/terms.hpp"

namespace cohere {

struct EqualWitness;

// Evidence that one interior face of a witness subdivision commutes: either
// a direct generating-cell instance, or a nested witness for a face whose
// sides only become equal after further subdivision.  Exactly one of the
// two alternatives is set.
struct FaceProof {
  std::optional<Justification> direct;
  std::shared_ptr<const EqualWitness> nested;

  bool is_direct() const { return direct.has_value(); }
};

// A checkable certificate that a parallel pair commutes: a subdivision of
// the pair together with one proof per interior face, in face order.
struct EqualWitness {
  Subdivision sub;
  std::vector<FaceProof> faces;
};

// Bookkeeping for one decision run.  `exhaustive` is true when every
// subdivision of the pair was enumerated and checked, which is what makes a
// negative answer an actual inequality rather than a failed search.
struct SearchRecord {
  int subdivisions_checked = 0;
  int faces_checked = 0;
  int recursive_calls = 0;
  bool exhaustive = false;
  std::string reason;  // set when the search gave up, empty otherwise
};

// Outcome of deciding whether a parallel pair commutes.
//   Equal             -- a witness was found (and is included);
//   NotEqual          -- every subdivision was enumerated and none could be
//                        fully justified;
//   ResourceExhausted -- the question could not be settled within the given
//                        limits (span not fully explored, span not
//                        quasicycle-free, or enumeration truncated); the
//                        record's `reason` says which.
struct Verdict {
  enum class Kind { Equal, NotEqual, ResourceExhausted };

  Kind kind = Kind::ResourceExhausted;
  std::optional<EqualWitness> witness;  // set exactly for Equal
  SearchRecord record;
};

// Decides whether two parallel morphisms denote the same 2-cell.  Both must
// share canonical source and target (else TypeError).  The morphisms are
// sequentialized to step chains first; the span of the pair is explored and
// must be finite and quasicycle-free within `lim`, otherwise the verdict is
// ResourceExhausted with a reason.  Face closure recurses at most
// lim.recursion_depth deep.
Verdict decide_commutes(const TwoStructure& s, const Morphism& m1,
                        const Morphism& m2, const Limits& lim = {});

// Same decision for explicit step chains out of `source` inside an already
// explored graph `g`, which must contain the full span of the pair.  Both
// chains are replayed from `source` and must end at the same term.
Verdict decide_commutes_steps(const TwoStructure& s, const ReductionGraph& g,
                              const CanonicalTerm& source,
                              const std::vector<Step>& left,
                              const std::vector<Step>& right,
                              const Limits& lim = {});

// Re-checks an Equal witness from scratch: the subdivision's faces are
// recomputed from its rotation data and every face proof is re-validated
// (direct proofs against face_instance_steps, nested ones recursively).
// Returns false rather than throwing on any mismatch.
bool verify_witness(const TwoStructure& s, const EqualWitness& w);

// One diamond the whole-structure scan could not confirm, with the paths
// that form it.
struct ScanCounterexample {
  CanonicalTerm source{Term::gen("_")};
  CanonicalTerm target{Term::gen("_")};
  std::vector<Step> left;
  std::vector<Step> right;
};

// Result of scanning every diamond reachable from small sources.  The scan
// bounds a coherence check: if it is complete (not truncated, no quasicycle,
// nothing undecided) and `counterexamples` is empty, every scanned diamond
// commutes.
struct MacLaneReport {
  std::vector<CanonicalTerm> sources;        // scanned, sorted
  int diamonds = 0;                          // diamonds examined
  int commuting = 0;                         // of those, proved equal
  std::vector<ScanCounterexample> counterexamples;  // proved unequal
  std::vector<ScanCounterexample> undecided;        // limits hit
  bool truncated = false;                    // some enumeration was cut short
  std::optional<QuasicycleWitness> quasicycle;  // a cycle, if one was found

  bool coherent_at_bound() const {
    return !truncated && !quasicycle.has_value() && counterexamples.empty() &&
           undecided.empty();
  }
};

// Scans every source term of size at most max_term_size whose sequence of
// first generator occurrences is, in order, a prefix of the signature's
// generator list (one representative per renaming class; repeated
// generators are allowed), enumerates the diamonds out of each, and decides
// each diamond.
MacLaneReport maclane_report(const TwoStructure& s, int max_term_size,
                             const Limits& lim = {});

// A genuine overlap between two rule applications: the smallest term on
// which both fire with their redex patterns sharing structure, together
// with the two steps rebased onto that term.
struct CriticalSpan {
  Term peak{Term::gen("_")};
  Step left;
  Step right;

  bool operator==(const CriticalSpan& o) const;
  std::strong_ordering operator<=>(const CriticalSpan& o) const;
};

// How two steps out of a common source interact.
//   Disjoint -- the rewritten regions do not meet; the steps commute by a
//               functoriality square.
//   Nested   -- one region sits inside a variable image of the other rule's
//               pattern; the steps commute by a naturality square.
//   Overlap  -- the regions meet at pattern structure; `overlap` carries the
//               peak (the smallest superposition subterm) and both steps
//               rebased onto it.
struct SpanClass {
  enum class Kind { Disjoint, Nested, Overlap };

  Kind kind = Kind::Disjoint;
  std::optional<CriticalSpan> overlap;
};

// Classifies two steps with the same source term.  Both must be steps out of
// a vertex of `g` with equal sources (else ValidationError).
SpanClass classify_span(const ReductionGraph& g, const Step& step1,
                        const Step& step2);

// Enumerates, up to variable renaming and swap of the two sides, every
// overlap superposition between pairs of rule patterns, including the
// superpositions that only exist after inserting units into variable
// images (bounded by lim.unit_budget, or by the rules' variable counts when
// negative).  Deterministic: sorted output.
std::vector<CriticalSpan> critical_spans(const TwoStructure& s,
                                         const Limits& lim = {});

// Outcome of the independent closure oracle.
//   Equal     -- the two sequences were connected by elementary exchanges;
//   NotEqual  -- the full equivalence class of the first sequence was
//                enumerated and does not contain the second;
//   Exhausted -- a limit was hit before either conclusion.
struct BruteForceResult {
  enum class Kind { Equal, NotEqual, Exhausted };

  Kind kind = Kind::Exhausted;
  int states_explored = 0;
};

// Breadth-first closure of sequentialize(m1) under elementary moves --
// functoriality swaps of adjacent disjoint steps, naturality exchanges of a
// step with a rewrite inside one of its variable images, and replacement of
// an instantiated axiom side by the other side -- searching for
// sequentialize(m2).  Wholly independent of the subdivision machinery.
// lim.max_vertices bounds the number of distinct sequences visited and
// lim.max_path_length the length of any sequence.
BruteForceResult brute_force_equal(const TwoStructure& s, const Morphism& m1,
                                   const Morphism& m2, const Limits& lim = {});

// One-line human-readable summary of a verdict.
std::string print_verdict(const TwoStructure& s, const Verdict& v);

// JSON renderings (stable key order, suitable for tooling).
std::string to_json(const TwoStructure& s, const Verdict& v);
std::string to_json(const TwoStructure& s, const MacLaneReport& r);

// DOT rendering of a witness: the subdivision drawing with one note per
// face, coloured by the kind of proof that closed it.
std::string to_dot(const TwoStructure& s, const EqualWitness& w);

}  // namespace cohere
