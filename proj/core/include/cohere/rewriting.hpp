#pragma once

// The two-dimensional layer: labelled rewrite rules, reduction expressions
// (morphisms) generated by identities, functor application, rule lifting and
// composition, the Shape/Var/general-position calculus, single rewrite
// steps, and the one-face justification checker (functoriality, naturality,
// axiom instance).
//
// Morphism expressions are normalized at construction: identity
// subexpressions are expanded to generator leaves (so object-level equal
// identities are structurally equal), composition spines are flattened with
// identity factors dropped, and endpoints are cached as canonical terms.
// Structural equality of Morphism values is representation equality only;
// semantic 2-cell equality is decided by the coherence layer.

#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cohere/terms.hpp"

namespace cohere {

// A labelled rewrite rule lhs -> rhs between open terms.  Rules must use
// exactly the same variables on both sides; the variable list is ordered by
// first occurrence in the lhs and fixes the argument order of lifts.
struct Rule {
  std::string label;
  Term lhs;
  Term rhs;
  std::vector<std::string> vars;
};

// Builds and validates a rule (throws ValidationError).
Rule make_rule(const Signature& sig, const ObjectTheory& theory,
               const std::string& label, const Term& lhs, const Term& rhs);

class Morphism;

// A named 2-cell equation between parallel reduction expressions.  When
// identity_instance is set, one side must be an identity and the other a
// single lift; every instance of that lift is then treated as an identity
// (excluded from reduction graphs and composite spines).
struct Equation {
  std::string name;
  std::shared_ptr<const Morphism> left;
  std::shared_ptr<const Morphism> right;
  bool identity_instance = false;
};

// A complete user-declared structure: signature, object theory, rules, and
// 2-cell axioms.
struct TwoStructure {
  std::string name;
  Signature sig;
  ObjectTheory theory;
  std::vector<Rule> rules;
  std::vector<Equation> equations;

  const Rule* rule(const std::string& label) const;
};

// Itemized violations; empty means valid.  Checks rule well-formedness,
// label uniqueness and name clashes, and that every equation's sides are
// parallel (equal sources and equal targets).
std::vector<std::string> validate_structure(const TwoStructure& s);

// A reduction expression.  Identity leaves wrap single generators or
// variables only (identities of composite terms are expanded through
// functor applications; the unit's identity is the nullary application of
// the unit symbol).  Comp nodes hold flattened spines of >= 2 non-identity
// factors.
class Morphism {
 public:
  enum class Kind { Identity, Lift, App, Comp };

  // The identity reduction of a term (open terms allowed; canonicalized).
  static Morphism identity(const TwoStructure& s, const Term& term);
  // Lift of a rule with one argument morphism per rule variable.
  static Morphism lift(const TwoStructure& s, const std::string& rule_label,
                       std::vector<Morphism> args);
  // Functor application at the symbol's declared arity.
  static Morphism app(const TwoStructure& s, const std::string& symbol,
                      std::vector<Morphism> args);
  // Composition (diagram order: a then b).  Throws TypeError on endpoint
  // mismatch.  Identity factors are absorbed.
  static Morphism comp(const TwoStructure& s, const Morphism& a,
                       const Morphism& b);
  static Morphism comp(const TwoStructure& s, std::vector<Morphism> factors);

  Kind kind() const { return node_->kind; }
  // Rule label (Lift) or symbol (App); empty otherwise.
  const std::string& name() const { return node_->name; }
  // Identity leaves: the wrapped term.
  const Term& leaf_term() const { return node_->leaf; }
  const std::vector<Morphism>& children() const { return node_->children; }

  const Term& source() const { return node_->source; }
  const Term& target() const { return node_->target; }
  CanonicalTerm source_canonical() const { return CanonicalTerm{source()}; }
  CanonicalTerm target_canonical() const { return CanonicalTerm{target()}; }

  // True when the expression contains no lift (object-level identity).
  bool is_identity() const { return node_->identity; }

  std::size_t hash() const { return node_->hash; }
  bool operator==(const Morphism& other) const;
  bool operator!=(const Morphism& other) const { return !(*this == other); }
  std::strong_ordering operator<=>(const Morphism& other) const;

 private:
  struct Node {
    Kind kind;
    std::string name;
    Term leaf;
    std::vector<Morphism> children;
    Term source;
    Term target;
    bool identity;
    std::size_t hash;
  };
  explicit Morphism(std::shared_ptr<const Node> node)
      : node_(std::move(node)) {}
  static Morphism make(Node node);

  std::shared_ptr<const Node> node_;
};

// The unique endpoints of a reduction expression.
std::pair<CanonicalTerm, CanonicalTerm> source_target(const Morphism& m);

// identity_of(s, t) == Morphism::identity(s, t.term).
Morphism identity_of(const TwoStructure& s, const CanonicalTerm& t);

// Morphism grammar:  m := "1_" term | label "(" m {"," m} ")"
//                       | symbol "(" m {"," m} ")" | "(" m infix-symbol m ")"
//                       | m ";" m          (";" is left-associative)
Morphism parse_morphism(const TwoStructure& s, const std::string& text);
std::string print_morphism(const TwoStructure& s, const Morphism& m);

// The shape of a reduction: the expression tree with every identity
// subexpression collapsed to a hole.
struct ShapeTree {
  std::string label;  // "Comp" for spines, rule/symbol otherwise, "" = hole
  std::vector<ShapeTree> children;

  bool is_hole() const { return label.empty() && children.empty(); }
  bool operator==(const ShapeTree& o) const;
  bool operator!=(const ShapeTree& o) const { return !(*this == o); }
};

ShapeTree shape(const Morphism& m);
std::string print_shape(const ShapeTree& t);

// The set of leaf identities of the expression (sorted, duplicate-free).
// Identity leaves are single generators or variables; units are constants
// and do not contribute.
std::vector<CanonicalTerm> morphism_vars(const Morphism& m);

// True iff the number of distinct leaf identities is maximal among
// reductions of the same shape: leaf identities are relabelled with fresh
// distinct variables, the typing constraints of the relabelled expression
// are solved (composition joints force identifications, e.g. under
// non-linear rules), and the maximal number of distinct leaf values over
// the solutions is compared with |Var(m)|.
bool is_general_position(const TwoStructure& s, const Morphism& m);

// One rewrite: a rule applied at a position with a substitution.  For
// flattened associative nodes the redex may be a proper child segment
// [seg_begin, seg_end) of the node at pos; whole-node matches on
// associative nodes are normalized to full-span segments, and seg_begin ==
// seg_end == -1 means the whole (non-associative) subterm at pos.
// units_inserted counts unit constants in the substitution images beyond
// those present in the matched subject.
struct Step {
  std::string rule;
  Position pos;
  int seg_begin = -1;
  int seg_end = -1;
  Substitution subst;
  int units_inserted = 0;
  Term source = Term::gen("_");
  Term target = Term::gen("_");

  bool operator==(const Step& other) const;
  bool operator!=(const Step& other) const { return !(*this == other); }
  std::strong_ordering operator<=>(const Step& other) const;
};

std::string print_step(const TwoStructure& s, const Step& step);

// True when applying `rule` with this substitution is forced to be an
// identity by an identity-instance equation.
bool is_identity_instance(const TwoStructure& s, const std::string& rule,
                          const Substitution& subst);

// All distinct non-identity steps out of t, sorted.  unit_budget bounds the
// unit constants inserted by matching (negative: one per pattern variable,
// per rule).  Steps forced to identities by identity-instance equations are
// excluded.
std::vector<Step> enumerate_steps(const TwoStructure& s,
                                  const CanonicalTerm& t,
                                  int unit_budget = -1);

// Replays a step (validating rule, position, and match) and returns the
// target.  Throws ValidationError if the step does not apply.
CanonicalTerm apply_step(const TwoStructure& s, const CanonicalTerm& source,
                         const Step& step);

// The whiskered single-lift morphism of a step.
Morphism step_to_morphism(const TwoStructure& s, const Step& step);

// Decomposes a reduction expression into the sequence of single steps
// obtained by running composition spines in order, functor-application
// arguments left to right, and lift arguments before the lift itself.
// Identity-instance lifts are dropped.  Throws ValidationError for rewrites
// happening inside unit-elided regions (no position exists for them).
std::vector<Step> sequentialize(const TwoStructure& s, const Morphism& m);

// Why a single face commutes.
struct Justification {
  enum class Kind { IdentityFace, Functoriality, Naturality, Axiom };
  Kind kind = Kind::IdentityFace;
  // Naturality: the rule; Axiom: the equation name.
  std::string label;
  // Axiom: the matching substitution; Naturality: the source-side
  // substitution of the lifted rule.
  Substitution subst;
  // Naturality: the position of the lifted redex.
  Position pos;
  // Axiom matched with the given sides swapped.
  bool reversed = false;
};

// Instantiates every identity leaf of a reduction expression under a
// substitution; endpoints are recomputed and compositions re-validated.
Morphism substitute_morphism(const TwoStructure& s, const Morphism& m,
                             const Substitution& sub);

std::string print_justification(const Justification& j);

// Checks whether the parallel pair (left, right) is a direct instance of
// functoriality, naturality, a stored axiom, or an identity face, after
// normalizing both sides to step sequences.  Symmetric in its morphism
// arguments.  Throws TypeError when the sides are not parallel.
std::optional<Justification> face_instance(const TwoStructure& s,
                                           const Morphism& left,
                                           const Morphism& right);

// Step-sequence variant used by the coherence layer: both sequences must
// start at `source` and end at a common target.
std::optional<Justification> face_instance_steps(
    const TwoStructure& s, const CanonicalTerm& source,
    const std::vector<Step>& left, const std::vector<Step>& right);

}  // namespace cohere
