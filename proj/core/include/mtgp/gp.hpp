#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtgp/image.hpp"
#include "mtgp/rng.hpp"

namespace mtgp::gp {

/// Types flowing through a feature tree. Img and FVec are structural; the
/// rest are filter parameters supplied by ephemeral constant terminals.
enum class DType : std::uint8_t {
  Img, FVec, Sigma, Ord, Theta, FreqIdx, Weight, PoolK,
};

const char* dtype_name(DType t);

/// Operation selector for evaluation dispatch. One entry per primitive.
enum class Op : std::uint8_t {
  // root / concatenation
  Root2, Root3, Root4, FeaCon2, FeaCon3,
  // feature extraction
  Sift, Hog, Lbp,
  // pooling
  MaxPool,
  // filtering
  Gau, GauD, GaborF, Lap, LoG1, LoG2, Sobel, SobelX, SobelY,
  Med, Mean, Min, Max, LbpF, HogF, WAdd, WSub, Relu, Sqrt,
  // terminals
  ImageTerm, ConstSigma, ConstOrd, ConstTheta, ConstFreq, ConstWeight, ConstPool,
};

struct Primitive {
  std::string name;
  Op op;
  DType ret;
  std::vector<DType> args;  // empty for terminals
  bool root_only = false;   // Root2/3/4: allowed only at the tree root
  bool is_constant = false; // ephemeral parameter terminal

  int arity() const { return static_cast<int>(args.size()); }
  bool is_terminal() const { return args.empty(); }
};

/// The fixed strongly-typed primitive set: 28 functions plus the image input
/// and six ephemeral parameter terminals. Build once and share; lookups are
/// by stable integer id.
class PrimitiveSet {
 public:
  static PrimitiveSet standard();

  int count() const { return static_cast<int>(prims_.size()); }
  const Primitive& at(int id) const { return prims_[id]; }
  /// Id for a primitive name, or -1.
  int find(std::string_view name) const;

  int image_terminal() const { return image_terminal_; }
  /// Constant terminal id for a parameter type, or -1 for Img/FVec.
  int constant_terminal(DType t) const;
  /// Non-root functions returning t (root-only primitives excluded).
  const std::vector<int>& functions_returning(DType t) const;
  const std::vector<int>& root_primitives() const { return roots_; }

  /// Minimum depth (edges) of any complete subtree of type t.
  int min_depth(DType t) const;
  /// Minimum depth of a tree rooted at primitive id.
  int min_depth_of(int id) const;

  /// Draw a fresh value for a parameter type from its range. Values are
  /// quantised to 6 significant digits so serialisation round-trips exactly.
  double sample_constant(DType t, Rng& rng) const;

  /// True when every type reachable from the root can be completed; guards
  /// against dead ends if the set is ever edited.
  bool closure_ok() const;

 private:
  std::vector<Primitive> prims_;
  std::vector<int> roots_;
  std::vector<std::vector<int>> funcs_by_type_;
  std::vector<int> const_by_type_;
  std::vector<int> min_depth_by_type_;
  int image_terminal_ = -1;
};

/// One tree node: primitive id plus the payload for constant terminals.
/// Theta stores the grid index 0..7, FreqIdx the index 0..4; other constants
/// store the value itself.
struct Node {
  int prim = -1;
  double value = 0.0;
};

/// Expression tree stored as a prefix-order flat vector. An empty tree is a
/// valid placeholder (used for "no common tree").
struct TypedTree {
  std::vector<Node> nodes;

  bool empty() const { return nodes.empty(); }
  int size() const { return static_cast<int>(nodes.size()); }
};

/// One past the last node of the subtree rooted at `pos`.
int subtree_end(const TypedTree& t, const PrimitiveSet& ps, int pos);
/// Depth in edges (single node = 0). Empty tree = -1.
int tree_depth(const TypedTree& t, const PrimitiveSet& ps);
/// Structural and type validity, including the roots-only-at-root rule.
bool type_check(const TypedTree& t, const PrimitiveSet& ps);

enum class GenMethod { Grow, Full };

inline constexpr int kMinInitDepth = 2;
inline constexpr int kMaxDepth = 8;

/// Random tree with a Root2/3/4 root, depth in [min_depth, max_depth] edges.
TypedTree generate_tree(const PrimitiveSet& ps, Rng& rng, GenMethod method,
                        int min_depth, int max_depth);

/// Candidate solution: one tree per task role, fitness unset until evaluated.
struct Individual {
  std::vector<TypedTree> trees;
  std::optional<double> fitness;

  int total_size() const {
    int s = 0;
    for (const auto& t : trees) s += t.size();
    return s;
  }
};

/// Ramped half-and-half population of single-tree individuals, fitness unset.
/// Target depths cycle over [2, 8]; generation methods alternate grow/full.
std::vector<Individual> init_population(const PrimitiveSet& ps, Rng& rng, int size);

/// Evaluate a tree on one image; returns the concatenated feature vector.
/// Throws EvalError if any operator fails or produces non-finite values.
FeatVec eval_tree(const TypedTree& t, const PrimitiveSet& ps, const Image& img);

/// Tournament selection: best fitness of k draws (with replacement); ties
/// broken by smaller total tree size, then earlier index. Returns the index.
int tournament_select(const std::vector<Individual>& pop, Rng& rng, int k);

/// Type-safe subtree crossover excluding both root nodes. If no two nodes
/// share a type, returns copies of the parents. A child deeper than kMaxDepth
/// is replaced by a copy of its first parent.
std::pair<TypedTree, TypedTree> subtree_crossover(const TypedTree& a,
                                                  const TypedTree& b,
                                                  const PrimitiveSet& ps, Rng& rng);

/// Replace a uniformly chosen non-root node with a fresh grown subtree of the
/// same type (parameter nodes get a freshly drawn constant). Falls back to a
/// copy of the input if the result would exceed kMaxDepth.
TypedTree subtree_mutation(const TypedTree& t, const PrimitiveSet& ps, Rng& rng);

/// Canonical text form, e.g. "Root2(SIFT(Image), HOG(Image))".
std::string serialize_tree(const TypedTree& t, const PrimitiveSet& ps);

/// Constant formatting used by serialisation: 6 significant digits; Theta and
/// FreqIdx print their integer index.
std::string format_constant(DType t, double value);
/// Round a raw constant to its 6-significant-digit serialised form.
double quantize_constant(double value);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t position)
      : std::runtime_error(msg), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_ = 0;
};

/// Inverse of serialize_tree. Accepts the canonical form with flexible
/// whitespace; validates arity, types, root placement and parameter ranges.
/// Throws ParseError with a character offset on malformed input.
TypedTree parse_tree(std::string_view text, const PrimitiveSet& ps);

/// GraphViz rendering of a tree (one node per line, edges parent -> child).
std::string export_dot(const TypedTree& t, const PrimitiveSet& ps,
                       const std::string& graph_name = "tree");

}  // namespace mtgp::gp
