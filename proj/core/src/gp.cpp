#include "mtgp/gp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "mtgp/imageops.hpp"

namespace mtgp::gp {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kNumTypes = 8;
constexpr int kMutationGrowDepth = 3;

int type_index(DType t) { return static_cast<int>(t); }

bool is_param_type(DType t) { return t != DType::Img && t != DType::FVec; }

}  // namespace

const char* dtype_name(DType t) {
  switch (t) {
    case DType::Img: return "Img";
    case DType::FVec: return "FVec";
    case DType::Sigma: return "Sigma";
    case DType::Ord: return "Ord";
    case DType::Theta: return "Theta";
    case DType::FreqIdx: return "FreqIdx";
    case DType::Weight: return "Weight";
    case DType::PoolK: return "PoolK";
  }
  return "?";
}

PrimitiveSet PrimitiveSet::standard() {
  PrimitiveSet ps;
  auto add = [&ps](std::string name, Op op, DType ret, std::vector<DType> args,
                   bool root_only = false, bool is_constant = false) {
    ps.prims_.push_back({std::move(name), op, ret, std::move(args), root_only, is_constant});
  };
  const DType I = DType::Img;
  const DType F = DType::FVec;

  add("Root2", Op::Root2, F, {F, F}, true);
  add("Root3", Op::Root3, F, {F, F, F}, true);
  add("Root4", Op::Root4, F, {F, F, F, F}, true);
  add("FeaCon2", Op::FeaCon2, F, {F, F});
  add("FeaCon3", Op::FeaCon3, F, {F, F, F});
  add("SIFT", Op::Sift, F, {I});
  add("HOG", Op::Hog, F, {I});
  add("LBP", Op::Lbp, F, {I});
  add("MaxP", Op::MaxPool, I, {I, DType::PoolK, DType::PoolK});
  add("Gau", Op::Gau, I, {I, DType::Sigma});
  add("GauD", Op::GauD, I, {I, DType::Sigma, DType::Ord, DType::Ord});
  add("Gabor", Op::GaborF, I, {I, DType::Theta, DType::FreqIdx});
  add("Lap", Op::Lap, I, {I});
  add("LoG1", Op::LoG1, I, {I});
  add("LoG2", Op::LoG2, I, {I});
  add("Sobel", Op::Sobel, I, {I});
  add("SobelX", Op::SobelX, I, {I});
  add("SobelY", Op::SobelY, I, {I});
  add("Med", Op::Med, I, {I});
  add("Mean", Op::Mean, I, {I});
  add("Min", Op::Min, I, {I});
  add("Max", Op::Max, I, {I});
  add("LBP-F", Op::LbpF, I, {I});
  add("HOG-F", Op::HogF, I, {I});
  add("W-Add", Op::WAdd, I, {I, DType::Weight, I, DType::Weight});
  add("W-Sub", Op::WSub, I, {I, DType::Weight, I, DType::Weight});
  add("ReLU", Op::Relu, I, {I});
  add("Sqrt", Op::Sqrt, I, {I});

  add("Image", Op::ImageTerm, I, {});
  add("sigma", Op::ConstSigma, DType::Sigma, {}, false, true);
  add("ord", Op::ConstOrd, DType::Ord, {}, false, true);
  add("theta", Op::ConstTheta, DType::Theta, {}, false, true);
  add("freq", Op::ConstFreq, DType::FreqIdx, {}, false, true);
  add("weight", Op::ConstWeight, DType::Weight, {}, false, true);
  add("poolk", Op::ConstPool, DType::PoolK, {}, false, true);

  ps.funcs_by_type_.assign(kNumTypes, {});
  ps.const_by_type_.assign(kNumTypes, -1);
  for (int id = 0; id < ps.count(); ++id) {
    const Primitive& p = ps.prims_[id];
    if (p.op == Op::ImageTerm) ps.image_terminal_ = id;
    if (p.is_constant) ps.const_by_type_[type_index(p.ret)] = id;
    if (p.root_only) ps.roots_.push_back(id);
    if (!p.is_terminal() && !p.root_only) {
      ps.funcs_by_type_[type_index(p.ret)].push_back(id);
    }
  }

  // Fixpoint over minimum completable depth per type. Terminal-backed types
  // start at 0; FVec is only reachable through a function.
  const int inf = std::numeric_limits<int>::max() / 2;
  ps.min_depth_by_type_.assign(kNumTypes, inf);
  for (int t = 0; t < kNumTypes; ++t) {
    if (t != type_index(DType::FVec)) ps.min_depth_by_type_[t] = 0;
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (const Primitive& p : ps.prims_) {
      if (p.is_terminal() || p.root_only) continue;
      int d = 0;
      for (DType a : p.args) d = std::max(d, ps.min_depth_by_type_[type_index(a)]);
      if (d >= inf) continue;
      if (d + 1 < ps.min_depth_by_type_[type_index(p.ret)]) {
        ps.min_depth_by_type_[type_index(p.ret)] = d + 1;
        changed = true;
      }
    }
  }
  return ps;
}

int PrimitiveSet::find(std::string_view name) const {
  for (int id = 0; id < count(); ++id) {
    if (prims_[id].name == name && !prims_[id].is_constant) return id;
  }
  return -1;
}

int PrimitiveSet::constant_terminal(DType t) const {
  return const_by_type_[type_index(t)];
}

const std::vector<int>& PrimitiveSet::functions_returning(DType t) const {
  return funcs_by_type_[type_index(t)];
}

int PrimitiveSet::min_depth(DType t) const { return min_depth_by_type_[type_index(t)]; }

int PrimitiveSet::min_depth_of(int id) const {
  const Primitive& p = prims_[id];
  if (p.is_terminal()) return 0;
  int d = 0;
  for (DType a : p.args) d = std::max(d, min_depth(a));
  return d + 1;
}

double quantize_constant(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return std::strtod(buf, nullptr);
}

double PrimitiveSet::sample_constant(DType t, Rng& rng) const {
  switch (t) {
    case DType::Sigma:
      return quantize_constant(rng.uniform(1.0, 3.0));
    case DType::Ord:
      return rng.uniform_int(0, 2);
    case DType::Theta:
      return rng.uniform_int(0, 7);  // grid index; angle = index * pi/8
    case DType::FreqIdx:
      return rng.uniform_int(0, 4);
    case DType::Weight: {
      double w = quantize_constant(rng.uniform());
      if (w >= 1.0) w = 0.999999;  // quantisation may round up to 1
      return w;
    }
    case DType::PoolK:
      return rng.uniform_int(0, 1) == 0 ? 2 : 4;
    default:
      throw std::invalid_argument("sample_constant: not a parameter type");
  }
}

bool PrimitiveSet::closure_ok() const {
  const int inf = std::numeric_limits<int>::max() / 4;
  for (int t = 0; t < kNumTypes; ++t) {
    if (min_depth_by_type_[t] >= inf) return false;
  }
  for (const Primitive& p : prims_) {
    for (DType a : p.args) {
      if (min_depth(a) >= inf) return false;
    }
  }
  return !roots_.empty() && image_terminal_ >= 0;
}

int subtree_end(const TypedTree& t, const PrimitiveSet& ps, int pos) {
  int remaining = 1;
  int i = pos;
  while (remaining > 0) {
    remaining += ps.at(t.nodes[i].prim).arity() - 1;
    ++i;
  }
  return i;
}

int tree_depth(const TypedTree& t, const PrimitiveSet& ps) {
  if (t.empty()) return -1;
  int maxd = 0;
  int pos = 0;
  // depth-first walk tracking the depth of each prefix position
  std::vector<std::pair<int, int>> stack;  // (remaining children, depth)
  stack.push_back({1, -1});
  while (!stack.empty()) {
    if (stack.back().first == 0) {
      stack.pop_back();
      continue;
    }
    --stack.back().first;
    const int d = stack.back().second + 1;
    maxd = std::max(maxd, d);
    const int arity = ps.at(t.nodes[pos].prim).arity();
    ++pos;
    if (arity > 0) stack.push_back({arity, d});
  }
  return maxd;
}

namespace {

bool check_types_at(const TypedTree& t, const PrimitiveSet& ps, int& pos, DType expected,
                    bool at_root) {
  if (pos >= t.size()) return false;
  const Node& n = t.nodes[pos++];
  if (n.prim < 0 || n.prim >= ps.count()) return false;
  const Primitive& p = ps.at(n.prim);
  if (p.ret != expected) return false;
  if (p.root_only && !at_root) return false;
  for (DType a : p.args) {
    if (!check_types_at(t, ps, pos, a, false)) return false;
  }
  return true;
}

}  // namespace

bool type_check(const TypedTree& t, const PrimitiveSet& ps) {
  if (t.empty()) return false;
  int pos = 0;
  if (!check_types_at(t, ps, pos, DType::FVec, true)) return false;
  return pos == t.size();
}

namespace {

// Recursive generator. Guarantees a completable subtree of `type` whose depth
// lies in [min_r, max_r] edges below this point (min_r only binds one path).
void gen_subtree(const PrimitiveSet& ps, Rng& rng, GenMethod method, DType type,
                 int min_r, int max_r, std::vector<Node>& out) {
  if (is_param_type(type)) {
    out.push_back({ps.constant_terminal(type), ps.sample_constant(type, rng)});
    return;
  }
  const bool has_terminal = (type == DType::Img);
  int chosen = -1;
  if (max_r <= 0) {
    chosen = ps.image_terminal();  // only Img can bottom out
  } else {
    std::vector<int> funcs;
    for (int id : ps.functions_returning(type)) {
      if (ps.min_depth_of(id) <= max_r) funcs.push_back(id);
    }
    const bool terminal_allowed =
        has_terminal && method == GenMethod::Grow && min_r <= 0;
    if (funcs.empty()) {
      chosen = ps.image_terminal();
    } else if (terminal_allowed) {
      const std::size_t pick = rng.index(funcs.size() + 1);
      chosen = (pick == funcs.size()) ? ps.image_terminal() : funcs[pick];
    } else {
      chosen = funcs[rng.index(funcs.size())];
    }
  }
  out.push_back({chosen, 0.0});
  const Primitive& p = ps.at(chosen);
  if (p.is_terminal()) return;

  std::vector<int> extendable;
  for (int i = 0; i < p.arity(); ++i) {
    if (!is_param_type(p.args[i])) extendable.push_back(i);
  }
  int mandatory = -1;
  if (min_r > 1 && !extendable.empty()) {
    mandatory = extendable[rng.index(extendable.size())];
  }
  for (int i = 0; i < p.arity(); ++i) {
    const int child_min = (i == mandatory) ? min_r - 1 : 0;
    gen_subtree(ps, rng, method, p.args[i], child_min, max_r - 1, out);
  }
}

}  // namespace

TypedTree generate_tree(const PrimitiveSet& ps, Rng& rng, GenMethod method,
                        int min_depth, int max_depth) {
  if (max_depth < 2) throw std::invalid_argument("generate_tree: max_depth must be >= 2");
  min_depth = std::clamp(min_depth, 2, max_depth);
  TypedTree t;
  const auto& roots = ps.root_primitives();
  const int root = roots[rng.index(roots.size())];
  t.nodes.push_back({root, 0.0});
  const Primitive& p = ps.at(root);
  int mandatory = static_cast<int>(rng.index(p.arity()));
  for (int i = 0; i < p.arity(); ++i) {
    const int child_min = (i == mandatory) ? min_depth - 1 : 0;
    gen_subtree(ps, rng, method, p.args[i], child_min, max_depth - 1, t.nodes);
  }
  return t;
}

std::vector<Individual> init_population(const PrimitiveSet& ps, Rng& rng, int size) {
  if (size <= 0) throw std::invalid_argument("init_population: size must be positive");
  std::vector<Individual> pop;
  pop.reserve(size);
  for (int i = 0; i < size; ++i) {
    const int depth = kMinInitDepth + (i % (kMaxDepth - kMinInitDepth + 1));
    const GenMethod m = (i % 2 == 0) ? GenMethod::Grow : GenMethod::Full;
    Individual ind;
    if (m == GenMethod::Grow) {
      ind.trees.push_back(generate_tree(ps, rng, m, kMinInitDepth, depth));
    } else {
      ind.trees.push_back(generate_tree(ps, rng, m, depth, depth));
    }
    pop.push_back(std::move(ind));
  }
  return pop;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

using namespace mtgp::imageops;

void require_finite(const Image& img, const char* what) {
  for (double v : img.pix) {
    if (!std::isfinite(v)) {
      throw EvalError(std::string(what) + ": non-finite pixel value");
    }
  }
}

struct TreeEval {
  const TypedTree& t;
  const PrimitiveSet& ps;
  const Image& input;
  int pos = 0;

  double param() { return t.nodes[pos++].value; }

  Image img() {
    const Node& n = t.nodes[pos++];
    const Primitive& p = ps.at(n.prim);
    switch (p.op) {
      case Op::ImageTerm:
        return input;
      case Op::MaxPool: {
        Image a = img();
        const int k1 = static_cast<int>(param());
        const int k2 = static_cast<int>(param());
        return done(max_pool(a, k1, k2), p);
      }
      case Op::Gau: {
        Image a = img();
        const double s = param();
        return done(gaussian_filter(a, s), p);
      }
      case Op::GauD: {
        Image a = img();
        const double s = param();
        const int ox = static_cast<int>(param());
        const int oy = static_cast<int>(param());
        return done(gaussian_derivative(a, s, ox, oy), p);
      }
      case Op::GaborF: {
        Image a = img();
        const double theta = param() * (kPi / 8.0);
        const int v = static_cast<int>(param());
        return done(gabor_filter(a, theta, v), p);
      }
      case Op::Lap:
        return done(laplacian(img()), p);
      case Op::LoG1:
        return done(log_filter(img(), 1.0), p);
      case Op::LoG2:
        return done(log_filter(img(), 2.0), p);
      case Op::Sobel:
        return done(sobel(img(), SobelMode::Magnitude), p);
      case Op::SobelX:
        return done(sobel(img(), SobelMode::X), p);
      case Op::SobelY:
        return done(sobel(img(), SobelMode::Y), p);
      case Op::Med:
        return done(window_filter(img(), WindowStat::Median), p);
      case Op::Mean:
        return done(window_filter(img(), WindowStat::Mean), p);
      case Op::Min:
        return done(window_filter(img(), WindowStat::Min), p);
      case Op::Max:
        return done(window_filter(img(), WindowStat::Max), p);
      case Op::LbpF:
        return done(lbp_code_map(img()), p);
      case Op::HogF:
        return done(grad_magnitude_map(img()), p);
      case Op::WAdd:
      case Op::WSub: {
        Image a = img();
        const double n1 = param();
        Image b = img();
        const double n2 = param();
        const CombineSign sign =
            (p.op == Op::WAdd) ? CombineSign::Add : CombineSign::Sub;
        return done(weighted_combine(a, n1, b, n2, sign), p);
      }
      case Op::Relu:
        return done(elementwise(img(), Elementwise::Relu), p);
      case Op::Sqrt:
        return done(elementwise(img(), Elementwise::Sqrt), p);
      default:
        throw std::invalid_argument("eval_tree: " + p.name + " is not an image op");
    }
  }

  Image done(Image&& result, const Primitive& p) {
    require_finite(result, p.name.c_str());
    return std::move(result);
  }

  FeatVec fvec() {
    const Node& n = t.nodes[pos++];
    const Primitive& p = ps.at(n.prim);
    switch (p.op) {
      case Op::Root2:
      case Op::Root3:
      case Op::Root4:
      case Op::FeaCon2:
      case Op::FeaCon3: {
        FeatVec out;
        for (int i = 0; i < p.arity(); ++i) {
          FeatVec child = fvec();
          out.insert(out.end(), child.begin(), child.end());
        }
        return out;
      }
      case Op::Sift:
        return sift_descriptor(img());
      case Op::Hog:
        return hog_descriptor(img());
      case Op::Lbp:
        return lbp_histogram(img());
      default:
        throw std::invalid_argument("eval_tree: " + p.name + " is not a feature op");
    }
  }
};

}  // namespace

FeatVec eval_tree(const TypedTree& t, const PrimitiveSet& ps, const Image& img) {
  if (t.empty()) throw std::invalid_argument("eval_tree: empty tree");
  if (img.height <= 0 || img.width <= 0) {
    throw std::invalid_argument("eval_tree: empty image");
  }
  try {
    TreeEval ev{t, ps, img};
    FeatVec out = ev.fvec();
    for (double v : out) {
      if (!std::isfinite(v)) throw EvalError("eval_tree: non-finite feature value");
    }
    return out;
  } catch (const std::invalid_argument& e) {
    // data-dependent operator rejection (e.g. kernel larger than 2x image)
    throw EvalError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Selection & variation
// ---------------------------------------------------------------------------

int tournament_select(const std::vector<Individual>& pop, Rng& rng, int k) {
  if (pop.empty()) throw std::invalid_argument("tournament_select: empty population");
  if (k <= 0) throw std::invalid_argument("tournament_select: k must be positive");
  // k draws with replacement would leave each individual out with probability
  // (1-1/n)^k; once k covers the whole population the tournament is meant to
  // be exhaustive, so scan instead of sampling.
  const bool exhaustive = k >= static_cast<int>(pop.size());
  if (exhaustive) k = static_cast<int>(pop.size());
  int best = -1;
  for (int i = 0; i < k; ++i) {
    const int cand = exhaustive ? i : static_cast<int>(rng.index(pop.size()));
    if (!pop[cand].fitness.has_value()) {
      throw std::invalid_argument("tournament_select: unevaluated individual");
    }
    if (best < 0) {
      best = cand;
      continue;
    }
    const double fb = *pop[best].fitness;
    const double fc = *pop[cand].fitness;
    if (fc > fb ||
        (fc == fb && (pop[cand].total_size() < pop[best].total_size() ||
                      (pop[cand].total_size() == pop[best].total_size() && cand < best)))) {
      best = cand;
    }
  }
  return best;
}

namespace {

DType node_type(const TypedTree& t, const PrimitiveSet& ps, int pos) {
  return ps.at(t.nodes[pos].prim).ret;
}

TypedTree splice(const TypedTree& host, const PrimitiveSet& ps, int pos,
                 const TypedTree& donor, int dbegin, int dend) {
  const int end = subtree_end(host, ps, pos);
  TypedTree out;
  out.nodes.reserve(host.size() - (end - pos) + (dend - dbegin));
  out.nodes.insert(out.nodes.end(), host.nodes.begin(), host.nodes.begin() + pos);
  out.nodes.insert(out.nodes.end(), donor.nodes.begin() + dbegin,
                   donor.nodes.begin() + dend);
  out.nodes.insert(out.nodes.end(), host.nodes.begin() + end, host.nodes.end());
  return out;
}

}  // namespace

std::pair<TypedTree, TypedTree> subtree_crossover(const TypedTree& a,
                                                  const TypedTree& b,
                                                  const PrimitiveSet& ps, Rng& rng) {
  std::vector<std::vector<int>> idx_a(kNumTypes), idx_b(kNumTypes);
  for (int i = 1; i < a.size(); ++i) {
    idx_a[type_index(node_type(a, ps, i))].push_back(i);
  }
  for (int i = 1; i < b.size(); ++i) {
    idx_b[type_index(node_type(b, ps, i))].push_back(i);
  }
  std::size_t total = 0;
  for (int t = 0; t < kNumTypes; ++t) total += idx_a[t].size() * idx_b[t].size();
  if (total == 0) return {a, b};

  std::size_t r = rng.index(total);
  int pa = -1, pb = -1;
  for (int t = 0; t < kNumTypes; ++t) {
    const std::size_t block = idx_a[t].size() * idx_b[t].size();
    if (r < block) {
      pa = idx_a[t][r / idx_b[t].size()];
      pb = idx_b[t][r % idx_b[t].size()];
      break;
    }
    r -= block;
  }

  const int ea = subtree_end(a, ps, pa);
  const int eb = subtree_end(b, ps, pb);
  TypedTree child_a = splice(a, ps, pa, b, pb, eb);
  TypedTree child_b = splice(b, ps, pb, a, pa, ea);
  if (tree_depth(child_a, ps) > kMaxDepth) child_a = a;
  if (tree_depth(child_b, ps) > kMaxDepth) child_b = b;
  return {std::move(child_a), std::move(child_b)};
}

TypedTree subtree_mutation(const TypedTree& t, const PrimitiveSet& ps, Rng& rng) {
  if (t.size() <= 1) return t;
  const int pos = 1 + static_cast<int>(rng.index(t.size() - 1));
  const DType type = node_type(t, ps, pos);
  TypedTree repl;
  gen_subtree(ps, rng, GenMethod::Grow, type, 0, kMutationGrowDepth, repl.nodes);
  TypedTree out = splice(t, ps, pos, repl, 0, repl.size());
  if (tree_depth(out, ps) > kMaxDepth) return t;
  return out;
}

// ---------------------------------------------------------------------------
// Text form
// ---------------------------------------------------------------------------

std::string format_constant(DType t, double value) {
  switch (t) {
    case DType::Ord:
    case DType::Theta:
    case DType::FreqIdx:
    case DType::PoolK:
      return std::to_string(static_cast<int>(value));
    default: {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.6g", value);
      return buf;
    }
  }
}

namespace {

void serialize_at(const TypedTree& t, const PrimitiveSet& ps, int& pos,
                  std::string& out) {
  const Node& n = t.nodes[pos++];
  const Primitive& p = ps.at(n.prim);
  if (p.is_constant) {
    out += format_constant(p.ret, n.value);
    return;
  }
  out += p.name;
  if (p.is_terminal()) return;
  out += '(';
  for (int i = 0; i < p.arity(); ++i) {
    if (i > 0) out += ", ";
    serialize_at(t, ps, pos, out);
  }
  out += ')';
}

}  // namespace

std::string serialize_tree(const TypedTree& t, const PrimitiveSet& ps) {
  if (t.empty()) return "";
  std::string out;
  int pos = 0;
  serialize_at(t, ps, pos, out);
  return out;
}

namespace {

struct Parser {
  std::string_view text;
  const PrimitiveSet& ps;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& msg, std::size_t at) {
    throw ParseError("parse error at offset " + std::to_string(at) + ": " + msg, at);
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) {
      ++pos;
    }
  }

  bool at_number() {
    const char c = text[pos];
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '+' ||
           c == '-';
  }

  double parse_number() {
    const std::size_t start = pos;
    while (pos < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.' ||
            text[pos] == '+' || text[pos] == '-' || text[pos] == 'e' ||
            text[pos] == 'E')) {
      ++pos;
    }
    const std::string num(text.substr(start, pos - start));
    char* end = nullptr;
    const double v = std::strtod(num.c_str(), &end);
    if (end != num.c_str() + num.size() || num.empty()) {
      fail("malformed number '" + num + "'", start);
    }
    return v;
  }

  std::string parse_name() {
    const std::size_t start = pos;
    while (pos < text.size()) {
      const char c = text[pos];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
        ++pos;
      } else if (c == '-' && pos + 1 < text.size() &&
                 std::isalpha(static_cast<unsigned char>(text[pos + 1]))) {
        ++pos;  // hyphenated names: W-Add, W-Sub, LBP-F, HOG-F
      } else {
        break;
      }
    }
    if (pos == start) fail("expected a name", start);
    return std::string(text.substr(start, pos - start));
  }

  void expect(char c) {
    skip_ws();
    if (pos >= text.size() || text[pos] != c) {
      fail(std::string("expected '") + c + "'", pos);
    }
    ++pos;
  }

  // Range checks for parsed constants. Sigma is deliberately lenient (any
  // positive value) so printed trees with out-of-range illustrative sigmas
  // still load; integer-coded parameters are strict.
  Node make_constant(DType type, double v, std::size_t at) {
    auto require_int = [&](int lo, int hi) {
      if (v != std::floor(v) || v < lo || v > hi) {
        fail("expected an integer in [" + std::to_string(lo) + ", " +
                 std::to_string(hi) + "] for " + dtype_name(type) + ", got " +
                 format_constant(DType::Sigma, v),
             at);
      }
    };
    switch (type) {
      case DType::Sigma:
        if (!(v > 0.0)) fail("sigma must be > 0", at);
        break;
      case DType::Ord:
        require_int(0, 2);
        break;
      case DType::Theta:
        require_int(0, 7);
        break;
      case DType::FreqIdx:
        require_int(0, 4);
        break;
      case DType::Weight:
        if (v < 0.0 || v >= 1.0) fail("weight must be in [0, 1)", at);
        break;
      case DType::PoolK:
        if (v != 2.0 && v != 4.0) fail("pool size must be 2 or 4", at);
        break;
      default:
        fail("constant not allowed here", at);
    }
    return Node{ps.constant_terminal(type), v};
  }

  void parse_expr(DType expected, bool at_root, std::vector<Node>& out) {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of input", pos);
    const std::size_t start = pos;
    if (at_number()) {
      if (!is_param_type(expected)) {
        fail(std::string("expected an expression of type ") + dtype_name(expected),
             start);
      }
      out.push_back(make_constant(expected, parse_number(), start));
      return;
    }
    const std::string name = parse_name();
    const int id = ps.find(name);
    if (id < 0) fail("unknown primitive '" + name + "'", start);
    const Primitive& p = ps.at(id);
    if (p.ret != expected) {
      fail("'" + name + "' has type " + dtype_name(p.ret) + ", expected " +
               dtype_name(expected),
           start);
    }
    if (p.root_only && !at_root) fail("'" + name + "' is only allowed at the root", start);
    if (at_root && !p.root_only) {
      fail("a tree must start with a root concatenation node, got '" + name + "'",
           start);
    }
    out.push_back({id, 0.0});
    if (p.is_terminal()) return;
    expect('(');
    for (int i = 0; i < p.arity(); ++i) {
      if (i > 0) {
        skip_ws();
        if (pos < text.size() && text[pos] == ')') {
          fail("'" + name + "' takes " + std::to_string(p.arity()) +
                   " arguments, found only " + std::to_string(i),
               pos);
        }
        expect(',');
      }
      parse_expr(p.args[i], false, out);
    }
    skip_ws();
    if (pos < text.size() && text[pos] == ',') {
      fail("'" + name + "' takes only " + std::to_string(p.arity()) + " arguments",
           pos);
    }
    expect(')');
  }
};

}  // namespace

TypedTree parse_tree(std::string_view text, const PrimitiveSet& ps) {
  Parser parser{text, ps};
  TypedTree t;
  parser.parse_expr(DType::FVec, true, t.nodes);
  parser.skip_ws();
  if (parser.pos != text.size()) {
    parser.fail("trailing input after tree", parser.pos);
  }
  return t;
}

std::string export_dot(const TypedTree& t, const PrimitiveSet& ps,
                       const std::string& graph_name) {
  std::ostringstream os;
  os << "digraph " << graph_name << " {\n";
  os << "  node [shape=box, fontname=\"monospace\"];\n";
  std::vector<std::pair<int, int>> stack;  // (parent id, remaining children)
  for (int i = 0; i < t.size(); ++i) {
    const Primitive& p = ps.at(t.nodes[i].prim);
    const std::string label =
        p.is_constant ? format_constant(p.ret, t.nodes[i].value) : p.name;
    os << "  n" << i << " [label=\"" << label << "\"];\n";
    if (!stack.empty()) {
      os << "  n" << stack.back().first << " -> n" << i << ";\n";
      if (--stack.back().second == 0) stack.pop_back();
    }
    if (p.arity() > 0) stack.push_back({i, p.arity()});
    while (!stack.empty() && stack.back().second == 0) stack.pop_back();
  }
  os << "}\n";
  return os.str();
}

}  // namespace mtgp::gp
