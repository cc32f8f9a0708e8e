#include "stdml/treelearn.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "stdml/errors.hpp"
#include "stdml/random.hpp"

namespace stdml {

void LearnerConfig::validate() const {
  if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
  if (burn_in < 0) throw ConfigError("burn_in must be >= 0");
  if (kept_draws < 1) throw ConfigError("kept_draws must be >= 1");
  if (!(tree_prior.base > 0.0 && tree_prior.base < 1.0))
    throw ConfigError("tree prior base must lie in (0, 1)");
  if (!(tree_prior.power >= 0.0)) throw ConfigError("tree prior power must be >= 0");
  if (!(leaf_k > 0.0)) throw ConfigError("leaf shrinkage k must be positive");
  if (!(sigma_df > 0.0)) throw ConfigError("sigma prior df must be positive");
  if (!(sigma_quantile > 0.0 && sigma_quantile < 1.0))
    throw ConfigError("sigma prior quantile must lie in (0, 1)");
  if (n_cutpoints < 1 || n_cutpoints > 255) throw ConfigError("n_cutpoints must be in [1, 255]");
  if (min_leaf_size < 1) throw ConfigError("min_leaf_size must be >= 1");
}

std::span<const FlatNode> TreeEnsembleModel::tree(int draw, int t) const {
  const std::size_t k = static_cast<std::size_t>(draw) * n_trees + t;
  return {nodes.data() + tree_offsets[k], nodes.data() + tree_offsets[k + 1]};
}

std::vector<double> RandomEffectsFit::alpha_mean() const {
  std::vector<double> out(static_cast<std::size_t>(n_blocks), 0.0);
  const std::size_t draws = tau2_draws.size();
  if (draws == 0) return out;
  for (std::size_t d = 0; d < draws; ++d)
    for (int g = 0; g < n_blocks; ++g) out[g] += alpha_draws[d * n_blocks + g];
  for (auto& a : out) a /= static_cast<double>(draws);
  return out;
}

double RandomEffectsFit::tau2_mean() const {
  if (tau2_draws.empty()) return 0.0;
  return std::accumulate(tau2_draws.begin(), tau2_draws.end(), 0.0) /
         static_cast<double>(tau2_draws.size());
}

std::vector<double> quantile_cutpoints(std::span<const double> values, int max_cuts) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> cuts;
  if (sorted.size() < 2) return cuts;
  const std::size_t gaps = sorted.size() - 1;
  if (gaps <= static_cast<std::size_t>(max_cuts)) {
    for (std::size_t k = 1; k < sorted.size(); ++k) cuts.push_back(0.5 * (sorted[k - 1] + sorted[k]));
    return cuts;
  }
  // Quantile grid over the distinct values; each cut sits midway between
  // neighbouring distinct values so both sides are nonempty.
  for (int j = 1; j <= max_cuts; ++j) {
    const auto k = static_cast<std::size_t>(
        std::llround(static_cast<double>(j) * static_cast<double>(gaps) / (max_cuts + 1)));
    const std::size_t hi = std::clamp<std::size_t>(k, 1, gaps);
    const double c = 0.5 * (sorted[hi - 1] + sorted[hi]);
    if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
  }
  return cuts;
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct Node {
  int parent = -1;
  int left = -1;
  int right = -1;
  int var = -1;
  int cut = -1;
  int depth = 0;
  bool growable = false;
  bool alive = false;
  double mu = 0.0;

  bool is_leaf() const noexcept { return left < 0; }
};

struct Tree {
  std::vector<Node> nodes;
  std::vector<int> free_slots;

  int allocate() {
    if (!free_slots.empty()) {
      const int id = free_slots.back();
      free_slots.pop_back();
      nodes[id] = Node{};
      nodes[id].alive = true;
      return id;
    }
    nodes.emplace_back();
    nodes.back().alive = true;
    return static_cast<int>(nodes.size()) - 1;
  }
  void release(int id) {
    nodes[id].alive = false;
    free_slots.push_back(id);
  }
  int sibling(int id) const {
    const int p = nodes[id].parent;
    if (p < 0) return -1;
    return nodes[p].left == id ? nodes[p].right : nodes[p].left;
  }
};

struct TreeShape {
  std::vector<int> good_leaves;
  std::vector<int> nogs;  // internal nodes whose children are both leaves
  bool root_only = true;
};

struct MoveProbs {
  double grow = 0.0;
  double prune = 0.0;
  double change = 0.0;
};

MoveProbs move_probs(bool root_only, std::size_t good_leaves, std::size_t nogs) {
  MoveProbs p;
  if (root_only) {
    p.grow = good_leaves > 0 ? 1.0 : 0.0;
    return p;
  }
  p.grow = good_leaves > 0 ? 0.25 : 0.0;
  p.prune = nogs > 0 ? 0.25 : 0.0;
  p.change = nogs > 0 ? 0.5 : 0.0;
  const double total = p.grow + p.prune + p.change;
  if (total > 0.0) {
    p.grow /= total;
    p.prune /= total;
    p.change /= total;
  }
  return p;
}

struct Stats {
  double n = 0.0;
  double sum = 0.0;
  void add(double r) noexcept {
    n += 1.0;
    sum += r;
  }
};

/// Training features discretized against the cutpoint grid:
/// x < cut[v][c]  <=>  bin(x, v) <= c.
struct BinnedFeatures {
  std::size_t n = 0;
  std::size_t q = 0;
  std::vector<std::uint8_t> bins;
  std::vector<int> n_cuts;

  bool goes_left(std::size_t i, int var, int cut) const noexcept {
    return bins[i * q + static_cast<std::size_t>(var)] <= cut;
  }
};

BinnedFeatures bin_features(const Eigen::MatrixXd& x, const std::vector<std::vector<double>>& cuts) {
  BinnedFeatures b;
  b.n = static_cast<std::size_t>(x.rows());
  b.q = static_cast<std::size_t>(x.cols());
  b.bins.resize(b.n * b.q);
  b.n_cuts.resize(b.q);
  for (std::size_t v = 0; v < b.q; ++v) {
    const auto& c = cuts[v];
    b.n_cuts[v] = static_cast<int>(c.size());
    for (std::size_t i = 0; i < b.n; ++i) {
      const double val = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v));
      b.bins[i * b.q + v] =
          static_cast<std::uint8_t>(std::upper_bound(c.begin(), c.end(), val) - c.begin());
    }
  }
  return b;
}

void check_features(const Eigen::MatrixXd& x, std::size_t n_rows, const char* who) {
  if (x.cols() == 0) throw ConfigError(std::string(who) + ": feature matrix has no columns");
  if (static_cast<std::size_t>(x.rows()) != n_rows)
    throw ShapeError(std::string(who) + ": " + std::to_string(x.rows()) + " feature rows for " +
                     std::to_string(n_rows) + " responses");
  if (!x.allFinite()) throw DomainError(std::string(who) + ": features must be finite");
}

/// Residual standard deviation of a least-squares fit of y on [1, x], or
/// sd(y) when there are too few rows.
double rough_sigma(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const auto n = y.size();
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().sum() / std::max<Eigen::Index>(1, n - 1));
  if (n <= x.cols() + 1) return sd;
  Eigen::MatrixXd design(n, x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  const Eigen::VectorXd beta = qr.solve(y);
  const double rss = (y - design * beta).squaredNorm();
  const auto dof = n - qr.rank();
  if (dof <= 0 || !(rss > 0.0)) return sd;
  return std::sqrt(rss / static_cast<double>(dof));
}

enum class MoveKind { none, grow, prune, change };

/// Backfitting MCMC over the sum of trees for a Gaussian working response.
class Sampler {
 public:
  Sampler(const LearnerConfig& cfg, BinnedFeatures data, Rng& rng)
      : cfg_(cfg), data_(std::move(data)), rng_(rng) {
    n_ = data_.n;
    m_ = static_cast<std::size_t>(cfg.n_trees);
    trees_.resize(m_);
    leaf_of_.assign(m_ * n_, 0);
    allfit_.assign(n_, 0.0);
    resid_.assign(n_, 0.0);
    root_growable_ = std::any_of(data_.n_cuts.begin(), data_.n_cuts.end(), [](int c) { return c > 0; });
    lo_.resize(data_.q);
    hi_.resize(data_.q);
  }

  std::vector<double> target;  // working response
  double sigma2 = 1.0;
  double leaf_var = 1.0;

  void initialize() {
    const double mean = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(n_);
    for (auto& t : trees_) {
      t.nodes.clear();
      t.free_slots.clear();
      const int root = t.allocate();
      t.nodes[root].growable = root_growable_;
      t.nodes[root].mu = mean / static_cast<double>(m_);
    }
    std::fill(allfit_.begin(), allfit_.end(), mean);
  }

  void sweep() {
    if (cfg_.root_only) {
      for (std::size_t j = 0; j < m_; ++j) redraw_root_only(j);
      return;
    }
    for (std::size_t j = 0; j < m_; ++j) update_tree(j);
  }

  const std::vector<double>& fit() const { return allfit_; }

  /// Append the current trees to the model and count their splits.
  void store_draw(TreeEnsembleModel& model) const {
    for (const auto& t : trees_) {
      const std::size_t start = model.nodes.size();
      model.nodes.emplace_back();
      fill(t, 0, start, start, model);
      model.tree_offsets.push_back(static_cast<std::uint32_t>(model.nodes.size()));
    }
  }

  /// Threshold values for stored split rules.
  const std::vector<std::vector<double>>* cut_values = nullptr;

 private:
  double split_prob(int depth, bool growable) const {
    if (!growable) return 0.0;
    return cfg_.tree_prior.base * std::pow(1.0 + depth, -cfg_.tree_prior.power);
  }

  double log_marginal(const Stats& s) const {
    return -0.5 * std::log1p(s.n * leaf_var / sigma2) +
           0.5 * leaf_var * s.sum * s.sum / (sigma2 * (sigma2 + s.n * leaf_var));
  }

  double draw_leaf(const Stats& s) {
    const double prec = s.n / sigma2 + 1.0 / leaf_var;
    return (s.sum / sigma2) / prec + std_normal(rng_) / std::sqrt(prec);
  }

  std::size_t pick(std::size_t count) {
    return std::uniform_int_distribution<std::size_t>(0, count - 1)(rng_);
  }

  // Cut ranges [lo, hi) of every feature available at `id`.
  void ranges(const Tree& t, int id) {
    for (std::size_t v = 0; v < data_.q; ++v) {
      lo_[v] = 0;
      hi_[v] = data_.n_cuts[v];
    }
    int child = id;
    int p = t.nodes[id].parent;
    while (p >= 0) {
      const Node& pn = t.nodes[p];
      if (pn.left == child)
        hi_[pn.var] = std::min(hi_[pn.var], pn.cut);
      else
        lo_[pn.var] = std::max(lo_[pn.var], pn.cut + 1);
      child = p;
      p = pn.parent;
    }
  }

  // Draw a split rule uniformly from the features with a nonempty range, then
  // a cut uniformly within that range. Returns child growability flags.
  struct Rule {
    int var = -1;
    int cut = -1;
    bool left_growable = false;
    bool right_growable = false;
  };
  Rule draw_rule(const Tree& t, int id) {
    ranges(t, id);
    good_vars_.clear();
    for (std::size_t v = 0; v < data_.q; ++v)
      if (hi_[v] > lo_[v]) good_vars_.push_back(static_cast<int>(v));
    Rule r;
    r.var = good_vars_[pick(good_vars_.size())];
    r.cut = lo_[r.var] + static_cast<int>(pick(static_cast<std::size_t>(hi_[r.var] - lo_[r.var])));
    const bool others = good_vars_.size() >= 2;
    r.left_growable = others || r.cut > lo_[r.var];
    r.right_growable = others || r.cut + 1 < hi_[r.var];
    return r;
  }

  TreeShape shape(const Tree& t) const {
    TreeShape s;
    for (int id = 0; id < static_cast<int>(t.nodes.size()); ++id) {
      const Node& nd = t.nodes[id];
      if (!nd.alive) continue;
      if (nd.is_leaf()) {
        if (nd.growable) s.good_leaves.push_back(id);
      } else {
        s.root_only = false;
        if (t.nodes[nd.left].is_leaf() && t.nodes[nd.right].is_leaf()) s.nogs.push_back(id);
      }
    }
    return s;
  }

  void redraw_root_only(std::size_t j) {
    Tree& t = trees_[j];
    Node& root = t.nodes[0];
    Stats s;
    for (std::size_t i = 0; i < n_; ++i) {
      const double r = target[i] - allfit_[i] + root.mu;
      resid_[i] = r;
      s.add(r);
    }
    root.mu = draw_leaf(s);
    for (std::size_t i = 0; i < n_; ++i) allfit_[i] = target[i] - resid_[i] + root.mu;
  }

  void update_tree(std::size_t j) {
    Tree& t = trees_[j];
    int* leaf = leaf_of_.data() + j * n_;
    const TreeShape sh = shape(t);
    const MoveProbs mp = move_probs(sh.root_only, sh.good_leaves.size(), sh.nogs.size());

    MoveKind kind = MoveKind::none;
    const double u = uniform01(rng_);
    if (u < mp.grow)
      kind = MoveKind::grow;
    else if (u < mp.grow + mp.prune)
      kind = MoveKind::prune;
    else if (u < mp.grow + mp.prune + mp.change)
      kind = MoveKind::change;

    int target_node = -1;
    Rule rule;
    if (kind == MoveKind::grow) {
      target_node = sh.good_leaves[pick(sh.good_leaves.size())];
      rule = draw_rule(t, target_node);
    } else if (kind == MoveKind::prune || kind == MoveKind::change) {
      target_node = sh.nogs[pick(sh.nogs.size())];
      if (kind == MoveKind::change) rule = draw_rule(t, target_node);
    }

    // Partial residuals and sufficient statistics in a single pass.
    stats_.assign(t.nodes.size(), Stats{});
    Stats prop_left, prop_right;
    const int old_left = target_node >= 0 ? t.nodes[target_node].left : -1;
    const int old_right = target_node >= 0 ? t.nodes[target_node].right : -1;
    for (std::size_t i = 0; i < n_; ++i) {
      const int l = leaf[i];
      const double r = target[i] - allfit_[i] + t.nodes[l].mu;
      resid_[i] = r;
      stats_[l].add(r);
      if (kind == MoveKind::grow) {
        if (l == target_node) (data_.goes_left(i, rule.var, rule.cut) ? prop_left : prop_right).add(r);
      } else if (kind == MoveKind::change) {
        if (l == old_left || l == old_right)
          (data_.goes_left(i, rule.var, rule.cut) ? prop_left : prop_right).add(r);
      }
    }

    bool accepted = false;
    const double min_leaf = static_cast<double>(cfg_.min_leaf_size);
    if (kind == MoveKind::grow) {
      const Node& nd = t.nodes[target_node];
      if (prop_left.n >= min_leaf && prop_right.n >= min_leaf) {
        const double pg = split_prob(nd.depth, true);
        const double pgl = split_prob(nd.depth + 1, rule.left_growable);
        const double pgr = split_prob(nd.depth + 1, rule.right_growable);
        const std::size_t good_after =
            sh.good_leaves.size() - 1 + rule.left_growable + rule.right_growable;
        const int sib = t.sibling(target_node);
        const std::size_t nogs_after = sh.nogs.size() + 1 - ((sib >= 0 && t.nodes[sib].is_leaf()) ? 1 : 0);
        const MoveProbs after = move_probs(false, good_after, nogs_after);
        const double log_ratio =
            std::log(pg) + std::log1p(-pgl) + std::log1p(-pgr) - std::log1p(-pg) +
            log_marginal(prop_left) + log_marginal(prop_right) - log_marginal(stats_[target_node]) +
            std::log(after.prune / static_cast<double>(nogs_after)) -
            std::log(mp.grow / static_cast<double>(sh.good_leaves.size()));
        accepted = std::log(uniform01(rng_)) < log_ratio;
      }
      if (accepted) {
        const int left = t.allocate();
        const int right = t.allocate();
        Node& parent = t.nodes[target_node];
        parent.var = rule.var;
        parent.cut = rule.cut;
        parent.left = left;
        parent.right = right;
        for (int c : {left, right}) {
          t.nodes[c].parent = target_node;
          t.nodes[c].depth = parent.depth + 1;
        }
        t.nodes[left].growable = rule.left_growable;
        t.nodes[right].growable = rule.right_growable;
        stats_.resize(t.nodes.size());
        stats_[left] = prop_left;
        stats_[right] = prop_right;
      }
    } else if (kind == MoveKind::prune) {
      const Node& nd = t.nodes[target_node];
      const Node& l = t.nodes[nd.left];
      const Node& r = t.nodes[nd.right];
      Stats merged{stats_[nd.left].n + stats_[nd.right].n, stats_[nd.left].sum + stats_[nd.right].sum};
      const double pg = split_prob(nd.depth, true);
      const double pgl = split_prob(l.depth, l.growable);
      const double pgr = split_prob(r.depth, r.growable);
      const std::size_t good_after =
          sh.good_leaves.size() - static_cast<std::size_t>(l.growable) -
          static_cast<std::size_t>(r.growable) + 1;
      const int sib = t.sibling(target_node);
      const std::size_t nogs_after = sh.nogs.size() - 1 + ((sib >= 0 && t.nodes[sib].is_leaf()) ? 1 : 0);
      const MoveProbs after = move_probs(nd.parent < 0, good_after, nogs_after);
      const double log_ratio =
          std::log1p(-pg) - std::log(pg) - std::log1p(-pgl) - std::log1p(-pgr) +
          log_marginal(merged) - log_marginal(stats_[nd.left]) - log_marginal(stats_[nd.right]) +
          std::log(after.grow / static_cast<double>(good_after)) -
          std::log(mp.prune / static_cast<double>(sh.nogs.size()));
      accepted = std::log(uniform01(rng_)) < log_ratio;
      if (accepted) {
        Node& parent = t.nodes[target_node];
        t.release(parent.left);
        t.release(parent.right);
        parent.left = parent.right = -1;
        parent.var = parent.cut = -1;
        stats_[target_node] = merged;
      }
    } else if (kind == MoveKind::change) {
      const Node& nd = t.nodes[target_node];
      const Node& l = t.nodes[nd.left];
      const Node& r = t.nodes[nd.right];
      if (prop_left.n >= min_leaf && prop_right.n >= min_leaf) {
        const int d = nd.depth + 1;
        const std::size_t good_after = sh.good_leaves.size() - static_cast<std::size_t>(l.growable) -
                                       static_cast<std::size_t>(r.growable) +
                                       rule.left_growable + rule.right_growable;
        const MoveProbs after = move_probs(false, good_after, sh.nogs.size());
        const double log_ratio =
            std::log1p(-split_prob(d, rule.left_growable)) + std::log1p(-split_prob(d, rule.right_growable)) -
            std::log1p(-split_prob(d, l.growable)) - std::log1p(-split_prob(d, r.growable)) +
            log_marginal(prop_left) + log_marginal(prop_right) - log_marginal(stats_[nd.left]) -
            log_marginal(stats_[nd.right]) + std::log(after.change) - std::log(mp.change);
        accepted = std::log(uniform01(rng_)) < log_ratio;
      }
      if (accepted) {
        Node& parent = t.nodes[target_node];
        parent.var = rule.var;
        parent.cut = rule.cut;
        t.nodes[parent.left].growable = rule.left_growable;
        t.nodes[parent.right].growable = rule.right_growable;
        stats_[parent.left] = prop_left;
        stats_[parent.right] = prop_right;
      }
    }

    for (int id = 0; id < static_cast<int>(t.nodes.size()); ++id) {
      Node& nd = t.nodes[id];
      if (nd.alive && nd.is_leaf()) nd.mu = draw_leaf(stats_[id]);
    }

    const Node* nodes = t.nodes.data();
    if (accepted) {
      const Node& tn = t.nodes[target_node];
      for (std::size_t i = 0; i < n_; ++i) {
        int& l = leaf[i];
        if (kind == MoveKind::grow) {
          if (l == target_node) l = data_.goes_left(i, tn.var, tn.cut) ? tn.left : tn.right;
        } else if (kind == MoveKind::prune) {
          if (l == old_left || l == old_right) l = target_node;
        } else if (l == tn.left || l == tn.right) {
          l = data_.goes_left(i, tn.var, tn.cut) ? tn.left : tn.right;
        }
        allfit_[i] = target[i] - resid_[i] + nodes[l].mu;
      }
    } else {
      for (std::size_t i = 0; i < n_; ++i) allfit_[i] = target[i] - resid_[i] + nodes[leaf[i]].mu;
    }
  }

  // Preorder layout with sibling pairs adjacent; child offsets are
  // relative to the tree's first node.
  void fill(const Tree& t, int id, std::size_t pos, std::size_t start, TreeEnsembleModel& model) const {
    const Node& nd = t.nodes[id];
    auto& out = model.nodes;
    if (nd.is_leaf()) {
      out[pos] = FlatNode{-1, -1, nd.mu};
      return;
    }
    const auto var = static_cast<std::size_t>(nd.var);
    model.split_count_totals[var] += 1.0;
    const std::size_t child = out.size();
    out.resize(child + 2);
    out[pos] = FlatNode{nd.var, static_cast<std::int32_t>(child - start),
                        (*cut_values)[var][static_cast<std::size_t>(nd.cut)]};
    fill(t, nd.left, child, start, model);
    fill(t, nd.right, child + 1, start, model);
  }

 private:
  const LearnerConfig& cfg_;
  BinnedFeatures data_;
  Rng& rng_;
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  bool root_growable_ = false;
  std::vector<Tree> trees_;
  std::vector<int> leaf_of_;
  std::vector<double> allfit_;
  std::vector<double> resid_;
  std::vector<Stats> stats_;
  std::vector<int> lo_, hi_, good_vars_;
};

TreeEnsembleModel prepare_model(const Eigen::MatrixXd& x, const LearnerConfig& cfg, ResponseKind kind) {
  TreeEnsembleModel model;
  model.kind = kind;
  model.n_features = static_cast<std::size_t>(x.cols());
  model.n_trees = cfg.n_trees;
  model.cutpoints.resize(model.n_features);
  std::vector<double> column(static_cast<std::size_t>(x.rows()));
  for (std::size_t v = 0; v < model.n_features; ++v) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) column[static_cast<std::size_t>(i)] = x(i, static_cast<Eigen::Index>(v));
    model.cutpoints[v] = quantile_cutpoints(column, cfg.n_cutpoints);
  }
  model.split_count_totals.assign(model.n_features, 0.0);
  model.tree_offsets.push_back(0);
  return model;
}

// Shared continuous-response driver; `blocks` non-empty enables the block
// random-intercept Gibbs steps.
RandomEffectsModel fit_gaussian(const Eigen::MatrixXd& x, std::span<const double> y,
                                std::span<const int> blocks, int n_blocks, const LearnerConfig& cfg) {
  cfg.validate();
  check_features(x, y.size(), "fit_continuous");
  const std::size_t n = y.size();
  if (n < 10) throw ConfigError("fit_continuous: need at least 10 rows, got " + std::to_string(n));
  for (double v : y)
    if (!std::isfinite(v)) throw DomainError("fit_continuous: response must be finite");

  RandomEffectsModel out;
  out.trees = prepare_model(x, cfg, ResponseKind::continuous);
  TreeEnsembleModel& model = out.trees;
  const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
  const double ymin = *ymin_it;
  const double ymax = *ymax_it;
  if (ymax == ymin) {
    model.constant = true;
    model.constant_value = ymin;
    model.warnings.push_back("constant response; returning a constant predictor");
    if (!blocks.empty()) out.effects.n_blocks = n_blocks;
    return out;
  }
  model.center = 0.5 * (ymax + ymin);
  model.scale = ymax - ymin;

  Eigen::VectorXd scaled(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) scaled[static_cast<Eigen::Index>(i)] = (y[i] - model.center) / model.scale;
  const double sigest = rough_sigma(x, scaled);
  boost::math::chi_squared chi(cfg.sigma_df);
  model.sigma_prior_df = cfg.sigma_df;
  model.sigma_prior_lambda =
      sigest * sigest * boost::math::quantile(chi, 1.0 - cfg.sigma_quantile) / cfg.sigma_df;
  model.leaf_prior_sd = 0.5 / (cfg.leaf_k * std::sqrt(static_cast<double>(cfg.n_trees)));

  Rng rng(cfg.seed);
  Sampler sampler(cfg, bin_features(x, model.cutpoints), rng);
  sampler.cut_values = &model.cutpoints;
  sampler.leaf_var = model.leaf_prior_sd * model.leaf_prior_sd;
  sampler.sigma2 = sigest * sigest;
  sampler.target.assign(scaled.data(), scaled.data() + n);

  const bool with_effects = !blocks.empty();
  std::vector<double> alpha;
  std::vector<std::vector<std::size_t>> members;
  double tau2 = 1.0;
  if (with_effects) {
    if (blocks.size() != n) throw ShapeError("fit_continuous_re: one block label per row required");
    if (n_blocks < 1) throw ConfigError("fit_continuous_re: need at least one block");
    members.resize(static_cast<std::size_t>(n_blocks));
    for (std::size_t i = 0; i < n; ++i) {
      if (blocks[i] < 0 || blocks[i] >= n_blocks) throw ShapeError("fit_continuous_re: block label out of range");
      members[static_cast<std::size_t>(blocks[i])].push_back(i);
    }
    alpha.assign(static_cast<std::size_t>(n_blocks), 0.0);
    out.effects.n_blocks = n_blocks;
  }

  sampler.initialize();
  const int total = cfg.burn_in + cfg.kept_draws;
  const double nu = cfg.sigma_df;
  const double lambda = model.sigma_prior_lambda;
  for (int iter = 0; iter < total; ++iter) {
    sampler.sweep();
    const auto& fit = sampler.fit();
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = sampler.target[i] - fit[i];
      sse += e * e;
    }
    sampler.sigma2 = (nu * lambda + sse) / chi_squared(rng, nu + static_cast<double>(n));

    if (with_effects) {
      // Block intercepts in original units given the tree fit.
      const double s2 = sampler.sigma2 * model.scale * model.scale;
      double sum_sq = 0.0;
      for (int g = 0; g < n_blocks; ++g) {
        const auto& rows = members[static_cast<std::size_t>(g)];
        double sum = 0.0;
        for (std::size_t i : rows) sum += y[i] - model.center - model.scale * fit[i];
        const double prec = static_cast<double>(rows.size()) / s2 + 1.0 / tau2;
        alpha[static_cast<std::size_t>(g)] = (sum / s2) / prec + std_normal(rng) / std::sqrt(prec);
        sum_sq += alpha[static_cast<std::size_t>(g)] * alpha[static_cast<std::size_t>(g)];
      }
      // Inverse-gamma(1, 1) prior on tau^2.
      const double shape = 1.0 + 0.5 * n_blocks;
      const double rate = 1.0 + 0.5 * sum_sq;
      tau2 = rate / std::gamma_distribution<double>(shape, 1.0)(rng);
      for (std::size_t i = 0; i < n; ++i)
        sampler.target[i] = (y[i] - alpha[static_cast<std::size_t>(blocks[i])] - model.center) / model.scale;
    }

    if (iter >= cfg.burn_in) {
      sampler.store_draw(model);
      model.sigma2_draws.push_back(sampler.sigma2 * model.scale * model.scale);
      if (with_effects) {
        out.effects.alpha_draws.insert(out.effects.alpha_draws.end(), alpha.begin(), alpha.end());
        out.effects.tau2_draws.push_back(tau2);
      }
    }
  }
  model.n_draws = cfg.kept_draws;
  return out;
}

}  // namespace

TreeEnsembleModel fit_continuous(const Eigen::MatrixXd& features, std::span<const double> y,
                                 const LearnerConfig& cfg) {
  return fit_gaussian(features, y, {}, 0, cfg).trees;
}

RandomEffectsModel fit_continuous_re(const Eigen::MatrixXd& features, std::span<const double> y,
                                     std::span<const int> blocks, int n_blocks,
                                     const LearnerConfig& cfg) {
  if (blocks.size() != y.size()) throw ShapeError("fit_continuous_re: one block label per row required");
  return fit_gaussian(features, y, blocks, n_blocks, cfg);
}

TreeEnsembleModel fit_binary(const Eigen::MatrixXd& features, std::span<const int> d,
                             const LearnerConfig& cfg) {
  cfg.validate();
  check_features(features, d.size(), "fit_binary");
  const std::size_t n = d.size();
  if (n < 10) throw ConfigError("fit_binary: need at least 10 rows, got " + std::to_string(n));
  std::size_t ones = 0;
  for (int v : d) {
    if (v != 0 && v != 1) throw DomainError("fit_binary: response must be 0/1");
    ones += static_cast<std::size_t>(v);
  }
  if (ones == 0 || ones == n)
    throw ConfigError("fit_binary: only one class present; handle degenerate treatment upstream");

  TreeEnsembleModel model = prepare_model(features, cfg, ResponseKind::binary);
  const double p = static_cast<double>(ones) / static_cast<double>(n);
  model.offset = boost::math::quantile(boost::math::normal(), p);
  model.leaf_prior_sd = 3.0 / (cfg.leaf_k * std::sqrt(static_cast<double>(cfg.n_trees)));

  Rng rng(cfg.seed);
  Sampler sampler(cfg, bin_features(features, model.cutpoints), rng);
  sampler.cut_values = &model.cutpoints;
  sampler.leaf_var = model.leaf_prior_sd * model.leaf_prior_sd;
  sampler.sigma2 = 1.0;
  sampler.target.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) sampler.target[i] = d[i] == 1 ? 0.5 : -0.5;
  sampler.initialize();

  const int total = cfg.burn_in + cfg.kept_draws;
  for (int iter = 0; iter < total; ++iter) {
    const auto& fit = sampler.fit();
    for (std::size_t i = 0; i < n; ++i) {
      const double z = truncated_normal(rng, model.offset + fit[i], d[i] == 1);
      sampler.target[i] = z - model.offset;
    }
    sampler.sweep();
    if (iter >= cfg.burn_in) sampler.store_draw(model);
  }
  model.n_draws = cfg.kept_draws;
  return model;
}

std::vector<double> predict(const TreeEnsembleModel& model, const Eigen::MatrixXd& features) {
  if (static_cast<std::size_t>(features.cols()) != model.n_features)
    throw ShapeError("predict: model expects " + std::to_string(model.n_features) +
                     " features, got " + std::to_string(features.cols()));
  const auto rows = static_cast<std::size_t>(features.rows());
  if (model.constant) return std::vector<double>(rows, model.constant_value);

  const std::size_t q = model.n_features;
  std::vector<double> x(rows * q);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t v = 0; v < q; ++v)
      x[i * q + v] = features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v));

  std::vector<double> total(rows, 0.0);
  std::vector<double> draw_sum(rows);
  for (int d = 0; d < model.n_draws; ++d) {
    std::fill(draw_sum.begin(), draw_sum.end(), 0.0);
    for (int t = 0; t < model.n_trees; ++t) {
      const auto tree = model.tree(d, t);
      const FlatNode* nodes = tree.data();
      if (nodes[0].var < 0) {
        const double v = nodes[0].value;
        for (auto& s : draw_sum) s += v;
        continue;
      }
      for (std::size_t i = 0; i < rows; ++i) {
        const double* xi = x.data() + i * q;
        std::int32_t k = 0;
        while (nodes[k].var >= 0) k = nodes[k].left + (xi[nodes[k].var] < nodes[k].value ? 0 : 1);
        draw_sum[i] += nodes[k].value;
      }
    }
    if (model.kind == ResponseKind::binary) {
      for (std::size_t i = 0; i < rows; ++i) total[i] += normal_cdf(model.offset + draw_sum[i]);
    } else {
      for (std::size_t i = 0; i < rows; ++i) total[i] += draw_sum[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(model.n_draws);
  for (auto& v : total) {
    v *= inv;
    if (model.kind == ResponseKind::continuous) v = model.center + model.scale * v;
  }
  return total;
}

std::vector<double> predict_with_effects(const RandomEffectsModel& model,
                                         const Eigen::MatrixXd& features,
                                         std::span<const int> blocks) {
  if (static_cast<std::size_t>(features.rows()) != blocks.size())
    throw ShapeError("predict_with_effects: one block label per row required");
  std::vector<double> out = predict(model.trees, features);
  const std::vector<double> alpha = model.effects.alpha_mean();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (blocks[i] < 0 || blocks[i] >= model.effects.n_blocks)
      throw ShapeError("predict_with_effects: block label out of range");
    out[i] += alpha[static_cast<std::size_t>(blocks[i])];
  }
  return out;
}

std::vector<double> variable_importance(const TreeEnsembleModel& model) {
  std::vector<double> out = model.split_count_totals;
  out.resize(model.n_features, 0.0);
  if (model.n_draws > 0)
    for (auto& v : out) v /= static_cast<double>(model.n_draws);
  return out;
}

std::vector<double> group_importance(std::span<const double> importance, std::span<const int> group,
                                     int n_groups) {
  if (importance.size() != group.size()) throw ShapeError("group_importance: one group per feature required");
  std::vector<double> out(static_cast<std::size_t>(n_groups), 0.0);
  for (std::size_t f = 0; f < importance.size(); ++f) {
    if (group[f] < 0 || group[f] >= n_groups) throw ShapeError("group_importance: group out of range");
    out[static_cast<std::size_t>(group[f])] += importance[f];
  }
  return out;
}

void write_model_dump(std::ostream& out, const TreeEnsembleModel& model) {
  out << "# tree ensemble dump v1\n";
  out << "kind " << (model.kind == ResponseKind::binary ? "binary" : "continuous") << '\n';
  out << "n_features " << model.n_features << '\n';
  out << "n_trees " << model.n_trees << '\n';
  out << "n_draws " << model.n_draws << '\n';
  out << "center " << model.center << "\nscale " << model.scale << "\noffset " << model.offset << '\n';
  if (model.constant) out << "constant " << model.constant_value << '\n';
  for (int d = 0; d < model.n_draws; ++d) {
    for (int t = 0; t < model.n_trees; ++t) {
      const auto tree = model.tree(d, t);
      out << "tree " << d << ' ' << t << ' ' << tree.size() << '\n';
      for (std::size_t k = 0; k < tree.size(); ++k) {
        const FlatNode& nd = tree[k];
        if (nd.var < 0)
          out << "  " << k << " leaf " << nd.value << '\n';
        else
          out << "  " << k << " split " << nd.var << ' ' << nd.value << ' ' << nd.left << ' '
              << nd.left + 1 << '\n';
      }
    }
  }
}

}  // namespace stdml
