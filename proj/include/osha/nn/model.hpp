#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "osha/core.hpp"
#include "osha/nn/graph.hpp"
#include "osha/types.hpp"

namespace osha::nn {

// Per-frame numeric feature layout:
//   ego: v, limit (both /22.2), lane one-hot(6), left, right, state one-hot(7)
//   20 objects: v/22.2, x/100, y/100, lane/6, length/10, present
constexpr int kEgoFeatures = 2 + kMaxLanes + 2 + kNumTAStates; // 17
constexpr int kObjectFeatures = 6;
constexpr int kNumericFeatures = kEgoFeatures + kMaxObjects * kObjectFeatures; // 137
constexpr int kLaneClasses = 4;  // keep / left / right / transition
constexpr int kHorizon = 5;
constexpr int kRasterH = 100;
constexpr int kRasterW = 50;
constexpr int kCarnetUpper = kSlots * (kSlots - 1) / 2; // 210

struct ModelConfig {
  std::string name = "full";
  int history = 10;       // T: frames per sample
  int d_model = 64;       // F: feature-axis model width
  int num_blocks = 4;
  int heads_feature = 4;  // attention heads when the model dim is F
  int heads_time = 2;     // attention heads when the model dim is T
  int ff_mult = 4;
  int vision_dim = 64;
  int head_hidden = 64;
  bool swap = true;          // alternate attention axis between blocks
  bool use_vision = true;
  bool aux = true;           // train the curve + distance-network heads
  bool mlp_baseline = false; // replace the encoder stack with an MLP
  std::vector<int> mlp_dims = {512, 256, 128};

  int input_dim() const { return kNumericFeatures + (use_vision ? vision_dim : 0); }
  int block_dim(int i) const { return swap && i % 2 == 1 ? history : d_model; }
  int block_heads(int i) const { return swap && i % 2 == 1 ? heads_time : heads_feature; }
  int feature_dim() const { return mlp_baseline ? mlp_dims.back() : d_model; }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"name", c.name},
                     {"history", c.history},
                     {"d_model", c.d_model},
                     {"num_blocks", c.num_blocks},
                     {"heads_feature", c.heads_feature},
                     {"heads_time", c.heads_time},
                     {"ff_mult", c.ff_mult},
                     {"vision_dim", c.vision_dim},
                     {"head_hidden", c.head_hidden},
                     {"swap", c.swap},
                     {"use_vision", c.use_vision},
                     {"aux", c.aux},
                     {"mlp_baseline", c.mlp_baseline},
                     {"mlp_dims", c.mlp_dims}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("name").get_to(c.name);
  j.at("history").get_to(c.history);
  j.at("d_model").get_to(c.d_model);
  j.at("num_blocks").get_to(c.num_blocks);
  j.at("heads_feature").get_to(c.heads_feature);
  j.at("heads_time").get_to(c.heads_time);
  j.at("ff_mult").get_to(c.ff_mult);
  j.at("vision_dim").get_to(c.vision_dim);
  j.at("head_hidden").get_to(c.head_hidden);
  j.at("swap").get_to(c.swap);
  j.at("use_vision").get_to(c.use_vision);
  j.at("aux").get_to(c.aux);
  j.at("mlp_baseline").get_to(c.mlp_baseline);
  j.at("mlp_dims").get_to(c.mlp_dims);
}

// The five study variants.
inline ModelConfig make_config(const std::string& name) {
  ModelConfig c;
  c.name = name;
  if (name == "full") {
  } else if (name == "noswap") {
    c.swap = false;
  } else if (name == "noaux") {
    c.aux = false;
  } else if (name == "novision") {
    c.use_vision = false;
  } else if (name == "mlp") {
    c.mlp_baseline = true;
  } else {
    throw std::invalid_argument("unknown model config: " + name);
  }
  return c;
}

// ---------------------------------------------------------------------------

struct ParamStore {
  std::map<std::string, Mat> p;

  Mat& operator[](const std::string& k) { return p[k]; }
  const Mat& at(const std::string& k) const { return p.at(k); }
  bool has(const std::string& k) const { return p.count(k) > 0; }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [k, m] : p) n += m.size();
    return n;
  }
};

inline ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore ps;
  // small random biases: break the symmetry left by layer normalization and
  // keep rectifier pre-activations away from the kink at initialization
  auto bias = [&](int out) {
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    Mat b(1, out);
    for (auto& x : b.a) x = u(rng);
    return b;
  };
  auto lin = [&](const std::string& name, int in, int out) {
    ps[name + ".W"] = xavier(in, out, rng);
    ps[name + ".b"] = bias(out);
  };
  lin("embed", cfg.input_dim(), cfg.d_model);
  if (cfg.use_vision) {
    ps["vision.conv1.w"] = xavier(8, 9, rng);
    ps["vision.conv1.b"] = bias(8);
    ps["vision.conv2.w"] = xavier(16, 8 * 9, rng);
    ps["vision.conv2.b"] = bias(16);
    ps["vision.conv3.w"] = xavier(32, 16 * 9, rng);
    ps["vision.conv3.b"] = bias(32);
    lin("vision.fc", 32, cfg.vision_dim);
  }
  if (cfg.mlp_baseline) {
    int in = cfg.history * cfg.d_model;
    for (std::size_t i = 0; i < cfg.mlp_dims.size(); ++i) {
      lin("mlp" + std::to_string(i), in, cfg.mlp_dims[i]);
      in = cfg.mlp_dims[i];
    }
  } else {
    for (int i = 0; i < cfg.num_blocks; ++i) {
      const int d = cfg.block_dim(i);
      const std::string b = "block" + std::to_string(i);
      for (const char* m : {".attn.q", ".attn.k", ".attn.v", ".attn.o"}) lin(b + m, d, d);
      for (const char* l : {".ln1", ".ln2"}) {
        ps[b + l + ".g"] = Mat(1, d, 1.0);
        ps[b + l + ".b"] = Mat(1, d);
      }
      lin(b + ".ff1", d, cfg.ff_mult * d);
      lin(b + ".ff2", cfg.ff_mult * d, d);
    }
  }
  const int fd = cfg.feature_dim();
  lin("head_lane.1", fd, cfg.head_hidden);
  lin("head_lane.2", cfg.head_hidden, kHorizon * kLaneClasses);
  lin("head_vel.1", fd, cfg.head_hidden);
  lin("head_vel.2", cfg.head_hidden, kHorizon);
  lin("head_bez.1", fd, cfg.head_hidden);
  lin("head_bez.2", cfg.head_hidden, 8);
  lin("head_car.1", fd, cfg.head_hidden);
  lin("head_car.2", cfg.head_hidden, kCarnetUpper);
  return ps;
}

// Sinusoidal positional encoding over the time axis, T x F.
inline Mat positional_encoding(int t_len, int dim) {
  Mat pe(t_len, dim);
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < dim; ++j) {
      const double angle = t / std::pow(10000.0, 2.0 * (j / 2) / dim);
      pe.at(t, j) = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

// Constant curve-evaluation matrix: row i holds the four basis functions at
// the i-th sample instant.
inline Mat bezier_eval_matrix() {
  Mat B(kHorizon, 4);
  for (int i = 0; i < kHorizon; ++i) {
    const auto basis = bezier_basis(kBezierSampleTs[i]);
    for (int j = 0; j < 4; ++j) B.at(i, j) = basis[j];
  }
  return B;
}

inline std::vector<double> bezier_point_weights() {
  std::vector<double> w(kHorizon);
  for (int i = 0; i < kHorizon; ++i) w[i] = std::exp(1.0 / (kHorizon - i)) - 1.0;
  return w;
}

// ---------------------------------------------------------------------------

struct SampleInput {
  Mat numeric;               // T x 137
  std::vector<Mat> rasters;  // T frames, (1*100) x 50, scaled to [0,1]
  const Mat* vision_cache = nullptr; // optional precomputed T x vision_dim
};

struct Forward {
  Graph::Var lane = -1;    // 1 x 20 logits, 5 groups of 4
  Graph::Var vel = -1;     // 1 x 5
  Graph::Var bez_pos = -1; // 5 x 2, evaluated curve points
  Graph::Var car = -1;     // 21 x 21 symmetric
  Graph::Var feat = -1;    // pooled feature row
  Graph::Var vision = -1;  // T x vision_dim (if computed here)
  std::map<std::string, Graph::Var> params;
};

namespace detail {

struct Binder {
  Graph& g;
  ParamStore& ps;
  bool with_grad;
  std::map<std::string, Graph::Var>& vars;

  Graph::Var operator()(const std::string& name) {
    auto it = vars.find(name);
    if (it != vars.end()) return it->second;
    const Graph::Var v = g.input(ps.at(name), with_grad);
    vars.emplace(name, v);
    return v;
  }
};

inline Graph::Var linear(Graph& g, Binder& P, Graph::Var x, const std::string& name) {
  return g.add_rowvec(g.matmul(x, P(name + ".W")), P(name + ".b"));
}

inline Graph::Var attention(Graph& g, Binder& P, Graph::Var x, int dim, int heads,
                            const std::string& prefix) {
  if (dim % heads != 0) throw std::invalid_argument("attention: heads must divide dim");
  const int dh = dim / heads;
  const Graph::Var q = linear(g, P, x, prefix + ".q");
  const Graph::Var k = linear(g, P, x, prefix + ".k");
  const Graph::Var v = linear(g, P, x, prefix + ".v");
  std::vector<Graph::Var> outs;
  for (int h = 0; h < heads; ++h) {
    const Graph::Var qh = g.slice_cols(q, h * dh, dh);
    const Graph::Var kh = g.slice_cols(k, h * dh, dh);
    const Graph::Var vh = g.slice_cols(v, h * dh, dh);
    const Graph::Var scores =
        g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / std::sqrt(double(dh)));
    outs.push_back(g.matmul(g.softmax_rows(scores), vh));
  }
  return linear(g, P, g.concat_cols(outs), prefix + ".o");
}

inline Graph::Var encoder_block(Graph& g, Binder& P, Graph::Var x, int dim, int heads,
                                int ff_mult, const std::string& b) {
  Graph::Var h = g.add(x, attention(g, P, x, dim, heads, b + ".attn"));
  h = g.layer_norm_rows(h, P(b + ".ln1.g"), P(b + ".ln1.b"));
  Graph::Var f = linear(g, P, g.relu(linear(g, P, h, b + ".ff1")), b + ".ff2");
  (void)ff_mult;
  h = g.add(h, f);
  return g.layer_norm_rows(h, P(b + ".ln2.g"), P(b + ".ln2.b"));
}

inline Graph::Var vision_frame(Graph& g, Binder& P, Graph::Var img, int vdim) {
  Graph::Var h = g.relu(g.conv2d_s2(img, P("vision.conv1.w"), P("vision.conv1.b"),
                                    1, kRasterH, kRasterW, 8));
  h = g.relu(g.conv2d_s2(h, P("vision.conv2.w"), P("vision.conv2.b"), 8, 50, 25, 16));
  h = g.relu(g.conv2d_s2(h, P("vision.conv3.w"), P("vision.conv3.b"), 16, 25, 13, 32));
  h = g.global_avg_pool(h, 32, 13, 7);
  (void)vdim;
  return linear(g, P, h, "vision.fc");
}

} // namespace detail

inline Forward forward_sample(Graph& g, const ModelConfig& cfg, ParamStore& ps,
                              const SampleInput& in, bool with_grad) {
  if (in.numeric.r != cfg.history || in.numeric.c != kNumericFeatures)
    throw std::invalid_argument("forward_sample: bad numeric shape");
  Forward out;
  detail::Binder P{g, ps, with_grad, out.params};

  Graph::Var x = g.input(in.numeric, false);
  if (cfg.use_vision) {
    if (in.vision_cache) {
      out.vision = g.input(*in.vision_cache, false);
    } else {
      if (static_cast<int>(in.rasters.size()) != cfg.history)
        throw std::invalid_argument("forward_sample: raster count != history");
      std::vector<Graph::Var> frames;
      for (const Mat& img : in.rasters)
        frames.push_back(detail::vision_frame(g, P, g.input(img, false), cfg.vision_dim));
      out.vision = g.concat_rows(frames);
    }
    x = g.concat_cols({x, out.vision});
  }
  x = detail::linear(g, P, x, "embed");
  x = g.add(x, g.input(positional_encoding(cfg.history, cfg.d_model), false));

  if (cfg.mlp_baseline) {
    Graph::Var h = g.reshape(x, 1, cfg.history * cfg.d_model);
    for (std::size_t i = 0; i < cfg.mlp_dims.size(); ++i)
      h = g.relu(detail::linear(g, P, h, "mlp" + std::to_string(i)));
    out.feat = h;
  } else {
    bool flipped = false;
    for (int i = 0; i < cfg.num_blocks; ++i) {
      if (cfg.swap && i > 0) {
        x = g.transpose(x);
        flipped = !flipped;
      }
      x = detail::encoder_block(g, P, x, cfg.block_dim(i), cfg.block_heads(i),
                                cfg.ff_mult, "block" + std::to_string(i));
    }
    if (flipped) x = g.transpose(x);
    out.feat = g.mean_rows(x);
  }

  auto head = [&](const std::string& name) {
    return detail::linear(
        g, P, g.relu(detail::linear(g, P, out.feat, name + ".1")), name + ".2");
  };
  out.lane = head("head_lane");
  out.vel = head("head_vel");
  const Graph::Var ctrl = g.reshape(head("head_bez"), 4, 2);
  out.bez_pos = g.matmul(g.input(bezier_eval_matrix(), false), ctrl);
  out.car = g.triu_to_sym(head("head_car"), kSlots);
  return out;
}

// Raw encoder output without heads; used to probe the mixing mechanism.
// `identity_blocks` replaces every block with the identity map while keeping
// the axis-alternation bookkeeping intact.
inline Graph::Var forward_encoder(Graph& g, const ModelConfig& cfg, ParamStore& ps,
                                  const Mat& embedded /* T x F, already embedded */,
                                  bool identity_blocks = false) {
  std::map<std::string, Graph::Var> vars;
  detail::Binder P{g, ps, false, vars};
  Graph::Var x = g.add(g.input(embedded, false),
                       g.input(positional_encoding(cfg.history, cfg.d_model), false));
  bool flipped = false;
  for (int i = 0; i < cfg.num_blocks; ++i) {
    if (cfg.swap && i > 0) {
      x = g.transpose(x);
      flipped = !flipped;
    }
    if (!identity_blocks)
      x = detail::encoder_block(g, P, x, cfg.block_dim(i), cfg.block_heads(i),
                                cfg.ff_mult, "block" + std::to_string(i));
  }
  if (flipped) x = g.transpose(x);
  return x;
}

// Embed one raster through the vision stack (no gradients); used by the
// closed-loop runner to cache per-frame embeddings.
inline Mat compute_vision_embedding(const ModelConfig& cfg, ParamStore& ps,
                                    const Mat& img) {
  Graph g;
  std::map<std::string, Graph::Var> vars;
  detail::Binder P{g, ps, false, vars};
  return g.val(detail::vision_frame(g, P, g.input(img, false), cfg.vision_dim));
}

// ---------------------------------------------------------------------------
// loss

struct SampleTarget {
  std::array<int, kHorizon> lane_cls{}; // 0..3 per horizon step
  Mat vel{1, kHorizon};                 // normalized /22.2
  Mat pos{kHorizon, 2};                 // local future poses /100
  Mat dist{kSlots, kSlots};             // pairwise distances /100
  Mat mask{kSlots, kSlots};             // distance validity
};

struct LossParts {
  double lane = 0.0, vel = 0.0, bez = 0.0, car = 0.0, total = 0.0;
};

inline Graph::Var build_loss(Graph& g, const ModelConfig& cfg, const Forward& f,
                             const SampleTarget& t, LossParts* parts = nullptr) {
  std::vector<Graph::Var> ces;
  for (int k = 0; k < kHorizon; ++k)
    ces.push_back(g.cross_entropy_logits(
        g.slice_cols(f.lane, k * kLaneClasses, kLaneClasses), t.lane_cls[k]));
  const Graph::Var lane_loss = g.scale(g.add_scalars(ces), 1.0 / kHorizon);
  const Graph::Var vel_loss = g.mse(f.vel, t.vel);
  std::vector<Graph::Var> terms = {lane_loss, vel_loss};
  Graph::Var bez_loss = -1, car_loss = -1;
  if (cfg.aux) {
    bez_loss = g.weighted_row_sqnorm(f.bez_pos, t.pos, bezier_point_weights());
    car_loss = g.masked_mse(f.car, t.dist, t.mask);
    terms.push_back(bez_loss);
    terms.push_back(car_loss);
  }
  const Graph::Var total = g.add_scalars(terms);
  if (parts) {
    parts->lane = g.val(lane_loss).at(0, 0);
    parts->vel = g.val(vel_loss).at(0, 0);
    parts->bez = cfg.aux ? g.val(bez_loss).at(0, 0) : 0.0;
    parts->car = cfg.aux ? g.val(car_loss).at(0, 0) : 0.0;
    parts->total = g.val(total).at(0, 0);
  }
  return total;
}

// Forward + loss for one sample; accumulates parameter gradients into `grads`
// when given. Returns the total loss.
inline double sample_loss_and_grads(const ModelConfig& cfg, ParamStore& ps,
                                    const SampleInput& in, const SampleTarget& t,
                                    std::map<std::string, Mat>* grads,
                                    LossParts* parts = nullptr) {
  Graph g;
  const Forward f = forward_sample(g, cfg, ps, in, grads != nullptr);
  const Graph::Var loss = build_loss(g, cfg, f, t, parts);
  if (grads) {
    g.backward(loss);
    for (const auto& [name, var] : f.params) {
      Mat& acc = (*grads)[name];
      const Mat& gm = g.grad(var);
      if (acc.size() != gm.size()) acc = Mat(gm.r, gm.c);
      for (std::size_t i = 0; i < gm.size(); ++i) acc.a[i] += gm.a[i];
    }
  }
  return g.val(loss).at(0, 0);
}

} // namespace osha::nn
