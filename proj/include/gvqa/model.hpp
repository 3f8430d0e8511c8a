// model.hpp — the graph-matching VQA network: embedding layers for both
// graphs, recurrent (GRU) neighborhood propagation, word/object matching
// weights, and the pooled answer classifier. Every ablation of the published
// comparison table is reachable through ModelConfig flags.
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gvqa/graphs.hpp"
#include "gvqa/init.hpp"
#include "gvqa/tape.hpp"

namespace gvqa {

struct ModelConfig {
  std::size_t hidden_dim = 300;  // H
  std::size_t t_question = 4;
  std::size_t t_scene = 4;
  Tape::Pool pool = Tape::Pool::mean;
  double dropout_rate = 0.3;

  enum class Head { softmax, logistic };
  Head head = Head::softmax;

  // ablation switches
  bool sequential_question_edges = false;  // previous/next chain instead of the parse
  bool no_pretrained_embeddings = false;   // ignore any supplied embedding file
  bool unit_scene_edges = false;           // all-ones edge features before projection
  bool disable_gru_question = false;       // x'' = x'
  bool disable_gru_scene = false;
  bool uniform_attention = false;          // a_ij = 1
  bool blind = false;                      // scene content replaced by a single zero node
  bool share_grus = false;                 // one GRU parameter set for both graphs
};

inline const char* head_name(ModelConfig::Head h) {
  return h == ModelConfig::Head::softmax ? "softmax" : "logistic";
}

inline ModelConfig::Head head_from_name(const std::string& s) {
  if (s == "softmax") return ModelConfig::Head::softmax;
  if (s == "logistic") return ModelConfig::Head::logistic;
  throw Error("unknown head '" + s + "' (expected softmax or logistic)");
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["hidden_dim"] = c.hidden_dim;
  j["t_question"] = c.t_question;
  j["t_scene"] = c.t_scene;
  j["dropout_rate"] = c.dropout_rate;
  j["head"] = head_name(c.head);
  j["sequential_question_edges"] = c.sequential_question_edges;
  j["no_pretrained_embeddings"] = c.no_pretrained_embeddings;
  j["unit_scene_edges"] = c.unit_scene_edges;
  j["disable_gru_question"] = c.disable_gru_question;
  j["disable_gru_scene"] = c.disable_gru_scene;
  j["uniform_attention"] = c.uniform_attention;
  j["blind"] = c.blind;
  j["share_grus"] = c.share_grus;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.t_question = j.at("t_question").get<std::size_t>();
  c.t_scene = j.at("t_scene").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.head = head_from_name(j.at("head").get<std::string>());
  c.sequential_question_edges = j.at("sequential_question_edges").get<bool>();
  c.no_pretrained_embeddings = j.at("no_pretrained_embeddings").get<bool>();
  c.unit_scene_edges = j.at("unit_scene_edges").get<bool>();
  c.disable_gru_question = j.at("disable_gru_question").get<bool>();
  c.disable_gru_scene = j.at("disable_gru_scene").get<bool>();
  c.uniform_attention = j.at("uniform_attention").get<bool>();
  c.blind = j.at("blind").get<bool>();
  c.share_grus = j.at("share_grus").get<bool>();
  return c;
}

inline const Tensor& param_at(const ParamStore& store, const std::string& name) {
  auto it = store.find(name);
  if (it == store.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

// All learned tensors, addressable by name for gradients, optimizer state,
// checkpoints, and gradient checking.
struct ModelParams {
  ParamStore tensors;

  Tensor& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
  }
  const Tensor& at(const std::string& name) const { return param_at(tensors, name); }
  bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

namespace detail {

inline void add_gru_params(ModelParams& p, const std::string& prefix, std::size_t hidden,
                           std::uint64_t seed, std::uint64_t& counter) {
  const std::size_t input = 2 * hidden;
  for (const char* gate : {"update", "reset", "cand"}) {
    p.tensors[prefix + "." + gate + "_w"] = glorot_init({hidden, input}, mix_seed(seed, counter++));
    p.tensors[prefix + "." + gate + "_u"] = glorot_init({hidden, hidden}, mix_seed(seed, counter++));
    p.tensors[prefix + "." + gate + "_b"] = Tensor({hidden});
  }
}

}  // namespace detail

inline ModelParams init_params(const VocabSet& vocab, std::size_t scene_node_dim,
                               const ModelConfig& cfg, std::uint64_t seed) {
  if (vocab.answers.empty()) throw Error("cannot build a model over an empty answer vocabulary");
  const std::size_t h = cfg.hidden_dim;
  ModelParams p;
  std::uint64_t k = 0;
  p.tensors["word_emb"] = glorot_init({vocab.words.size(), h}, mix_seed(seed, k++));
  p.tensors["dep_emb"] = glorot_init({vocab.deps.size(), h}, mix_seed(seed, k++));
  p.tensors["scene_node_w"] = glorot_init({h, scene_node_dim}, mix_seed(seed, k++));
  p.tensors["scene_node_b"] = Tensor({h});
  p.tensors["scene_edge_w"] = glorot_init({h, kSceneEdgeDim}, mix_seed(seed, k++));
  p.tensors["scene_edge_b"] = Tensor({h});
  detail::add_gru_params(p, "gru_q", h, seed, k);
  if (!cfg.share_grus) detail::add_gru_params(p, "gru_s", h, seed, k);
  p.tensors["attn_w"] = glorot_init({1, h}, mix_seed(seed, k++));
  p.tensors["attn_b"] = Tensor({1});
  p.tensors["hidden_w"] = glorot_init({h, 2 * h}, mix_seed(seed, k++));
  p.tensors["hidden_b"] = Tensor({h});
  p.tensors["out_w"] = glorot_init({vocab.answers.size(), h}, mix_seed(seed, k++));
  p.tensors["out_b"] = Tensor({vocab.answers.size()});
  return p;
}

// Node/edge embeddings of one graph on a tape, plus its (aggregator, neighbor)
// adjacency. Edge features gate the neighbor's features during pooling.
struct GraphEmbeds {
  struct Edge {
    std::size_t node;
    std::size_t neighbor;
    Var feat;
  };
  std::vector<Var> nodes;
  std::vector<Edge> edges;
};

inline GraphEmbeds embed_question(Tape& t, const QuestionGraph& g, const ParamStore& p,
                                  const ModelConfig& cfg) {
  GraphEmbeds e;
  Var words = t.param("word_emb", param_at(p, "word_emb"));
  Var deps = t.param("dep_emb", param_at(p, "dep_emb"));
  for (std::size_t tok : g.tokens) e.nodes.push_back(t.row(words, tok));
  if (cfg.sequential_question_edges) {
    for (std::size_t i = 0; i + 1 < g.tokens.size(); ++i) {
      e.edges.push_back({i, i + 1, t.row(deps, kSeqNextLabel)});
      e.edges.push_back({i + 1, i, t.row(deps, kSeqPrevLabel)});
    }
  } else {
    for (const QuestionGraph::Edge& ed : g.edges)
      e.edges.push_back({ed.node, ed.neighbor, t.row(deps, ed.label)});
  }
  return e;
}

inline GraphEmbeds embed_scene(Tape& t, const SceneGraph& g, const ParamStore& p,
                               const ModelConfig& cfg) {
  GraphEmbeds e;
  Var w = t.param("scene_node_w", param_at(p, "scene_node_w"));
  Var b = t.param("scene_node_b", param_at(p, "scene_node_b"));
  if (cfg.blind) {
    // question-only baseline: one contentless object, no edges
    const std::size_t dim = param_at(p, "scene_node_w").cols();
    e.nodes.push_back(t.affine(w, t.constant(Tensor({dim})), b));
    return e;
  }
  Var we = t.param("scene_edge_w", param_at(p, "scene_edge_w"));
  Var be = t.param("scene_edge_b", param_at(p, "scene_edge_b"));
  for (const Tensor& f : g.node_features) e.nodes.push_back(t.affine(w, t.constant(f), b));
  for (const auto& [key, feat] : g.edges) {
    Var input = cfg.unit_scene_edges ? t.constant(Tensor::ones({kSceneEdgeDim}))
                                     : t.constant(feat);
    e.edges.push_back({key.first, key.second, t.affine(we, input, be)});
  }
  return e;
}

// T rounds of gated recurrent updates per node. The neighbor context n_i is
// pooled once from the initial embeddings and the GRU input [x'_i ; n_i] stays
// fixed across iterations; nodes without neighbors use n_i = 0.
inline std::vector<Var> propagate(Tape& t, const GraphEmbeds& g, const ParamStore& p,
                                  const std::string& gru, std::size_t iterations,
                                  Tape::Pool pool) {
  if (iterations == 0) return g.nodes;
  const std::size_t n = g.nodes.size();
  const std::size_t h = t.value(g.nodes[0]).numel();

  std::vector<std::vector<Var>> messages(n);
  for (const GraphEmbeds::Edge& e : g.edges)
    messages[e.node].push_back(t.hadamard(e.feat, g.nodes[e.neighbor]));

  Var wz = t.param(gru + ".update_w", param_at(p, gru + ".update_w"));
  Var uz = t.param(gru + ".update_u", param_at(p, gru + ".update_u"));
  Var bz = t.param(gru + ".update_b", param_at(p, gru + ".update_b"));
  Var wr = t.param(gru + ".reset_w", param_at(p, gru + ".reset_w"));
  Var ur = t.param(gru + ".reset_u", param_at(p, gru + ".reset_u"));
  Var br = t.param(gru + ".reset_b", param_at(p, gru + ".reset_b"));
  Var wh = t.param(gru + ".cand_w", param_at(p, gru + ".cand_w"));
  Var uh = t.param(gru + ".cand_u", param_at(p, gru + ".cand_u"));
  Var bh = t.param(gru + ".cand_b", param_at(p, gru + ".cand_b"));

  Var zero_state = t.constant(Tensor({h}));
  Var ones = t.constant(Tensor::ones({h}));

  std::vector<Var> states(n);
  for (std::size_t i = 0; i < n; ++i) {
    Var context = messages[i].empty() ? t.constant(Tensor({h})) : t.set_pool(pool, messages[i]);
    Var input = t.concat(g.nodes[i], context);
    Var state = zero_state;
    for (std::size_t step = 0; step < iterations; ++step) {
      Var z = t.sigmoid(t.add(t.add(t.matmul(wz, input), t.matmul(uz, state)), bz));
      Var r = t.sigmoid(t.add(t.add(t.matmul(wr, input), t.matmul(ur, state)), br));
      Var cand =
          t.tanh(t.add(t.add(t.matmul(wh, input), t.matmul(uh, t.hadamard(r, state))), bh));
      state = t.add(t.hadamard(z, state), t.hadamard(t.sub(ones, z), cand));
    }
    states[i] = state;
  }
  return states;
}

// a_ij = sigma(W (x_i / |x_i|) o (x_j / |x_j|) + b), from pre-GRU embeddings.
inline std::vector<std::vector<Var>> matching_weights(Tape& t, const std::vector<Var>& question,
                                                      const std::vector<Var>& scene,
                                                      const ParamStore& p, bool uniform) {
  std::vector<std::vector<Var>> a(question.size(), std::vector<Var>(scene.size()));
  if (uniform) {
    Var one = t.constant(Tensor::scalar(1.0));
    for (auto& row : a)
      for (Var& cell : row) cell = one;
    return a;
  }
  Var w = t.param("attn_w", param_at(p, "attn_w"));
  Var b = t.param("attn_b", param_at(p, "attn_b"));
  std::vector<Var> qn, sn;
  for (Var v : question) qn.push_back(t.l2_normalize(v));
  for (Var v : scene) sn.push_back(t.l2_normalize(v));
  for (std::size_t i = 0; i < question.size(); ++i)
    for (std::size_t j = 0; j < scene.size(); ++j)
      a[i][j] = t.sigmoid(t.add(t.matmul(w, t.hadamard(qn[i], sn[j])), b));
  return a;
}

// y_ij = a_ij [x''q_i ; x''s_j]; per-word ReLU projection of the scene sum;
// dropout on the word sum while training; final affine plus the head.
inline Var classify(Tape& t, const std::vector<std::vector<Var>>& attention,
                    const std::vector<Var>& question_states,
                    const std::vector<Var>& scene_states, const ParamStore& p,
                    const ModelConfig& cfg, bool training, Rng* dropout_rng) {
  Var w6 = t.param("hidden_w", param_at(p, "hidden_w"));
  Var b6 = t.param("hidden_b", param_at(p, "hidden_b"));
  Var w7 = t.param("out_w", param_at(p, "out_w"));
  Var b7 = t.param("out_b", param_at(p, "out_b"));
  std::vector<Var> per_word;
  for (std::size_t i = 0; i < question_states.size(); ++i) {
    std::vector<Var> weighted;
    for (std::size_t j = 0; j < scene_states.size(); ++j)
      weighted.push_back(t.smul(attention[i][j], t.concat(question_states[i], scene_states[j])));
    Var scene_sum = t.set_pool(Tape::Pool::sum, weighted);
    per_word.push_back(t.relu(t.affine(w6, scene_sum, b6)));
  }
  Var pooled = t.set_pool(Tape::Pool::sum, per_word);
  if (training && cfg.dropout_rate > 0.0) {
    if (!dropout_rng) throw Error("training-mode classify needs a dropout RNG");
    pooled = t.dropout(pooled, cfg.dropout_rate, *dropout_rng);
  }
  Var logits = t.affine(w7, pooled, b7);
  return cfg.head == ModelConfig::Head::softmax ? t.softmax(logits) : t.sigmoid(logits);
}

struct ForwardVars {
  Var scores;
  std::vector<std::vector<Var>> attention;
  std::vector<Var> question_states;
  std::vector<Var> scene_states;
};

inline ForwardVars forward_on_tape(Tape& t, const SceneGraph& scene, const QuestionGraph& question,
                                   const ParamStore& p, const ModelConfig& cfg, bool training,
                                   Rng* dropout_rng) {
  GraphEmbeds q = embed_question(t, question, p, cfg);
  GraphEmbeds s = embed_scene(t, scene, p, cfg);
  ForwardVars out;
  out.attention = matching_weights(t, q.nodes, s.nodes, p, cfg.uniform_attention);
  const std::size_t tq = cfg.disable_gru_question ? 0 : cfg.t_question;
  const std::size_t ts = cfg.disable_gru_scene ? 0 : cfg.t_scene;
  out.question_states = propagate(t, q, p, "gru_q", tq, cfg.pool);
  out.scene_states = propagate(t, s, p, cfg.share_grus ? "gru_q" : "gru_s", ts, cfg.pool);
  out.scores =
      classify(t, out.attention, out.question_states, out.scene_states, p, cfg, training, dropout_rng);
  return out;
}

inline ForwardVars forward_on_tape(Tape& t, const SceneGraph& scene, const QuestionGraph& question,
                                   const ModelParams& p, const ModelConfig& cfg, bool training,
                                   Rng* dropout_rng) {
  return forward_on_tape(t, scene, question, p.tensors, cfg, training, dropout_rng);
}

struct ForwardResult {
  Tensor scores;     // y'' over the answer vocabulary
  Tensor attention;  // N_Q x N_S matching weights
  std::vector<Tensor> question_states;
  std::vector<Tensor> scene_states;
};

inline ForwardResult extract_result(const Tape& t, const ForwardVars& v) {
  ForwardResult r;
  r.scores = t.value(v.scores);
  const std::size_t nq = v.attention.size();
  const std::size_t ns = nq ? v.attention[0].size() : 0;
  r.attention = Tensor({nq, ns});
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t j = 0; j < ns; ++j) r.attention.at(i, j) = t.value(v.attention[i][j]).at(0);
  for (Var q : v.question_states) r.question_states.push_back(t.value(q));
  for (Var s : v.scene_states) r.scene_states.push_back(t.value(s));
  return r;
}

// Deterministic evaluation-mode forward pass on a fresh tape.
inline ForwardResult forward(const SceneGraph& scene, const QuestionGraph& question,
                             const ParamStore& p, const ModelConfig& cfg) {
  Tape t;
  ForwardVars v = forward_on_tape(t, scene, question, p, cfg, /*training=*/false, nullptr);
  return extract_result(t, v);
}

inline ForwardResult forward(const SceneGraph& scene, const QuestionGraph& question,
                             const ModelParams& p, const ModelConfig& cfg) {
  return forward(scene, question, p.tensors, cfg);
}

}  // namespace gvqa
