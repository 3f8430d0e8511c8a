// synthetic.hpp — deterministic desk-scale datasets of balanced complementary
// scene pairs with template questions, emitted in the exact file formats the
// ingest module reads. Every question's answer is computable from the scene by
// its template rule, and each pair differs by a single object edit that flips
// a yes/no answer.
#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "gvqa/graphs.hpp"
#include "gvqa/ingest.hpp"

namespace gvqa {

struct SceneTemplate {
  Manifest manifest;
  std::vector<std::size_t> type_category;  // type index -> category index
  std::size_t grid = 8;                    // grid x grid placement cells
  std::size_t min_objects = 3;
  std::size_t max_objects = 6;
  std::size_t planes = 3;

  static SceneTemplate standard() {
    SceneTemplate st;
    st.manifest.categories = {"animal", "human", "large", "small"};
    st.manifest.types = {"dog",  "cat",   "bird",  "snake",   // animal
                         "boy",  "girl",  "man",   "woman",   // human
                         "tree", "table", "slide", "swing",   // large
                         "ball", "hat",   "book",  "cup"};    // small
    st.manifest.expressions = {"neutral", "happy", "sad",    "angry",
                               "surprised", "scared", "laughing", "sleepy"};
    st.type_category = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3};
    return st;
  }
};

enum class QuestionKind { presence, count, left_of, nearest };

struct TemplateInstance {
  QuestionKind kind = QuestionKind::presence;
  std::string type_a;  // queried type
  std::string type_b;  // anchor type for relational templates
};

class UnknownTemplateError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::size_t first_of_type(const SceneGraph& g, std::size_t type) {
  for (std::size_t i = 0; i < g.objects.size(); ++i)
    if (g.objects[i].type == type) return i;
  return g.objects.size();
}

inline double sq_dist(const ObjectNode& a, const ObjectNode& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// strictly nearest other object to `anchor`, or npos on a tie
inline std::size_t strict_nearest(const SceneGraph& g, std::size_t anchor) {
  std::size_t best = g.objects.size();
  double best_d = 0.0;
  bool tie = false;
  for (std::size_t i = 0; i < g.objects.size(); ++i) {
    if (i == anchor) continue;
    const double d = sq_dist(g.objects[i], g.objects[anchor]);
    if (best == g.objects.size() || d < best_d) {
      best = i;
      best_d = d;
      tie = false;
    } else if (d == best_d) {
      tie = true;
    }
  }
  return tie ? g.objects.size() : best;
}

}  // namespace detail

// Ground-truth answer by direct rule evaluation over the scene.
inline std::string answer_oracle(const SceneGraph& scene, const TemplateInstance& q,
                                 const Manifest& manifest) {
  const std::size_t type_a = detail::index_of(manifest.types, q.type_a);
  switch (q.kind) {
    case QuestionKind::presence:
      return detail::first_of_type(scene, type_a) < scene.objects.size() ? "yes" : "no";
    case QuestionKind::count: {
      std::size_t n = 0;
      for (const ObjectNode& o : scene.objects)
        if (o.type == type_a) ++n;
      return std::to_string(n);
    }
    case QuestionKind::left_of: {
      const std::size_t type_b = detail::index_of(manifest.types, q.type_b);
      const std::size_t a = detail::first_of_type(scene, type_a);
      const std::size_t b = detail::first_of_type(scene, type_b);
      if (a >= scene.objects.size() || b >= scene.objects.size()) return "no";
      // equal x breaks to "no"
      return scene.objects[a].x < scene.objects[b].x ? "yes" : "no";
    }
    case QuestionKind::nearest: {
      const std::size_t type_b = detail::index_of(manifest.types, q.type_b);
      const std::size_t b = detail::first_of_type(scene, type_b);
      if (b >= scene.objects.size()) return "no";
      const std::size_t n = detail::strict_nearest(scene, b);
      if (n >= scene.objects.size()) return "no";
      return scene.objects[n].type == type_a ? "yes" : "no";
    }
  }
  throw UnknownTemplateError("unknown question template");
}

// Recovers the template instance from a question's surface form; used to run
// the oracle against re-ingested files.
inline TemplateInstance parse_template(const std::vector<std::string>& forms) {
  if (forms.size() == 4 && forms[0] == "is" && forms[1] == "there")
    return {QuestionKind::presence, forms[3], ""};
  if (forms.size() == 7 && forms[0] == "is" && forms[3] == "left")
    return {QuestionKind::left_of, forms[2], forms[6]};
  if (forms.size() == 7 && forms[0] == "is" && forms[3] == "closest")
    return {QuestionKind::nearest, forms[2], forms[6]};
  if (forms.size() == 5 && forms[0] == "how" && forms[1] == "many")
    return {QuestionKind::count, forms[2], ""};
  std::string joined;
  for (const std::string& f : forms) joined += f + " ";
  throw UnknownTemplateError("question does not match a known template: " + joined);
}

// Fixed per-template dependency skeletons standing in for a real parser.
inline std::vector<ParseRow> template_rows(const TemplateInstance& q) {
  switch (q.kind) {
    case QuestionKind::presence:
      return {{"is", 0, "root"}, {"there", 1, "expl"}, {"a", 4, "det"}, {q.type_a, 1, "nsubj"}};
    case QuestionKind::count:
      return {{"how", 2, "advmod"},
              {"many", 3, "amod"},
              {q.type_a, 4, "nsubj"},
              {"are", 0, "root"},
              {"there", 4, "expl"}};
    case QuestionKind::left_of:
      return {{"is", 0, "root"},   {"the", 3, "det"}, {q.type_a, 1, "nsubj"},
              {"left", 1, "acomp"}, {"of", 7, "case"}, {"the", 7, "det"},
              {q.type_b, 4, "nmod"}};
    case QuestionKind::nearest:
      return {{"is", 0, "root"},      {"the", 3, "det"}, {q.type_a, 1, "nsubj"},
              {"closest", 1, "acomp"}, {"to", 7, "case"}, {"the", 7, "det"},
              {q.type_b, 4, "nmod"}};
  }
  throw UnknownTemplateError("unknown question template");
}

struct BalancedPair {
  SceneGraph scene_yes;  // answer "yes"
  SceneGraph scene_no;   // answer "no"
  TemplateInstance question;
};

namespace detail {

struct Cell {
  std::size_t col = 0, row = 0;
};

inline double cell_x(std::size_t col, std::size_t grid) {
  return (static_cast<double>(col) + 0.5) / static_cast<double>(grid);
}

// Objects never share a row or a column: the clamped inverse-distance edge
// features stay bounded by grid spacing instead of spiking to 1/delta.
inline std::vector<Cell> free_cells(const SceneGraph& g, const SceneTemplate& st,
                                    std::size_t skip_object) {
  std::set<std::size_t> cols, rows;
  for (std::size_t i = 0; i < g.objects.size(); ++i) {
    if (i == skip_object) continue;
    cols.insert(static_cast<std::size_t>(g.objects[i].x * static_cast<double>(st.grid)));
    rows.insert(static_cast<std::size_t>(g.objects[i].y * static_cast<double>(st.grid)));
  }
  std::vector<Cell> out;
  for (std::size_t c = 0; c < st.grid; ++c)
    for (std::size_t r = 0; r < st.grid; ++r)
      if (!cols.count(c) && !rows.count(r)) out.push_back({c, r});
  return out;
}

// Appearance (expression and pose scalars) is a fixed per-type pattern:
// per-instance appearance noise would let a desk-scale model fingerprint
// individual scenes instead of learning the template rules.
inline void set_type(ObjectNode& o, std::size_t type, const SceneTemplate& st) {
  o.type = type;
  o.category = st.type_category[type];
  o.expression = type % st.manifest.expressions.size();
  for (std::size_t k = 0; k < kPoseScalars; ++k)
    o.pose[k] = 0.1 * static_cast<double>((type * 7 + k * 3) % 10);
}

inline void refresh_derived(SceneGraph& g, const Manifest& manifest) {
  g.node_features.clear();
  for (const ObjectNode& o : g.objects) g.node_features.push_back(assemble_node_features(o, manifest));
  g.edges = build_scene_edges(g.objects);
}

inline SceneGraph random_scene(Rng& rng, const SceneTemplate& st) {
  SceneGraph g;
  const std::size_t n = st.min_objects + rng.below(st.max_objects - st.min_objects + 1);
  std::vector<std::size_t> types(st.manifest.types.size());
  for (std::size_t i = 0; i < types.size(); ++i) types[i] = i;
  rng.shuffle(types);
  std::vector<std::size_t> cols(st.grid), rows(st.grid);
  for (std::size_t i = 0; i < st.grid; ++i) cols[i] = rows[i] = i;
  rng.shuffle(cols);
  rng.shuffle(rows);
  for (std::size_t i = 0; i < n; ++i) {
    ObjectNode o;
    set_type(o, types[i], st);  // distinct types keep template rules unambiguous
    o.x = cell_x(cols[i], st.grid);
    o.y = cell_x(rows[i], st.grid);
    o.plane = static_cast<int>(rng.below(st.planes));
    g.objects.push_back(o);
  }
  refresh_derived(g, st.manifest);
  return g;
}

inline BalancedPair presence_pair(Rng& rng, const SceneTemplate& st) {
  BalancedPair p;
  p.scene_yes = random_scene(rng, st);
  const std::size_t o = rng.below(p.scene_yes.objects.size());
  p.question = {QuestionKind::presence, st.manifest.types[p.scene_yes.objects[o].type], ""};
  p.scene_no = p.scene_yes;
  const bool can_remove = p.scene_no.objects.size() > st.min_objects;
  if (can_remove && rng.uniform() < 0.5) {
    p.scene_no.objects.erase(p.scene_no.objects.begin() + static_cast<std::ptrdiff_t>(o));
  } else {
    std::set<std::size_t> present;
    for (const ObjectNode& ob : p.scene_no.objects) present.insert(ob.type);
    std::vector<std::size_t> absent;
    for (std::size_t ty = 0; ty < st.manifest.types.size(); ++ty)
      if (!present.count(ty)) absent.push_back(ty);
    set_type(p.scene_no.objects[o], absent[rng.below(absent.size())], st);
  }
  refresh_derived(p.scene_no, st.manifest);
  return p;
}

inline bool try_left_of_pair(Rng& rng, const SceneTemplate& st, BalancedPair& out) {
  SceneGraph a = random_scene(rng, st);
  const std::size_t n = a.objects.size();
  const std::size_t o1 = rng.below(n);
  const std::size_t o2 = rng.below(n);
  if (o1 == o2 || a.objects[o1].x == a.objects[o2].x) return false;
  TemplateInstance q{QuestionKind::left_of, st.manifest.types[a.objects[o1].type],
                     st.manifest.types[a.objects[o2].type]};
  const bool a_yes = a.objects[o1].x < a.objects[o2].x;
  // move o1 strictly to the other side of o2
  std::vector<Cell> cells = free_cells(a, st, o1);
  std::vector<Cell> valid;
  for (const Cell& c : cells) {
    const double x = cell_x(c.col, st.grid);
    if (a_yes ? x > a.objects[o2].x : x < a.objects[o2].x) valid.push_back(c);
  }
  if (valid.empty()) return false;
  SceneGraph b = a;
  const Cell c = valid[rng.below(valid.size())];
  b.objects[o1].x = cell_x(c.col, st.grid);
  b.objects[o1].y = cell_x(c.row, st.grid);
  refresh_derived(b, st.manifest);
  out.question = q;
  out.scene_yes = a_yes ? std::move(a) : std::move(b);
  out.scene_no = a_yes ? std::move(b) : std::move(a);
  return true;
}

inline bool try_nearest_pair(Rng& rng, const SceneTemplate& st, BalancedPair& out) {
  SceneGraph a = random_scene(rng, st);
  const std::size_t n = a.objects.size();
  const std::size_t anchor = rng.below(n);
  const std::size_t near = strict_nearest(a, anchor);
  if (near >= n) return false;
  // yes-case: ask about the current nearest, then move it far away
  TemplateInstance q{QuestionKind::nearest, st.manifest.types[a.objects[near].type],
                     st.manifest.types[a.objects[anchor].type]};
  std::vector<Cell> cells = free_cells(a, st, near);
  if (cells.empty()) return false;
  double far_d = -1.0;
  Cell far{};
  for (const Cell& c : cells) {
    ObjectNode probe = a.objects[near];
    probe.x = cell_x(c.col, st.grid);
    probe.y = cell_x(c.row, st.grid);
    const double d = sq_dist(probe, a.objects[anchor]);
    if (d > far_d) {
      far_d = d;
      far = c;
    }
  }
  SceneGraph b = a;
  b.objects[near].x = cell_x(far.col, st.grid);
  b.objects[near].y = cell_x(far.row, st.grid);
  refresh_derived(b, st.manifest);
  if (answer_oracle(b, q, st.manifest) != "no") return false;
  out.question = q;
  out.scene_yes = std::move(a);
  out.scene_no = std::move(b);
  return true;
}

}  // namespace detail

// Presence pairs dominate by default: at desk scale the relational templates
// sit near chance for this model and mostly add label noise to the shared
// word embeddings. Their fractions are dialed in through GenOptions.
inline BalancedPair make_pair(Rng& rng, const SceneTemplate& st, double left_of_fraction,
                              double nearest_fraction) {
  const double pick = rng.uniform();
  BalancedPair p;
  if (pick < left_of_fraction) {
    for (int tries = 0; tries < 64; ++tries)
      if (detail::try_left_of_pair(rng, st, p)) return p;
  } else if (pick < left_of_fraction + nearest_fraction) {
    for (int tries = 0; tries < 64; ++tries)
      if (detail::try_nearest_pair(rng, st, p)) return p;
  }
  return detail::presence_pair(rng, st);
}

struct GenOptions {
  std::uint64_t seed = 0;
  std::size_t pairs = 100;
  double disagreement_rate = 0.0;  // fraction of pairs given an ambiguous member
  double left_of_fraction = 0.0;
  double nearest_fraction = 0.0;
};

struct Generated {
  Manifest manifest;
  std::vector<SceneGraph> scenes;     // two per pair
  std::vector<QaInstance> instances;  // positionally aligned with scenes
};

inline Generated generate_dataset(const GenOptions& opt, const SceneTemplate& st) {
  Generated g;
  g.manifest = st.manifest;
  char buf[32];
  for (std::size_t p = 0; p < opt.pairs; ++p) {
    Rng rng(mix_seed(opt.seed, p));
    BalancedPair pair = make_pair(rng, st, opt.left_of_fraction, opt.nearest_fraction);
    if (answer_oracle(pair.scene_yes, pair.question, st.manifest) != "yes" ||
        answer_oracle(pair.scene_no, pair.question, st.manifest) != "no")
      throw Error("generated pair violates its template rule");

    const bool flip = rng.uniform() < 0.5;  // emission order carries no signal
    std::array<const SceneGraph*, 2> order = {&pair.scene_yes, &pair.scene_no};
    std::array<const char*, 2> answers = {"yes", "no"};
    if (flip) {
      std::swap(order[0], order[1]);
      std::swap(answers[0], answers[1]);
    }
    const bool ambiguous = opt.disagreement_rate > 0.0 && rng.uniform() < opt.disagreement_rate;
    const std::size_t ambiguous_member = rng.below(2);

    std::snprintf(buf, sizeof(buf), "p%06zu", p);
    const std::string pair_id = buf;
    for (std::size_t member = 0; member < 2; ++member) {
      SceneGraph scene = *order[member];
      std::snprintf(buf, sizeof(buf), "s%06zu", g.scenes.size());
      scene.id = buf;
      QaInstance inst;
      std::snprintf(buf, sizeof(buf), "q%06zu", g.instances.size());
      inst.qid = buf;
      inst.rows = template_rows(pair.question);
      inst.scene_index = g.scenes.size();
      inst.pair_id = pair_id;
      inst.choices = {"no", "yes"};
      if (ambiguous && member == ambiguous_member) {
        const std::string opposite = std::string(answers[member]) == "yes" ? "no" : "yes";
        inst.answer_counts = {{answers[member], 3}, {opposite, 3}, {"maybe", 2}, {"unsure", 2}};
      } else {
        inst.answer_counts = {{answers[member], 10}};
      }
      g.scenes.push_back(std::move(scene));
      g.instances.push_back(std::move(inst));
    }
  }
  return g;
}

inline void write_generated(const std::string& dir, const Generated& g) {
  write_manifest(dir + "/manifest.json", g.manifest);
  write_scene_file(dir + "/scenes.jsonl", g.scenes, g.manifest);
  write_question_file(dir + "/questions.conllu", g.instances);
}

// Single labeled instance (a scene and a presence question) with a minimal
// vocabulary, used by gradient probes.
struct ProbeInstance {
  Manifest manifest;
  VocabSet vocab;
  SceneGraph scene;
  QuestionGraph question;
};

inline ProbeInstance make_probe_instance(std::uint64_t seed, std::size_t objects = 3) {
  SceneTemplate st = SceneTemplate::standard();
  st.min_objects = st.max_objects = objects;
  Rng rng(seed);
  ProbeInstance p;
  p.manifest = st.manifest;
  p.scene = detail::random_scene(rng, st);
  const std::size_t target = rng.below(p.scene.objects.size());
  TemplateInstance q{QuestionKind::presence,
                     st.manifest.types[p.scene.objects[target].type], ""};
  RawQuestion raw;
  raw.qid = "probe";
  raw.rows = template_rows(q);
  p.vocab = build_vocabs({raw}, 1);
  p.vocab.answers = {"no", "yes"};
  p.vocab.rebuild_indices();
  p.question = to_question_graph(raw, p.vocab);
  return p;
}

}  // namespace gvqa
