// ingest.hpp — readers and writers for the dataset files: scene JSONL,
// CoNLL-style question parses, manifests, and pretrained embedding text files.
// Also builds vocabularies and feature normalization statistics.
#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gvqa/graphs.hpp"
#include "gvqa/init.hpp"
#include "gvqa/tensor.hpp"

namespace gvqa {

namespace detail {

inline std::string lower_trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

template <class T>
std::size_t index_of(const std::vector<T>& v, const T& x) {
  auto it = std::find(v.begin(), v.end(), x);
  return it == v.end() ? v.size() : static_cast<std::size_t>(it - v.begin());
}

}  // namespace detail

// ---- manifest ---------------------------------------------------------------

inline Manifest load_manifest(const std::string& path) {
  auto in = detail::open_input(path);
  nlohmann::json j;
  in >> j;
  Manifest m;
  m.categories = j.at("categories").get<std::vector<std::string>>();
  m.types = j.at("types").get<std::vector<std::string>>();
  m.expressions = j.at("expressions").get<std::vector<std::string>>();
  return m;
}

inline void write_manifest(const std::string& path, const Manifest& m) {
  auto out = detail::open_output(path);
  nlohmann::json j;
  j["categories"] = m.categories;
  j["types"] = m.types;
  j["expressions"] = m.expressions;
  out << j.dump() << '\n';
}

// ---- scene graphs -----------------------------------------------------------

constexpr double kInverseDistanceClamp = 1e-2;

// e_ij = [xj-xi, yj-yi, 1/max(|xj-xi|, d), 1/max(|yj-yi|, d), depth-sign]
// with depth-sign +1 when j sits on a closer (higher) plane than i.
inline std::map<std::pair<std::size_t, std::size_t>, Tensor> build_scene_edges(
    const std::vector<ObjectNode>& objects) {
  std::map<std::pair<std::size_t, std::size_t>, Tensor> edges;
  for (std::size_t i = 0; i < objects.size(); ++i)
    for (std::size_t j = 0; j < objects.size(); ++j) {
      if (i == j) continue;
      const ObjectNode& a = objects[i];
      const ObjectNode& b = objects[j];
      const double dx = b.x - a.x;
      const double dy = b.y - a.y;
      Tensor e({kSceneEdgeDim});
      e.at(0) = dx;
      e.at(1) = dy;
      e.at(2) = 1.0 / std::max(std::abs(dx), kInverseDistanceClamp);
      e.at(3) = 1.0 / std::max(std::abs(dy), kInverseDistanceClamp);
      e.at(4) = b.plane > a.plane ? 1.0 : -1.0;
      edges[{i, j}] = std::move(e);
    }
  return edges;
}

inline Tensor assemble_node_features(const ObjectNode& o, const Manifest& m) {
  Tensor f({m.node_feature_dim()});
  std::size_t off = 0;
  f.at(off + o.category) = 1.0;
  off += m.categories.size();
  f.at(off + o.type) = 1.0;
  off += m.types.size();
  f.at(off + o.expression) = 1.0;
  off += m.expressions.size();
  for (std::size_t k = 0; k < kPoseScalars; ++k) f.at(off + k) = o.pose[k];
  return f;
}

inline std::vector<SceneGraph> load_scene_file(const std::string& path, const Manifest& manifest) {
  auto in = detail::open_input(path);
  std::vector<SceneGraph> scenes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": bad scene JSON: " + e.what());
    }
    SceneGraph g;
    g.id = j.value("scene_id", "scene" + std::to_string(lineno));
    const auto& objs = j.at("objects");
    if (objs.empty())
      throw ParseError(path + ":" + std::to_string(lineno) + ": empty scene '" + g.id + "'");
    for (const auto& oj : objs) {
      ObjectNode o;
      const std::string cat = oj.at("category").get<std::string>();
      const std::string typ = oj.at("type").get<std::string>();
      const std::string expr = oj.at("expression").get<std::string>();
      o.category = detail::index_of(manifest.categories, cat);
      o.type = detail::index_of(manifest.types, typ);
      o.expression = detail::index_of(manifest.expressions, expr);
      if (o.category == manifest.categories.size())
        throw ParseError("scene '" + g.id + "': unknown category '" + cat + "'");
      if (o.type == manifest.types.size())
        throw ParseError("scene '" + g.id + "': unknown type '" + typ + "'");
      if (o.expression == manifest.expressions.size())
        throw ParseError("scene '" + g.id + "': unknown expression '" + expr + "'");
      const auto pose = oj.at("pose").get<std::vector<double>>();
      if (pose.size() != kPoseScalars)
        throw ParseError("scene '" + g.id + "': expected " + std::to_string(kPoseScalars) +
                         " pose scalars, got " + std::to_string(pose.size()));
      std::copy(pose.begin(), pose.end(), o.pose.begin());
      o.x = oj.at("x").get<double>();
      o.y = oj.at("y").get<double>();
      o.plane = oj.at("plane").get<int>();
      g.objects.push_back(o);
    }
    for (const ObjectNode& o : g.objects) g.node_features.push_back(assemble_node_features(o, manifest));
    g.edges = build_scene_edges(g.objects);
    scenes.push_back(std::move(g));
  }
  return scenes;
}

inline void write_scene_file(const std::string& path, const std::vector<SceneGraph>& scenes,
                             const Manifest& manifest) {
  auto out = detail::open_output(path);
  for (const SceneGraph& g : scenes) {
    nlohmann::json objs = nlohmann::json::array();
    for (const ObjectNode& o : g.objects) {
      nlohmann::json oj;
      oj["category"] = manifest.categories.at(o.category);
      oj["type"] = manifest.types.at(o.type);
      oj["expression"] = manifest.expressions.at(o.expression);
      oj["x"] = o.x;
      oj["y"] = o.y;
      oj["plane"] = o.plane;
      oj["pose"] = std::vector<double>(o.pose.begin(), o.pose.end());
      objs.push_back(std::move(oj));
    }
    nlohmann::json j;
    j["scene_id"] = g.id;
    j["objects"] = std::move(objs);
    out << j.dump() << '\n';
  }
}

// ---- question parses --------------------------------------------------------

struct RawQuestion {
  std::string qid;
  std::vector<ParseRow> rows;
  std::map<std::string, int> answer_counts;
  std::string pair_id;  // empty when "-"
  std::vector<std::string> choices;
};

namespace detail {

inline void parse_header_segment(const std::string& seg, RawQuestion& q, const std::string& where) {
  const auto eq = seg.find('=');
  if (eq == std::string::npos) throw ParseError(where + ": malformed header segment '" + seg + "'");
  const std::string key = lower_trim(seg.substr(0, eq));
  const std::string val = seg.substr(eq + 1);
  auto trimmed = [](const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  };
  if (key == "qid") {
    q.qid = trimmed(val);
  } else if (key == "pair") {
    const std::string p = trimmed(val);
    q.pair_id = p == "-" ? std::string() : p;
  } else if (key == "answer_counts") {
    std::string body = trimmed(val);
    if (body.size() < 2 || body.front() != '{' || body.back() != '}')
      throw ParseError(where + ": answer_counts must be {...}, got '" + body + "'");
    body = body.substr(1, body.size() - 2);
    std::stringstream ss(body);
    std::string entry;
    while (std::getline(ss, entry, ',')) {
      if (trimmed(entry).empty()) continue;
      const auto colon = entry.rfind(':');
      if (colon == std::string::npos)
        throw ParseError(where + ": malformed answer count '" + entry + "'");
      const std::string ans = lower_trim(entry.substr(0, colon));
      int n = 0;
      try {
        n = std::stoi(trimmed(entry.substr(colon + 1)));
      } catch (const std::exception&) {
        throw ParseError(where + ": non-integer answer count in '" + entry + "'");
      }
      q.answer_counts[ans] += n;
    }
  } else if (key == "choices") {
    std::string body = trimmed(val);
    if (body.size() < 2 || body.front() != '[' || body.back() != ']')
      throw ParseError(where + ": choices must be [...], got '" + body + "'");
    body = body.substr(1, body.size() - 2);
    std::stringstream ss(body);
    std::string entry;
    while (std::getline(ss, entry, ',')) {
      const std::string c = lower_trim(entry);
      if (!c.empty()) q.choices.push_back(c);
    }
  }
  // unknown keys ignored
}

}  // namespace detail

// Syntax-level pass over a question file; vocabulary-independent.
inline std::vector<RawQuestion> parse_question_file(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<RawQuestion> out;
  RawQuestion cur;
  bool in_block = false;
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&]() {
    if (!in_block) return;
    if (cur.qid.empty()) throw ParseError(path + ": question block without a qid");
    if (cur.rows.empty()) throw ParseError(path + ": question '" + cur.qid + "' has no tokens");
    out.push_back(std::move(cur));
    cur = RawQuestion{};
    in_block = false;
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path + ":" + std::to_string(lineno);
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      in_block = true;
      std::string body = line.substr(1);
      std::stringstream ss(body);
      std::string seg;
      while (std::getline(ss, seg, '|')) detail::parse_header_segment(seg, cur, where);
      continue;
    }
    in_block = true;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 4)
      throw ParseError(where + ": expected 4 tab-separated columns, got " +
                       std::to_string(cols.size()));
    std::size_t id = 0, head = 0;
    try {
      id = static_cast<std::size_t>(std::stoul(cols[0]));
    } catch (const std::exception&) {
      throw ParseError(where + ": non-integer token ID '" + cols[0] + "'");
    }
    try {
      head = static_cast<std::size_t>(std::stoul(cols[2]));
    } catch (const std::exception&) {
      throw ParseError(where + ": non-integer HEAD '" + cols[2] + "'");
    }
    if (id != cur.rows.size() + 1)
      throw ParseError(where + ": token IDs must be sequential from 1, got " + cols[0]);
    ParseRow row;
    row.form = detail::lower_trim(cols[1]);
    row.head = head;
    row.deprel = detail::lower_trim(cols[3]);
    if (row.form.empty()) throw ParseError(where + ": empty FORM");
    cur.rows.push_back(std::move(row));
  }
  flush();
  return out;
}

// ---- vocabularies -----------------------------------------------------------

// Modal answer of one question's annotator counts; ties break lexicographically
// (map iteration order).
inline std::string modal_answer(const std::map<std::string, int>& counts) {
  std::string best;
  int best_n = -1;
  for (const auto& [ans, n] : counts)
    if (n > best_n) {
      best = ans;
      best_n = n;
    }
  return best;
}

struct AnswerVocabResult {
  std::vector<std::string> answers;
  double coverage = 0.0;
};

inline AnswerVocabResult build_answer_vocab(const std::vector<std::string>& modal_answers,
                                            int min_count) {
  std::map<std::string, int> freq;
  for (const std::string& a : modal_answers) ++freq[a];
  AnswerVocabResult r;
  std::size_t covered = 0;
  for (const auto& [ans, n] : freq)
    if (n >= min_count) {
      r.answers.push_back(ans);  // map order == lexicographic
      covered += static_cast<std::size_t>(n);
    }
  r.coverage = modal_answers.empty()
                   ? 0.0
                   : static_cast<double>(covered) / static_cast<double>(modal_answers.size());
  return r;
}

inline VocabSet build_vocabs(const std::vector<RawQuestion>& training, int answer_min_count = 5) {
  std::set<std::string> words;
  std::set<std::string> dep_labels;
  std::vector<std::string> modals;
  for (const RawQuestion& q : training) {
    for (const ParseRow& r : q.rows) {
      words.insert(r.form);
      if (r.head != 0) dep_labels.insert(r.deprel);
    }
    if (!q.answer_counts.empty()) modals.push_back(modal_answer(q.answer_counts));
  }
  dep_labels.insert("<unkdep>");

  VocabSet v;
  v.words.push_back("<unk>");
  v.words.insert(v.words.end(), words.begin(), words.end());

  v.deps.push_back("<next>");
  v.deps.push_back("<prev>");
  std::set<std::string> dep_entries;
  for (const std::string& l : dep_labels) {
    dep_entries.insert(l);
    dep_entries.insert(l + kReversedSuffix);
  }
  v.deps.insert(v.deps.end(), dep_entries.begin(), dep_entries.end());

  v.answers = build_answer_vocab(modals, answer_min_count).answers;
  v.rebuild_indices();
  return v;
}

// ---- question graphs --------------------------------------------------------

inline QuestionGraph to_question_graph(const RawQuestion& raw, const VocabSet& vocab,
                                       const std::string& path = "") {
  QuestionGraph g;
  const std::size_t n = raw.rows.size();
  for (const ParseRow& r : raw.rows) {
    g.forms.push_back(r.form);
    g.tokens.push_back(vocab.word(r.form));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const ParseRow& r = raw.rows[i];
    if (r.head == 0) continue;  // root contributes no edge
    if (r.head > n)
      throw ParseError(path + ": question '" + raw.qid + "': HEAD " + std::to_string(r.head) +
                       " out of range for " + std::to_string(n) + " tokens");
    const std::size_t head = r.head - 1;
    const std::size_t dep = i;
    if (head == dep)
      throw ParseError(path + ": question '" + raw.qid + "': self-edge at token " +
                       std::to_string(i + 1));
    g.edges.push_back({head, dep, vocab.dep(r.deprel, false)});
    g.edges.push_back({dep, head, vocab.dep(r.deprel, true)});
  }
  return g;
}

inline std::vector<QaInstance> load_question_file(const std::string& path, const VocabSet& vocab) {
  std::vector<QaInstance> out;
  std::vector<RawQuestion> raws = parse_question_file(path);
  out.reserve(raws.size());
  for (std::size_t i = 0; i < raws.size(); ++i) {
    QaInstance inst;
    inst.qid = raws[i].qid;
    inst.question = to_question_graph(raws[i], vocab, path);
    inst.rows = std::move(raws[i].rows);
    inst.scene_index = i;
    inst.answer_counts = std::move(raws[i].answer_counts);
    inst.pair_id = std::move(raws[i].pair_id);
    inst.choices = std::move(raws[i].choices);
    out.push_back(std::move(inst));
  }
  return out;
}

inline void write_question_file(const std::string& path, const std::vector<QaInstance>& instances) {
  auto out = detail::open_output(path);
  bool first = true;
  for (const QaInstance& q : instances) {
    if (!first) out << '\n';
    first = false;
    out << "# qid = " << q.qid << " | answer_counts = {";
    bool fa = true;
    for (const auto& [ans, n] : q.answer_counts) {
      if (!fa) out << ", ";
      fa = false;
      out << ans << ": " << n;
    }
    out << "} | pair = " << (q.pair_id.empty() ? "-" : q.pair_id) << " | choices = [";
    for (std::size_t i = 0; i < q.choices.size(); ++i) {
      if (i) out << ", ";
      out << q.choices[i];
    }
    out << "]\n";
    for (std::size_t i = 0; i < q.rows.size(); ++i) {
      const ParseRow& r = q.rows[i];
      out << (i + 1) << '\t' << r.form << '\t' << r.head << '\t' << r.deprel << '\n';
    }
  }
}

// ---- pretrained embeddings --------------------------------------------------

struct EmbeddingLoadResult {
  Tensor matrix;          // |word vocab| x dim
  std::size_t coverage = 0;  // vocab words found in the file
};

// Rows for vocab words present in the file are copied verbatim; all other rows
// (including UNK) keep their Glorot-range initialization.
inline EmbeddingLoadResult load_pretrained_embeddings(const std::string& path,
                                                      const VocabSet& vocab, std::size_t dim,
                                                      std::uint64_t seed) {
  EmbeddingLoadResult r;
  r.matrix = glorot_init({vocab.words.size(), dim}, seed);
  auto in = detail::open_input(path);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::size_t> found;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    if (vals.size() != dim)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                       " values, got " + std::to_string(vals.size()));
    auto it = vocab.word_index.find(detail::lower_trim(word));
    if (it == vocab.word_index.end() || it->second == kUnkWordIndex) continue;
    for (std::size_t j = 0; j < dim; ++j) r.matrix.at(it->second, j) = vals[j];
    found.insert(it->second);
  }
  r.coverage = found.size();
  return r;
}

// ---- feature normalization ----------------------------------------------------

constexpr double kStdClamp = 1e-6;

namespace detail {

inline void fit_dims(const std::vector<const Tensor*>& samples, std::size_t dim, Tensor& mean,
                     Tensor& stdev) {
  mean = Tensor({dim});
  stdev = Tensor::ones({dim});
  if (samples.empty()) return;
  const double n = static_cast<double>(samples.size());
  for (const Tensor* s : samples)
    for (std::size_t d = 0; d < dim; ++d) mean.at(d) += s->at(d);
  for (std::size_t d = 0; d < dim; ++d) mean.at(d) /= n;
  Tensor var({dim});
  for (const Tensor* s : samples)
    for (std::size_t d = 0; d < dim; ++d) {
      const double c = s->at(d) - mean.at(d);
      var.at(d) += c * c;
    }
  for (std::size_t d = 0; d < dim; ++d) stdev.at(d) = std::max(std::sqrt(var.at(d) / n), kStdClamp);
}

}  // namespace detail

// Population statistics over every object and every edge of the given scenes.
inline NormStats fit_norm_stats(const std::vector<SceneGraph>& training) {
  std::vector<const Tensor*> nodes, edges;
  for (const SceneGraph& g : training) {
    for (const Tensor& f : g.node_features) nodes.push_back(&f);
    for (const auto& [key, e] : g.edges) edges.push_back(&e);
  }
  if (nodes.empty()) throw Error("fit_norm_stats: no scene objects in training data");
  NormStats s;
  detail::fit_dims(nodes, nodes.front()->numel(), s.node_mean, s.node_std);
  detail::fit_dims(edges, kSceneEdgeDim, s.edge_mean, s.edge_std);
  return s;
}

inline SceneGraph apply_norm(const SceneGraph& g, const NormStats& stats) {
  SceneGraph out = g;
  for (Tensor& f : out.node_features)
    for (std::size_t d = 0; d < f.numel(); ++d)
      f.at(d) = (f.at(d) - stats.node_mean.at(d)) / stats.node_std.at(d);
  for (auto& [key, e] : out.edges)
    for (std::size_t d = 0; d < e.numel(); ++d)
      e.at(d) = (e.at(d) - stats.edge_mean.at(d)) / stats.edge_std.at(d);
  return out;
}

// ---- dataset bundle -----------------------------------------------------------

struct Dataset {
  std::vector<SceneGraph> scenes;
  std::vector<QaInstance> instances;
};

// Record k of the question file is bound to record k of the scene file.
inline Dataset load_dataset(const std::string& scene_path, const std::string& question_path,
                            const Manifest& manifest, const VocabSet& vocab) {
  Dataset d;
  d.scenes = load_scene_file(scene_path, manifest);
  d.instances = load_question_file(question_path, vocab);
  if (d.scenes.size() != d.instances.size())
    throw Error("dataset mismatch: " + std::to_string(d.scenes.size()) + " scenes vs " +
                std::to_string(d.instances.size()) + " questions");
  return d;
}

inline void apply_norm_all(Dataset& d, const NormStats& stats) {
  for (SceneGraph& g : d.scenes) g = apply_norm(g, stats);
}

}  // namespace gvqa
