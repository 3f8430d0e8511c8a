// graphs.hpp — graph-structured inputs: scene graphs over objects, dependency
// graphs over question words, and the vocabularies binding them to indices.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gvqa/tensor.hpp"

namespace gvqa {

constexpr std::size_t kPoseScalars = 10;
constexpr std::size_t kSceneEdgeDim = 5;

// One-hot block orderings for object attributes. The listed orders define the
// feature layout: category || type || expression || pose scalars.
struct Manifest {
  std::vector<std::string> categories;
  std::vector<std::string> types;
  std::vector<std::string> expressions;

  std::size_t node_feature_dim() const {
    return categories.size() + types.size() + expressions.size() + kPoseScalars;
  }
};

struct ObjectNode {
  std::size_t category = 0;
  std::size_t type = 0;
  std::size_t expression = 0;
  std::array<double, kPoseScalars> pose{};
  double x = 0.0;  // scene units in [0,1]
  double y = 0.0;
  int plane = 0;  // larger is closer to the viewer

  bool operator==(const ObjectNode&) const = default;
};

// Fully connected scene graph: an edge feature for every ordered pair i != j.
struct SceneGraph {
  std::string id;
  std::vector<ObjectNode> objects;
  std::vector<Tensor> node_features;                       // per object
  std::map<std::pair<std::size_t, std::size_t>, Tensor> edges;  // (i, j) -> 5-dim
};

// Dependency graph after symmetrization. An edge (node, neighbor, label) means
// node aggregates the neighbor's features gated by the label embedding.
struct QuestionGraph {
  struct Edge {
    std::size_t node = 0;
    std::size_t neighbor = 0;
    std::size_t label = 0;
    bool operator==(const Edge&) const = default;
  };

  std::vector<std::string> forms;   // lowercased surface tokens
  std::vector<std::size_t> tokens;  // word-vocab indices (0 = UNK)
  std::vector<Edge> edges;
};

// Raw CoNLL row kept for serialization; HEAD is 1-based, 0 for the root.
struct ParseRow {
  std::string form;
  std::size_t head = 0;
  std::string deprel;
  bool operator==(const ParseRow&) const = default;
};

struct QaInstance {
  std::string qid;
  QuestionGraph question;
  std::vector<ParseRow> rows;
  std::size_t scene_index = 0;  // positional binding into the scene file
  std::map<std::string, int> answer_counts;  // 10 annotators when present
  std::string pair_id;          // empty when unpaired
  std::vector<std::string> choices;
};

constexpr std::size_t kUnkWordIndex = 0;
constexpr std::size_t kSeqNextLabel = 0;  // reserved for the no-parsing ablation
constexpr std::size_t kSeqPrevLabel = 1;
inline const char* kReversedSuffix = ":rev";

struct VocabSet {
  std::vector<std::string> words;    // [0] = "<unk>", rest sorted
  std::vector<std::string> deps;     // [0] = "<next>", [1] = "<prev>", rest sorted label/label:rev pairs
  std::vector<std::string> answers;  // sorted, min-count filtered

  std::map<std::string, std::size_t> word_index;
  std::map<std::string, std::size_t> dep_index;
  std::map<std::string, std::size_t> answer_index;

  std::size_t word(const std::string& w) const {
    auto it = word_index.find(w);
    return it == word_index.end() ? kUnkWordIndex : it->second;
  }

  std::size_t dep(const std::string& label, bool reversed) const {
    auto it = dep_index.find(reversed ? label + kReversedSuffix : label);
    if (it != dep_index.end()) return it->second;
    it = dep_index.find(reversed ? std::string("<unkdep>") + kReversedSuffix
                                 : std::string("<unkdep>"));
    if (it == dep_index.end()) throw Error("unknown dependency label '" + label + "'");
    return it->second;
  }

  std::optional<std::size_t> answer(const std::string& a) const {
    auto it = answer_index.find(a);
    if (it == answer_index.end()) return std::nullopt;
    return it->second;
  }

  void rebuild_indices() {
    word_index.clear();
    dep_index.clear();
    answer_index.clear();
    for (std::size_t i = 0; i < words.size(); ++i) word_index[words[i]] = i;
    for (std::size_t i = 0; i < deps.size(); ++i) dep_index[deps[i]] = i;
    for (std::size_t i = 0; i < answers.size(); ++i) answer_index[answers[i]] = i;
  }
};

// FNV-1a over the entry list; used to bind checkpoints to vocabularies.
inline std::uint64_t vocab_hash(const std::vector<std::string>& entries) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string& e : entries) {
    for (unsigned char c : e) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= '\n';
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Per-dimension normalization fitted on the training split only.
struct NormStats {
  Tensor node_mean, node_std;  // scene node feature dims
  Tensor edge_mean, edge_std;  // scene edge feature dims
};

}  // namespace gvqa
