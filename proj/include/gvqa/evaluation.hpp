// evaluation.hpp — metrics: the soft VQA score with 10-choose-9 averaging,
// open-ended / multiple-choice accuracy, pairs accuracy over complementary
// scenes with ambiguity filtering, precision/recall curves, and attention
// export.
#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gvqa/graphs.hpp"
#include "gvqa/model.hpp"

namespace gvqa {

// Soft ground-truth score of `answer` given 10 annotator answers, averaged
// over the ten leave-one-annotator-out subsets of min(m/3, 1).
inline double vqa_score(const std::map<std::string, int>& counts, const std::string& answer) {
  int total = 0;
  for (const auto& [a, n] : counts) total += n;
  if (total != 10)
    throw Error("vqa_score: annotator counts sum to " + std::to_string(total) + ", expected 10");
  auto it = counts.find(answer);
  const int m = it == counts.end() ? 0 : it->second;
  // dropping one of the m matching annotators leaves m-1; dropping any of the
  // other 10-m leaves m
  auto credit = [](int k) { return std::min(static_cast<double>(k) / 3.0, 1.0); };
  return (m * credit(m - 1) + (10 - m) * credit(m)) / 10.0;
}

inline bool has_unambiguous_answer(const std::map<std::string, int>& counts) {
  for (const auto& [a, n] : counts)
    if (vqa_score(counts, a) == 1.0) return true;
  return false;
}

struct TopPrediction {
  std::size_t answer_index = 0;
  double score = 0.0;
  bool valid = false;  // false when no in-vocab candidate exists
};

// Argmax with ties broken toward the lowest answer index.
inline TopPrediction top_prediction(const Tensor& scores) {
  TopPrediction p;
  p.valid = scores.numel() > 0;
  for (std::size_t i = 0; i < scores.numel(); ++i)
    if (i == 0 || scores.at(i) > p.score) {
      p.answer_index = i;
      p.score = scores.at(i);
    }
  return p;
}

inline TopPrediction top_prediction_choices(const Tensor& scores,
                                            const std::vector<std::string>& choices,
                                            const VocabSet& vocab) {
  TopPrediction p;
  for (const std::string& c : choices) {
    auto idx = vocab.answer(c);
    if (!idx) continue;  // out-of-vocab candidates score -inf
    const double s = scores.at(*idx);
    if (!p.valid || s > p.score || (s == p.score && *idx < p.answer_index)) {
      p.valid = true;
      p.answer_index = *idx;
      p.score = s;
    }
  }
  return p;
}

enum class EvalMode { open_ended, multiple_choice };

// Mean ground-truth score of the top-scoring answer per question.
inline double accuracy(const std::vector<QaInstance>& instances,
                       const std::vector<Tensor>& scores, const VocabSet& vocab, EvalMode mode) {
  if (instances.size() != scores.size())
    throw Error("accuracy: prediction count does not match question count");
  double sum = 0.0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const QaInstance& q = instances[i];
    if (q.answer_counts.empty()) throw Error("question '" + q.qid + "' has no ground truth");
    TopPrediction p = mode == EvalMode::open_ended
                          ? top_prediction(scores[i])
                          : top_prediction_choices(scores[i], q.choices, vocab);
    if (p.valid) sum += vqa_score(q.answer_counts, vocab.answers.at(p.answer_index));
  }
  return sum / static_cast<double>(instances.size());
}

// Fraction of non-ambiguous complementary pairs whose two members are both
// answered with an answer of hard ground-truth score 1. A member is ambiguous
// when annotator disagreement leaves no answer with score 1.
inline double pairs_accuracy(const std::vector<QaInstance>& instances,
                             const std::vector<Tensor>& scores, const VocabSet& vocab) {
  if (instances.size() != scores.size())
    throw Error("pairs_accuracy: prediction count does not match question count");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].pair_id.empty())
      throw Error("question '" + instances[i].qid + "' lacks a pair id");
    groups[instances[i].pair_id].push_back(i);
  }
  std::size_t considered = 0, correct = 0;
  for (const auto& [pid, members] : groups) {
    if (members.size() != 2)
      throw Error("pair '" + pid + "' has " + std::to_string(members.size()) +
                  " members, expected 2");
    bool ambiguous = false;
    bool both = true;
    for (std::size_t idx : members) {
      const QaInstance& q = instances[idx];
      if (q.answer_counts.empty()) throw Error("question '" + q.qid + "' has no ground truth");
      if (!has_unambiguous_answer(q.answer_counts)) {
        ambiguous = true;
        break;
      }
      TopPrediction p = top_prediction(scores[idx]);
      if (!p.valid || vqa_score(q.answer_counts, vocab.answers.at(p.answer_index)) != 1.0)
        both = false;
    }
    if (ambiguous) continue;
    ++considered;
    if (both) ++correct;
  }
  return considered == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(considered);
}

struct PRPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 0.0;
};

// One (predicted score, ground-truth soft score) sample per selected
// (question, answer) pair.
struct ScoredSample {
  double predicted = 0.0;
  double truth = 0.0;
};

// Precision and recall swept over thresholds on the predicted score; selection
// is strict (predicted > t). Defaults to every distinct predicted score plus a
// select-everything sentinel below the minimum. Empty selections have
// precision 1 by convention.
inline std::vector<PRPoint> precision_recall(const std::vector<ScoredSample>& samples,
                                             std::vector<double> thresholds = {}) {
  double truth_total = 0.0;
  for (const ScoredSample& s : samples) truth_total += s.truth;
  if (thresholds.empty()) {
    std::set<double> distinct;
    double lo = 0.0;
    for (const ScoredSample& s : samples) {
      distinct.insert(s.predicted);
      lo = std::min(lo, s.predicted);
    }
    for (double t : distinct) thresholds.push_back(t);
    thresholds.push_back(lo - 1.0);  // selects everything
  }
  std::sort(thresholds.rbegin(), thresholds.rend());
  std::vector<PRPoint> curve;
  for (double t : thresholds) {
    double selected = 0.0, credit = 0.0;
    for (const ScoredSample& s : samples)
      if (s.predicted > t) {
        selected += 1.0;
        credit += s.truth;
      }
    PRPoint pt;
    pt.threshold = t;
    pt.precision = selected == 0.0 ? 1.0 : credit / selected;
    pt.recall = truth_total == 0.0 ? 1.0 : credit / truth_total;
    curve.push_back(pt);
  }
  return curve;
}

// Top-1 samples: each question contributes its best-scoring answer.
inline std::vector<ScoredSample> top1_samples(const std::vector<QaInstance>& instances,
                                              const std::vector<Tensor>& scores,
                                              const VocabSet& vocab) {
  std::vector<ScoredSample> out;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    TopPrediction p = top_prediction(scores[i]);
    if (!p.valid) continue;
    out.push_back(
        {p.score, vqa_score(instances[i].answer_counts, vocab.answers.at(p.answer_index))});
  }
  return out;
}

// Every (question, answer) pair, for the alternative reading of the curve.
inline std::vector<ScoredSample> all_pair_samples(const std::vector<QaInstance>& instances,
                                                  const std::vector<Tensor>& scores,
                                                  const VocabSet& vocab) {
  std::vector<ScoredSample> out;
  for (std::size_t i = 0; i < instances.size(); ++i)
    for (std::size_t a = 0; a < vocab.answers.size(); ++a)
      out.push_back({scores[i].at(a), vqa_score(instances[i].answer_counts, vocab.answers[a])});
  return out;
}

inline void write_pr_curve(const std::string& path, const std::vector<PRPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "threshold,precision,recall\n";
  out.precision(17);
  for (const PRPoint& p : curve)
    out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
}

// Attention matrix as CSV: one row per question word, one column per scene
// object, and a final row of per-object relevance (the column sums).
inline void export_attention(const ForwardResult& result, const SceneGraph& scene,
                             const QuestionGraph& question, const Manifest& manifest,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  const std::size_t nq = result.attention.shape[0];
  const std::size_t ns = result.attention.shape[1];
  out << "token";
  for (std::size_t j = 0; j < ns; ++j) {
    out << ",obj" << j;
    if (j < scene.objects.size()) out << ':' << manifest.types.at(scene.objects[j].type);
  }
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < nq; ++i) {
    out << question.forms.at(i);
    for (std::size_t j = 0; j < ns; ++j) out << ',' << result.attention.at(i, j);
    out << '\n';
  }
  out << "relevance";
  for (std::size_t j = 0; j < ns; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < nq; ++i) sum += result.attention.at(i, j);
    out << ',' << sum;
  }
  out << '\n';
}

inline void write_predictions(const std::string& path, const std::vector<QaInstance>& instances,
                              const std::vector<Tensor>& scores, const VocabSet& vocab) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "qid,answer,score\n";
  out.precision(17);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    TopPrediction p = top_prediction(scores[i]);
    out << instances[i].qid << ',' << (p.valid ? vocab.answers.at(p.answer_index) : "") << ','
        << p.score << '\n';
  }
}

}  // namespace gvqa
