// training.hpp — losses over the classifier scores, Adadelta with a reduced
// learning rate on the word embeddings, pair-preserving mini-batches, and the
// epoch loop with validation-based model selection.
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gvqa/evaluation.hpp"
#include "gvqa/graphs.hpp"
#include "gvqa/ingest.hpp"
#include "gvqa/model.hpp"
#include "gvqa/tape.hpp"

namespace gvqa {

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 20;

  enum class Loss { hard_softmax, soft_logistic };
  Loss loss = Loss::hard_softmax;

  double rho = 0.95;      // Adadelta decay
  double epsilon = 1e-6;  // Adadelta conditioning
  double embedding_lr_scale = 0.1;
  std::uint64_t seed = 0;
  double train_fraction = 1.0;
  bool keep_pairs_together = true;
};

inline const char* loss_name(TrainConfig::Loss l) {
  return l == TrainConfig::Loss::hard_softmax ? "hard" : "soft";
}

inline TrainConfig::Loss loss_from_name(const std::string& s) {
  if (s == "hard") return TrainConfig::Loss::hard_softmax;
  if (s == "soft") return TrainConfig::Loss::soft_logistic;
  throw Error("unknown loss '" + s + "' (expected hard or soft)");
}

constexpr double kLogClamp = 1e-12;

// -log y[target] for a softmax head
inline Var hard_softmax_loss(Tape& t, Var scores, std::size_t target) {
  return t.scale(t.log(t.clamp_min(t.pick(scores, target), kLogClamp)), -1.0);
}

// mean over answers of -[s log y + (1-s) log(1-y)] for a logistic head
inline Var soft_logistic_loss(Tape& t, Var scores, const Tensor& targets) {
  Var s = t.constant(targets);
  Var ones = t.constant(Tensor::ones(targets.shape));
  Var hit = t.hadamard(s, t.log(t.clamp_min(scores, kLogClamp)));
  Var miss = t.hadamard(t.sub(ones, s), t.log(t.clamp_min(t.sub(ones, scores), kLogClamp)));
  return t.scale(t.mean_all(t.add(hit, miss)), -1.0);
}

// Soft ground-truth scores s(q, a) over the answer vocabulary.
inline Tensor soft_targets(const QaInstance& q, const VocabSet& vocab) {
  Tensor s({vocab.answers.size()});
  for (std::size_t a = 0; a < vocab.answers.size(); ++a)
    s.at(a) = vqa_score(q.answer_counts, vocab.answers[a]);
  return s;
}

// Hard-loss target: the in-vocab answer of highest soft score, ties toward the
// lowest index. Questions whose modal answer is out of vocabulary are skipped.
inline std::optional<std::size_t> hard_target(const QaInstance& q, const VocabSet& vocab) {
  if (!vocab.answer(modal_answer(q.answer_counts))) return std::nullopt;
  const Tensor s = soft_targets(q, vocab);
  std::size_t best = 0;
  for (std::size_t a = 1; a < s.numel(); ++a)
    if (s.at(a) > s.at(best)) best = a;
  return best;
}

// ---- Adadelta -----------------------------------------------------------------

struct AdadeltaState {
  std::map<std::string, Tensor> sq_grad;    // running E[g^2]
  std::map<std::string, Tensor> sq_update;  // running E[dx^2]
};

// Standard two-accumulator update. The word-embedding update is scaled by
// embedding_lr_scale at application time only, so the accumulators keep the
// unscaled statistics.
inline void adadelta_step(ModelParams& params, const GradientMap& grads, AdadeltaState& state,
                          const TrainConfig& cfg) {
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    if (!p.same_shape(g))
      throw ShapeError("gradient shape " + shape_str(g.shape) + " does not match parameter '" +
                       name + "' " + shape_str(p.shape));
    Tensor& eg = state.sq_grad.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor& ex = state.sq_update.try_emplace(name, Tensor(p.shape)).first->second;
    const double apply_scale = name == "word_emb" ? cfg.embedding_lr_scale : 1.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g.data[i];
      eg.data[i] = cfg.rho * eg.data[i] + (1.0 - cfg.rho) * gi * gi;
      const double dx =
          -std::sqrt((ex.data[i] + cfg.epsilon) / (eg.data[i] + cfg.epsilon)) * gi;
      ex.data[i] = cfg.rho * ex.data[i] + (1.0 - cfg.rho) * dx * dx;
      p.data[i] += apply_scale * dx;
    }
  }
}

// ---- batching -------------------------------------------------------------------

namespace detail {

// Pair groups in first-occurrence order; unpaired instances form singletons.
inline std::vector<std::vector<std::size_t>> pair_groups(
    const std::vector<QaInstance>& instances) {
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> by_pair;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const std::string& pid = instances[i].pair_id;
    if (pid.empty()) {
      groups.push_back({i});
      continue;
    }
    auto it = by_pair.find(pid);
    if (it == by_pair.end()) {
      by_pair[pid] = groups.size();
      groups.push_back({i});
    } else {
      groups[it->second].push_back(i);
    }
  }
  return groups;
}

}  // namespace detail

// Shuffles pair groups, then packs whole groups into batches of at most
// batch_size instances. Deterministic given the seed.
inline std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<QaInstance>& instances, const TrainConfig& cfg, std::uint64_t seed,
    const std::vector<std::size_t>* subset = nullptr) {
  std::vector<std::vector<std::size_t>> groups;
  if (cfg.keep_pairs_together) {
    groups = detail::pair_groups(instances);
    if (subset) {
      std::set<std::size_t> keep(subset->begin(), subset->end());
      std::vector<std::vector<std::size_t>> filtered;
      for (auto& g : groups) {
        std::vector<std::size_t> kept;
        for (std::size_t i : g)
          if (keep.count(i)) kept.push_back(i);
        if (!kept.empty()) filtered.push_back(std::move(kept));
      }
      groups = std::move(filtered);
    }
  } else {
    if (subset)
      for (std::size_t i : *subset) groups.push_back({i});
    else
      for (std::size_t i = 0; i < instances.size(); ++i) groups.push_back({i});
  }
  for (const auto& g : groups)
    if (g.size() > cfg.batch_size)
      throw Error("pair group of size " + std::to_string(g.size()) +
                  " does not fit in batch size " + std::to_string(cfg.batch_size));
  Rng rng(seed);
  rng.shuffle(groups);
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  for (const auto& g : groups) {
    if (cur.size() + g.size() > cfg.batch_size) {
      batches.push_back(std::move(cur));
      cur.clear();
    }
    cur.insert(cur.end(), g.begin(), g.end());
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

// The first `fraction` of pair groups after a seeded shuffle, flattened back to
// instance indices. Used for the training-set-size sweep.
inline std::vector<std::size_t> subset_by_fraction(const std::vector<QaInstance>& instances,
                                                   double fraction, std::uint64_t seed) {
  auto groups = detail::pair_groups(instances);
  Rng rng(seed);
  rng.shuffle(groups);
  const std::size_t count =
      std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(groups.size())));
  std::vector<std::size_t> idx;
  for (std::size_t g = 0; g < std::min(count, groups.size()); ++g)
    idx.insert(idx.end(), groups[g].begin(), groups[g].end());
  return idx;
}

// ---- the epoch loop -------------------------------------------------------------

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  std::size_t skipped = 0;  // questions with out-of-vocab modal answers
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  std::size_t best_epoch = 0;
  double best_metric = -1.0;
  ModelParams best_params;
  bool val_is_pairs = false;
};

namespace detail {

constexpr std::uint64_t kStreamSubset = 1;
constexpr std::uint64_t kStreamBatches = 2;
constexpr std::uint64_t kStreamDropout = 3;

inline std::vector<Tensor> score_all(const Dataset& data, const ModelParams& params,
                                     const ModelConfig& cfg) {
  std::vector<Tensor> scores;
  scores.reserve(data.instances.size());
  for (const QaInstance& q : data.instances)
    scores.push_back(forward(data.scenes[q.scene_index], q.question, params, cfg).scores);
  return scores;
}

}  // namespace detail

// Runs the full loop over pre-normalized datasets and keeps the parameters of
// the epoch with the best validation metric (pairs accuracy when every
// validation question is paired, mean VQA score otherwise).
inline TrainResult train(const Dataset& train_set, const Dataset& val_set, const VocabSet& vocab,
                         const ModelConfig& mcfg, const TrainConfig& tcfg,
                         ModelParams params) {
  TrainResult result;
  result.val_is_pairs = !val_set.instances.empty();
  for (const QaInstance& q : val_set.instances)
    if (q.pair_id.empty()) result.val_is_pairs = false;

  std::vector<std::size_t> active;
  const bool subsetting = tcfg.train_fraction < 1.0;
  if (subsetting)
    active = subset_by_fraction(train_set.instances, tcfg.train_fraction,
                                mix_seed(tcfg.seed, detail::kStreamSubset));

  AdadeltaState state;
  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    auto batches =
        make_batches(train_set.instances, tcfg, mix_seed(mix_seed(tcfg.seed, detail::kStreamBatches), epoch),
                     subsetting ? &active : nullptr);
    Rng dropout_rng(mix_seed(mix_seed(tcfg.seed, detail::kStreamDropout), epoch));

    double loss_sum = 0.0;
    std::size_t used_total = 0, skipped = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      GradientMap batch_grads;
      std::size_t used = 0;
      for (std::size_t idx : batches[b]) {
        const QaInstance& q = train_set.instances[idx];
        std::optional<std::size_t> target;
        if (tcfg.loss == TrainConfig::Loss::hard_softmax) {
          target = hard_target(q, vocab);
          if (!target) {
            ++skipped;
            continue;
          }
        }
        Tape tape;
        ForwardVars fv = forward_on_tape(tape, train_set.scenes[q.scene_index], q.question, params,
                                         mcfg, /*training=*/true, &dropout_rng);
        Var loss = tcfg.loss == TrainConfig::Loss::hard_softmax
                       ? hard_softmax_loss(tape, fv.scores, *target)
                       : soft_logistic_loss(tape, fv.scores, soft_targets(q, vocab));
        const double lv = tape.value(loss).at(0);
        if (!std::isfinite(lv))
          throw Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                      std::to_string(b) + ", question '" + q.qid + "'");
        loss_sum += lv;
        ++used;
        GradientMap grads = tape.backward(loss);
        for (auto& [name, g] : grads) {
          auto it = batch_grads.find(name);
          if (it == batch_grads.end()) {
            batch_grads.emplace(name, std::move(g));
          } else {
            for (std::size_t i = 0; i < g.numel(); ++i) it->second.data[i] += g.data[i];
          }
        }
      }
      if (used == 0) continue;
      for (auto& [name, g] : batch_grads)
        for (double& v : g.data) v /= static_cast<double>(used);
      adadelta_step(params, batch_grads, state, tcfg);
      used_total += used;
    }

    std::vector<Tensor> val_scores = detail::score_all(val_set, params, mcfg);
    const double metric = result.val_is_pairs
                              ? pairs_accuracy(val_set.instances, val_scores, vocab)
                              : accuracy(val_set.instances, val_scores, vocab, EvalMode::open_ended);

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = used_total == 0 ? 0.0 : loss_sum / static_cast<double>(used_total);
    em.val_metric = metric;
    em.skipped = skipped;
    result.log.push_back(em);

    if (metric > result.best_metric) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      result.best_params = params;
    }
  }
  if (result.best_epoch == 0) result.best_params = std::move(params);
  return result;
}

inline void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,train_loss,val_metric,skipped\n";
  out.precision(17);
  for (const EpochMetrics& em : log)
    out << em.epoch << ',' << em.train_loss << ',' << em.val_metric << ',' << em.skipped << '\n';
}

}  // namespace gvqa
