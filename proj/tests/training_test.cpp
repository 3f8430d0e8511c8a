#include <catch2/catch.hpp>

#include <cmath>
#include <set>

#include "gvqa/grad_check.hpp"
#include "gvqa/synthetic.hpp"
#include "gvqa/training.hpp"
#include "test_util.hpp"

using namespace gvqa;
using gvqa_test::TempDir;

namespace {

VocabSet yes_no_vocab() {
  VocabSet v;
  v.words = {"<unk>", "a", "dog", "is", "there"};
  v.deps = {"<next>", "<prev>", "det", "det:rev"};
  v.answers = {"no", "yes"};
  v.rebuild_indices();
  return v;
}

QaInstance paired_instance(const std::string& qid, const std::string& pair,
                           const std::string& answer) {
  QaInstance q;
  q.qid = qid;
  q.pair_id = pair;
  q.answer_counts = {{answer, 10}};
  return q;
}

// Loads a ready, pre-normalized train/val split of generated balanced pairs.
struct SmallData {
  Manifest manifest;
  VocabSet vocab;
  Dataset train;
  Dataset val;
};

SmallData small_dataset(std::size_t train_pairs, std::size_t val_pairs, std::uint64_t seed) {
  const SceneTemplate st = SceneTemplate::standard();
  GenOptions topt;
  topt.seed = seed;
  topt.pairs = train_pairs;
  Generated tg = generate_dataset(topt, st);
  GenOptions vopt;
  vopt.seed = mix_seed(seed, 77);
  vopt.pairs = val_pairs;
  Generated vg = generate_dataset(vopt, st);

  TempDir dir("traindata");
  write_generated(dir.path.string(), tg);
  auto raws = parse_question_file(dir.file("questions.conllu"));

  SmallData d;
  d.manifest = st.manifest;
  d.vocab = build_vocabs(raws, 5);

  TempDir vdir("valdata");
  write_generated(vdir.path.string(), vg);
  d.train = load_dataset(dir.file("scenes.jsonl"), dir.file("questions.conllu"), d.manifest, d.vocab);
  d.val = load_dataset(vdir.file("scenes.jsonl"), vdir.file("questions.conllu"), d.manifest, d.vocab);
  NormStats stats = fit_norm_stats(d.train.scenes);
  apply_norm_all(d.train, stats);
  apply_norm_all(d.val, stats);
  return d;
}

}  // namespace

TEST_CASE("hard softmax loss values") {
  Tape t;
  Var uniform = t.constant(Tensor::full({10}, 0.1));
  CHECK(t.value(hard_softmax_loss(t, uniform, 3)).at(0) == Approx(std::log(10.0)).margin(1e-12));

  Tensor onehot({4});
  onehot.at(2) = 1.0;
  Tape t2;
  CHECK(t2.value(hard_softmax_loss(t2, t2.constant(onehot), 2)).at(0) == 0.0);
}

TEST_CASE("soft logistic loss values and its minimizer") {
  Tape t;
  CHECK(t.value(soft_logistic_loss(t, t.constant(Tensor::vec({1.0})), Tensor::vec({1.0}))).at(0) ==
        Approx(0.0).margin(1e-9));
  Tape t2;
  CHECK(t2.value(soft_logistic_loss(t2, t2.constant(Tensor::vec({0.5})), Tensor::vec({0.5}))).at(0) ==
        Approx(std::log(2.0)).margin(1e-12));

  // 1-D scan: the loss over y is minimized at y == s
  const double s = 0.37;
  double best_y = -1.0, best_loss = 1e100;
  for (double y = 0.01; y < 1.0; y += 0.01) {
    Tape ts;
    const double loss =
        ts.value(soft_logistic_loss(ts, ts.constant(Tensor::vec({y})), Tensor::vec({s}))).at(0);
    if (loss < best_loss) {
      best_loss = loss;
      best_y = y;
    }
  }
  CHECK(best_y == Approx(s).margin(0.011));
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(17);
  ParamStore params;
  params["logits"] = Tensor({5});
  for (double& v : params["logits"].data) v = rng.uniform(-1, 1);
  Tensor targets = Tensor::vec({1.0, 0.0, 0.5, 0.0, 1.0});

  auto hard = [](Tape& t, const ParamStore& p) {
    return hard_softmax_loss(t, t.softmax(t.param("logits", p.at("logits"))), 2);
  };
  CHECK(grad_check(hard, params, 1e-5).worst < 1e-4);

  auto soft = [&targets](Tape& t, const ParamStore& p) {
    return soft_logistic_loss(t, t.sigmoid(t.param("logits", p.at("logits"))), targets);
  };
  CHECK(grad_check(soft, params, 1e-5).worst < 1e-4);
}

TEST_CASE("hard target selection and skipping") {
  VocabSet v = yes_no_vocab();
  QaInstance q;
  q.answer_counts = {{"yes", 7}, {"no", 3}};
  REQUIRE(hard_target(q, v).has_value());
  CHECK(*hard_target(q, v) == *v.answer("yes"));

  QaInstance oov;
  oov.answer_counts = {{"banana", 10}};
  CHECK(!hard_target(oov, v).has_value());
}

TEST_CASE("adadelta: fixed point, quadratic descent, and a hand-computed trace") {
  TrainConfig cfg;
  cfg.rho = 0.95;
  cfg.epsilon = 1e-6;

  // zero gradient leaves parameters untouched
  VocabSet v = yes_no_vocab();
  ModelConfig mc;
  mc.hidden_dim = 4;
  ModelParams params = init_params(v, 8, mc, 3);
  ModelParams before = params;
  AdadeltaState state;
  GradientMap zero;
  for (const auto& [name, tensor] : params.tensors) zero[name] = Tensor(tensor.shape);
  adadelta_step(params, zero, state, cfg);
  for (const auto& [name, tensor] : params.tensors) CHECK(tensor.data == before.at(name).data);

  // f(w) = (w-3)^2 from w=0: |w-3| shrinks monotonically after burn-in.
  // Running the optimizer itself is the oracle here; with rho=0.95 and
  // eps=1e-6 the gap after 200 steps is 2.0964 and first drops below 0.5 at
  // step 656.
  ModelParams wparam;
  wparam.tensors["w"] = Tensor::scalar(0.0);
  AdadeltaState wstate;
  double prev_gap = 3.0;
  double gap_at_200 = 3.0;
  int first_below_half = -1;
  bool monotone = true;
  for (int step = 0; step < 700; ++step) {
    const double w = wparam.at("w").at(0);
    GradientMap g;
    g["w"] = Tensor::scalar(2.0 * (w - 3.0));
    adadelta_step(wparam, g, wstate, cfg);
    const double gap = std::abs(wparam.at("w").at(0) - 3.0);
    if (step >= 20 && gap > prev_gap + 1e-12) monotone = false;
    prev_gap = gap;
    if (step == 199) gap_at_200 = gap;
    if (first_below_half < 0 && gap < 0.5) first_below_half = step + 1;
  }
  CHECK(monotone);
  CHECK(gap_at_200 == Approx(2.0963567897).margin(1e-9));
  CHECK(first_below_half == 656);

  // three steps against explicit arithmetic, constant gradient 1
  ModelParams one;
  one.tensors["w"] = Tensor::scalar(1.0);
  AdadeltaState s1;
  double eg = 0.0, ex = 0.0, w = 1.0;
  for (int step = 0; step < 3; ++step) {
    GradientMap g;
    g["w"] = Tensor::scalar(1.0);
    adadelta_step(one, g, s1, cfg);
    eg = 0.95 * eg + 0.05 * 1.0;
    const double dx = -std::sqrt((ex + 1e-6) / (eg + 1e-6)) * 1.0;
    ex = 0.95 * ex + 0.05 * dx * dx;
    w += dx;
    CHECK(one.at("w").at(0) == Approx(w).margin(1e-15));
  }
}

TEST_CASE("embedding learning-rate scale: word_emb updates slower, zero freezes") {
  VocabSet v = yes_no_vocab();
  ModelConfig mc;
  mc.hidden_dim = 4;
  ModelParams params = init_params(v, 8, mc, 5);
  Tensor w1_before = params.at("word_emb");

  GradientMap grads;
  grads["word_emb"] = Tensor::full(params.at("word_emb").shape, 1.0);
  TrainConfig cfg;
  cfg.embedding_lr_scale = 0.0;
  AdadeltaState state;
  adadelta_step(params, grads, state, cfg);
  CHECK(params.at("word_emb").data == w1_before.data);  // bitwise frozen

  cfg.embedding_lr_scale = 0.1;
  AdadeltaState s2;
  ModelParams p2;
  p2.tensors["word_emb"] = w1_before;
  p2.tensors["other"] = w1_before;
  GradientMap g2;
  g2["word_emb"] = Tensor::full(w1_before.shape, 1.0);
  g2["other"] = Tensor::full(w1_before.shape, 1.0);
  adadelta_step(p2, g2, s2, cfg);
  const double demb = std::abs(p2.at("word_emb").at(0, 0) - w1_before.at(0, 0));
  const double doth = std::abs(p2.at("other").at(0, 0) - w1_before.at(0, 0));
  CHECK(demb == Approx(0.1 * doth).margin(1e-15));
}

TEST_CASE("make_batches packs whole pairs") {
  std::vector<QaInstance> instances;
  for (int p = 0; p < 4; ++p) {
    instances.push_back(paired_instance("q" + std::to_string(2 * p), "p" + std::to_string(p), "yes"));
    instances.push_back(paired_instance("q" + std::to_string(2 * p + 1), "p" + std::to_string(p), "no"));
  }
  TrainConfig cfg;
  cfg.batch_size = 4;
  auto batches = make_batches(instances, cfg, 1);
  REQUIRE(batches.size() == 2);
  for (const auto& b : batches) {
    CHECK(b.size() == 4);
    std::map<std::string, int> seen;
    for (std::size_t i : b) seen[instances[i].pair_id]++;
    for (const auto& [pid, n] : seen) CHECK(n == 2);
  }

  // group larger than the batch errors out
  std::vector<QaInstance> big;
  for (int i = 0; i < 3; ++i) big.push_back(paired_instance("q" + std::to_string(i), "p0", "yes"));
  TrainConfig tiny;
  tiny.batch_size = 2;
  CHECK_THROWS_WITH(make_batches(big, tiny, 1), Catch::Contains("batch size"));

  // unpaired instances shuffle freely and all appear exactly once
  std::vector<QaInstance> plain;
  for (int i = 0; i < 10; ++i) plain.push_back(paired_instance("q" + std::to_string(i), "", "yes"));
  auto pb = make_batches(plain, cfg, 9);
  std::set<std::size_t> all;
  for (const auto& b : pb)
    for (std::size_t i : b) all.insert(i);
  CHECK(all.size() == 10);
}

TEST_CASE("pairs never split across batches over many seeds") {
  Rng meta(123);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<QaInstance> instances;
    const std::size_t pairs = 3 + meta.below(30);
    for (std::size_t p = 0; p < pairs; ++p) {
      instances.push_back(paired_instance("a" + std::to_string(p), "p" + std::to_string(p), "yes"));
      instances.push_back(paired_instance("b" + std::to_string(p), "p" + std::to_string(p), "no"));
    }
    TrainConfig cfg;
    cfg.batch_size = 2 + meta.below(7);
    auto batches = make_batches(instances, cfg, meta.below(1u << 31));
    std::map<std::string, std::set<std::size_t>> batch_of_pair;
    for (std::size_t b = 0; b < batches.size(); ++b)
      for (std::size_t i : batches[b]) batch_of_pair[instances[i].pair_id].insert(b);
    for (const auto& [pid, bs] : batch_of_pair) CHECK(bs.size() == 1);
  }
}

TEST_CASE("train fraction takes a prefix of shuffled pair groups") {
  std::vector<QaInstance> instances;
  for (int p = 0; p < 16; ++p) {
    instances.push_back(paired_instance("a" + std::to_string(p), "p" + std::to_string(p), "yes"));
    instances.push_back(paired_instance("b" + std::to_string(p), "p" + std::to_string(p), "no"));
  }
  auto quarter = subset_by_fraction(instances, 0.25, 99);
  CHECK(quarter.size() == 8);  // 4 of 16 groups
  auto eighth = subset_by_fraction(instances, 0.125, 99);
  CHECK(eighth.size() == 4);
  // same seed: smaller fraction is a prefix of the larger one
  for (std::size_t i = 0; i < eighth.size(); ++i) CHECK(eighth[i] == quarter[i]);
  // pairs stay whole
  std::set<std::string> pids;
  for (std::size_t i : quarter) pids.insert(instances[i].pair_id);
  CHECK(pids.size() == 4);
}

TEST_CASE("training runs deterministically and the loss decreases") {
  SmallData d = small_dataset(30, 8, 2024);
  ModelConfig mc;
  mc.hidden_dim = 16;
  mc.t_question = 1;
  mc.t_scene = 1;
  TrainConfig tc;
  tc.batch_size = 16;
  tc.epochs = 10;
  tc.seed = 7;

  ModelParams p0 = init_params(d.vocab, d.manifest.node_feature_dim(), mc, tc.seed);
  TrainResult r1 = train(d.train, d.val, d.vocab, mc, tc, p0);
  TrainResult r2 = train(d.train, d.val, d.vocab, mc, tc, p0);
  REQUIRE(r1.log.size() == 10);
  for (std::size_t e = 0; e < r1.log.size(); ++e) {
    CHECK(r1.log[e].train_loss == r2.log[e].train_loss);
    CHECK(r1.log[e].val_metric == r2.log[e].val_metric);
  }
  CHECK(r1.best_epoch == r2.best_epoch);
  CHECK(r1.log[9].train_loss < r1.log[0].train_loss);
  CHECK(r1.val_is_pairs);

  for (const auto& [name, tensor] : r1.best_params.tensors)
    CHECK(tensor.data == r2.best_params.at(name).data);
}

TEST_CASE("training skips questions whose modal answer is out of vocabulary") {
  SmallData d = small_dataset(12, 4, 77);
  // poison one training question's ground truth
  d.train.instances[0].answer_counts = {{"banana", 10}};
  ModelConfig mc;
  mc.hidden_dim = 8;
  mc.t_question = 1;
  mc.t_scene = 1;
  TrainConfig tc;
  tc.batch_size = 8;
  tc.epochs = 1;
  tc.seed = 3;
  ModelParams p0 = init_params(d.vocab, d.manifest.node_feature_dim(), mc, 1);
  TrainResult r = train(d.train, d.val, d.vocab, mc, tc, p0);
  CHECK(r.log[0].skipped == 1);
}

TEST_CASE("non-finite losses abort with a diagnostic") {
  SmallData d = small_dataset(6, 2, 31);
  ModelConfig mc;
  mc.hidden_dim = 8;
  mc.t_question = 1;
  mc.t_scene = 1;
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 1;
  tc.seed = 3;
  ModelParams p0 = init_params(d.vocab, d.manifest.node_feature_dim(), mc, 1);
  p0.at("out_w").at(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH(train(d.train, d.val, d.vocab, mc, tc, p0),
                    Catch::Contains("non-finite") && Catch::Contains("batch"));
}
