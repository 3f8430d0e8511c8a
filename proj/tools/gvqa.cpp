// gvqa — command-line entry point: dataset generation, training, evaluation,
// prediction, gradient checking, ablation sweeps, training-size sweeps, and
// attention export.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gvqa/gvqa.hpp"

namespace fs = std::filesystem;
using namespace gvqa;

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- sidecar files -------------------------------------------------------------

nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json j;
  j["shape"] = t.shape;
  j["data"] = t.data;
  return j;
}

Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

// Vocabulary plus the training-split normalization statistics; everything a
// checkpoint needs to be applied to new data.
void save_vocab_sidecar(const std::string& path, const VocabSet& vocab, const NormStats& stats) {
  nlohmann::json j;
  j["words"] = vocab.words;
  j["deps"] = vocab.deps;
  j["answers"] = vocab.answers;
  j["node_mean"] = tensor_to_json(stats.node_mean);
  j["node_std"] = tensor_to_json(stats.node_std);
  j["edge_mean"] = tensor_to_json(stats.edge_mean);
  j["edge_std"] = tensor_to_json(stats.edge_std);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::pair<VocabSet, NormStats> load_vocab_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  in >> j;
  VocabSet v;
  v.words = j.at("words").get<std::vector<std::string>>();
  v.deps = j.at("deps").get<std::vector<std::string>>();
  v.answers = j.at("answers").get<std::vector<std::string>>();
  v.rebuild_indices();
  NormStats s;
  s.node_mean = tensor_from_json(j.at("node_mean"));
  s.node_std = tensor_from_json(j.at("node_std"));
  s.edge_mean = tensor_from_json(j.at("edge_mean"));
  s.edge_std = tensor_from_json(j.at("edge_std"));
  return {std::move(v), std::move(s)};
}

// ---- options shared across subcommands -------------------------------------------

struct Options {
  std::string scenes, questions, manifest, embeddings;
  std::string val_scenes, val_questions;
  std::string checkpoint, vocab_file;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  std::string loss = "hard";
  std::string head;
  std::size_t h_dim = 300;
  std::size_t t_q = 4;
  std::size_t t_s = 4;
  double dropout = 0.3;
  double train_fraction = 1.0;
  double embedding_lr_scale = 0.1;
  int answer_min_count = 5;
  bool no_keep_pairs = false;

  std::size_t pairs = 100;
  double disagreement_rate = 0.0;
  double left_of_fraction = 0.0;
  double nearest_fraction = 0.0;

  bool sequential_question_edges = false;
  bool no_pretrained_embeddings = false;
  bool unit_scene_edges = false;
  bool disable_gru_question = false;
  bool disable_gru_scene = false;
  bool uniform_attention = false;
  bool blind = false;
  bool share_grus = false;

  bool pr_all_pairs = false;
  std::string qids;  // comma-separated for export-attention
};

ModelConfig model_config(const Options& o) {
  ModelConfig c;
  c.hidden_dim = o.h_dim;
  c.t_question = o.t_q;
  c.t_scene = o.t_s;
  c.dropout_rate = o.dropout;
  if (o.head.empty())
    c.head = o.loss == "soft" ? ModelConfig::Head::logistic : ModelConfig::Head::softmax;
  else
    c.head = head_from_name(o.head);
  c.sequential_question_edges = o.sequential_question_edges;
  c.no_pretrained_embeddings = o.no_pretrained_embeddings;
  c.unit_scene_edges = o.unit_scene_edges;
  c.disable_gru_question = o.disable_gru_question;
  c.disable_gru_scene = o.disable_gru_scene;
  c.uniform_attention = o.uniform_attention;
  c.blind = o.blind;
  c.share_grus = o.share_grus;
  return c;
}

TrainConfig train_config(const Options& o) {
  TrainConfig t;
  t.batch_size = o.batch_size;
  t.epochs = o.epochs;
  t.loss = loss_from_name(o.loss);
  t.embedding_lr_scale = o.embedding_lr_scale;
  t.seed = o.seed;
  t.train_fraction = o.train_fraction;
  t.keep_pairs_together = !o.no_keep_pairs;
  return t;
}

nlohmann::json runspec_json(const std::string& subcommand, const Options& o) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["seed"] = o.seed;
  j["paths"] = {{"scenes", o.scenes},         {"questions", o.questions},
                {"manifest", o.manifest},     {"embeddings", o.embeddings},
                {"val_scenes", o.val_scenes}, {"val_questions", o.val_questions},
                {"checkpoint", o.checkpoint}, {"vocab", o.vocab_file},
                {"out", o.out}};
  j["model_config"] = config_to_json(model_config(o));
  j["train_config"] = {{"batch_size", o.batch_size},
                       {"epochs", o.epochs},
                       {"loss", o.loss},
                       {"embedding_lr_scale", o.embedding_lr_scale},
                       {"train_fraction", o.train_fraction},
                       {"keep_pairs_together", !o.no_keep_pairs},
                       {"answer_min_count", o.answer_min_count}};
  j["gen"] = {{"pairs", o.pairs},
              {"disagreement_rate", o.disagreement_rate},
              {"left_of_fraction", o.left_of_fraction},
              {"nearest_fraction", o.nearest_fraction}};
  j["pr_all_pairs"] = o.pr_all_pairs;
  j["qids"] = o.qids;
  return j;
}

void write_runspec(const std::string& subcommand, const Options& o) {
  fs::create_directories(o.out);
  std::ofstream out(o.out + "/runspec.json");
  if (!out) throw IoError("cannot write " + o.out + "/runspec.json");
  out << runspec_json(subcommand, o).dump(2) << '\n';
}

// ---- data plumbing ------------------------------------------------------------------

struct LoadedTraining {
  Manifest manifest;
  VocabSet vocab;
  NormStats stats;
  Dataset train;
  Dataset val;
};

LoadedTraining load_training_data(const Options& o) {
  LoadedTraining d;
  d.manifest = load_manifest(o.manifest);
  auto raws = parse_question_file(o.questions);
  d.vocab = build_vocabs(raws, o.answer_min_count);
  if (d.vocab.answers.empty())
    throw Error("answer vocabulary is empty at min-count " + std::to_string(o.answer_min_count));
  d.train = load_dataset(o.scenes, o.questions, d.manifest, d.vocab);
  d.stats = fit_norm_stats(d.train.scenes);
  apply_norm_all(d.train, d.stats);
  if (!o.val_scenes.empty()) {
    d.val = load_dataset(o.val_scenes, o.val_questions, d.manifest, d.vocab);
    apply_norm_all(d.val, d.stats);
  }
  return d;
}

ModelParams initial_params(const Options& o, const LoadedTraining& d, const ModelConfig& cfg) {
  ModelParams params = init_params(d.vocab, d.manifest.node_feature_dim(), cfg, o.seed);
  if (!o.embeddings.empty() && !cfg.no_pretrained_embeddings) {
    auto loaded = load_pretrained_embeddings(o.embeddings, d.vocab, cfg.hidden_dim,
                                             mix_seed(o.seed, 0xE0));
    params.tensors["word_emb"] = std::move(loaded.matrix);
    std::cout << "embeddings: " << loaded.coverage << "/" << d.vocab.words.size()
              << " vocabulary words covered\n";
  }
  return params;
}

struct EvalBundle {
  Manifest manifest;
  VocabSet vocab;
  NormStats stats;
  Dataset data;
  Checkpoint ckpt;
};

EvalBundle load_eval_bundle(const Options& o) {
  EvalBundle b;
  b.manifest = load_manifest(o.manifest);
  std::string vocab_path = o.vocab_file;
  if (vocab_path.empty())
    vocab_path = (fs::path(o.checkpoint).parent_path() / "vocab.json").string();
  auto [vocab, stats] = load_vocab_sidecar(vocab_path);
  b.vocab = std::move(vocab);
  b.stats = std::move(stats);
  b.ckpt = load_checkpoint(o.checkpoint, b.vocab);
  b.data = load_dataset(o.scenes, o.questions, b.manifest, b.vocab);
  apply_norm_all(b.data, b.stats);
  return b;
}

std::vector<Tensor> score_dataset(const Dataset& data, const ModelParams& params,
                                  const ModelConfig& cfg) {
  std::vector<Tensor> scores;
  scores.reserve(data.instances.size());
  for (const QaInstance& q : data.instances)
    scores.push_back(forward(data.scenes[q.scene_index], q.question, params, cfg).scores);
  return scores;
}

// ---- subcommands ----------------------------------------------------------------------

int run_gen_data(const Options& o) {
  write_runspec("gen-data", o);
  GenOptions g;
  g.seed = o.seed;
  g.pairs = o.pairs;
  g.disagreement_rate = o.disagreement_rate;
  g.left_of_fraction = o.left_of_fraction;
  g.nearest_fraction = o.nearest_fraction;
  Generated data = generate_dataset(g, SceneTemplate::standard());
  write_generated(o.out, data);
  std::cout << "wrote " << data.scenes.size() << " scenes and " << data.instances.size()
            << " questions to " << o.out << "\n";
  return 0;
}

int run_train(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  write_runspec("train", o);
  if (o.val_scenes.empty() || o.val_questions.empty())
    throw Error("train requires --val-scenes and --val-questions for model selection");
  LoadedTraining d = load_training_data(o);
  const ModelConfig mcfg = model_config(o);
  const TrainConfig tcfg = train_config(o);
  ModelParams params = initial_params(o, d, mcfg);

  TrainResult r = train(d.train, d.val, d.vocab, mcfg, tcfg, std::move(params));
  for (const EpochMetrics& em : r.log)
    std::cout << "epoch " << em.epoch << "  loss " << em.train_loss << "  val " << em.val_metric
              << "  skipped " << em.skipped << "\n";

  write_metrics_csv(o.out + "/metrics.csv", r.log);
  save_checkpoint(o.out + "/checkpoint.bin", r.best_params, mcfg, d.vocab);
  save_vocab_sidecar(o.out + "/vocab.json", d.vocab, d.stats);
  std::cout << "best epoch " << r.best_epoch << " with "
            << (r.val_is_pairs ? "pairs accuracy " : "VQA score ") << r.best_metric << "\n"
            << "trained in " << seconds_since(t0) << " s\n";
  return 0;
}

int run_eval(const Options& o) {
  write_runspec("eval", o);
  EvalBundle b = load_eval_bundle(o);
  std::vector<Tensor> scores = score_dataset(b.data, b.ckpt.params, b.ckpt.config);

  const double open_acc = accuracy(b.data.instances, scores, b.vocab, EvalMode::open_ended);
  nlohmann::json report;
  report["accuracy_open_ended"] = open_acc;
  std::cout << "open-ended accuracy: " << open_acc << "\n";

  bool all_choices = !b.data.instances.empty();
  for (const QaInstance& q : b.data.instances)
    if (q.choices.empty()) all_choices = false;
  if (all_choices) {
    const double mc = accuracy(b.data.instances, scores, b.vocab, EvalMode::multiple_choice);
    report["accuracy_multiple_choice"] = mc;
    std::cout << "multiple-choice accuracy: " << mc << "\n";
  }

  bool all_paired = !b.data.instances.empty();
  for (const QaInstance& q : b.data.instances)
    if (q.pair_id.empty()) all_paired = false;
  if (all_paired) {
    const double pa = pairs_accuracy(b.data.instances, scores, b.vocab);
    report["pairs_accuracy"] = pa;
    std::cout << "pairs accuracy: " << pa << "\n";
  }

  auto samples = o.pr_all_pairs ? all_pair_samples(b.data.instances, scores, b.vocab)
                                : top1_samples(b.data.instances, scores, b.vocab);
  write_pr_curve(o.out + "/pr_curve.csv", precision_recall(samples));
  write_predictions(o.out + "/predictions.csv", b.data.instances, scores, b.vocab);
  std::ofstream mj(o.out + "/metrics.json");
  mj << report.dump(2) << '\n';
  return 0;
}

int run_predict(const Options& o) {
  write_runspec("predict", o);
  EvalBundle b = load_eval_bundle(o);
  std::vector<Tensor> scores = score_dataset(b.data, b.ckpt.params, b.ckpt.config);
  write_predictions(o.out + "/predictions.csv", b.data.instances, scores, b.vocab);
  std::cout << "wrote " << scores.size() << " predictions\n";
  return 0;
}

int run_gradcheck(const Options& o, double eps) {
  if (!o.out.empty()) write_runspec("gradcheck", o);
  ProbeInstance probe = make_probe_instance(o.seed);
  ModelConfig cfg = model_config(o);

  bool ok = true;
  for (const char* loss : {"hard", "soft"}) {
    cfg.head = std::string(loss) == "hard" ? ModelConfig::Head::softmax
                                           : ModelConfig::Head::logistic;
    ModelParams params =
        init_params(probe.vocab, probe.manifest.node_feature_dim(), cfg, o.seed);
    Tensor soft = Tensor::vec({0.0, 1.0});  // the probe question's answer is "yes"
    auto build = [&](Tape& t, const ParamStore& store) {
      ForwardVars fv =
          forward_on_tape(t, probe.scene, probe.question, store, cfg, false, nullptr);
      return std::string(loss) == "hard" ? hard_softmax_loss(t, fv.scores, 1)
                                         : soft_logistic_loss(t, fv.scores, soft);
    };
    ParamStore store = params.tensors;
    GradCheckReport report = grad_check(build, store, eps);
    std::cout << "loss=" << loss << "\n";
    for (const auto& [name, err] : report.max_rel_error) {
      std::cout << "  " << name << "  " << err << (err < 1e-4 ? "" : "  <-- FAIL") << "\n";
      if (err >= 1e-4) ok = false;
    }
    std::cout << "  worst " << report.worst << "\n";
  }
  std::cout << (ok ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
  return ok ? 0 : 1;
}

struct AblationRow {
  std::string label;
  ModelConfig cfg;
};

std::vector<AblationRow> ablation_rows(const ModelConfig& base) {
  std::vector<AblationRow> rows;
  auto with = [&](const std::string& label, auto mutate) {
    ModelConfig c = base;
    mutate(c);
    rows.push_back({label, c});
  };
  with("1 question: no parsing (previous/next edges)",
       [](ModelConfig& c) { c.sequential_question_edges = true; });
  with("2 question: word embedding not pretrained",
       [](ModelConfig& c) { c.no_pretrained_embeddings = true; });
  with("3 scene: no edge features", [](ModelConfig& c) { c.unit_scene_edges = true; });
  with("4 graph processing disabled for question",
       [](ModelConfig& c) { c.disable_gru_question = true; });
  with("5 graph processing disabled for scene",
       [](ModelConfig& c) { c.disable_gru_scene = true; });
  with("6 graph processing disabled for question/scene", [](ModelConfig& c) {
    c.disable_gru_question = true;
    c.disable_gru_scene = true;
  });
  with("7 one iteration for question", [](ModelConfig& c) { c.t_question = 1; });
  with("8 one iteration for scene", [](ModelConfig& c) { c.t_scene = 1; });
  with("9 one iteration for question/scene", [](ModelConfig& c) {
    c.t_question = 1;
    c.t_scene = 1;
  });
  with("10 uniform matching weights", [](ModelConfig& c) { c.uniform_attention = true; });
  return rows;
}

int run_ablate(const Options& o) {
  write_runspec("ablate", o);
  LoadedTraining d = load_training_data(o);
  const ModelConfig base = model_config(o);
  const TrainConfig tcfg = train_config(o);

  auto run_one = [&](const ModelConfig& cfg) {
    ModelParams params = initial_params(o, d, cfg);
    TrainResult r = train(d.train, d.val, d.vocab, cfg, tcfg, std::move(params));
    return r.best_metric;
  };

  std::ofstream csv(o.out + "/ablations.csv");
  csv << "row,configuration,val_metric\n";
  csv.precision(17);
  const double full = run_one(base);
  std::cout << "full model: " << full << "\n";
  csv << "0,full model," << full << "\n";
  std::size_t row_no = 1;
  for (const AblationRow& row : ablation_rows(base)) {
    const double metric = run_one(row.cfg);
    std::cout << row.label << ": " << metric << "\n";
    csv << row_no++ << ",\"" << row.label << "\"," << metric << "\n";
  }
  return 0;
}

int run_sweep_size(const Options& o) {
  write_runspec("sweep-size", o);
  LoadedTraining d = load_training_data(o);
  const ModelConfig mcfg = model_config(o);
  std::ofstream csv(o.out + "/sweep_size.csv");
  csv << "fraction,val_metric\n";
  csv.precision(17);
  for (double fraction : {0.125, 0.25, 0.5, 1.0}) {
    TrainConfig tcfg = train_config(o);
    tcfg.train_fraction = fraction;
    ModelParams params = initial_params(o, d, mcfg);
    TrainResult r = train(d.train, d.val, d.vocab, mcfg, tcfg, std::move(params));
    std::cout << "fraction " << fraction << ": " << r.best_metric << "\n";
    csv << fraction << ',' << r.best_metric << "\n";
  }
  return 0;
}

int run_export_attention(const Options& o) {
  write_runspec("export-attention", o);
  EvalBundle b = load_eval_bundle(o);
  std::set<std::string> wanted;
  std::stringstream ss(o.qids);
  std::string qid;
  while (std::getline(ss, qid, ','))
    if (!qid.empty()) wanted.insert(qid);
  std::size_t exported = 0;
  for (const QaInstance& q : b.data.instances) {
    if (!wanted.empty() && !wanted.count(q.qid)) continue;
    ForwardResult r =
        forward(b.data.scenes[q.scene_index], q.question, b.ckpt.params, b.ckpt.config);
    export_attention(r, b.data.scenes[q.scene_index], q.question, b.manifest,
                     o.out + "/attention_" + q.qid + ".csv");
    ++exported;
  }
  std::cout << "exported " << exported << " attention matrices\n";
  if (!wanted.empty() && exported != wanted.size()) {
    std::cerr << "some requested qids were not found\n";
    return 1;
  }
  return 0;
}

void add_data_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--scenes", o.scenes, "scene JSONL file")->required();
  cmd->add_option("--questions", o.questions, "question parse file")->required();
  cmd->add_option("--manifest", o.manifest, "one-hot manifest JSON")->required();
}

void add_model_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--h-dim", o.h_dim, "hidden dimension H");
  cmd->add_option("--t-q", o.t_q, "question graph iterations");
  cmd->add_option("--t-s", o.t_s, "scene graph iterations");
  cmd->add_option("--head", o.head, "softmax|logistic (default follows --loss)");
  cmd->add_option("--dropout", o.dropout, "dropout rate");
  cmd->add_flag("--sequential-question-edges", o.sequential_question_edges,
                "previous/next chain instead of the dependency parse");
  cmd->add_flag("--no-pretrained-embeddings", o.no_pretrained_embeddings,
                "ignore --embeddings and train word vectors from scratch");
  cmd->add_flag("--unit-scene-edges", o.unit_scene_edges, "all-ones scene edge features");
  cmd->add_flag("--disable-gru-question", o.disable_gru_question,
                "no recurrent processing of the question graph");
  cmd->add_flag("--disable-gru-scene", o.disable_gru_scene,
                "no recurrent processing of the scene graph");
  cmd->add_flag("--uniform-attention", o.uniform_attention, "matching weights fixed to 1");
  cmd->add_flag("--blind", o.blind, "ignore the scene (question-only baseline)");
  cmd->add_flag("--share-grus", o.share_grus, "one GRU parameter set for both graphs");
}

void add_train_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--val-scenes", o.val_scenes, "validation scene JSONL")->required();
  cmd->add_option("--val-questions", o.val_questions, "validation question file")->required();
  cmd->add_option("--embeddings", o.embeddings, "pretrained word embedding text file");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--batch-size", o.batch_size, "mini-batch size");
  cmd->add_option("--loss", o.loss, "hard|soft")->check(CLI::IsMember({"hard", "soft"}));
  cmd->add_option("--train-fraction", o.train_fraction, "fraction of pair groups to train on");
  cmd->add_option("--embedding-lr-scale", o.embedding_lr_scale,
                  "word-embedding update multiplier");
  cmd->add_option("--answer-min-count", o.answer_min_count,
                  "answers below this training count stay out of the vocabulary");
  cmd->add_flag("--no-keep-pairs-together", o.no_keep_pairs,
                "allow complementary pairs to split across batches");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-matching visual question answering over scene and parse graphs"};
  app.require_subcommand(1);
  Options o;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a balanced synthetic dataset");
  gen->add_option("--seed", o.seed, "generation seed");
  gen->add_option("--pairs", o.pairs, "number of complementary pairs")->required();
  gen->add_option("--out", o.out, "output directory")->required();
  gen->add_option("--disagreement-rate", o.disagreement_rate,
                  "fraction of pairs given an ambiguous member");
  gen->add_option("--left-of-fraction", o.left_of_fraction, "fraction of left-of pairs");
  gen->add_option("--nearest-fraction", o.nearest_fraction, "fraction of nearest pairs");

  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  add_data_flags(train_cmd, o);
  add_model_flags(train_cmd, o);
  add_train_flags(train_cmd, o);
  train_cmd->add_option("--seed", o.seed, "run seed");
  train_cmd->add_option("--out", o.out, "output directory")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_data_flags(eval_cmd, o);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--vocab", o.vocab_file, "vocab sidecar (default: next to checkpoint)");
  eval_cmd->add_option("--out", o.out, "output directory")->required();
  eval_cmd->add_option("--seed", o.seed, "unused; recorded for reproducibility");
  eval_cmd->add_flag("--pr-all-pairs", o.pr_all_pairs,
                     "precision/recall over all (question, answer) pairs instead of top-1");

  CLI::App* predict_cmd = app.add_subcommand("predict", "write predictions CSV");
  add_data_flags(predict_cmd, o);
  predict_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  predict_cmd->add_option("--vocab", o.vocab_file, "vocab sidecar");
  predict_cmd->add_option("--out", o.out, "output directory")->required();

  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  grad_cmd->add_option("--seed", o.seed, "probe seed");
  grad_cmd->add_option("--out", o.out, "optional output directory for the runspec");
  // probe-sized defaults, overridable
  std::size_t gc_h = 16, gc_tq = 2, gc_ts = 2;
  // 1e-4 balances truncation against cancellation noise for a full-model probe
  double gc_eps = 1e-4;
  grad_cmd->add_option("--h-dim", gc_h, "hidden dimension");
  grad_cmd->add_option("--t-q", gc_tq, "question iterations");
  grad_cmd->add_option("--t-s", gc_ts, "scene iterations");
  grad_cmd->add_option("--eps", gc_eps, "central-difference step");
  grad_cmd->parse_complete_callback([&] {
    o.h_dim = gc_h;
    o.t_q = gc_tq;
    o.t_s = gc_ts;
  });

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "train the ten ablation configurations");
  add_data_flags(ablate_cmd, o);
  add_model_flags(ablate_cmd, o);
  add_train_flags(ablate_cmd, o);
  ablate_cmd->add_option("--seed", o.seed, "run seed");
  ablate_cmd->add_option("--out", o.out, "output directory")->required();

  CLI::App* sweep_cmd = app.add_subcommand("sweep-size", "train at {1/8, 1/4, 1/2, 1} of the data");
  add_data_flags(sweep_cmd, o);
  add_model_flags(sweep_cmd, o);
  add_train_flags(sweep_cmd, o);
  sweep_cmd->add_option("--seed", o.seed, "run seed");
  sweep_cmd->add_option("--out", o.out, "output directory")->required();

  CLI::App* attn_cmd = app.add_subcommand("export-attention", "attention matrices as CSV");
  add_data_flags(attn_cmd, o);
  attn_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  attn_cmd->add_option("--vocab", o.vocab_file, "vocab sidecar");
  attn_cmd->add_option("--qids", o.qids, "comma-separated question ids (default: all)");
  attn_cmd->add_option("--out", o.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return run_gen_data(o);
    if (train_cmd->parsed()) return run_train(o);
    if (eval_cmd->parsed()) return run_eval(o);
    if (predict_cmd->parsed()) return run_predict(o);
    if (grad_cmd->parsed()) return run_gradcheck(o, gc_eps);
    if (ablate_cmd->parsed()) return run_ablate(o);
    if (sweep_cmd->parsed()) return run_sweep_size(o);
    if (attn_cmd->parsed()) return run_export_attention(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
