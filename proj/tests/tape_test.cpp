#include <catch2/catch.hpp>

#include <algorithm>
#include <vector>

#include "gvqa/grad_check.hpp"
#include "gvqa/tape.hpp"

using namespace gvqa;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// central differences on a scalar-valued builder, independent of Tape::backward
double numeric_grad(const LossBuilder& build, ParamStore& params, const std::string& name,
                    std::size_t entry, double eps = 1e-5) {
  Tensor& p = params.at(name);
  const double saved = p.data[entry];
  auto eval = [&]() {
    Tape t;
    return t.value(build(t, params)).at(0);
  };
  p.data[entry] = saved + eps;
  const double up = eval();
  p.data[entry] = saved - eps;
  const double down = eval();
  p.data[entry] = saved;
  return (up - down) / (2.0 * eps);
}

}  // namespace

TEST_CASE("matmul identity and selector") {
  Tape t;
  Var eye = t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var m = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const Tensor& out = t.value(t.matmul(eye, m));
  CHECK(out.data == std::vector<double>{1, 2, 3, 4});

  Tape t2;
  Var sel = t2.constant(Tensor::matrix(1, 2, {1, 0}));
  Var col = t2.constant(Tensor::matrix(2, 1, {2, 5}));
  CHECK(t2.value(t2.matmul(sel, col)).data == std::vector<double>{2});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape t;
  Var a = t.constant(Tensor({2, 3}));
  Var b = t.constant(Tensor({2, 2}));
  CHECK_THROWS_WITH(t.matmul(a, b), Catch::Contains("(2x3)") && Catch::Contains("(2x2)"));
}

TEST_CASE("matmul gradient matches central differences within 1e-6") {
  Rng rng(11);
  ParamStore params;
  params["a"] = random_tensor({3, 4}, rng);
  params["b"] = random_tensor({4, 2}, rng);
  auto build = [](Tape& t, const ParamStore& p) {
    return t.sum_all(t.matmul(t.param("a", p.at("a")), t.param("b", p.at("b"))));
  };
  auto report = grad_check(build, params, 1e-5);
  CHECK(report.max_rel_error.at("a") < 1e-6);
  CHECK(report.max_rel_error.at("b") < 1e-6);
}

TEST_CASE("elementwise basics") {
  Tape t;
  CHECK(t.value(t.sigmoid(t.constant(Tensor::scalar(0.0)))).at(0) == 0.5);
  const Tensor& r = t.value(t.relu(t.constant(Tensor::vec({-3.0, 3.0}))));
  CHECK(r.data == std::vector<double>{0.0, 3.0});
  const Tensor& h =
      t.value(t.hadamard(t.constant(Tensor::vec({1, 2})), t.constant(Tensor::vec({3, 4}))));
  CHECK(h.data == std::vector<double>{3, 8});
  CHECK_THROWS_AS(t.add(t.constant(Tensor::vec({1})), t.constant(Tensor::vec({1, 2}))),
                  ShapeError);
}

TEST_CASE("elementwise gradients match central differences") {
  Rng rng(5);
  ParamStore params;
  params["x"] = random_tensor({6}, rng);
  params["y"] = random_tensor({6}, rng, 0.2, 1.5);  // positive, keeps log well-defined

  struct Case {
    const char* name;
    LossBuilder build;
    double tol;
  };
  std::vector<Case> cases = {
      {"add",
       [](Tape& t, const ParamStore& p) {
         return t.sum_all(t.add(t.param("x", p.at("x")), t.param("y", p.at("y"))));
       },
       1e-6},
      {"sub",
       [](Tape& t, const ParamStore& p) {
         return t.sum_all(t.sub(t.param("x", p.at("x")), t.param("y", p.at("y"))));
       },
       1e-6},
      {"hadamard",
       [](Tape& t, const ParamStore& p) {
         return t.sum_all(t.hadamard(t.param("x", p.at("x")), t.param("y", p.at("y"))));
       },
       1e-6},
      {"sigmoid",
       [](Tape& t, const ParamStore& p) { return t.sum_all(t.sigmoid(t.param("x", p.at("x")))); },
       1e-4},
      {"tanh",
       [](Tape& t, const ParamStore& p) { return t.sum_all(t.tanh(t.param("x", p.at("x")))); },
       1e-4},
      {"scale",
       [](Tape& t, const ParamStore& p) { return t.sum_all(t.scale(t.param("x", p.at("x")), -2.5)); },
       1e-6},
      {"log",
       [](Tape& t, const ParamStore& p) { return t.sum_all(t.log(t.param("y", p.at("y")))); },
       1e-4},
      {"smul",
       [](Tape& t, const ParamStore& p) {
         return t.sum_all(
             t.smul(t.pick(t.param("y", p.at("y")), 0), t.param("x", p.at("x"))));
       },
       1e-4},
  };
  for (const Case& c : cases) {
    INFO(c.name);
    auto report = grad_check(c.build, params, 1e-5);
    CHECK(report.worst < c.tol);
  }
}

TEST_CASE("concat definition and identity") {
  Tape t;
  Var joined = t.concat(t.constant(Tensor::vec({1, 2})), t.constant(Tensor::vec({3})));
  CHECK(t.value(joined).data == std::vector<double>{1, 2, 3});

  Var same = t.concat(t.constant(Tensor::vec({4, 5})), t.constant(Tensor({0})));
  CHECK(t.value(same).data == std::vector<double>{4, 5});
}

TEST_CASE("concat gradient splits at the boundary") {
  Rng rng(7);
  ParamStore params;
  params["a"] = random_tensor({3}, rng);
  params["b"] = random_tensor({2}, rng);
  // weight the concatenated vector so the two sides see different gradients
  auto build = [](Tape& t, const ParamStore& p) {
    Var cat = t.concat(t.param("a", p.at("a")), t.param("b", p.at("b")));
    return t.sum_all(t.hadamard(cat, t.constant(Tensor::vec({1, 2, 3, 4, 5}))));
  };
  auto report = grad_check(build, params, 1e-5);
  CHECK(report.worst < 1e-6);

  Tape t;
  Var a = t.param("a", params.at("a"));
  Var b = t.param("b", params.at("b"));
  Var cat = t.concat(a, b);
  Var loss = t.sum_all(t.hadamard(cat, t.constant(Tensor::vec({1, 2, 3, 4, 5}))));
  GradientMap grads = t.backward(loss);
  CHECK(grads.at("a").data == std::vector<double>{1, 2, 3});
  CHECK(grads.at("b").data == std::vector<double>{4, 5});
}

TEST_CASE("l2_normalize values and zero clamp") {
  Tape t;
  const Tensor& n = t.value(t.l2_normalize(t.constant(Tensor::vec({3, 4}))));
  CHECK(n.at(0) == Approx(0.6).margin(1e-15));
  CHECK(n.at(1) == Approx(0.8).margin(1e-15));
  const Tensor& z = t.value(t.l2_normalize(t.constant(Tensor::vec({0, 0}))));
  CHECK(z.data == std::vector<double>{0, 0});
}

TEST_CASE("l2_normalize gradient on a random 7-vector") {
  Rng rng(19);
  ParamStore params;
  params["x"] = random_tensor({7}, rng);
  auto build = [](Tape& t, const ParamStore& p) {
    Var n = t.l2_normalize(t.param("x", p.at("x")));
    return t.sum_all(t.hadamard(n, t.constant(Tensor::vec({1, -2, 3, -4, 5, -6, 7}))));
  };
  auto report = grad_check(build, params, 1e-5);
  CHECK(report.worst < 1e-4);
}

TEST_CASE("softmax is a stable probability vector") {
  Tape t;
  const Tensor& u = t.value(t.softmax(t.constant(Tensor::vec({0, 0, 0}))));
  for (double v : u.data) CHECK(v == Approx(1.0 / 3.0).margin(1e-15));

  const Tensor& big = t.value(t.softmax(t.constant(Tensor::vec({1000.0, 0.0}))));
  CHECK(big.all_finite());
  CHECK(big.at(0) == Approx(1.0).margin(1e-12));
  CHECK(big.at(1) == Approx(0.0).margin(1e-12));

  Rng rng(3);
  Tensor x = random_tensor({9}, rng, -4, 4);
  Tape t2;
  const Tensor& s = t2.value(t2.softmax(t2.constant(x)));
  double sum = 0.0;
  for (double v : s.data) {
    CHECK(v >= 0.0);
    sum += v;
  }
  CHECK(sum == Approx(1.0).margin(1e-12));
}

TEST_CASE("softmax jacobian-vector product matches central differences") {
  Rng rng(23);
  ParamStore params;
  params["x"] = random_tensor({5}, rng, -2, 2);
  auto build = [](Tape& t, const ParamStore& p) {
    Var s = t.softmax(t.param("x", p.at("x")));
    return t.sum_all(t.hadamard(s, t.constant(Tensor::vec({2, -1, 0.5, 3, -2}))));
  };
  auto report = grad_check(build, params, 1e-5);
  CHECK(report.worst < 1e-4);
}

TEST_CASE("set_pool values") {
  Tape t;
  std::vector<Var> two = {t.constant(Tensor::vec({2})), t.constant(Tensor::vec({4}))};
  CHECK(t.value(t.set_pool(Tape::Pool::mean, two)).data == std::vector<double>{3});
  CHECK(t.value(t.set_pool(Tape::Pool::sum, two)).data == std::vector<double>{6});
  CHECK(t.value(t.set_pool(Tape::Pool::max, two)).data == std::vector<double>{4});

  std::vector<Var> one = {t.constant(Tensor::vec({7, -1}))};
  CHECK(t.value(t.set_pool(Tape::Pool::mean, one)).data == std::vector<double>{7, -1});

  CHECK_THROWS_AS(t.set_pool(Tape::Pool::mean, {}), EmptyPoolError);
}

TEST_CASE("set_pool is permutation invariant over all orders of up to 4 members") {
  Rng rng(31);
  for (std::size_t count : {3u, 4u}) {
    std::vector<Tensor> members;
    for (std::size_t i = 0; i < count; ++i) members.push_back(random_tensor({4}, rng));
    for (auto kind : {Tape::Pool::mean, Tape::Pool::sum, Tape::Pool::max}) {
      std::vector<std::size_t> perm(count);
      for (std::size_t i = 0; i < count; ++i) perm[i] = i;
      Tensor reference;
      bool first = true;
      do {
        Tape t;
        std::vector<Var> vars;
        for (std::size_t i : perm) vars.push_back(t.constant(members[i]));
        Tensor pooled = t.value(t.set_pool(kind, vars));
        if (first) {
          reference = pooled;
          first = false;
        } else {
          for (std::size_t i = 0; i < pooled.numel(); ++i)
            CHECK(pooled.at(i) == Approx(reference.at(i)).margin(1e-12));
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }
}

TEST_CASE("set_pool gradients, including max tie routing") {
  Rng rng(37);
  ParamStore params;
  params["a"] = random_tensor({4}, rng);
  params["b"] = random_tensor({4}, rng);
  params["c"] = random_tensor({4}, rng);
  for (auto kind : {Tape::Pool::mean, Tape::Pool::sum, Tape::Pool::max}) {
    auto build = [kind](Tape& t, const ParamStore& p) {
      std::vector<Var> vars = {t.param("a", p.at("a")), t.param("b", p.at("b")),
                               t.param("c", p.at("c"))};
      return t.sum_all(t.hadamard(t.set_pool(kind, vars), t.constant(Tensor::vec({1, 2, 3, 4}))));
    };
    auto report = grad_check(build, params, 1e-5);
    CHECK(report.worst < 1e-4);
  }

  // ties route to the first maximal member
  Tape t;
  Tensor same = Tensor::vec({5, 5});
  Var a = t.param("a", same);
  Var b = t.param("b", same);
  GradientMap grads = t.backward(t.sum_all(t.set_pool(Tape::Pool::max, {a, b})));
  CHECK(grads.at("a").data == std::vector<double>{1, 1});
  CHECK(grads.at("b").data == std::vector<double>{0, 0});
}

TEST_CASE("backward basics") {
  Tensor x = Tensor::scalar(4.2);
  Tape t;
  Var loss = t.scale(t.param("x", x), 3.0);
  GradientMap grads = t.backward(loss);
  CHECK(grads.at("x").at(0) == 3.0);

  // unused parameter stays out of the gradient map
  Tensor unused = Tensor::scalar(1.0);
  Tape t2;
  Var p = t2.param("x", x);
  t2.param("unused", unused);
  GradientMap g2 = t2.backward(t2.scale(p, 2.0));
  CHECK(g2.count("x") == 1);
  CHECK(g2.count("unused") == 0);

  Tape t3;
  Var vec = t3.constant(Tensor::vec({1, 2}));
  CHECK_THROWS_AS(t3.backward(vec), ShapeError);
}

TEST_CASE("outputs and gradients are deterministic") {
  Rng rng(41);
  ParamStore params;
  params["w"] = random_tensor({4, 4}, rng);
  params["x"] = random_tensor({4}, rng);
  auto run = [&]() {
    Tape t;
    Var y = t.softmax(t.matmul(t.param("w", params.at("w")), t.param("x", params.at("x"))));
    Var loss = t.sum_all(t.hadamard(y, y));
    Tensor value = t.value(loss);
    GradientMap grads = t.backward(loss);
    return std::make_pair(value, grads);
  };
  auto [v1, g1] = run();
  auto [v2, g2] = run();
  CHECK(v1.data == v2.data);
  REQUIRE(g1.size() == g2.size());
  for (const auto& [name, g] : g1) CHECK(g.data == g2.at(name).data);
}

TEST_CASE("pick and dropout") {
  Tape t;
  Var x = t.constant(Tensor::vec({10, 20, 30}));
  CHECK(t.value(t.pick(x, 2)).at(0) == 30);
  CHECK_THROWS_AS(t.pick(x, 3), ShapeError);

  // inverted dropout keeps the expectation; mask reuse in backward
  Rng rng(13);
  Tensor input = Tensor::ones({1000});
  Tape t2;
  Var d = t2.dropout(t2.param("x", input), 0.3, rng);
  const Tensor& out = t2.value(d);
  double mean = 0.0;
  for (double v : out.data) {
    CHECK((v == 0.0 || v == Approx(1.0 / 0.7)));
    mean += v;
  }
  mean /= static_cast<double>(out.numel());
  CHECK(mean == Approx(1.0).margin(0.1));
  GradientMap grads = t2.backward(t2.sum_all(d));
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(grads.at("x").at(i) == out.at(i));
}

TEST_CASE("row lookup gradient is confined to the used row") {
  Rng rng(47);
  ParamStore params;
  params["emb"] = random_tensor({5, 3}, rng);
  Tape t;
  Var emb = t.param("emb", params.at("emb"));
  Var loss = t.sum_all(t.row(emb, 2));
  GradientMap grads = t.backward(loss);
  const Tensor& g = grads.at("emb");
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(g.at(r, c) == (r == 2 ? 1.0 : 0.0));
  CHECK_THROWS_AS(t.row(emb, 5), ShapeError);

  double numeric = numeric_grad(
      [](Tape& t2, const ParamStore& p) { return t2.sum_all(t2.row(t2.param("emb", p.at("emb")), 2)); },
      params, "emb", 2 * 3 + 1);
  CHECK(numeric == Approx(1.0).margin(1e-9));
}
