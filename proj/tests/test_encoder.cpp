#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "disenkgat/encoder.hpp"
#include "disenkgat/errors.hpp"
#include "fixtures.hpp"

using namespace disenkgat;
using fixtures::graph_with_entities;
using fixtures::random_tensor;

namespace {

struct Bound {
  Tape tape;
  ParamSet values;
  BoundParams vars;
  EncoderParams params;
};

// Binds freshly initialized encoder parameters, after `edit` adjusts them.
void bind_encoder(Bound& b, const KnowledgeGraph& g, const EncoderConfig& config,
                  const std::function<void(ParamSet&)>& edit = {}, std::uint64_t seed = 11) {
  Rng rng(seed);
  init_encoder_params(b.values, config, g.num_entities(), g.num_relations(), rng);
  if (edit) edit(b.values);
  b.vars = bind_params(b.tape, b.values, false);
  b.params = encoder_params(b.vars, config);
}

EncoderConfig small_config(std::size_t k, std::size_t d, std::size_t layers) {
  EncoderConfig c;
  c.components = k;
  c.component_dim = d;
  c.layers = layers;
  c.dropout = 0.0;
  return c;
}

void check_close(const Tensor& a, const Tensor& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace

TEST_CASE("identity projections and activation return the features") {
  const KnowledgeGraph g = fixtures::small_graph();
  EncoderConfig c = small_config(2, 3, 0);
  c.input_dim = 3;
  c.activation = Activation::Identity;
  Bound b;
  bind_encoder(b, g, c, [](ParamSet& p) {
    Tensor& w = p["encoder.projection"];
    w.fill(0.0);
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t i = 0; i < 3; ++i) w.at(i, k * 3 + i) = 1.0;
    }
  });
  const Tensor h = disentangle_init(b.params, c).h.value();
  const Tensor& x = b.values["entity.features"];
  for (std::size_t u = 0; u < g.num_entities(); ++u) {
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t i = 0; i < 3; ++i) CHECK(h.at(u, k * 3 + i) == x.at(u, i));
    }
  }
}

TEST_CASE("zero features under tanh give zero components") {
  const KnowledgeGraph g = fixtures::small_graph();
  const EncoderConfig c = small_config(3, 4, 0);
  Bound b;
  bind_encoder(b, g, c, [](ParamSet& p) { p["entity.features"].fill(0.0); });
  const Tensor h = disentangle_init(b.params, c).h.value();
  for (double v : h.values()) CHECK(v == 0.0);
}

TEST_CASE("distinct projections give distinct components") {
  const KnowledgeGraph g = fixtures::small_graph();
  const EncoderConfig c = small_config(2, 4, 0);
  Bound b;
  bind_encoder(b, g, c);
  const Tensor h = disentangle_init(b.params, c).h.value();
  bool differ = false;
  for (std::size_t i = 0; i < 4; ++i) differ |= h.at(0, i) != h.at(0, 4 + i);
  CHECK(differ);
}

TEST_CASE("composition operators") {
  Tape tape;
  const auto v = [&](std::vector<double> x) { return tape.constant(Tensor::vector(std::move(x))); };
  const Var ones = v({1, 1});
  CHECK(compose(v({1, 2}), v({1, 2}), ones, CompositionOp::Sub, 2).value() == Tensor::vector({0, 0}));
  CHECK(compose(v({2, 3}), v({4, 5}), ones, CompositionOp::Mult, 2).value() == Tensor::vector({8, 15}));
  const Var theta = v({0.5, -2.0}), h_v = v({3, 7});
  CHECK(compose(h_v, ones, theta, CompositionOp::Cross, 2).value() == Tensor::vector({3, -28}));
  CHECK(compose(v({1, 0}), v({3, 4}), ones, CompositionOp::Corr, 2).value() == Tensor::vector({3, 4}));
  CHECK_THROWS_AS(parse_composition("rotate"), ConfigError);
  for (const char* name : {"sub", "mult", "corr", "cross"}) {
    CHECK(to_string(parse_composition(name)) == name);
  }
}

TEST_CASE("attention over a self-only neighborhood is one") {
  const KnowledgeGraph g = graph_with_entities({"A", "B", "C"}, {{"A", "r", "B"}});
  const EncoderConfig c = small_config(2, 3, 1);
  Bound b;
  bind_encoder(b, g, c);
  const Tensor alpha = attention_weights(disentangle_init(b.params, c), b.params.theta, g, c).value();
  const std::size_t first = static_cast<std::size_t>(g.neighborhood(2).data() - g.edges().data());
  REQUIRE(g.neighborhood(2).size() == 1);
  CHECK(alpha.at(first, 0) == 1.0);
  CHECK(alpha.at(first, 1) == 1.0);
}

TEST_CASE("identical neighbor embeddings share attention equally") {
  const KnowledgeGraph g = graph_with_entities({"A", "B"}, {{"A", "r", "B"}});
  const EncoderConfig c = small_config(1, 2, 1);
  Bound b;
  bind_encoder(b, g, c);
  Tape& tape = b.tape;
  const ComponentState same{tape.constant(Tensor::matrix(2, 2, {0.3, -0.7, 0.3, -0.7})), 0};
  const Tensor alpha = attention_weights(same, tape.constant(Tensor(Shape{3, 2}, 1.0)), g, c).value();
  for (double a : alpha.values()) CHECK(a == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("attention logits ln2 and 0 give two thirds and one third") {
  // Neighborhood of A: (B, r) then (A, self). With d_c = 1, h_A = 1, h_B = ln 2,
  // theta_r = 1 and theta_self = 0 the logits are ln 2 and 0.
  const KnowledgeGraph g = graph_with_entities({"A", "B"}, {{"A", "r", "B"}});
  const EncoderConfig c = small_config(1, 1, 1);
  Bound b;
  bind_encoder(b, g, c);
  Tape& tape = b.tape;
  const ComponentState state{tape.constant(Tensor::matrix(2, 1, {1.0, std::log(2.0)})), 0};
  Tensor theta(Shape{3, 1}, 1.0);
  theta.at(g.self_loop(), 0) = 0.0;
  const Tensor alpha = attention_weights(state, tape.constant(theta), g, c).value();
  REQUIRE(g.neighborhood(0)[0].neighbor == 1);
  CHECK(alpha.at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(alpha.at(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("attention is a distribution over every neighborhood") {
  const KnowledgeGraph g = fixtures::small_graph();
  for (bool scaled : {false, true}) {
    EncoderConfig c = small_config(3, 4, 1);
    c.scaled_attention = scaled;
    Bound b;
    bind_encoder(b, g, c, [](ParamSet& p) {
      std::mt19937_64 rng(3);
      p["relation.theta"] = random_tensor(p["relation.theta"].shape(), rng, 0.0, 3.0);
    });
    const Tensor alpha = attention_weights(disentangle_init(b.params, c), b.params.theta, g, c).value();
    std::size_t e = 0;
    for (std::size_t u = 0; u < g.num_entities(); ++u) {
      const std::size_t n = g.neighborhood(u).size();
      for (std::size_t k = 0; k < 3; ++k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          CHECK(alpha.at(e + i, k) >= 0.0);
          total += alpha.at(e + i, k);
        }
        CHECK(std::abs(total - 1.0) <= 1e-9);
      }
      e += n;
    }
  }
}

TEST_CASE("a common shift of one neighborhood's logits leaves attention unchanged") {
  const KnowledgeGraph g = fixtures::small_graph();
  std::mt19937_64 rng(8);
  const Tensor logits = random_tensor({g.edges().size(), 2}, rng, -4.0, 4.0);
  Tensor shifted = logits;
  const auto hood = g.neighborhood(0);
  for (std::size_t i = 0; i < hood.size(); ++i) {
    shifted.at(i, 0) += 123.0;
    shifted.at(i, 1) -= 50.0;
  }
  Tape tape;
  const Tensor a = segment_softmax(tape.constant(logits), g.edge_entities(), g.num_entities()).value();
  const Tensor b = segment_softmax(tape.constant(shifted), g.edge_entities(), g.num_entities()).value();
  check_close(a, b, 1e-9);
}

TEST_CASE("self-loop-only graph is a fixed point of identity Mult aggregation") {
  const KnowledgeGraph g = graph_with_entities({"A", "B", "C"}, {});
  EncoderConfig c = small_config(2, 3, 3);
  c.op = CompositionOp::Mult;
  c.activation = Activation::Identity;
  Bound b;
  bind_encoder(b, g, c, [](ParamSet& p) {
    p["relation.embedding"].fill(1.0);
    for (std::size_t l = 0; l < 3; ++l) {
      Tensor& w = p["encoder.layer" + std::to_string(l) + ".relation_transform"];
      w.fill(0.0);
      for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = 1.0;
    }
  });
  const ComponentState init = disentangle_init(b.params, c);
  const Encoding enc = encode(g, b.params, c);
  check_close(enc.state.h.value(), init.h.value(), 1e-15);
}

TEST_CASE("one layer on a single triple matches the hand unrolled update") {
  const KnowledgeGraph g = graph_with_entities({"A", "B"}, {{"A", "r", "B"}});
  EncoderConfig c = small_config(1, 2, 1);
  c.op = CompositionOp::Sub;
  Bound b;
  bind_encoder(b, g, c, [](ParamSet& p) {
    std::mt19937_64 rng(21);
    p["relation.theta"] = random_tensor({3, 2}, rng, 0.5, 1.5);
  });
  const Tensor h = disentangle_init(b.params, c).h.value();
  const Tensor& rel = b.values["relation.embedding"];
  const Tensor& theta = b.values["relation.theta"];
  const Tensor& w = b.values["encoder.layer0.relation_transform"];
  const Encoding enc = encode(g, b.params, c);

  // Entity u with neighbors (v, r): logits (h_u o th_r).(h_v o th_r),
  // messages th_r o h_v - h_r, output tanh of the attention-weighted sum.
  const auto update = [&](std::size_t u, std::vector<std::pair<std::size_t, std::size_t>> hood) {
    std::vector<double> logit;
    for (auto [v, r] : hood) {
      double s = 0.0;
      for (std::size_t t = 0; t < 2; ++t) {
        s += h.at(u, t) * theta.at(r, t) * h.at(v, t) * theta.at(r, t);
      }
      logit.push_back(s);
    }
    const double z = std::exp(logit[0]) + std::exp(logit[1]);
    std::vector<double> out(2, 0.0);
    for (std::size_t n = 0; n < 2; ++n) {
      const auto [v, r] = hood[n];
      for (std::size_t t = 0; t < 2; ++t) {
        out[t] += std::exp(logit[n]) / z * (theta.at(r, t) * h.at(v, t) - rel.at(r, t));
      }
    }
    for (double& x : out) x = std::tanh(x);
    return out;
  };
  const auto a = update(0, {{1, 0}, {0, g.self_loop()}});
  const auto bb = update(1, {{0, g.inverse_of(0)}, {1, g.self_loop()}});
  const Tensor& got = enc.state.h.value();
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(got.at(0, t) == doctest::Approx(a[t]).epsilon(1e-12));
    CHECK(got.at(1, t) == doctest::Approx(bb[t]).epsilon(1e-12));
  }
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t t = 0; t < 2; ++t) {
      const double expected = rel.at(r, 0) * w.at(0, t) + rel.at(r, 1) * w.at(1, t);
      CHECK(enc.relations.value().at(r, t) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("copied component parameters keep the components equal") {
  const KnowledgeGraph g = fixtures::small_graph();
  for (CompositionOp op : {CompositionOp::Sub, CompositionOp::Mult, CompositionOp::Corr,
                           CompositionOp::Cross}) {
    EncoderConfig c = small_config(2, 3, 3);
    c.op = op;
    Bound b;
    bind_encoder(b, g, c, [](ParamSet& p) {
      Tensor& w = p["encoder.projection"];
      for (std::size_t i = 0; i < w.dim(0); ++i) {
        for (std::size_t j = 0; j < 3; ++j) w.at(i, 3 + j) = w.at(i, j);
      }
    });
    const Tensor h = encode(g, b.params, c).state.h.value();
    for (std::size_t u = 0; u < g.num_entities(); ++u) {
      for (std::size_t j = 0; j < 3; ++j) CHECK(h.at(u, j) == h.at(u, 3 + j));
    }
  }
}

TEST_CASE("zero layers return the initial state and one layer equals one aggregation") {
  const KnowledgeGraph g = fixtures::small_graph();
  EncoderConfig c = small_config(2, 4, 0);
  Bound b;
  bind_encoder(b, g, c);
  const ComponentState init = disentangle_init(b.params, c);
  const Encoding zero = encode(g, b.params, c);
  CHECK(zero.state.h.value() == init.h.value());
  CHECK(zero.relations.value() == b.values["relation.embedding"]);
  CHECK(zero.attention.empty());

  c.layers = 1;
  Bound b1;
  bind_encoder(b1, g, c);
  const LayerOutput one =
      aggregate_layer(disentangle_init(b1.params, c), b1.params.relations, b1.params, g, c);
  const Encoding enc = encode(g, b1.params, c);
  CHECK(enc.state.h.value() == one.state.h.value());
  CHECK(enc.relations.value() == one.relations.value());
  CHECK(enc.attention.size() == 1);
}

TEST_CASE("two-layer encoding is bit-identical for the same seed") {
  const KnowledgeGraph g = fixtures::small_graph();
  const EncoderConfig c = small_config(3, 4, 2);
  Bound a, b;
  bind_encoder(a, g, c, {}, 5);
  bind_encoder(b, g, c, {}, 5);
  CHECK(encode(g, a.params, c).state.h.value() == encode(g, b.params, c).state.h.value());
}

TEST_CASE("relabeling entities permutes the encoding rows") {
  const std::vector<std::vector<std::string>> triples = {
      {"a", "likes", "b"}, {"a", "likes", "c"}, {"b", "likes", "c"}, {"c", "near", "d"},
      {"d", "near", "e"},  {"e", "owns", "f"},  {"b", "owns", "f"}};
  const KnowledgeGraph g1 = graph_with_entities({"a", "b", "c", "d", "e", "f"}, triples);
  const KnowledgeGraph g2 = graph_with_entities({"f", "d", "a", "e", "c", "b"}, triples);
  const EncoderConfig c = small_config(2, 3, 2);
  Bound b1, b2;
  bind_encoder(b1, g1, c);
  bind_encoder(b2, g2, c, [&](ParamSet& p) {
    for (std::size_t u = 0; u < g2.num_entities(); ++u) {
      const std::size_t src = *g1.entities().find(g2.entity_name(u));
      for (std::size_t j = 0; j < 6; ++j) {
        p["entity.features"].at(u, j) = b1.values["entity.features"].at(src, j);
      }
    }
  });
  const Tensor h1 = encode(g1, b1.params, c).state.h.value();
  const Tensor h2 = encode(g2, b2.params, c).state.h.value();
  for (std::size_t u = 0; u < g2.num_entities(); ++u) {
    const std::size_t src = *g1.entities().find(g2.entity_name(u));
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(h2.at(u, j) - h1.at(src, j)) <= 1e-12);
  }
}

TEST_CASE("micro-disentanglement off shares one projection and averages neighbors") {
  const KnowledgeGraph g = fixtures::small_graph();
  EncoderConfig c = small_config(3, 2, 1);
  c.micro = false;
  Bound b;
  bind_encoder(b, g, c);
  CHECK(b.values["encoder.projection"].dim(1) == 2);
  const Encoding enc = encode(g, b.params, c);
  const Tensor& alpha = enc.attention[0].value();
  for (std::size_t e = 0; e < g.edges().size(); ++e) {
    CHECK(alpha.at(e, 1) == 1.0 / static_cast<double>(g.neighborhood(g.edges()[e].entity).size()));
  }
  const Tensor h0 = disentangle_init(b.params, c).h.value();
  for (std::size_t j = 0; j < 2; ++j) CHECK(h0.at(0, j) == h0.at(0, 4 + j));
}
