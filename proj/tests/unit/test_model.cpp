// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "nsnet/error.hpp"
#include "nsnet/model.hpp"
#include "nsnet/numerics.hpp"
#include "nsnet/optim.hpp"
#include "test_util.hpp"

using namespace nsnet;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.light_dim = 8;
  cfg.num_classes = 3;
  cfg.heads = 2;
  cfg.max_frames = 10;
  return cfg;
}

}  // namespace

TEST_CASE("config validation and text round trip") {
  ModelConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_config();
  cfg.dropout_cls = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = small_config();
  cfg.gamma = 0.35;
  cfg.ffn_dim = 12;
  const ModelConfig back = ModelConfig::from_text(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.gamma == 0.35);
  CHECK(back.ffn_width() == 12u);
  CHECK_THROWS_AS(ModelConfig::from_text(cfg.to_text() + "colour=blue\n"), FormatError);
}

TEST_CASE("parameter shapes follow the configuration") {
  Rng rng = rng_stream(1, "init");
  const SamplerModel m(small_config(), rng);
  CHECK(m.param("pos_embedding").value.shape() == Shape{10, 8});
  CHECK(m.param("enc0.attn.wq").value.shape() == Shape{8, 8});
  CHECK(m.param("enc1.ffn.w1").value.shape() == Shape{8, 8});
  CHECK(m.param("fsm.weight").value.shape() == Shape{8, 4});
  CHECK(m.param("vgm.attn.weight").value.shape() == Shape{8, 1});
  CHECK(m.param("vgm.cls.weight").value.shape() == Shape{8, 4});
  CHECK(m.param("enc0.ln1.gain").value == Array({8}, 1.0));
  CHECK_THROWS_AS(m.param("nope"), ContractError);
}

TEST_CASE("zero model gives zero logits and uniform attention") {
  const SamplerModel m = SamplerModel::zeros(small_config());
  std::mt19937_64 rng(2);
  const ForwardOutput out = m.infer(testutil::random_array({5, 8}, rng));
  for (double v : out.fsm_logits.data()) CHECK(v == 0.0);
  for (double v : out.salient_logits.data()) CHECK(v == 0.0);
  for (double a : out.attn.data()) CHECK(a == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("attention is a distribution; identical frames share it evenly") {
  Rng init = rng_stream(3, "init");
  ModelConfig cfg = small_config();
  const SamplerModel m(cfg, init);
  std::mt19937_64 rng(4);
  const ForwardOutput out = m.infer(testutil::random_array({7, 8}, rng));
  double s = 0.0;
  for (double a : out.attn.data()) {
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    s += a;
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  const ForwardOutput one = m.infer(testutil::random_array({1, 8}, rng));
  CHECK(one.attn[0] == doctest::Approx(1.0).epsilon(1e-15));

  // With a zero positional embedding, identical rows stay identical through the encoder.
  SamplerModel flat = m;
  flat.param("pos_embedding").value = Array({10, 8});
  Array same({4, 8});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) same.at(i, j) = 0.1 * static_cast<double>(j) - 0.3;
  const ForwardOutput eq = flat.infer(same);
  for (double a : eq.attn.data()) CHECK(a == doctest::Approx(0.25).epsilon(1e-12));
  const auto sf = fsm_saliency(eq.fsm_logits);
  for (double v : sf) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("sequence longer than the positional table is rejected") {
  const SamplerModel m = SamplerModel::zeros(small_config());
  CHECK_THROWS_AS(m.infer(Array({11, 8})), ContractError);
  CHECK_THROWS_AS(m.infer(Array({4, 7})), ShapeError);
}

TEST_CASE("salient and non-salient representations") {
  const SamplerModel m = SamplerModel::zeros(small_config());
  Tape t;
  const Array x = Array::matrix({{1, 2}, {3, 4}, {5, 6}, {7, 8}});
  const Var enc = t.constant(x);
  const auto [sal, ns] = m.vgm_representations(enc, t.constant(Array::vector({1, 0, 0, 0})));
  CHECK(sal.value().data() == std::vector<double>{1, 2});
  // complementary weights [0, .25, .25, .25]
  CHECK(ns.value()[0] == doctest::Approx(0.25 * (3 + 5 + 7)));
  CHECK(ns.value()[1] == doctest::Approx(0.25 * (4 + 6 + 8)));
  const auto [sal_u, ns_u] = m.vgm_representations(enc, t.constant(Array({4}, 0.25)));
  CHECK(sal_u.value()[0] == doctest::Approx(4.0));
  CHECK(ns_u.value()[0] == doctest::Approx(0.1875 * (1 + 3 + 5 + 7)));
}

TEST_CASE("loss examples") {
  Tape t;
  const Var uniform = t.constant(Array({5, 4}));
  Array targets({5, 4});
  for (std::size_t i = 0; i < 5; ++i) {
    targets.at(i, 1) = 0.3;
    targets.at(i, 3) = 0.7;
  }
  CHECK(fsm_loss(uniform, targets).value()[0] == doctest::Approx(5.0 * std::log(4.0)).epsilon(1e-14));
  CHECK_THROWS_AS(fsm_loss(uniform, Array({4, 4})), ContractError);

  const Var flat = t.constant(Array({4}));
  CHECK(vgm_loss(flat, flat, 1, 0.2).value()[0] == doctest::Approx(1.2 * std::log(4.0)).epsilon(1e-14));
  Var cls, sup;
  CHECK(vgm_loss(flat, flat, 1, 0.0, &cls, &sup).value()[0] == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(sup.value()[0] == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  const Var sal = t.constant(Array::vector({60, 0, 0, 0})), nsv = t.constant(Array::vector({0, 0, 0, 60}));
  CHECK(vgm_loss(sal, nsv, 0, 0.2).value()[0] < 1e-20);
}

TEST_CASE("frame-head saliency example") {
  // C = 1: max real-class confidence is softmax(l)[0]; pick logits giving 0.8 and 0.3.
  const Array logits = Array::matrix({{std::log(0.8), std::log(0.2)}, {std::log(0.3), std::log(0.7)}});
  const auto s = fsm_saliency(logits);
  CHECK(s[0] == doctest::Approx(std::exp(0.8) / (std::exp(0.8) + std::exp(0.3))).epsilon(1e-12));
  CHECK(s[0] == doctest::Approx(0.6225).epsilon(1e-4));
  CHECK(s[1] == doctest::Approx(0.3775).epsilon(1e-4));
  CHECK(vgm_saliency(Array::vector({0.5, 0.5})) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("eval forward matches tracked forward without dropout") {
  Rng init = rng_stream(5, "init");
  SamplerModel m(small_config(), init);
  std::mt19937_64 rng(6);
  const Array x = testutil::random_array({6, 8}, rng);
  const ForwardOutput a = m.infer(x);
  Tape t;
  const ForwardVars b = m.forward(t, x, nullptr);
  CHECK(a.fsm_logits == b.fsm_logits.value());
  CHECK(a.attn == b.attn.value());
  CHECK(a.salient_logits == b.salient_logits.value());
  CHECK(a.nonsalient_logits == b.nonsalient_logits.value());
}

TEST_CASE("full-model gradient check on a tiny model") {
  ModelConfig cfg = small_config();
  cfg.light_dim = 4;
  cfg.heads = 2;
  cfg.num_classes = 2;
  cfg.max_frames = 3;
  Rng init = rng_stream(7, "init");
  SamplerModel m(cfg, init);
  std::mt19937_64 rng(8);
  const Array x = testutil::random_array({3, 4}, rng);
  const Array targets = Array::matrix({{0.6, 0, 0.4}, {0.1, 0, 0.9}, {1, 0, 0}});
  auto params = m.param_ptrs();
  const auto report = finite_difference_check(
      params,
      [&](Tape& t) {
        const ForwardVars out = m.forward(t, x, nullptr);
        return total_loss(out, targets, 0, 0.2).total;
      },
      1e-5, 1e-4);
  INFO("max rel err " << report.max_rel_error());
  CHECK(report.passed());
}

TEST_CASE("checkpoint round trip and corruption") {
  testutil::TempDir tmp("ckpt");
  Rng init = rng_stream(9, "init");
  const SamplerModel m(small_config(), init);
  save_checkpoint(tmp.path / "m.nsc", m);
  CHECK(read_file_bytes(tmp.path / "m.nsc").substr(0, 4) == "NSC1");
  CHECK(fs::exists(tmp.path / "m.nsc.cfg"));
  const SamplerModel back = load_checkpoint(tmp.path / "m.nsc");
  CHECK(back.config().to_text() == m.config().to_text());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    CHECK(back.params()[i].name == m.params()[i].name);
    for (std::size_t j = 0; j < m.params()[i].value.size(); ++j)
      CHECK(back.params()[i].value[j] == static_cast<double>(static_cast<float>(m.params()[i].value[j])));
  }
  CHECK(checkpoint_bytes(back) == checkpoint_bytes(m));

  const std::string bytes = read_file_bytes(tmp.path / "m.nsc");
  atomic_write(tmp.path / "t.nsc", bytes.substr(0, bytes.size() - 3));
  atomic_write(tmp.path / "t.nsc.cfg", read_file_bytes(tmp.path / "m.nsc.cfg"));
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "t.nsc"), FormatError);
  atomic_write(tmp.path / "x.nsc", bytes + "zz");
  atomic_write(tmp.path / "x.nsc.cfg", read_file_bytes(tmp.path / "m.nsc.cfg"));
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "x.nsc"), FormatError);
}
