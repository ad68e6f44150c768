#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "csfm.hpp"
#include "encoder.hpp"
#include "helpers.hpp"

using namespace segcross;
using ag::Tape;
using ag::Tensor;

namespace {

// Straight-line re-implementation of the fusion path with raw loops: concat,
// two affine maps, optional relu. Kept independent of the tensor library.
std::vector<double> fuse_oracle(const std::vector<double>& h_global,
                                const std::vector<double>& h_sent,
                                const csfm::CsfmWeights& w, bool use_relu) {
  const size_t d = h_global.size();
  std::vector<double> concat(2 * d);
  std::copy(h_global.begin(), h_global.end(), concat.begin());
  std::copy(h_sent.begin(), h_sent.end(), concat.begin() + d);
  std::vector<double> hidden(d, 0.0);
  for (size_t j = 0; j < d; ++j) {
    double v = w.b1.data()[j];
    for (size_t i = 0; i < 2 * d; ++i) v += concat[i] * w.w1.data()[i * d + j];
    hidden[j] = use_relu ? std::max(0.0, v) : v;
  }
  std::vector<double> out(d, 0.0);
  for (size_t j = 0; j < d; ++j) {
    double v = w.b2.data()[j];
    for (size_t i = 0; i < d; ++i) v += hidden[i] * w.w2.data()[i * d + j];
    out[j] = v;
  }
  return out;
}

textprep::SegmentBatch make_batch(const std::vector<std::vector<size_t>>& word_ids) {
  textprep::SegmentBatch batch;
  batch.doc_id = "t";
  size_t sentence = 0;
  for (const auto& words : word_ids) {
    textprep::DocumentSegment seg;
    seg.token_ids.push_back(textprep::kClsId);
    for (size_t w : words) {
      seg.token_ids.push_back(w);
      seg.sent_positions.push_back(seg.token_ids.size());
      seg.token_ids.push_back(textprep::kSentId);
      seg.sentence_indices.push_back(sentence++);
    }
    seg.token_ids.push_back(textprep::kSepId);
    batch.max_len = std::max(batch.max_len, seg.length());
    batch.segments.push_back(std::move(seg));
  }
  for (const auto& seg : batch.segments) {
    std::vector<size_t> row(batch.max_len, textprep::kPadId);
    std::copy(seg.token_ids.begin(), seg.token_ids.end(), row.begin());
    batch.padded_matrix.push_back(row);
    std::vector<uint8_t> mask(batch.max_len, 0);
    std::fill(mask.begin(), mask.begin() + seg.length(), 1);
    batch.attention_mask.push_back(mask);
  }
  return batch;
}

}  // namespace

TEST_CASE("segment_repr is the CLS/SEP difference") {
  Tape tape;
  SUBCASE("self cancellation") {
    Tensor h = Tensor::from({1, 3}, {0.4, -2.0, 7.0});
    Tensor r = csfm::segment_repr(tape, h, h);
    for (double v : r.data()) CHECK(v == 0.0);
  }
  SUBCASE("direct arithmetic") {
    Tensor cls = Tensor::from({1, 2}, {1, 2});
    Tensor sep = Tensor::from({1, 2}, {0, 1});
    CHECK(csfm::segment_repr(tape, cls, sep).data() == std::vector<double>{1, 1});
    Tensor cls2 = Tensor::from({1, 2}, {0, 3});
    Tensor sep2 = Tensor::from({1, 2}, {2, 1});
    CHECK(csfm::segment_repr(tape, cls2, sep2).data() == std::vector<double>{-2, 2});
  }
  SUBCASE("dimension mismatch") {
    Tensor a = Tensor::zeros({1, 2});
    Tensor b = Tensor::zeros({1, 3});
    CHECK_THROWS_AS(csfm::segment_repr(tape, a, b), Error);
  }
}

TEST_CASE("global_repr max-pools segment representations") {
  Tape tape;
  SUBCASE("single segment is the identity") {
    Tensor r = Tensor::from({1, 3}, {0.5, -1.0, 2.0});
    CHECK(csfm::global_repr(tape, {r}).data() == r.data());
  }
  SUBCASE("elementwise max") {
    Tensor a = Tensor::from({1, 2}, {1, 1});
    Tensor b = Tensor::from({1, 2}, {-2, 2});
    CHECK(csfm::global_repr(tape, {a, b}).data() == std::vector<double>{1, 2});
  }
  SUBCASE("permutation invariance") {
    Rng rng(23);
    for (int iter = 0; iter < 1000; ++iter) {
      const size_t k = 1 + rng.below(8), d = 1 + rng.below(16);
      std::vector<Tensor> reprs;
      for (size_t j = 0; j < k; ++j)
        reprs.push_back(Tensor::randu(rng, {1, d}, -3.0, 3.0));
      auto base = csfm::global_repr(tape, reprs).data();
      rng.shuffle(reprs);
      CHECK(csfm::global_repr(tape, reprs).data() == base);
    }
  }
  SUBCASE("empty list is an error") {
    CHECK_THROWS_AS(csfm::global_repr(tape, {}), Error);
  }
}

TEST_CASE("fuse") {
  const size_t d = 4;
  Tape tape;
  SUBCASE("all-zero weights collapse to zero") {
    csfm::CsfmWeights w;
    w.w1 = Tensor::zeros({2 * d, d});
    w.b1 = Tensor::zeros({d});
    w.w2 = Tensor::zeros({d, d});
    w.b2 = Tensor::zeros({d});
    Rng rng(1);
    Tensor g = Tensor::randu(rng, {1, d}, -1, 1);
    Tensor s = Tensor::randu(rng, {1, d}, -1, 1);
    auto out = csfm::fuse(tape, g, s, w, csfm::Activation::Relu);
    for (double v : out.data()) CHECK(v == 0.0);
  }
  SUBCASE("selector weights recover relu(h_global)") {
    csfm::CsfmWeights w;
    w.w1 = Tensor::zeros({2 * d, d});
    for (size_t i = 0; i < d; ++i) w.w1.data()[i * d + i] = 1.0;  // top half identity
    w.b1 = Tensor::zeros({d});
    w.w2 = Tensor::zeros({d, d});
    for (size_t i = 0; i < d; ++i) w.w2.data()[i * d + i] = 1.0;
    w.b2 = Tensor::zeros({d});
    Tensor g = Tensor::from({1, d}, {0.5, -0.25, 2.0, -3.0});
    Rng rng(2);
    Tensor s = Tensor::randu(rng, {1, d}, -1, 1);
    auto out = csfm::fuse(tape, g, s, w, csfm::Activation::Relu);
    CHECK(out.data() == std::vector<double>{0.5, 0.0, 2.0, 0.0});
  }
  SUBCASE("random instances match the straight-line oracle") {
    Rng rng(5);
    for (int iter = 0; iter < 50; ++iter) {
      csfm::CsfmWeights w = csfm::init_weights(d, 100 + iter);
      Tensor g = Tensor::randu(rng, {1, d}, -2, 2);
      Tensor s = Tensor::randu(rng, {1, d}, -2, 2);
      for (auto act : {csfm::Activation::Relu, csfm::Activation::None}) {
        auto out = csfm::fuse(tape, g, s, w, act);
        auto expected =
            fuse_oracle(g.data(), s.data(), w, act == csfm::Activation::Relu);
        for (size_t i = 0; i < d; ++i)
          CHECK(std::abs(out.data()[i] - expected[i]) < 1e-12);
      }
    }
  }
  SUBCASE("multi-row sentence states tile the global vector") {
    csfm::CsfmWeights w = csfm::init_weights(d, 11);
    Rng rng(6);
    Tensor g = Tensor::randu(rng, {1, d}, -1, 1);
    Tensor rows = Tensor::randu(rng, {3, d}, -1, 1);
    auto out = csfm::fuse(tape, g, rows, w, csfm::Activation::Relu);
    REQUIRE(out.shape() == std::vector<size_t>{3, d});
    for (size_t r = 0; r < 3; ++r) {
      std::vector<double> row(rows.data().begin() + r * d,
                              rows.data().begin() + (r + 1) * d);
      auto expected = fuse_oracle(g.data(), row, w, true);
      for (size_t i = 0; i < d; ++i)
        CHECK(std::abs(out.data()[r * d + i] - expected[i]) < 1e-12);
    }
  }
  SUBCASE("dimension mismatch") {
    csfm::CsfmWeights w = csfm::init_weights(d, 1);
    Tensor g = Tensor::zeros({1, d});
    Tensor s = Tensor::zeros({1, d + 1});
    CHECK_THROWS_AS(csfm::fuse(tape, g, s, w, csfm::Activation::Relu), Error);
  }
}

TEST_CASE("classify") {
  const size_t d = 3;
  csfm::CsfmWeights w = csfm::init_weights(d, 9);
  SUBCASE("zero logits tie to label 0") {
    csfm::CsfmWeights zero = w;
    zero.wc = Tensor::zeros({d, 2});
    zero.bc = Tensor::zeros({2});
    auto result = csfm::classify({1.0, 2.0, 3.0}, zero);
    CHECK(result.logits == std::vector<double>{0, 0});
    CHECK(result.probs[0] == doctest::Approx(0.5));
    CHECK(result.label == 0);
  }
  SUBCASE("confident positive, sigmoid closed form") {
    csfm::CsfmWeights fixed = w;
    fixed.wc = Tensor::zeros({d, 2});
    fixed.bc = Tensor::from({2}, {-5.0, 5.0});
    auto result = csfm::classify({0, 0, 0}, fixed);
    CHECK(result.label == 1);
    // logit gap 10: p1 = 1 / (1 + e^-10)
    CHECK(result.probs[1] == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-12));
  }
  SUBCASE("adding a constant to both logits changes nothing") {
    csfm::CsfmWeights fixed = w;
    fixed.wc = Tensor::zeros({d, 2});
    fixed.bc = Tensor::from({2}, {1.5, -0.5});
    auto base = csfm::classify({0, 0, 0}, fixed);
    fixed.bc = Tensor::from({2}, {1.5 + 3.0, -0.5 + 3.0});
    auto shifted = csfm::classify({0, 0, 0}, fixed);
    CHECK(base.label == shifted.label);
    CHECK(std::abs(base.probs[0] - shifted.probs[0]) < 1e-12);
  }
}

TEST_CASE("forward_document") {
  encoder::EncoderConfig ecfg;
  ecfg.vocab_size = 32;
  ecfg.d_model = 16;
  ecfg.n_heads = 4;
  ecfg.n_layers = 1;
  ecfg.d_ff = 16;
  ecfg.max_positions = 32;
  ecfg.seed = 3;
  auto enc_weights = encoder::init_weights(ecfg);
  auto weights = csfm::init_weights(ecfg.d_model, 17);

  SUBCASE("one prediction per SENT, in sentence order") {
    auto batch = make_batch({{6, 7}, {8}});
    Tape tape;
    auto hidden = encoder::encode(tape, batch, enc_weights, ecfg);
    auto pred = csfm::forward_document(tape, batch, hidden, weights, true,
                                       csfm::Activation::Relu);
    CHECK(pred.labels.size() == 3);
    CHECK(pred.probs.size() == 3);
    CHECK(pred.logits.shape() == std::vector<size_t>{3, 2});
    CHECK(pred.sentence_indices == std::vector<size_t>{0, 1, 2});
    for (const auto& p : pred.probs)
      CHECK(std::abs(p[0] + p[1] - 1.0) < 1e-12);
  }
  SUBCASE("single-segment document: global equals its own segment repr") {
    auto batch = make_batch({{6, 7, 9}});
    Tape tape;
    auto hidden = encoder::encode(tape, batch, enc_weights, ecfg);
    auto states = csfm::gather_separator_states(tape, batch, hidden);
    Tensor seg = csfm::segment_repr(tape, states.cls[0], states.sep[0]);
    Tensor global = csfm::global_repr(tape, {seg});
    CHECK(global.data() == seg.data());
  }
  SUBCASE("cross-segment coupling through the global vector") {
    auto base = make_batch({{6, 7}, {8, 9}});
    auto changed = make_batch({{6, 7}, {10, 11}});  // same segment 1, new segment 2
    Tape t1, t2;
    auto h1 = encoder::encode(t1, base, enc_weights, ecfg);
    auto h2 = encoder::encode(t2, changed, enc_weights, ecfg);
    auto p1 = csfm::forward_document(t1, base, h1, weights, true, csfm::Activation::Relu);
    auto p2 = csfm::forward_document(t2, changed, h2, weights, true, csfm::Activation::Relu);
    // prediction for a SENT inside segment 1 moves when segment 2 changes
    const double delta = std::abs(p1.probs[0][1] - p2.probs[0][1]);
    CHECK(delta > 1e-9);
    // with the fusion module disabled the coupling disappears
    Tape t3, t4;
    auto h3 = encoder::encode(t3, base, enc_weights, ecfg);
    auto h4 = encoder::encode(t4, changed, enc_weights, ecfg);
    auto q1 = csfm::forward_document(t3, base, h3, weights, false, csfm::Activation::Relu);
    auto q2 = csfm::forward_document(t4, changed, h4, weights, false, csfm::Activation::Relu);
    CHECK(std::abs(q1.probs[0][1] - q2.probs[0][1]) == 0.0);
  }
  SUBCASE("disabled module zeroes the global half") {
    auto batch = make_batch({{6, 7}});
    Tape tape;
    auto hidden = encoder::encode(tape, batch, enc_weights, ecfg);
    auto pred = csfm::forward_document(tape, batch, hidden, weights, false,
                                       csfm::Activation::Relu);
    // manual pipeline with an explicit zero global vector
    Tape t2;
    auto h2 = encoder::encode(t2, batch, enc_weights, ecfg);
    auto states = csfm::gather_separator_states(t2, batch, h2);
    Tensor zero_global = Tensor::zeros({1, ecfg.d_model});
    Tensor fea = csfm::fuse(t2, zero_global, states.sent[0], weights,
                            csfm::Activation::Relu);
    Tensor logits = ag::add_row_vector(t2, ag::matmul(t2, fea, weights.wc), weights.bc);
    for (size_t i = 0; i < logits.numel(); ++i)
      CHECK(logits.data()[i] == pred.logits.data()[i]);
  }
  SUBCASE("repeat forward is pure") {
    auto batch = make_batch({{6, 7}, {8}});
    Tape t1;
    auto h1 = encoder::encode(t1, batch, enc_weights, ecfg);
    auto p1 = csfm::forward_document(t1, batch, h1, weights, true, csfm::Activation::Relu);
    // unrelated forward in between
    auto other = make_batch({{12, 13, 14}});
    Tape tx;
    auto hx = encoder::encode(tx, other, enc_weights, ecfg);
    csfm::forward_document(tx, other, hx, weights, true, csfm::Activation::Relu);
    Tape t2;
    auto h2 = encoder::encode(t2, batch, enc_weights, ecfg);
    auto p2 = csfm::forward_document(t2, batch, h2, weights, true, csfm::Activation::Relu);
    CHECK(p1.logits.data() == p2.logits.data());
  }
}

TEST_CASE("composed gradient check: encoder + fusion + cross entropy") {
  encoder::EncoderConfig ecfg;
  ecfg.vocab_size = 20;
  ecfg.d_model = 8;
  ecfg.n_heads = 2;
  ecfg.n_layers = 1;
  ecfg.d_ff = 12;
  ecfg.max_positions = 16;
  ecfg.seed = 19;
  auto enc_weights = encoder::init_weights(ecfg);
  auto fusion = csfm::init_weights(ecfg.d_model, 23);
  auto batch = make_batch({{6, 7}, {8, 9}});
  std::vector<int> labels = {0, 1, 1, 0};

  auto build = [&](Tape& tape) {
    auto hidden = encoder::encode(tape, batch, enc_weights, ecfg);
    auto pred = csfm::forward_document(tape, batch, hidden, fusion, true,
                                       csfm::Activation::Relu);
    return ag::cross_entropy_mean(tape, pred.logits, labels);
  };
  std::vector<Tensor> params = enc_weights.parameters();
  for (auto& p : fusion.parameters()) params.push_back(p);
  auto result = sxtest::finite_difference_check(build, params, 1e-5,
                                                /*max_entries_per_param=*/6);
  INFO("checked " << result.entries_checked << " entries, max rel err "
                  << result.max_rel_err);
  CHECK(result.max_rel_err < 1e-4);
}
