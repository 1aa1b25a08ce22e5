#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "vbackcheck/errors.hpp"
#include "vbackcheck/evalkit.hpp"

using namespace vbackcheck;
using namespace vbackcheck::evalkit;

namespace {

using Cat = HallucinationCategory;

// Vote alphabet: 0 clean, 1 object, 2 attribute, 3 relation.
AnnotationRecord vote(int who, int v) {
  AnnotationRecord r;
  r.annotator_id = "ann" + std::to_string(who);
  r.hallucinated = v != 0;
  if (v == 1) r.category = Cat::ObjectLevel;
  if (v == 2) r.category = Cat::AttributeLevel;
  if (v == 3) r.category = Cat::RelationLevel;
  r.timestamp = "2024-05-01T12:00:00Z";
  return r;
}

// Hand-stated rules, written out case by case.
FinalLabel expected_final(std::array<int, 3> v) {
  std::sort(v.begin(), v.end());
  const auto cat = [](int x) {
    return x == 1 ? Cat::ObjectLevel : x == 2 ? Cat::AttributeLevel : Cat::RelationLevel;
  };
  const int clean = static_cast<int>(std::count(v.begin(), v.end(), 0));
  if (clean >= 2) return {false, std::nullopt, false};
  if (clean == 1) {
    // Two hallucinated voters.
    if (v[1] == v[2]) return {true, cat(v[1]), false};
    // Split: attribute (2) beats object (1) beats relation (3) alphabetically.
    const int first = (v[1] == 2 || v[2] == 2) ? 2 : 1;
    return {true, cat(first), true};
  }
  if (v[0] == v[2]) return {true, cat(v[0]), false};
  if (v[0] == v[1]) return {true, cat(v[0]), false};
  if (v[1] == v[2]) return {true, cat(v[1]), false};
  return {true, Cat::AttributeLevel, true};
}

RleMask random_rle(std::mt19937& rng, int h, int w, int density) {
  BinaryMask m(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m.set(r, c, static_cast<int>(rng() % 100) < density);
  return rle_encode(m);
}

std::string bench_line(const std::string& id, const std::string& model, const std::string& desc,
                       const std::vector<int>& votes) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["image"] = id + ".png";
  j["description"] = desc;
  j["source_model"] = model;
  j["annotations"] = nlohmann::ordered_json::array();
  std::vector<AnnotationRecord> recs;
  for (std::size_t i = 0; i < votes.size(); ++i) {
    recs.push_back(vote(static_cast<int>(i), votes[i]));
    j["annotations"].push_back(to_json(recs.back()));
  }
  if (votes.size() >= 3) {
    const auto f = majority_vote(recs);
    j["final"] = {{"hallucinated", f.hallucinated},
                  {"category", f.category ? nlohmann::ordered_json(std::string(to_string(*f.category)))
                                          : nlohmann::ordered_json()}};
  } else {
    j["final"] = nullptr;
  }
  return j.dump();
}

}  // namespace

// ------------------------------------------------------------- majority vote

TEST_CASE("majority vote examples") {
  CHECK(majority_vote({vote(0, 1), vote(1, 1), vote(2, 0)}) == FinalLabel{true, Cat::ObjectLevel, false});
  CHECK(majority_vote({vote(0, 0), vote(1, 0), vote(2, 2)}) == FinalLabel{false, std::nullopt, false});
  const auto tie = majority_vote({vote(0, 1), vote(1, 2), vote(2, 3)});
  CHECK(tie.hallucinated);
  CHECK(tie.tie_flag);
  CHECK(tie.category == Cat::AttributeLevel);
}

TEST_CASE("majority vote over every ordered combination, permutation invariant") {
  int combos = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c) {
        ++combos;
        const auto expected = expected_final({a, b, c});
        std::array<int, 3> order{0, 1, 2};
        const std::array<int, 3> vals{a, b, c};
        do {
          const auto got = majority_vote({vote(order[0], vals[order[0]]), vote(order[1], vals[order[1]]),
                                          vote(order[2], vals[order[2]])});
          CHECK(got == expected);
        } while (std::next_permutation(order.begin(), order.end()));
      }
  CHECK(combos == 64);
}

TEST_CASE("majority vote preconditions") {
  CHECK_THROWS_AS(majority_vote({vote(0, 1), vote(0, 1), vote(2, 0)}), ValidationError);
  CHECK_THROWS_AS(majority_vote({vote(0, 1), vote(1, 1)}), ValidationError);
  auto bad = vote(2, 0);
  bad.category = Cat::ObjectLevel;
  CHECK_THROWS_AS(majority_vote({vote(0, 1), vote(1, 1), bad}), ValidationError);
}

// --------------------------------------------------------- grounding metrics

TEST_CASE("grounding metric examples") {
  const RleMask m = rle_encode(BinaryMask(2, 2, {1, 1, 0, 0}));
  const RleMask half = rle_encode(BinaryMask(2, 2, {1, 0, 0, 0}));

  std::vector<GroundingEvalItem> negs(4, GroundingEvalItem{"q", GroundTruth::Negative, std::nullopt, Token::Rej, std::nullopt});
  negs[3].pred_token = Token::Seg;
  negs[3].pred_mask = m;
  CHECK(grounding_metrics(negs).n_acc.value().value() == 0.75);
  CHECK_FALSE(grounding_metrics(negs).t_acc.value());

  const std::vector<GroundingEvalItem> mixed{{"a", GroundTruth::Positive, m, Token::Seg, m},
                                             {"b", GroundTruth::Positive, m, Token::Seg, half},
                                             {"c", GroundTruth::Negative, std::nullopt, Token::Rej, std::nullopt}};
  const auto g = grounding_metrics(mixed);
  CHECK(g.mean_iou().value() == doctest::Approx((1.0 + 0.5 + 1.0) / 3.0));
  CHECK(g.mean_iou().value() == doctest::Approx(0.8333).epsilon(1e-4));
  CHECK(g.cum_iou().value() == doctest::Approx(3.0 / 4.0));

  const std::vector<GroundingEvalItem> perfect{{"a", GroundTruth::Positive, m, Token::Seg, m},
                                               {"c", GroundTruth::Negative, std::nullopt, Token::Rej, std::nullopt}};
  const auto p = grounding_metrics(perfect, 0.5);
  CHECK(p.n_acc.value() == 1.0);
  CHECK(p.t_acc.value() == 1.0);
  CHECK(p.mean_iou() == 1.0);
  CHECK(p.cum_iou() == 1.0);
  CHECK(p.t_acc_at_iou->value() == 1.0);

  const auto t = grounding_metrics(mixed, 0.75);
  CHECK(t.t_acc_at_iou->num == 1);
  CHECK(t.t_acc_at_iou->den == 2);

  const auto empty = grounding_metrics({});
  CHECK_FALSE(empty.n_acc.value());
  CHECK_FALSE(empty.mean_iou());
  CHECK_FALSE(empty.cum_iou());
}

TEST_CASE("grounding metrics exclude unusable masks") {
  const RleMask a = rle_encode(BinaryMask(2, 2));
  const RleMask b = rle_encode(BinaryMask(3, 3));
  const auto g = grounding_metrics({{"x", GroundTruth::Positive, a, Token::Seg, b},
                                    {"y", GroundTruth::Positive, a, Token::Seg, std::nullopt},
                                    {"z", GroundTruth::Positive, a, Token::Seg, a}});
  CHECK(g.errors == 2);
  CHECK(g.t_acc.den == 1);
  CHECK(g.iou_items == 1);
  CHECK(g.mean_iou() == 1.0);  // empty vs empty
}

TEST_CASE("degenerate grounding predictors") {
  std::mt19937 rng(21);
  std::vector<GroundingEvalItem> items;
  for (int i = 0; i < 200; ++i) {
    const bool pos = rng() % 2;
    items.push_back({"q", pos ? GroundTruth::Positive : GroundTruth::Negative,
                     pos ? std::optional<RleMask>(random_rle(rng, 5, 5, 40)) : std::nullopt, Token::Rej,
                     std::nullopt});
  }
  auto always_rej = grounding_metrics(items);
  CHECK(always_rej.n_acc.value() == 1.0);
  CHECK(always_rej.t_acc.value() == 0.0);

  for (auto& it : items) {
    it.pred_token = Token::Seg;
    it.pred_mask = random_rle(rng, 5, 5, 40);
  }
  auto always_seg = grounding_metrics(items);
  CHECK(always_seg.n_acc.value() == 0.0);
  CHECK(always_seg.t_acc.value() == 1.0);
}

TEST_CASE("grounding metrics match a pixel-counting oracle") {
  std::mt19937 rng(22);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 20);
    std::vector<GroundingEvalItem> items;
    long double iou_sum = 0;
    std::uint64_t inter = 0, uni = 0, negs = 0, negs_ok = 0, poss = 0, poss_ok = 0;
    for (int i = 0; i < n; ++i) {
      const int h = 1 + static_cast<int>(rng() % 6), w = 1 + static_cast<int>(rng() % 6);
      const bool pos = rng() % 2;
      const bool seg = rng() % 2;
      GroundingEvalItem it{"q", pos ? GroundTruth::Positive : GroundTruth::Negative, std::nullopt,
                           seg ? Token::Seg : Token::Rej, std::nullopt};
      if (pos) it.gt_mask = random_rle(rng, h, w, static_cast<int>(rng() % 100));
      if (seg) it.pred_mask = random_rle(rng, h, w, static_cast<int>(rng() % 100));
      items.push_back(it);

      if (pos) {
        ++poss;
        if (seg) {
          ++poss_ok;
          const auto g = rle_decode(*it.gt_mask), p = rle_decode(*it.pred_mask);
          std::uint64_t in = 0, un = 0;
          for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
              in += g.at(r, c) && p.at(r, c);
              un += g.at(r, c) || p.at(r, c);
            }
          inter += in;
          uni += un;
          iou_sum += un == 0 ? 1.0L : static_cast<long double>(in) / un;
        }
      } else {
        ++negs;
        if (!seg) {
          ++negs_ok;
          iou_sum += 1.0L;
        }
      }
    }
    const auto m = grounding_metrics(items);
    CHECK(m.n_acc == Ratio{negs_ok, negs});
    CHECK(m.t_acc == Ratio{poss_ok, poss});
    CHECK(m.cum_intersection == inter);
    CHECK(m.cum_union == uni);
    CHECK(m.iou_items == static_cast<std::uint64_t>(n));
    CHECK(m.mean_iou().value() == doctest::Approx(static_cast<double>(iou_sum / n)).epsilon(1e-12));
  }
}

// -------------------------------------------------------- detection metrics

TEST_CASE("detection metric examples") {
  const std::vector<DetectionEvalItem> items{{true, Cat::ObjectLevel, true},
                                             {true, Cat::AttributeLevel, false},
                                             {false, std::nullopt, false},
                                             {false, std::nullopt, false}};
  const auto d = detection_metrics(items);
  CHECK(d.neg_acc.value() == 0.5);
  CHECK(d.pos_acc.value() == 1.0);
  CHECK(d.acc.value() == 0.75);
  CHECK(d.balanced_acc() == 0.75);
  CHECK(d.per_category.at(Cat::ObjectLevel).value() == 1.0);
  CHECK(d.per_category.at(Cat::AttributeLevel).value() == 0.0);
  CHECK_FALSE(d.per_category.count(Cat::RelationLevel));

  std::vector<DetectionEvalItem> perfect = items;
  for (auto& it : perfect) it.pred_hallucinated = it.gt_hallucinated;
  const auto p = detection_metrics(perfect);
  CHECK(p.acc.value() == 1.0);
  CHECK(p.neg_acc.value() == 1.0);
  CHECK(p.pos_acc.value() == 1.0);
  for (const auto& [c, r] : p.per_category) CHECK(r.value() == 1.0);

  std::vector<DetectionEvalItem> never = items;
  for (auto& it : never) it.pred_hallucinated = false;
  const auto n = detection_metrics(never);
  CHECK(n.pos_acc.value() == 1.0);
  CHECK(n.neg_acc.value() == 0.0);

  CHECK_FALSE(detection_metrics({}).acc.value());
  CHECK_THROWS_AS(detection_metrics({{true, std::nullopt, true}}), ContractError);

  const auto j = to_json(d);
  CHECK(j["neg_acc"]["num"] == 1);
  CHECK(j["per_category"]["relation"]["value"].is_null());
}

TEST_CASE("detection metrics match a confusion-matrix oracle") {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = rng() % 1001;
    std::vector<DetectionEvalItem> items;
    // confusion[gt][pred], per-category caught/total
    std::uint64_t conf[2][2] = {{0, 0}, {0, 0}};
    std::map<Cat, std::pair<std::uint64_t, std::uint64_t>> cats;
    for (std::size_t i = 0; i < n; ++i) {
      const bool gt = rng() % 2, pred = rng() % 2;
      std::optional<Cat> c;
      if (gt) c = static_cast<Cat>(rng() % 3);
      items.push_back({gt, c, pred});
      ++conf[gt][pred];
      if (gt) {
        ++cats[*c].second;
        if (pred) ++cats[*c].first;
      }
    }
    const auto d = detection_metrics(items);
    CHECK(d.acc == Ratio{conf[0][0] + conf[1][1], n});
    CHECK(d.neg_acc == Ratio{conf[1][1], conf[1][0] + conf[1][1]});
    CHECK(d.pos_acc == Ratio{conf[0][0], conf[0][0] + conf[0][1]});
    for (const auto& [c, counts] : cats) CHECK(d.per_category.at(c) == Ratio{counts.first, counts.second});
  }
}

TEST_CASE("metrics merge associatively from shards") {
  std::mt19937 rng(24);
  std::vector<DetectionEvalItem> det;
  std::vector<GroundingEvalItem> gr;
  for (int i = 0; i < 90; ++i) {
    const bool gt = rng() % 2;
    det.push_back({gt, gt ? std::optional<Cat>(static_cast<Cat>(rng() % 3)) : std::nullopt, rng() % 2 == 0});
    const bool seg = rng() % 2;
    gr.push_back({"q", gt ? GroundTruth::Positive : GroundTruth::Negative,
                  gt ? std::optional<RleMask>(random_rle(rng, 4, 4, 50)) : std::nullopt,
                  seg ? Token::Seg : Token::Rej,
                  seg ? std::optional<RleMask>(random_rle(rng, 4, 4, 50)) : std::nullopt});
  }
  const auto slice = [](const auto& v, std::size_t a, std::size_t b) {
    return std::vector<typename std::decay_t<decltype(v)>::value_type>(v.begin() + a, v.begin() + b);
  };

  auto da = detection_metrics(slice(det, 0, 30)), db = detection_metrics(slice(det, 30, 60)),
       dc = detection_metrics(slice(det, 60, 90));
  auto left = da;
  left.merge(db).merge(dc);
  auto bc = db;
  bc.merge(dc);
  auto right = da;
  right.merge(bc);
  const auto whole = detection_metrics(det);
  CHECK(left.acc == whole.acc);
  CHECK(right.acc == whole.acc);
  CHECK(left.neg_acc == whole.neg_acc);
  CHECK(right.pos_acc == whole.pos_acc);
  CHECK(left.per_category == whole.per_category);
  CHECK(right.per_category == whole.per_category);

  auto ga = grounding_metrics(slice(gr, 0, 45), 0.5);
  ga.merge(grounding_metrics(slice(gr, 45, 90), 0.5));
  const auto gw = grounding_metrics(gr, 0.5);
  CHECK(ga.n_acc == gw.n_acc);
  CHECK(ga.t_acc == gw.t_acc);
  CHECK(*ga.t_acc_at_iou == *gw.t_acc_at_iou);
  CHECK(ga.cum_union == gw.cum_union);
  CHECK(ga.mean_iou().value() == doctest::Approx(gw.mean_iou().value()));

  // Single-item metrics are 0 or 1.
  for (const auto& it : det) {
    const auto one = detection_metrics({it});
    CHECK((one.acc.value() == 0.0 || one.acc.value() == 1.0));
  }
}

TEST_CASE("pope accuracy") {
  std::vector<PopeItem> items{{true, true, PopeSplit::Random},
                              {false, false, PopeSplit::Random},
                              {true, true, PopeSplit::Random},
                              {true, false, PopeSplit::Random},
                              {true, false, PopeSplit::Popular},
                              {true, true, PopeSplit::Adversarial}};
  CHECK(pope_accuracy(items, PopeSplit::Random).value() == 0.75);
  CHECK(pope_accuracy(items, PopeSplit::Popular).value() == 0.0);
  CHECK(pope_accuracy(items, PopeSplit::Adversarial).value() == 1.0);
  CHECK_FALSE(pope_accuracy({}, PopeSplit::Random).value());
}

// ---------------------------------------------------------- bench and slices

TEST_CASE("length buckets") {
  CHECK(length_bucket(0) == "0");
  CHECK(length_bucket(1) == "1-5");
  CHECK(length_bucket(5) == "1-5");
  CHECK(length_bucket(6) == "6-10");
  CHECK(length_bucket(7) == "6-10");
  CHECK(length_bucket(15) == "11-15");
  CHECK(length_bucket(16) == "16-20");
  CHECK(length_bucket(30) == "21-30");
  CHECK(length_bucket(31) == "31-50");
  CHECK(length_bucket(110) == "51-110");
  CHECK(length_bucket(111) == ">110");
}

TEST_CASE("bench parsing") {
  CHECK(parse_bench("").empty());

  const std::string doc = bench_line("s1", "modelA", "a red car on the road", {1, 1, 0}) + "\n" +
                          bench_line("s2", "modelB", "two dogs", {0}) + "\n";
  const auto samples = parse_bench(doc);
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].final_label.value() == FinalLabel{true, Cat::ObjectLevel, false});
  CHECK(samples[0].annotations.size() == 3);
  CHECK_FALSE(samples[1].final_label);
  CHECK(to_json(samples[0]).dump() == bench_line("s1", "modelA", "a red car on the road", {1, 1, 0}));

  const auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_bench(text);
    } catch (const IngestionError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of(doc + "{broken\n") == 3);
  CHECK(line_of(doc + "\n" + bench_line("s1", "m", "dup id", {})) == 4);
  // final without three annotations
  auto j = nlohmann::json::parse(bench_line("s3", "m", "x", {1}));
  j["final"] = {{"hallucinated", true}, {"category", "object"}};
  CHECK(line_of(j.dump()) == 1);
  // three annotations but no final
  j = nlohmann::json::parse(bench_line("s3", "m", "x", {1, 1, 1}));
  j["final"] = nullptr;
  CHECK(line_of(j.dump()) == 1);
  // category present while clean
  j = nlohmann::json::parse(bench_line("s3", "m", "x", {0, 0, 0}));
  j["final"]["category"] = "object";
  CHECK(line_of(j.dump()) == 1);
  // duplicate annotator
  j = nlohmann::json::parse(bench_line("s3", "m", "x", {0, 0, 0}));
  j["annotations"][1]["annotator_id"] = "ann0";
  CHECK(line_of("\n" + j.dump()) == 2);
  // unknown category name
  j = nlohmann::json::parse(bench_line("s3", "m", "x", {1}));
  j["annotations"][0]["category"] = "color";
  CHECK(line_of(j.dump()) == 1);

  CHECK_THROWS_AS(load_bench("/nonexistent/bench.jsonl"), ConfigError);
}

TEST_CASE("annotation record json") {
  const auto r = vote(3, 3);
  CHECK(to_json(r).dump() ==
        R"({"annotator_id":"ann3","hallucinated":true,"category":"relation","timestamp":"2024-05-01T12:00:00Z"})");
  CHECK(annotation_from_json(nlohmann::json::parse(to_json(r).dump())) == r);
  try {
    annotation_from_json(nlohmann::json::parse(R"({"annotator_id":"a","hallucinated":true})"), "/record");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "/record/category");
  }
}

TEST_CASE("predictions and slice reports") {
  const std::string doc = bench_line("s1", "modelA", "one two three four five six seven", {1, 1, 0}) + "\n" +
                          bench_line("s2", "modelB", "a dog", {0, 0, 2}) + "\n" +
                          bench_line("s3", "modelB", "pending sample", {2}) + "\n" +
                          bench_line("s4", "modelA", "a cat", {3, 3, 0}) + "\n";
  const auto samples = parse_bench(doc);
  const auto preds = parse_predictions(R"({"id":"s1","hallucinated":true})"
                                       "\n"
                                       R"({"id":"s2","hallucinated":false})"
                                       "\n"
                                       R"({"id":"s3","hallucinated":true})");

  const auto by_model = slice_report(samples, preds, SliceBy::SourceModel);
  CHECK(by_model.slices.at("modelA").acc == Ratio{1, 1});
  CHECK(by_model.slices.at("modelB").acc == Ratio{1, 1});
  CHECK(by_model.overall.acc.value() == 1.0);
  CHECK(by_model.missing_predictions == 1);

  const auto by_len = slice_report(samples, preds, SliceBy::LengthBucket);
  CHECK(by_len.slices.at("6-10").acc.den == 1);
  CHECK(by_len.slices.at("1-5").acc.den == 1);

  const auto by_cat = slice_report(samples, preds, SliceBy::Category);
  CHECK(by_cat.slices.at("object").neg_acc == Ratio{1, 1});
  CHECK(by_cat.slices.at("clean").pos_acc == Ratio{1, 1});

  CHECK_THROWS_AS(parse_predictions(R"({"id":"s1","hallucinated":"yes"})"), IngestionError);
  CHECK_THROWS_AS(parse_predictions("{\"id\":\"a\",\"hallucinated\":true}\n{\"id\":\"a\",\"hallucinated\":true}"),
                  IngestionError);
  const auto j = to_json(by_model);
  CHECK(j["overall"]["acc"]["value"] == 1.0);
  CHECK(j["slices"]["modelA"]["acc"]["den"] == 1);
}

TEST_CASE("rle round trip at scale") {
  std::mt19937 rng(25);
  for (int i = 0; i < 10000; ++i) {
    const int h = 1 + static_cast<int>(rng() % 24), w = 1 + static_cast<int>(rng() % 24);
    BinaryMask m(h, w);
    const int density = static_cast<int>(rng() % 101);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) m.set(r, c, static_cast<int>(rng() % 100) < density);
    REQUIRE(rle_decode(rle_encode(m)) == m);
  }
}
