#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "vbackcheck/errors.hpp"
#include "vbackcheck/rinstruct.hpp"
#include "vbackcheck/stub_backends.hpp"

using namespace vbackcheck;
using namespace vbackcheck::rinstruct;
using namespace vbackcheck::backends;
namespace fs = std::filesystem;

namespace {

std::string proposal_line(const std::string& image_id, const BinaryMask& m, BBox box) {
  nlohmann::ordered_json j;
  j["image_id"] = image_id;
  j["bbox"] = {box.x, box.y, box.w, box.h};
  j["mask"] = rle_to_json(rle_encode(m));
  return j.dump();
}

BinaryMask block(int h, int w, int r0, int c0, int r1, int c1) {
  BinaryMask m(h, w);
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) m.set(r, c, true);
  return m;
}

// Similarity from an explicit symmetric table, keyed by caption text "c<i>".
class MatrixSimilarity final : public SimilarityBackend {
 public:
  explicit MatrixSimilarity(std::vector<std::vector<double>> m) : m_(std::move(m)) {}
  double text_similarity(const SimilarityRequest& req) const override {
    return m_.at(index(req.a)).at(index(req.b));
  }

 private:
  static std::size_t index(const std::string& s) { return std::stoul(s.substr(1)); }
  std::vector<std::vector<double>> m_;
};

// Returns a scripted sequence of outputs, one per call.
class ScriptedGeneration final : public GenerationBackend {
 public:
  explicit ScriptedGeneration(std::vector<std::string> outputs) : outputs_(std::move(outputs)) {}
  std::string generate(const GenerationRequest&) const override {
    const int i = calls++;
    return outputs_.at(std::min<std::size_t>(i, outputs_.size() - 1));
  }
  mutable std::atomic<int> calls{0};

 private:
  std::vector<std::string> outputs_;
};

// Independent reference: repeatedly pick the best remaining caption (highest
// score, lowest index on ties) and discard everything too similar to it.
std::vector<std::size_t> reference_nms(const std::vector<double>& scores,
                                       const std::vector<std::vector<double>>& sim, double t) {
  std::vector<std::size_t> remaining(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) remaining[i] = i;
  std::vector<std::size_t> keep;
  while (!remaining.empty()) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < remaining.size(); ++k) {
      const auto a = remaining[k], b = remaining[best];
      if (scores[a] > scores[b] || (scores[a] == scores[b] && a < b)) best = k;
    }
    const std::size_t winner = remaining[best];
    keep.push_back(winner);
    std::vector<std::size_t> next;
    for (std::size_t r : remaining) {
      if (r != winner && sim[winner][r] < t) next.push_back(r);
    }
    remaining = std::move(next);
  }
  return keep;
}

std::vector<Caption> numbered_captions(const std::vector<double>& scores) {
  std::vector<Caption> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.push_back({"p" + std::to_string(i), "c" + std::to_string(i), scores[i], 0.0});
  }
  return out;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vbc_rinstruct_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_gray(const fs::path& p, int h, int w) {
  Image img{w, h, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(w * h))};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
  std::ofstream(p, std::ios::binary) << encode_pnm(img);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Stub world for one 4x4 image with two proposals; only the first survives.
struct OneImageWorld {
  fs::path dir = fresh_dir("one");
  std::vector<ImageEntry> images;
  std::string proposals;
  BackendSet be;

  OneImageWorld() {
    write_gray(dir / "img1.pgm", 4, 4);
    images.push_back({"img1", "img1.pgm", dir / "img1.pgm"});
    proposals = proposal_line("img1", block(4, 4, 0, 0, 2, 2), {0, 0, 2, 2}) + "\n" +
                proposal_line("img1", block(4, 4, 2, 2, 4, 4), {2, 2, 2, 2}) + "\n";

    auto gen = std::make_shared<StubGeneration>(false);
    gen->add({"caption", {{"proposal_id", "img1#0"}}, "a red sedan"});
    gen->add({"caption", {{"proposal_id", "img1#1"}}, "a tree"});
    gen->add({"holistic", nlohmann::json::object(), "a red sedan on a road"});
    gen->add({"inject", {{"caption", "a red sedan"}},
              R"({"text":"a blue sedan","type":"attribute","explanation":"the sedan is red"})"});
    StubGeneration::DefaultRule rule;
    rule.rule = "inject_suffix";
    rule.suffix = " with a giraffe";
    rule.type = "object";
    rule.explanation = "there is no giraffe";
    gen->set_default("inject", rule);

    auto scorer = std::make_shared<StubScorer>(true);
    scorer->add("img1#fg", "a red sedan", 0.8);
    scorer->add("img1#bg", "a red sedan", 0.2);
    scorer->add("img1#fg", "a tree", 0.3);
    scorer->add("img1#bg", "a tree", 0.6);

    auto sim = std::make_shared<StubSimilarity>(false);
    sim->set_default(0.0);
    be = {nullptr, scorer, sim, gen};
  }
};

}  // namespace

// ------------------------------------------------------------------ ingestion

TEST_CASE("ingest_proposals examples") {
  CHECK(ingest_proposals("img1", "").empty());

  const BinaryMask m = block(2, 2, 0, 0, 1, 2);
  const auto one = ingest_proposals("img1", proposal_line("img1", m, {0, 0, 2, 1}));
  REQUIRE(one.size() == 1);
  CHECK(one[0].id == "img1#0");
  CHECK(one[0].bbox == BBox{0, 0, 2, 1});
  CHECK(rle_decode(one[0].mask).bits().size() == 4);
  CHECK(rle_decode(one[0].mask) == m);

  try {
    ingest_proposals("img1", R"({"image_id":"img1","bbox":[0,0,1,1],"mask":{"size":[2,2],"counts":[1,2]}})");
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    CHECK(e.line() == 1);
  }
}

TEST_CASE("ingest_proposals filters by image and names the offending line") {
  const std::string doc = proposal_line("img1", block(2, 2, 0, 0, 1, 1), {0, 0, 1, 1}) + "\n" +
                          proposal_line("img2", block(2, 2, 0, 0, 1, 1), {0, 0, 1, 1}) + "\n\n" +
                          proposal_line("img1", block(2, 2, 1, 1, 2, 2), {1, 1, 1, 1}) + "\n";
  const auto got = ingest_proposals("img1", doc);
  REQUIRE(got.size() == 2);
  CHECK(got[0].id == "img1#0");
  CHECK(got[1].id == "img1#1");
  CHECK(got[1].bbox == BBox{1, 1, 1, 1});

  const std::string bad = doc + "{\"image_id\":\"img1\",\"bbox\":[0,0],\"mask\":{}}\n";
  try {
    ingest_proposals("img1", bad);
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    CHECK(e.line() == 5);
  }
  try {
    ingest_proposals("img1", doc, std::make_pair(3, 3));
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    CHECK(e.line() == 1);
  }
  CHECK_THROWS_AS(ingest_proposals("img1", "not json"), IngestionError);
  CHECK_THROWS_AS(ingest_proposals("img1", proposal_line("img1", block(2, 2, 0, 0, 1, 1), {1, 1, 2, 2})),
                  IngestionError);
}

// ------------------------------------------------------------------- captions

TEST_CASE("caption_proposal") {
  const auto props = ingest_proposals(
      "img1", proposal_line("img1", block(2, 2, 0, 0, 1, 1), {0, 0, 1, 1}) + "\n" +
                  proposal_line("img1", block(2, 2, 1, 1, 2, 2), {1, 1, 1, 1}) + "\n" +
                  proposal_line("img1", block(2, 2, 0, 1, 1, 2), {1, 0, 1, 1}));
  StubGeneration gen(false);
  gen.add({"caption", {{"proposal_id", "img1#0"}}, "a red sedan facing left"});
  gen.add({"caption", {{"proposal_id", "img1#1"}}, "a green bench"});
  gen.add({"caption", {{"proposal_id", "img1#2"}}, "   "});
  const PipelineConfig cfg;

  const auto first = caption_proposal(props[0], gen, cfg);
  REQUIRE(std::holds_alternative<DraftCaption>(first));
  CHECK(std::get<DraftCaption>(first).text == "a red sedan facing left");
  CHECK(std::get<DraftCaption>(first).proposal_id == "img1#0");

  const auto blank = caption_proposal(props[2], gen, cfg);
  REQUIRE(std::holds_alternative<Dropped>(blank));
  CHECK(std::get<Dropped>(blank).reason == "empty_caption");

  StubGeneration fixed(false);
  StubGeneration::DefaultRule empty;
  empty.rule = "fixed";
  fixed.set_default("", empty);
  CHECK(std::get<Dropped>(caption_proposal(props[0], fixed, cfg)).reason == "empty_caption");

  std::vector<std::string> texts;
  for (const auto& p : props) {
    auto r = caption_proposal(p, gen, cfg);
    texts.push_back(std::holds_alternative<DraftCaption>(r) ? std::get<DraftCaption>(r).text : "");
  }
  CHECK(texts == std::vector<std::string>{"a red sedan facing left", "a green bench", ""});
}

TEST_CASE("fgbg_check truth table") {
  const auto p = ingest_proposals("img1", proposal_line("img1", block(2, 2, 0, 0, 1, 1), {0, 0, 1, 1}))[0];
  const Image img{2, 2, 1, {10, 20, 30, 40}};
  const DraftCaption c{"img1#0", "a cat"};

  struct Row {
    double fg, bg;
    bool kept;
  };
  for (const Row row : {Row{0.6, 0.3, true}, Row{0.3, 0.6, false}, Row{0.5, 0.5, false}}) {
    StubScorer scorer(true);
    scorer.add("img1#fg", "a cat", row.fg);
    scorer.add("img1#bg", "a cat", row.bg);
    const auto out = fgbg_check(p, c, img, scorer);
    CHECK(std::holds_alternative<Caption>(out) == row.kept);
    if (row.kept) {
      CHECK(std::get<Caption>(out).fg_score == doctest::Approx(row.fg));
      CHECK(std::get<Caption>(out).bg_score == doctest::Approx(row.bg));
    } else {
      CHECK(std::get<Dropped>(out).reason == "fgbg");
    }
  }
}

TEST_CASE("consistency_filter boundary") {
  const PipelineConfig cfg;
  CHECK(cfg.consistency_threshold == 0.5);
  CHECK(std::holds_alternative<Caption>(consistency_filter({"p", "t", 0.7, 0.1}, cfg)));
  const auto low = consistency_filter({"p", "t", 0.4, 0.1}, cfg);
  REQUIRE(std::holds_alternative<Dropped>(low));
  CHECK(std::get<Dropped>(low).reason == "consistency");
  CHECK(std::holds_alternative<Caption>(consistency_filter({"p", "t", 0.5, 0.1}, cfg)));
}

TEST_CASE("pipeline config validation") {
  PipelineConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.consistency_threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.nms_similarity_threshold = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.max_in_flight = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

// ------------------------------------------------------------------------ NMS

TEST_CASE("semantic NMS examples") {
  PipelineConfig cfg;
  const MatrixSimilarity one(std::vector<std::vector<double>>{{1.0}});
  CHECK(semantic_nms(numbered_captions({0.4}), one, cfg).size() == 1);

  const MatrixSimilarity dup({{1.0, 1.0}, {1.0, 1.0}});
  const auto d = semantic_nms(numbered_captions({0.9, 0.8}), dup, cfg);
  REQUIRE(d.size() == 1);
  CHECK(d[0].fg_score == 0.9);

  const MatrixSimilarity three({{1.0, 0.9, 0.2}, {0.9, 1.0, 0.9}, {0.2, 0.9, 1.0}});
  CHECK(semantic_nms_indices(numbered_captions({0.9, 0.8, 0.7}), three, 0.85) ==
        std::vector<std::size_t>{0, 2});
  CHECK(reference_nms({0.9, 0.8, 0.7}, {{1.0, 0.9, 0.2}, {0.9, 1.0, 0.9}, {0.2, 0.9, 1.0}}, 0.85) ==
        std::vector<std::size_t>{0, 2});

  // Equal scores: lower index wins.
  CHECK(semantic_nms_indices(numbered_captions({0.5, 0.5}), dup, 0.85) == std::vector<std::size_t>{0});
  CHECK(semantic_nms_indices({}, one, 0.85).empty());
}

TEST_CASE("semantic NMS matches the brute-force reference") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 1 + rng() % 50;
    std::vector<double> scores(n);
    for (auto& s : scores) s = std::round(unit(rng) * 10) / 10;  // coarse: forces ties
    std::vector<std::vector<double>> sim(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) sim[i][j] = sim[j][i] = unit(rng);
    const double t = trial % 3 == 0 ? 0.85 : unit(rng);

    const auto got = semantic_nms_indices(numbered_captions(scores), MatrixSimilarity(sim), t);
    REQUIRE(got == reference_nms(scores, sim, t));

    // Survivors are a subset and pairwise below threshold.
    for (std::size_t a = 0; a < got.size(); ++a)
      for (std::size_t b = a + 1; b < got.size(); ++b) CHECK(sim[got[a]][got[b]] < t);
  }
}

// ------------------------------------------------------------------ injection

TEST_CASE("inject_hallucination") {
  const PipelineConfig cfg;
  const Caption c{"img1#0", "a red sedan facing left", 0.8, 0.1};

  const ScriptedGeneration ok(
      {R"({"text":"a blue sedan facing left","type":"incorrect color","explanation":"the sedan is red"})"});
  const auto rec = inject_hallucination(c, {}, ok, cfg);
  REQUIRE(std::holds_alternative<NegativeRecord>(rec));
  CHECK(std::get<NegativeRecord>(rec).text == "a blue sedan facing left");
  CHECK(std::get<NegativeRecord>(rec).hallucination_type == "incorrect color");
  CHECK(std::get<NegativeRecord>(rec).explanation == "the sedan is red");

  const ScriptedGeneration garbage({"not json", "{still not"});
  const auto bad = inject_hallucination(c, {}, garbage, cfg);
  REQUIRE(std::holds_alternative<Dropped>(bad));
  CHECK(std::get<Dropped>(bad).reason == "inject_parse");
  CHECK(garbage.calls == 2);

  const ScriptedGeneration retry_ok({"oops", R"({"text":"x","type":"object","explanation":"y"})"});
  CHECK(std::holds_alternative<NegativeRecord>(inject_hallucination(c, {}, retry_ok, cfg)));
  CHECK(retry_ok.calls == 2);

  const ScriptedGeneration missing({R"({"text":"x","type":"object"})"});
  CHECK(std::get<Dropped>(inject_hallucination(c, {}, missing, cfg)).reason == "inject_parse");

  const ScriptedGeneration same(
      {R"({"text":"a red sedan facing left","type":"object","explanation":"none"})"});
  const auto unchanged = inject_hallucination(c, {}, same, cfg);
  REQUIRE(std::holds_alternative<Dropped>(unchanged));
  CHECK(std::get<Dropped>(unchanged).reason == "no_perturbation");
  CHECK(same.calls == 1);
}

// ------------------------------------------------------------------- samples

TEST_CASE("instruct sample invariants and key order") {
  InstructSample pos;
  pos.id = "img1#0/pos";
  pos.image = "img1.pgm";
  pos.query = "a cat";
  pos.label = Label::Positive;
  pos.mask = rle_encode(block(2, 2, 0, 0, 1, 1));
  pos.response = "It is [SEG].";
  pos.provenance = {"object_caption", {"img1#0"}};
  CHECK_NOTHROW(pos.validate(true));
  CHECK_THROWS_AS(pos.validate(false), ContractError);

  std::vector<std::string> keys;
  const auto j = to_json(pos);
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"id", "image", "query", "label", "mask", "response",
                                         "hallucination_type", "explanation", "provenance"});
  CHECK(to_json(pos)["hallucination_type"].is_null());

  InstructSample neg = pos;
  neg.label = Label::Negative;
  neg.mask.reset();
  neg.response = "[REJ] no cat";
  CHECK_THROWS_AS(neg.validate(true), ContractError);  // missing type/explanation
  neg.hallucination_type = "object";
  neg.explanation = "no cat";
  CHECK_NOTHROW(neg.validate(true));
  neg.response = "[REJ] [SEG]";
  CHECK_THROWS_AS(neg.validate(true), ContractError);

  pos.response = "It is.";
  CHECK_THROWS_AS(pos.validate(true), ContractError);
}

// ------------------------------------------------------------------- pipeline

TEST_CASE("pipeline over no images") {
  const OneImageWorld w;
  const auto out = run_pipeline({}, w.proposals, w.be, PipelineConfig{});
  CHECK(out.rinstruct_a.empty());
  CHECK(out.rinstruct_b.empty());
  CHECK(out.report == PipelineReport{});
}

TEST_CASE("pipeline traces one image end to end") {
  const OneImageWorld w;
  const auto out = run_pipeline(w.images, w.proposals, w.be, PipelineConfig{});

  REQUIRE(out.rinstruct_a.size() == 2);
  const auto& pos = out.rinstruct_a[0];
  CHECK(pos.id == "img1#0/pos");
  CHECK(pos.label == Label::Positive);
  CHECK(pos.query == "a red sedan");
  REQUIRE(pos.mask);
  CHECK(pos.mask->height == 4);
  CHECK(pos.mask->width == 4);
  CHECK(rle_decode(*pos.mask) == block(4, 4, 0, 0, 2, 2));

  const auto& neg = out.rinstruct_a[1];
  CHECK(neg.id == "img1#0/neg0");
  CHECK(neg.label == Label::Negative);
  CHECK(neg.query == "a blue sedan");
  CHECK(neg.hallucination_type.value() == "attribute");
  CHECK(neg.response == "[REJ] the sedan is red");
  CHECK_FALSE(neg.mask);

  REQUIRE(out.rinstruct_b.size() == 2);
  CHECK(out.rinstruct_b[0].query == "a red sedan on a road");
  CHECK_FALSE(out.rinstruct_b[0].mask);
  CHECK(out.rinstruct_b[1].query == "a red sedan on a road with a giraffe");
  CHECK(out.rinstruct_b[1].explanation.value() == "there is no giraffe");

  const auto& r = out.report;
  CHECK(r.images == 1);
  CHECK(r.proposed == 2);
  CHECK(r.captioned == 2);
  CHECK(r.fgbg_passed == 1);
  CHECK(r.consistency_passed == 1);
  CHECK(r.kept == 1);
  CHECK(r.positives_a == 1);
  CHECK(r.negatives_a == 1);
  CHECK(r.positives_b == 1);
  CHECK(r.negatives_b == 1);
  CHECK(r.negatives == 2);
  CHECK(r.drop_reasons == std::map<std::string, std::uint64_t>{{"fgbg", 1}});
}

TEST_CASE("pipeline counts are monotone and outputs deterministic across parallelism") {
  const fs::path dir = fresh_dir("many");
  std::vector<ImageEntry> images;
  std::string proposals;
  auto gen = std::make_shared<StubGeneration>(false);
  auto scorer = std::make_shared<StubScorer>(false);
  scorer->set_default(0.0);
  auto sim = std::make_shared<StubSimilarity>(false);
  sim->set_default(0.1);

  std::mt19937 rng(3);
  for (int i = 9; i >= 0; --i) {  // reverse order: output must still be sorted
    const std::string id = "img" + std::to_string(i);
    write_gray(dir / (id + ".pgm"), 6, 6);
    images.push_back({id, id + ".pgm", dir / (id + ".pgm")});
    for (int k = 0; k < 4; ++k) {
      proposals += proposal_line(id, block(6, 6, k, 0, k + 2, 3), {0, k, 3, 2}) + "\n";
      const std::string pid = id + "#" + std::to_string(k);
      const std::string text = k == 3 ? "" : "object " + std::to_string(k) + " of " + id;
      gen->add({"caption", {{"proposal_id", pid}}, text});
      scorer->add(id + "#fg", text, (rng() % 10) / 10.0);
      scorer->add(id + "#bg", text, (rng() % 10) / 10.0);
    }
    sim->add("object 0 of " + id, "object 1 of " + id, 0.95);
  }
  StubGeneration::DefaultRule hol;
  hol.rule = "fixed";
  hol.text = "a scene";
  gen->set_default("holistic", hol);
  StubGeneration::DefaultRule inj;
  inj.rule = "inject_suffix";
  inj.suffix = " and a dragon";
  inj.type = "object";
  inj.explanation = "no dragon";
  gen->set_default("inject", inj);
  const BackendSet be{nullptr, scorer, sim, gen};

  PipelineConfig serial;
  serial.negatives_per_caption = 2;
  PipelineConfig parallel = serial;
  parallel.max_in_flight = 4;

  const auto a = run_pipeline(images, proposals, be, serial);
  const auto b = run_pipeline(images, proposals, be, parallel);
  const fs::path out_a = dir / "a", out_b = dir / "b";
  write_output(a, out_a);
  write_output(b, out_b);
  for (const char* f : {"rinstruct_a.jsonl", "rinstruct_b.jsonl", "report.json"}) {
    CHECK(slurp(out_a / f) == slurp(out_b / f));
  }

  const auto& r = a.report;
  CHECK(r.images == 10);
  CHECK(r.proposed == 40);
  CHECK(r.captioned <= r.proposed);
  CHECK(r.fgbg_passed <= r.captioned);
  CHECK(r.consistency_passed <= r.fgbg_passed);
  CHECK(r.kept <= r.consistency_passed);
  CHECK(r.drop_reasons.at("empty_caption") == 10);
  CHECK(r.positives_a == r.kept);
  CHECK(r.negatives_a == 2 * r.kept);
  CHECK(r.negatives == r.negatives_a + r.negatives_b);

  std::uint64_t dropped = 0;
  for (const auto& [k, v] : r.drop_reasons) dropped += v;
  CHECK(dropped == r.proposed - r.kept);

  // Sorted by image id, then proposal.
  for (std::size_t i = 1; i < a.rinstruct_a.size(); ++i) {
    const auto prefix = [](const std::string& id) { return id.substr(0, id.find('/')); };
    CHECK(prefix(a.rinstruct_a[i - 1].id) <= prefix(a.rinstruct_a[i].id));
  }
  for (const auto& s : a.rinstruct_a) {
    if (s.label == Label::Positive) {
      REQUIRE(s.mask);
      CHECK(s.mask->height == 6);
    } else {
      CHECK_FALSE(s.hallucination_type.value().empty());
      CHECK_FALSE(s.explanation.value().empty());
    }
  }
  for (const auto& s : a.rinstruct_b) CHECK_FALSE(s.mask);

  const auto parsed = nlohmann::json::parse(slurp(out_a / "report.json"));
  CHECK(parsed["drop_reasons"]["empty_caption"] == 10);
}

TEST_CASE("report merge is associative and commutative") {
  PipelineReport x, y, z;
  x.images = 1;
  x.drop("fgbg");
  y.kept = 3;
  y.drop("nms");
  y.drop("fgbg");
  z.negatives = 5;
  z.drop("consistency");
  PipelineReport left = x;
  left.merge(y).merge(z);
  PipelineReport yz = y;
  yz.merge(z);
  PipelineReport right = x;
  right.merge(yz);
  CHECK(left == right);
  PipelineReport swapped = z;
  swapped.merge(y).merge(x);
  CHECK(left == swapped);
  CHECK(left.drop_reasons.at("fgbg") == 2);
}

TEST_CASE("pipeline failure modes") {
  OneImageWorld w;

  // Undecodable image: proposals are counted and dropped.
  std::ofstream(w.dir / "broken.pgm") << "P9 nonsense";
  std::vector<ImageEntry> broken{{"img1", "broken.pgm", w.dir / "broken.pgm"}};
  const auto out = run_pipeline(broken, w.proposals, w.be, PipelineConfig{});
  CHECK(out.rinstruct_a.empty());
  CHECK(out.report.drop_reasons.at("image_decode") == 2);

  // A strict stub miss is a configuration error and aborts.
  auto strict_gen = std::make_shared<StubGeneration>(true);
  BackendSet strict = w.be;
  strict.generation = strict_gen;
  CHECK_THROWS_AS(run_pipeline(w.images, w.proposals, strict, PipelineConfig{}), ConfigError);

  // Bad proposal document aborts with the line number.
  CHECK_THROWS_AS(run_pipeline(w.images, "{oops}\n", w.be, PipelineConfig{}), IngestionError);

  std::vector<ImageEntry> dup = w.images;
  dup.push_back(w.images[0]);
  CHECK_THROWS_AS(run_pipeline(dup, w.proposals, w.be, PipelineConfig{}), ConfigError);
}

TEST_CASE("load_image_set") {
  const fs::path dir = fresh_dir("set");
  std::ofstream(dir / "images.jsonl") << R"({"image_id":"a","path":"a.pgm"})" << "\n\n"
                                      << R"({"image_id":"b","path":"/abs/b.pgm"})" << "\n";
  const auto set = load_image_set(dir / "images.jsonl", dir);
  REQUIRE(set.size() == 2);
  CHECK(set[0].path == dir / "a.pgm");
  CHECK(set[0].image == "a.pgm");
  CHECK(set[1].path == fs::path("/abs/b.pgm"));
  CHECK_THROWS_AS(load_image_set(dir / "missing.jsonl", dir), ConfigError);
}
