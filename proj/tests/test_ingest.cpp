// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "proctrack/errors.hpp"
#include "proctrack/ingest.hpp"

using namespace proctrack;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content)
      : path("/tmp/proctrack_test_" + name) {
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

const char* kProceduralFixture =
    R"({"para_id":"p1","sentences":["Water forms in the cloud.","Water moves to the soil.","Water disappears."],"annotated":true,"entities":[{"name":"water","states":[{"tag":"none"},{"tag":"loc","span":{"text":"cloud","sent":0}},{"tag":"loc","span":{"text":"soil","sent":1}},{"tag":"none"}]}]})"
    "\n"
    R"({"para_id":"p2","sentences":["Nothing happens."],"annotated":true,"entities":[]})"
    "\n"
    R"({"para_id":"p3","sentences":["A rock sits.","It stays."],"annotated":false,"entities":[{"name":"rock"}]})"
    "\n";

}  // namespace

TEST_CASE("tokenize splits words and punctuation with case folding") {
  CHECK(tokenize_text("Water moves.") == std::vector<std::string>{"water", "moves", "."});
  CHECK(tokenize_text("  The ice-cold  LAKE! ") ==
        std::vector<std::string>{"the", "ice", "-", "cold", "lake", "!"});
  CHECK(tokenize_text("") == std::vector<std::string>{});
  CHECK(tokenize_text("Water moves.") == tokenize_text("Water moves."));
}

TEST_CASE("hashed vocabulary matches the reference FNV-1a values") {
  Vocab v;
  CHECK(v.id("water") == 1296);  // 4 + fnv1a("water") mod 4092
  CHECK(v.id("moves") == 2589);
  CHECK(v.id(".") == 305);
  CHECK(v.id("soil") == 3678);
  CHECK(v.ids("Water moves.") == std::vector<int>{1296, 2589, 305});
  for (int id : v.ids("any text at all"))
    CHECK(id >= 4);
}

TEST_CASE("procedural JSONL loads with actions derived from states") {
  TempFile f("proc.jsonl", kProceduralFixture);
  auto split = load_procedural_jsonl(f.path, "train");
  REQUIRE(split.examples.size() == 3);

  const auto& ex = split.examples[0];
  REQUIRE(ex.entities.size() == 1);
  const auto& tl = ex.entities[0].timeline;
  CHECK(tl.actions == std::vector<Action>{Action::Create, Action::Move, Action::Destroy});
  CHECK(tl.states[1].span->text == "cloud");
  CHECK(tl.states[1].span->begin >= 0);  // offsets recovered from sentence text

  CHECK(split.examples[1].entities.empty());
  CHECK_FALSE(split.examples[2].entities[0].annotated);

  CHECK(split.stats.paragraphs == 3);
  CHECK(split.stats.mean_sentences == doctest::Approx(2.0));
  CHECK(split.stats.mean_entities == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("malformed lines report the line number") {
  TempFile f("bad.jsonl", "{\"para_id\":\"p1\",\"sentences\":[\"a\"],\"entities\":[]}\nnot json\n");
  try {
    load_procedural_jsonl(f.path, "train");
    FAIL("expected parse error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("unknown keys and inconsistent states are rejected") {
  TempFile f1("k.jsonl",
              R"({"para_id":"p","sentences":["a"],"entities":[],"extra":1})" "\n");
  CHECK_THROWS_AS(load_procedural_jsonl(f1.path, "t"), ValidationError);

  // Location span on a 'none' tag
  TempFile f2("k2.jsonl",
              R"({"para_id":"p","sentences":["a"],"entities":[{"name":"e","states":[{"tag":"none","span":{"text":"x","sent":0}},{"tag":"none"}]}]})" "\n");
  CHECK_THROWS_AS(load_procedural_jsonl(f2.path, "t"), ValidationError);

  // state count mismatch
  TempFile f3("k3.jsonl",
              R"({"para_id":"p","sentences":["a"],"entities":[{"name":"e","states":[{"tag":"none"}]}]})" "\n");
  CHECK_THROWS_AS(load_procedural_jsonl(f3.path, "t"), ValidationError);
}

TEST_CASE("missing file raises an io error") {
  CHECK_THROWS_AS(load_procedural_jsonl("/tmp/definitely_missing_file.jsonl", "t"), IoError);
}

TEST_CASE("procedural parse serialize parse round-trips") {
  TempFile f("rt.jsonl", kProceduralFixture);
  auto split = load_procedural_jsonl(f.path, "train");
  TempFile out("rt_out.jsonl", "");
  save_procedural_jsonl(split.examples, out.path);
  auto again = load_procedural_jsonl(out.path, "train");
  REQUIRE(again.examples.size() == split.examples.size());
  for (size_t i = 0; i < split.examples.size(); ++i)
    CHECK(structurally_equal(split.examples[i], again.examples[i]));
  CHECK(dataset_hash(split.examples) == dataset_hash(again.examples));
}

TEST_CASE("grid TSV fixtures load as one paragraph") {
  TempFile f("grid.tsv",
             "entity\tWater forms in the cloud.\tWater moves to the soil.\n"
             "water\t-\tcloud\tsoil\n"
             "dust\t?\t?\tsoil\n");
  auto split = load_procedural_grid(f.path, "dev");
  REQUIRE(split.examples.size() == 1);
  const auto& ex = split.examples[0];
  CHECK(ex.para_id == "proctrack_test_grid");  // filename stem
  REQUIRE(ex.entities.size() == 2);
  CHECK(ex.entities[0].timeline.actions ==
        std::vector<Action>{Action::Create, Action::Move});
  CHECK(ex.entities[1].timeline.states[0].tag == StateTag::UnknownLocation);
  CHECK(ex.entities[1].timeline.actions == std::vector<Action>{Action::Exist, Action::Move});

  TempFile bad("grid_bad.tsv", "entity\ts1\nwater\t-\n");
  CHECK_THROWS_AS(load_procedural_grid(bad.path, "dev"), ValidationError);
}

TEST_CASE("story JSONL requires the registry header and validates pairs") {
  const std::string header =
      R"({"attributes":[{"name":"powered","labels":3},{"name":"wet","labels":3}]})";
  const std::string pair =
      R"({"pair_id":"x1","stories":[["A plugs in the tv.","A watches the tv."],["A unplugs the tv.","A watches the tv."]],"plausible":0,"conflict":[1,2],"entities":[[{"name":"tv","pre":[[0,0],[2,0]],"eff":[[2,0],[2,0]]}],[{"name":"tv","pre":[[0,0],[2,0]],"eff":[[1,0],[2,0]]}]]})";

  TempFile f("story.jsonl", header + "\n" + pair + "\n");
  auto split = load_story_jsonl(f.path, "train");
  REQUIRE(split.attributes.size() == 2);
  CHECK(split.attributes[0].name == "powered");
  REQUIRE(split.pairs.size() == 1);
  CHECK(split.pairs[0].conflict_c1 == 1);
  CHECK(split.pairs[0].conflict_c2 == 2);

  TempFile noheader("story_nh.jsonl", pair + "\n");
  CHECK_THROWS_AS(load_story_jsonl(noheader.path, "t"), ValidationError);

  // identical stories rejected
  const std::string same =
      R"({"pair_id":"x2","stories":[["A watches the tv."],["A watches the tv."]],"plausible":0,"conflict":[1,1],"entities":[[],[]]})";
  TempFile f2("story_same.jsonl", header + "\n" + same + "\n");
  CHECK_THROWS_AS(load_story_jsonl(f2.path, "t"), ValidationError);
}

TEST_CASE("story save load round-trips") {
  SynthStoryConfig cfg;
  cfg.pairs = 5;
  cfg.seed = 7;
  auto split = synth_story(cfg, "train");
  TempFile out("story_rt.jsonl", "");
  save_story_jsonl(split, out.path);
  auto again = load_story_jsonl(out.path, "train");
  CHECK(structurally_equal(split, again));
  CHECK(dataset_hash(split) == dataset_hash(again));
}

TEST_CASE("synthetic procedural corpus is valid and reproducible") {
  SynthProceduralConfig cfg;
  cfg.paragraphs = 12;
  cfg.unannotated_fraction = 0.25;
  cfg.seed = 11;
  auto split = synth_procedural(cfg, "train");
  CHECK(split.stats.paragraphs == 12);
  CHECK(split.stats.mean_sentences >= cfg.min_sentences);
  CHECK(split.stats.mean_sentences <= cfg.max_sentences);

  int unannotated = 0;
  for (const auto& ex : split.examples) {
    validate_example(ex);  // throws on any inconsistency
    for (const auto& ent : ex.entities) {
      if (!ent.annotated) {
        ++unannotated;
        continue;
      }
      // every concrete location is recoverable from the paragraph text
      std::string para;
      for (const auto& s : ex.sentences) para += s + " ";
      for (const auto& st : ent.timeline.states)
        if (st.tag == StateTag::Location)
          CHECK(fold_case(para).find(fold_case(st.span->text)) != std::string::npos);
    }
  }
  CHECK(unannotated > 0);

  auto split2 = synth_procedural(cfg, "train");
  CHECK(dataset_hash(split.examples) == dataset_hash(split2.examples));

  cfg.seed = 12;
  auto split3 = synth_procedural(cfg, "train");
  CHECK(dataset_hash(split.examples) != dataset_hash(split3.examples));
}

TEST_CASE("synthetic story corpus keeps the conflict verifiable") {
  SynthStoryConfig cfg;
  cfg.pairs = 10;
  cfg.seed = 3;
  auto split = synth_story(cfg, "train");
  CHECK(split.pairs.size() == 10);
  for (const auto& pair : split.pairs) {
    validate_story_pair(pair, split.attributes);
    const Story& implaus = pair.stories[1 - pair.plausible_index];
    bool nondefault_eff = false, nondefault_pre = false;
    for (const auto& ent : implaus.entities) {
      for (size_t b = 0; b < split.attributes.size(); ++b) {
        if (ent.eff[pair.conflict_c1 - 1][b] != 0) nondefault_eff = true;
        if (ent.pre[pair.conflict_c2 - 1][b] != 0) nondefault_pre = true;
      }
    }
    CHECK(nondefault_eff);
    CHECK(nondefault_pre);
  }
}
