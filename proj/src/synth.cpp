// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "proctrack/errors.hpp"
#include "proctrack/ingest.hpp"
#include "proctrack/rng.hpp"

namespace proctrack {

namespace {

const std::vector<std::string> kEntityPool = {"water", "rock",  "seed", "vapor",
                                              "ice",   "sand",  "heat", "light",
                                              "salt",  "steam", "mud",  "ash"};
const std::vector<std::string> kLocationPool = {"soil",  "river", "cloud",   "root",  "stem",
                                                "leaf",  "lake",  "ocean",   "valley", "cave",
                                                "field", "shore", "glacier", "pond"};

struct EntityScript {
  std::string name;
  std::vector<EntityState> states;            // n+1
  std::vector<std::string> clauses;           // per step, may be empty
};

std::string pick_location(Rng& rng, const std::string& avoid) {
  while (true) {
    const auto& loc = kLocationPool[rng.index(kLocationPool.size())];
    if (loc != avoid) return loc;
  }
}

EntityScript script_entity(const std::string& name, int n, Rng& rng) {
  EntityScript sc;
  sc.name = name;
  sc.states.resize(n + 1);
  sc.clauses.resize(n);

  // initial state
  const double first = rng.uniform01();
  bool present;
  if (first < 0.45) {
    present = false;  // will be created at step 1
  } else if (first < 0.7) {
    present = false;  // created later (OutOfCreate prefix)
  } else {
    present = true;
  }
  std::string cur;  // empty = unknown while present
  if (present) {
    if (rng.uniform01() < 0.85) cur = kLocationPool[rng.index(kLocationPool.size())];
    sc.states[0] = cur.empty() ? EntityState::unknown() : EntityState::location({-1, -1, cur});
  } else {
    sc.states[0] = EntityState::nonexistence();
  }

  bool created_at_one = !present && first < 0.45;
  bool destroyed = false;
  for (int t = 1; t <= n; ++t) {
    std::string clause;
    if (destroyed) {
      sc.states[t] = EntityState::nonexistence();
      sc.clauses[t - 1] = "";
      continue;
    }
    if (!present) {
      const bool create_now = created_at_one ? (t == 1) : rng.uniform01() < 0.5;
      if (create_now) {
        present = true;
        if (rng.uniform01() < 0.8) {
          cur = pick_location(rng, "");
          clause = "the " + sc.name + " appears in the " + cur + " .";
        } else {
          cur.clear();
          clause = "the " + sc.name + " appears .";
        }
      }
    } else {
      const double r = rng.uniform01();
      if (r < 0.35) {
        // stay put; mention occasionally
        if (rng.uniform01() < 0.4) {
          clause = cur.empty() ? "the " + sc.name + " remains ."
                               : "the " + sc.name + " stays in the " + cur + " .";
        }
      } else if (r < 0.75) {
        if (!cur.empty() && rng.uniform01() < 0.15) {
          cur.clear();
          clause = "the " + sc.name + " escapes .";
        } else {
          cur = pick_location(rng, cur);
          clause = "the " + sc.name + " moves to the " + cur + " .";
        }
      } else {
        present = false;
        destroyed = true;
        cur.clear();
        clause = "the " + sc.name + " disappears .";
      }
    }
    sc.states[t] = !present ? EntityState::nonexistence()
                   : cur.empty() ? EntityState::unknown()
                                 : EntityState::location({-1, -1, cur});
    sc.clauses[t - 1] = clause;
  }

  // anchor a concrete initial location in the text so span supervision exists
  if (sc.states[0].tag == StateTag::Location) {
    sc.clauses[0] = "the " + sc.name + " is in the " + sc.states[0].span->text + " . " +
                    sc.clauses[0];
    while (!sc.clauses[0].empty() && sc.clauses[0].back() == ' ') sc.clauses[0].pop_back();
  }
  return sc;
}

}  // namespace

ProceduralSplit synth_procedural(const SynthProceduralConfig& cfg, const std::string& split_name) {
  if (cfg.paragraphs < 1 || cfg.min_sentences < 1 || cfg.max_sentences < cfg.min_sentences ||
      cfg.min_entities < 1 || cfg.max_entities < cfg.min_entities)
    throw ValidationError("E_CONFIG", "synth_procedural: bad generator bounds");
  Rng rng(cfg.seed);
  ProceduralSplit split;
  split.name = split_name;
  const int annotated_count =
      cfg.paragraphs - static_cast<int>(cfg.unannotated_fraction * cfg.paragraphs);
  for (int p = 0; p < cfg.paragraphs; ++p) {
    const int n = cfg.min_sentences +
                  static_cast<int>(rng.below(cfg.max_sentences - cfg.min_sentences + 1));
    const int k = cfg.min_entities +
                  static_cast<int>(rng.below(cfg.max_entities - cfg.min_entities + 1));
    std::vector<std::string> names = kEntityPool;
    rng.shuffle(names);
    names.resize(k);

    ProceduralExample ex;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth-%03d", p);
    ex.para_id = buf;

    std::vector<EntityScript> scripts;
    for (const auto& name : names) scripts.push_back(script_entity(name, n, rng));

    for (int t = 0; t < n; ++t) {
      std::string sent;
      for (const auto& sc : scripts) {
        if (sc.clauses[t].empty()) continue;
        if (!sent.empty()) sent += " ";
        sent += sc.clauses[t];
      }
      if (sent.empty()) sent = "time passes .";
      ex.sentences.push_back(sent);
    }

    const bool annotated = p < annotated_count;
    for (auto& sc : scripts) {
      TrackedEntity ent;
      ent.name = sc.name;
      ent.annotated = annotated;
      if (annotated) {
        ent.timeline.entity = sc.name;
        ent.timeline.states = sc.states;
        ent.timeline.actions = derive_actions(sc.states);
      }
      ex.entities.push_back(std::move(ent));
    }
    validate_example(ex);
    split.examples.push_back(std::move(ex));
  }
  split.stats = compute_procedural_stats(split.examples);
  return split;
}

StorySplit synth_story(const SynthStoryConfig& cfg, const std::string& split_name) {
  if (cfg.pairs < 1 || cfg.min_sentences < 2 || cfg.max_sentences < cfg.min_sentences)
    throw ValidationError("E_CONFIG", "synth_story: bad generator bounds");
  Rng rng(cfg.seed);
  StorySplit split;
  split.name = split_name;
  split.attributes = {{"powered", 3}, {"wet", 3}};  // 0 irrelevant, 1 no, 2 yes

  const std::vector<std::string> devices = {"tv", "radio", "lamp", "fan"};
  const std::vector<std::string> fabrics = {"towel", "shirt", "sock", "rag"};
  const std::vector<std::string> people = {"mary", "john", "ava", "tom"};

  for (int p = 0; p < cfg.pairs; ++p) {
    const int n = cfg.min_sentences +
                  static_cast<int>(rng.below(cfg.max_sentences - cfg.min_sentences + 1));
    const int attr = static_cast<int>(rng.below(2));  // 0 powered, 1 wet
    const auto& main = attr == 0 ? devices[rng.index(devices.size())]
                                 : fabrics[rng.index(fabrics.size())];
    const auto& other = attr == 0 ? fabrics[rng.index(fabrics.size())]
                                  : devices[rng.index(devices.size())];
    const auto& who = people[rng.index(people.size())];

    const int c2 = 2 + static_cast<int>(rng.below(n - 1));   // in [2, n]
    const int c1 = 1 + static_cast<int>(rng.below(c2 - 1));  // in [1, c2-1]

    auto filler = [&](int t) -> std::string {
      const char* verbs[] = {"looks at", "holds", "sees", "touches"};
      return who + " " + verbs[t % 4] + " the " + other + " .";
    };
    const std::string enable = attr == 0 ? who + " plugs in the " + main + " ."
                                         : who + " soaks the " + main + " .";
    const std::string disable = attr == 0 ? who + " unplugs the " + main + " ."
                                          : who + " dries the " + main + " .";
    const std::string consume = attr == 0 ? who + " watches the " + main + " ."
                                          : who + " wrings the " + main + " .";

    Story plaus, implaus;
    for (int t = 1; t <= n; ++t) {
      std::string s = t == c1 ? enable : t == c2 ? consume : filler(t);
      plaus.sentences.push_back(s);
      implaus.sentences.push_back(t == c1 ? disable : s);
    }

    auto make_entities = [&](bool plausible) {
      StoryEntityStates me;
      me.name = main;
      me.pre.assign(n, {0, 0});
      me.eff.assign(n, {0, 0});
      me.eff[c1 - 1][attr] = plausible ? 2 : 1;
      me.pre[c2 - 1][attr] = 2;
      me.eff[c2 - 1][attr] = 2;
      StoryEntityStates se;
      se.name = other;
      se.pre.assign(n, {0, 0});
      se.eff.assign(n, {0, 0});
      return std::vector<StoryEntityStates>{me, se};
    };

    StoryPair pair;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "pair-%03d", p);
    pair.pair_id = buf;
    pair.plausible_index = static_cast<int>(rng.below(2));
    pair.conflict_c1 = c1;
    pair.conflict_c2 = c2;
    plaus.entities = make_entities(true);
    implaus.entities = make_entities(false);
    pair.stories[pair.plausible_index] = plaus;
    pair.stories[1 - pair.plausible_index] = implaus;
    validate_story_pair(pair, split.attributes);
    split.pairs.push_back(std::move(pair));
  }
  split.stats = compute_story_stats(split.pairs);
  return split;
}

}  // namespace proctrack
