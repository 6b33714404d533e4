// SPDX-License-Identifier: Apache-2.0
#include "proctrack/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "proctrack/errors.hpp"

namespace proctrack {
namespace {

using nlohmann::json;

[[noreturn]] void line_error(const std::string& path, size_t line, const std::string& msg) {
  throw ValidationError("E_PARSE", path + ":" + std::to_string(line) + ": " + msg);
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path,
                size_t line) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) line_error(path, line, "unknown key '" + it.key() + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

// 1-based step indices of each event kind in a timeline.
struct Events {
  std::vector<int> created, moved, destroyed;
};

Events timeline_events(const EntityTimeline& tl) {
  Events ev;
  for (size_t t = 0; t < tl.actions.size(); ++t) {
    const int step = static_cast<int>(t) + 1;
    switch (tl.actions[t]) {
      case Action::Create:
        ev.created.push_back(step);
        break;
      case Action::Move:
        ev.moved.push_back(step);
        break;
      case Action::Destroy:
        ev.destroyed.push_back(step);
        break;
      default:
        break;
    }
  }
  return ev;
}

std::string state_loc(const EntityState& s) {
  if (s.tag == StateTag::Location) return fold_case(s.span->text);
  return s.tag == StateTag::UnknownLocation ? "?" : "-";
}

// Where each event put (or found) the entity: created and moved read the
// effect state, destroyed reads the precondition state.
std::vector<std::string> event_locations(const EntityTimeline& tl, const std::vector<int>& steps,
                                         bool effect_side) {
  std::vector<std::string> locs;
  locs.reserve(steps.size());
  for (int step : steps) locs.push_back(state_loc(tl.states[effect_side ? step : step - 1]));
  return locs;
}

void score_event(const EntityTimeline& g, const EntityTimeline& p, const std::vector<int>& gsteps,
                 const std::vector<int>& psteps, bool effect_side, SentenceLevelReport& rep) {
  const bool g_occurs = !gsteps.empty();
  const bool p_occurs = !psteps.empty();
  ++rep.cat1.asked;
  if (g_occurs == p_occurs) ++rep.cat1.correct;
  if (!g_occurs || !p_occurs) return;
  ++rep.cat2.asked;
  if (gsteps == psteps) ++rep.cat2.correct;
  ++rep.cat3.asked;
  if (event_locations(g, gsteps, effect_side) == event_locations(p, psteps, effect_side))
    ++rep.cat3.correct;
}

// Canonical string forms so tuple comparison is plain set intersection.
struct TupleSets {
  std::set<std::string> inputs, outputs, conversions, moves;
};

std::string join(const std::set<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ",";
    out += s;
  }
  return out;
}

TupleSets doc_tuples(const ProceduralExample& ex) {
  TupleSets ts;
  std::map<int, std::set<std::string>> created_at, destroyed_at;
  for (const auto& ent : ex.entities) {
    if (!ent.annotated) continue;
    const auto& tl = ent.timeline;
    if (tl.states.empty()) continue;
    if (tl.states.front().present() && !tl.states.back().present()) ts.inputs.insert(ent.name);
    if (!tl.states.front().present() && tl.states.back().present()) ts.outputs.insert(ent.name);
    for (size_t t = 0; t < tl.actions.size(); ++t) {
      const int step = static_cast<int>(t) + 1;
      switch (tl.actions[t]) {
        case Action::Create:
          created_at[step].insert(ent.name);
          break;
        case Action::Destroy:
          destroyed_at[step].insert(ent.name);
          break;
        case Action::Move:
          ts.moves.insert(ent.name + "|" + std::to_string(step) + "|" + state_loc(tl.states[t]) +
                          "|" + state_loc(tl.states[t + 1]));
          break;
        default:
          break;
      }
    }
  }
  for (const auto& [step, destroyed] : destroyed_at) {
    auto it = created_at.find(step);
    if (it == created_at.end()) continue;
    ts.conversions.insert(std::to_string(step) + "|" + join(destroyed) + "|" + join(it->second));
  }
  return ts;
}

struct PrAccum {
  double p_sum = 0.0, r_sum = 0.0;
  int paragraphs = 0;

  void add(const std::set<std::string>& gold, const std::set<std::string>& pred) {
    std::vector<std::string> inter;
    std::set_intersection(gold.begin(), gold.end(), pred.begin(), pred.end(),
                          std::back_inserter(inter));
    const double hits = static_cast<double>(inter.size());
    // Empty-set convention: both empty is vacuously perfect, one-sided
    // emptiness makes the undefined rate 0.
    p_sum += pred.empty() ? (gold.empty() ? 1.0 : 0.0) : hits / static_cast<double>(pred.size());
    r_sum += gold.empty() ? (pred.empty() ? 1.0 : 0.0) : hits / static_cast<double>(gold.size());
    ++paragraphs;
  }

  PrF1 finish() const {
    PrF1 out;
    if (paragraphs == 0) {
      out.precision = out.recall = out.f1 = 1.0;
      return out;
    }
    out.precision = p_sum / paragraphs;
    out.recall = r_sum / paragraphs;
    const double denom = out.precision + out.recall;
    out.f1 = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
    return out;
  }
};

const TrackedEntity* find_entity(const ProceduralExample* ex, const std::string& name) {
  if (!ex) return nullptr;
  for (const auto& ent : ex->entities)
    if (ent.name == name) return &ent;
  return nullptr;
}

const StoryEntityStates* find_story_entity(const std::vector<StoryEntityStates>& entities,
                                           const std::string& name) {
  for (const auto& ent : entities)
    if (ent.name == name) return &ent;
  return nullptr;
}

// Predicted label for one (entity, step, attribute) slot; absent slots read
// as the default label 0.
int slot_label(const std::vector<std::vector<int>>* rows, size_t step_ix, size_t attr_ix) {
  if (!rows || step_ix >= rows->size() || attr_ix >= (*rows)[step_ix].size()) return 0;
  return (*rows)[step_ix][attr_ix];
}

struct LabelCounts {
  int64_t tp = 0, fp = 0, fn = 0;
};

// One-vs-rest tallies per non-default label, per attribute, per side.
struct SlotCounts {
  std::vector<std::map<int, LabelCounts>> pre, eff;  // indexed by attribute

  explicit SlotCounts(size_t attrs) : pre(attrs), eff(attrs) {}

  void add(size_t attr, bool effect_side, int gold, int pred) {
    auto& per_label = effect_side ? eff[attr] : pre[attr];
    if (gold == pred) {
      if (gold != 0) ++per_label[gold].tp;
      return;
    }
    if (gold != 0) ++per_label[gold].fn;
    if (pred != 0) ++per_label[pred].fp;
  }
};

double side_f1(const std::map<int, LabelCounts>& per_label) {
  if (per_label.empty()) return 1.0;  // attribute never used: vacuously perfect
  double sum = 0.0;
  for (const auto& [label, c] : per_label) {
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    sum += denom > 0.0 ? 2.0 * static_cast<double>(c.tp) / denom : 0.0;
  }
  return sum / static_cast<double>(per_label.size());
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 1.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void check_registry(const StorySplit& gold, const StoryPairPrediction& pp) {
  const size_t attrs = gold.attributes.size();
  for (int s = 0; s < 2; ++s) {
    for (const auto& ent : pp.entities[s]) {
      for (const auto* rows : {&ent.pre, &ent.eff}) {
        for (const auto& step : *rows) {
          if (step.size() != attrs)
            throw ValidationError("E_REGISTRY", "pair '" + pp.pair_id + "': entity '" + ent.name +
                                                    "' carries " + std::to_string(step.size()) +
                                                    " attributes, registry has " +
                                                    std::to_string(attrs));
          for (size_t b = 0; b < step.size(); ++b)
            if (step[b] < 0 || step[b] >= gold.attributes[b].labels)
              throw ValidationError("E_LABEL_RANGE",
                                    "pair '" + pp.pair_id + "': attribute '" +
                                        gold.attributes[b].name + "' value " +
                                        std::to_string(step[b]) + " outside [0, " +
                                        std::to_string(gold.attributes[b].labels) + ")");
        }
      }
    }
  }
}

// Every gold non-default effect value at c1 and precondition value at c2 in
// the implausible story must be matched exactly.
bool verifiable(const StoryPair& gold, const StoryPairPrediction& pp) {
  const int s = 1 - gold.plausible_index;
  const size_t c1_ix = static_cast<size_t>(gold.conflict_c1) - 1;
  const size_t c2_ix = static_cast<size_t>(gold.conflict_c2) - 1;
  for (const auto& gent : gold.stories[s].entities) {
    const StoryEntityStates* pent = find_story_entity(pp.entities[s], gent.name);
    for (size_t b = 0; b < gent.eff[c1_ix].size(); ++b) {
      const int want = gent.eff[c1_ix][b];
      if (want != 0 && slot_label(pent ? &pent->eff : nullptr, c1_ix, b) != want) return false;
    }
    for (size_t b = 0; b < gent.pre[c2_ix].size(); ++b) {
      const int want = gent.pre[c2_ix][b];
      if (want != 0 && slot_label(pent ? &pent->pre : nullptr, c2_ix, b) != want) return false;
    }
  }
  return true;
}

}  // namespace

SentenceLevelReport sentence_level(const ProceduralSplit& gold, const ProceduralSplit& pred) {
  std::map<std::string, const ProceduralExample*> pred_by_id;
  for (const auto& ex : pred.examples) pred_by_id[ex.para_id] = &ex;

  SentenceLevelReport rep;
  for (const auto& gex : gold.examples) {
    auto it = pred_by_id.find(gex.para_id);
    const ProceduralExample* pex = it == pred_by_id.end() ? nullptr : it->second;
    for (const auto& gent : gex.entities) {
      if (!gent.annotated) continue;
      const TrackedEntity* pent = find_entity(pex, gent.name);
      if (!pent) {
        // No aligned prediction: every occurrence question counts as missed.
        rep.cat1.asked += 3;
        rep.flags.push_back(gex.para_id + "/" + gent.name);
        continue;
      }
      const Events g = timeline_events(gent.timeline);
      const Events p = timeline_events(pent->timeline);
      score_event(gent.timeline, pent->timeline, g.created, p.created, true, rep);
      score_event(gent.timeline, pent->timeline, g.moved, p.moved, true, rep);
      score_event(gent.timeline, pent->timeline, g.destroyed, p.destroyed, false, rep);
    }
  }
  rep.cat1_acc = rep.cat1.rate();
  rep.cat2_acc = rep.cat2.rate();
  rep.cat3_acc = rep.cat3.rate();
  rep.macro_avg = (rep.cat1_acc + rep.cat2_acc + rep.cat3_acc) / 3.0;
  const int64_t asked = rep.cat1.asked + rep.cat2.asked + rep.cat3.asked;
  const int64_t correct = rep.cat1.correct + rep.cat2.correct + rep.cat3.correct;
  rep.micro_avg = asked ? static_cast<double>(correct) / static_cast<double>(asked) : 1.0;
  return rep;
}

DocumentLevelReport document_level(const ProceduralSplit& gold, const ProceduralSplit& pred) {
  std::map<std::string, const ProceduralExample*> pred_by_id;
  for (const auto& ex : pred.examples) pred_by_id[ex.para_id] = &ex;

  PrAccum inputs, outputs, conversions, moves;
  for (const auto& gex : gold.examples) {
    auto it = pred_by_id.find(gex.para_id);
    const TupleSets g = doc_tuples(gex);
    const TupleSets p = it == pred_by_id.end() ? TupleSets{} : doc_tuples(*it->second);
    inputs.add(g.inputs, p.inputs);
    outputs.add(g.outputs, p.outputs);
    conversions.add(g.conversions, p.conversions);
    moves.add(g.moves, p.moves);
  }

  DocumentLevelReport rep;
  rep.inputs = inputs.finish();
  rep.outputs = outputs.finish();
  rep.conversions = conversions.finish();
  rep.moves = moves.finish();
  rep.overall.precision = (rep.inputs.precision + rep.outputs.precision +
                           rep.conversions.precision + rep.moves.precision) /
                          4.0;
  rep.overall.recall =
      (rep.inputs.recall + rep.outputs.recall + rep.conversions.recall + rep.moves.recall) / 4.0;
  rep.overall.f1 = (rep.inputs.f1 + rep.outputs.f1 + rep.conversions.f1 + rep.moves.f1) / 4.0;
  return rep;
}

StoryReport story_metrics(const StorySplit& gold, const std::vector<StoryPairPrediction>& pred) {
  std::map<std::string, const StoryPairPrediction*> by_id;
  for (const auto& pp : pred) {
    check_registry(gold, pp);
    by_id[pp.pair_id] = &pp;
  }

  StoryReport rep;
  rep.pairs = static_cast<int64_t>(gold.pairs.size());
  for (const auto& attr : gold.attributes) rep.attribute_names.push_back(attr.name);

  int64_t acc = 0, cons = 0, ver = 0;
  SlotCounts slots(gold.attributes.size());
  for (const auto& gpair : gold.pairs) {
    auto it = by_id.find(gpair.pair_id);
    const StoryPairPrediction* pp = it == by_id.end() ? nullptr : it->second;
    if (!pp) rep.flags.push_back(gpair.pair_id);

    if (pp && pp->chosen == gpair.plausible_index) {
      ++acc;
      if (pp->conflict_c1 == gpair.conflict_c1 && pp->conflict_c2 == gpair.conflict_c2) {
        ++cons;
        if (verifiable(gpair, *pp)) ++ver;
      }
    }

    for (int s = 0; s < 2; ++s) {
      for (const auto& gent : gpair.stories[s].entities) {
        const StoryEntityStates* pent =
            pp ? find_story_entity(pp->entities[s], gent.name) : nullptr;
        if (pp && !pent) rep.flags.push_back(gpair.pair_id + "/" + gent.name);
        for (size_t t = 0; t < gent.pre.size(); ++t) {
          for (size_t b = 0; b < gent.pre[t].size(); ++b) {
            slots.add(b, false, gent.pre[t][b], slot_label(pent ? &pent->pre : nullptr, t, b));
            slots.add(b, true, gent.eff[t][b], slot_label(pent ? &pent->eff : nullptr, t, b));
          }
        }
      }
    }
  }

  const double n = rep.pairs ? static_cast<double>(rep.pairs) : 1.0;
  rep.accuracy = rep.pairs ? static_cast<double>(acc) / n : 1.0;
  rep.consistency = rep.pairs ? static_cast<double>(cons) / n : 1.0;
  rep.verifiability = rep.pairs ? static_cast<double>(ver) / n : 1.0;
  for (size_t b = 0; b < gold.attributes.size(); ++b) {
    rep.pre_f1.push_back(side_f1(slots.pre[b]));
    rep.eff_f1.push_back(side_f1(slots.eff[b]));
  }
  rep.pre_f1_macro = mean(rep.pre_f1);
  rep.eff_f1_macro = mean(rep.eff_f1);
  rep.attr_f1_macro = (rep.pre_f1_macro + rep.eff_f1_macro) / 2.0;
  return rep;
}

std::string SentenceLevelReport::to_json() const {
  json js;
  js["cat1"] = {{"asked", cat1.asked}, {"correct", cat1.correct}, {"accuracy", cat1_acc}};
  js["cat2"] = {{"asked", cat2.asked}, {"correct", cat2.correct}, {"accuracy", cat2_acc}};
  js["cat3"] = {{"asked", cat3.asked}, {"correct", cat3.correct}, {"accuracy", cat3_acc}};
  js["macro_avg"] = macro_avg;
  js["micro_avg"] = micro_avg;
  js["flags"] = flags;
  return js.dump(2);
}

std::string SentenceLevelReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(10) << "category" << std::right << std::setw(8) << "asked"
     << std::setw(9) << "correct" << std::setw(10) << "accuracy" << "\n";
  auto row = [&](const std::string& name, const Tally& t, double acc) {
    os << std::left << std::setw(10) << name << std::right << std::setw(8) << t.asked
       << std::setw(9) << t.correct << std::setw(10) << fmt(acc) << "\n";
  };
  row("cat1", cat1, cat1_acc);
  row("cat2", cat2, cat2_acc);
  row("cat3", cat3, cat3_acc);
  os << std::left << std::setw(10) << "macro" << std::right << std::setw(27) << fmt(macro_avg)
     << "\n";
  os << std::left << std::setw(10) << "micro" << std::right << std::setw(27) << fmt(micro_avg)
     << "\n";
  return os.str();
}

std::string DocumentLevelReport::to_json() const {
  auto cat = [](const PrF1& c) {
    return json{{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}};
  };
  json js;
  js["inputs"] = cat(inputs);
  js["outputs"] = cat(outputs);
  js["conversions"] = cat(conversions);
  js["moves"] = cat(moves);
  js["overall"] = cat(overall);
  return js.dump(2);
}

std::string DocumentLevelReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(13) << "category" << std::right << std::setw(10) << "precision"
     << std::setw(9) << "recall" << std::setw(9) << "f1" << "\n";
  auto row = [&](const std::string& name, const PrF1& c) {
    os << std::left << std::setw(13) << name << std::right << std::setw(10) << fmt(c.precision)
       << std::setw(9) << fmt(c.recall) << std::setw(9) << fmt(c.f1) << "\n";
  };
  row("inputs", inputs);
  row("outputs", outputs);
  row("conversions", conversions);
  row("moves", moves);
  row("overall", overall);
  return os.str();
}

std::string StoryReport::to_json() const {
  json js;
  js["pairs"] = pairs;
  js["accuracy"] = accuracy;
  js["consistency"] = consistency;
  js["verifiability"] = verifiability;
  json attrs = json::array();
  for (size_t b = 0; b < attribute_names.size(); ++b)
    attrs.push_back(
        {{"name", attribute_names[b]}, {"pre_f1", pre_f1[b]}, {"eff_f1", eff_f1[b]}});
  js["attributes"] = attrs;
  js["pre_f1_macro"] = pre_f1_macro;
  js["eff_f1_macro"] = eff_f1_macro;
  js["attr_f1_macro"] = attr_f1_macro;
  js["flags"] = flags;
  return js.dump(2);
}

std::string StoryReport::table() const {
  std::ostringstream os;
  os << "pairs: " << pairs << "\n";
  os << std::left << std::setw(15) << "accuracy" << fmt(accuracy) << "\n";
  os << std::left << std::setw(15) << "consistency" << fmt(consistency) << "\n";
  os << std::left << std::setw(15) << "verifiability" << fmt(verifiability) << "\n";
  os << std::left << std::setw(16) << "attribute" << std::right << std::setw(8) << "pre_f1"
     << std::setw(8) << "eff_f1" << "\n";
  for (size_t b = 0; b < attribute_names.size(); ++b)
    os << std::left << std::setw(16) << attribute_names[b] << std::right << std::setw(8)
       << fmt(pre_f1[b]) << std::setw(8) << fmt(eff_f1[b]) << "\n";
  os << std::left << std::setw(16) << "macro" << std::right << std::setw(8) << fmt(pre_f1_macro)
     << std::setw(8) << fmt(eff_f1_macro) << "\n";
  return os.str();
}

void save_story_predictions(const std::vector<StoryPairPrediction>& preds,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("E_OPEN", "cannot write " + path);
  for (const auto& pp : preds) {
    json js;
    js["pair_id"] = pp.pair_id;
    js["chosen"] = pp.chosen;
    js["conflict"] = {pp.conflict_c1, pp.conflict_c2};
    json stories = json::array();
    for (int s = 0; s < 2; ++s) {
      json ents = json::array();
      for (const auto& ent : pp.entities[s])
        ents.push_back({{"name", ent.name}, {"pre", ent.pre}, {"eff", ent.eff}});
      stories.push_back(ents);
    }
    js["attributes"] = stories;
    out << js.dump() << "\n";
  }
  if (!out) throw IoError("E_WRITE", "failed writing " + path);
}

std::vector<StoryPairPrediction> load_story_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("E_OPEN", "cannot open " + path);
  std::vector<StoryPairPrediction> preds;
  std::string text;
  size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    json js;
    try {
      js = json::parse(text);
    } catch (const json::exception& e) {
      line_error(path, line_no, e.what());
    }
    if (!js.is_object()) line_error(path, line_no, "prediction must be an object");
    check_keys(js, {"pair_id", "chosen", "conflict", "attributes"}, path, line_no);
    StoryPairPrediction pp;
    pp.pair_id = js.value("pair_id", "");
    if (pp.pair_id.empty()) line_error(path, line_no, "missing pair_id");
    pp.chosen = js.value("chosen", -1);
    if (pp.chosen != 0 && pp.chosen != 1) line_error(path, line_no, "chosen must be 0 or 1");
    if (!js.contains("conflict") || !js["conflict"].is_array() || js["conflict"].size() != 2)
      line_error(path, line_no, "conflict must be [c1, c2]");
    pp.conflict_c1 = js["conflict"][0].get<int>();
    pp.conflict_c2 = js["conflict"][1].get<int>();
    if (!js.contains("attributes") || !js["attributes"].is_array() ||
        js["attributes"].size() != 2)
      line_error(path, line_no, "attributes must hold both stories");
    for (int s = 0; s < 2; ++s) {
      for (const auto& ej : js["attributes"][s]) {
        if (!ej.is_object()) line_error(path, line_no, "entity must be an object");
        check_keys(ej, {"name", "pre", "eff"}, path, line_no);
        StoryEntityStates ent;
        ent.name = ej.value("name", "");
        if (ent.name.empty()) line_error(path, line_no, "missing entity name");
        try {
          ent.pre = ej.at("pre").get<std::vector<std::vector<int>>>();
          ent.eff = ej.at("eff").get<std::vector<std::vector<int>>>();
        } catch (const json::exception& e) {
          line_error(path, line_no, e.what());
        }
        if (ent.pre.size() != ent.eff.size())
          line_error(path, line_no, "pre/eff step counts differ for '" + ent.name + "'");
        pp.entities[s].push_back(std::move(ent));
      }
    }
    preds.push_back(std::move(pp));
  }
  return preds;
}

}  // namespace proctrack
