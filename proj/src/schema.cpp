// SPDX-License-Identifier: Apache-2.0
#include "proctrack/schema.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "proctrack/errors.hpp"

namespace proctrack {

namespace {

constexpr const char* kActionNames[kActionCount] = {"Create", "Exist", "Move",
                                                    "Destroy", "OutOfCreate", "OutOfDestroy"};

EntityState state_from_span(const std::optional<Span>& span) {
  if (!span) return EntityState::unknown();
  return EntityState::location(*span);
}

std::string step_str(size_t t) { return "step " + std::to_string(t); }

}  // namespace

const char* action_name(Action a) { return kActionNames[static_cast<int>(a)]; }

Action action_from_name(const std::string& name) {
  for (int i = 0; i < kActionCount; ++i)
    if (name == kActionNames[i]) return static_cast<Action>(i);
  // accept the evaluation-facing alias "NONE" nowhere: files must disambiguate
  throw ValidationError("E_ACTION_NAME", "unknown action name '" + name + "'");
}

bool is_none_action(Action a) { return a == Action::OutOfCreate || a == Action::OutOfDestroy; }

std::string fold_case(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool same_location_text(const std::string& a, const std::string& b) {
  return fold_case(a) == fold_case(b);
}

bool same_state(const EntityState& a, const EntityState& b) {
  if (a.tag != b.tag) return false;
  if (a.tag != StateTag::Location) return true;
  return same_location_text(a.span->text, b.span->text);
}

std::vector<Action> legal_successors(Action a) {
  switch (a) {
    case Action::OutOfCreate:
      return {Action::Create, Action::OutOfCreate};
    case Action::Create:
    case Action::Exist:
    case Action::Move:
      return {Action::Exist, Action::Move, Action::Destroy};
    case Action::Destroy:
      return {Action::OutOfDestroy};
    case Action::OutOfDestroy:
      return {Action::OutOfDestroy};
  }
  throw ValidationError("E_ACTION_NAME", "bad action value");
}

bool legal_first_action(Action a) { return a != Action::OutOfDestroy; }

std::vector<EntityState> derive_states(const std::vector<Action>& actions,
                                       const std::vector<std::optional<Span>>& spans) {
  const size_t n = actions.size();
  if (n == 0) throw ValidationError("E_LENGTH", "derive_states: empty action sequence");
  if (spans.size() != n + 1)
    throw ValidationError("E_LENGTH", "derive_states: need n+1 spans, got " +
                                          std::to_string(spans.size()) + " for n=" +
                                          std::to_string(n));
  if (!legal_first_action(actions[0]))
    throw ValidationError("E_FIRST_ACTION",
                          "derive_states: sequence cannot start with OutOfDestroy");
  for (size_t t = 1; t < n; ++t) {
    const auto legal = legal_successors(actions[t - 1]);
    const bool ok = std::find(legal.begin(), legal.end(), actions[t]) != legal.end() ||
                    (actions[t - 1] == Action::OutOfDestroy && actions[t] == Action::Create);
    if (!ok)
      throw ValidationError("E_ACTION_ADJACENCY",
                            "derive_states: illegal " + std::string(action_name(actions[t - 1])) +
                                " -> " + action_name(actions[t]) + " at " + step_str(t + 1));
  }

  std::vector<EntityState> states(n + 1);
  switch (actions[0]) {
    case Action::Create:
    case Action::OutOfCreate:
      states[0] = EntityState::nonexistence();
      break;
    default:
      states[0] = state_from_span(spans[0]);
  }
  for (size_t t = 1; t <= n; ++t) {
    switch (actions[t - 1]) {
      case Action::Create:
      case Action::Exist:
      case Action::Move:
        states[t] = state_from_span(spans[t]);
        break;
      case Action::Destroy:
      case Action::OutOfCreate:
      case Action::OutOfDestroy:
        states[t] = EntityState::nonexistence();
        break;
    }
  }
  return states;
}

std::vector<Action> derive_actions(const std::vector<EntityState>& states) {
  if (states.size() < 2)
    throw ValidationError("E_LENGTH", "derive_actions: need at least 2 states");
  for (size_t i = 0; i < states.size(); ++i) {
    const bool has_span = states[i].span.has_value();
    if (has_span != (states[i].tag == StateTag::Location))
      throw ValidationError("E_SPAN_TAG", "derive_actions: span/tag mismatch at state " +
                                              std::to_string(i));
  }
  std::vector<Action> actions;
  actions.reserve(states.size() - 1);
  bool existed = states[0].present();
  for (size_t t = 1; t < states.size(); ++t) {
    const EntityState& prev = states[t - 1];
    const EntityState& cur = states[t];
    if (!prev.present() && !cur.present()) {
      actions.push_back(existed ? Action::OutOfDestroy : Action::OutOfCreate);
    } else if (!prev.present() && cur.present()) {
      actions.push_back(Action::Create);
    } else if (prev.present() && !cur.present()) {
      actions.push_back(Action::Destroy);
    } else {
      actions.push_back(same_state(prev, cur) ? Action::Exist : Action::Move);
    }
    existed = existed || cur.present();
  }
  return actions;
}

std::vector<std::string> validate_timeline(const EntityTimeline& tl, const ValidateOptions& opt) {
  std::vector<std::string> warnings;
  const std::string who = "entity '" + tl.entity + "'";
  if (tl.actions.empty())
    throw ValidationError("E_LENGTH", who + ": timeline has no actions");
  if (tl.states.size() != tl.actions.size() + 1)
    throw ValidationError("E_LENGTH", who + ": " + std::to_string(tl.states.size()) +
                                          " states for " + std::to_string(tl.actions.size()) +
                                          " actions");
  for (size_t i = 0; i < tl.states.size(); ++i) {
    const bool has_span = tl.states[i].span.has_value();
    if (has_span != (tl.states[i].tag == StateTag::Location))
      throw ValidationError("E_SPAN_TAG", who + ": span/tag mismatch at state " + std::to_string(i));
  }
  if (!legal_first_action(tl.actions[0]))
    throw ValidationError("E_FIRST_ACTION", who + ": first action is OutOfDestroy");
  for (size_t t = 1; t < tl.actions.size(); ++t) {
    const Action u = tl.actions[t - 1], v = tl.actions[t];
    const auto legal = legal_successors(u);
    if (std::find(legal.begin(), legal.end(), v) != legal.end()) continue;
    if (u == Action::OutOfDestroy && v == Action::Create) {
      if (opt.reject_recreate)
        throw ValidationError("E_RECREATE", who + ": re-creation after destruction at " +
                                                step_str(t + 1));
      warnings.push_back(who + ": re-creation after destruction at " + step_str(t + 1));
      continue;
    }
    throw ValidationError("E_ACTION_ADJACENCY", who + ": illegal " +
                                                    std::string(action_name(u)) + " -> " +
                                                    action_name(v) + " at index " +
                                                    std::to_string(t));
  }
  const auto rederived = derive_actions(tl.states);
  for (size_t t = 0; t < rederived.size(); ++t)
    if (rederived[t] != tl.actions[t])
      throw ValidationError("E_STATE_ACTION_MISMATCH",
                            who + ": states imply " + action_name(rederived[t]) + " but action is " +
                                action_name(tl.actions[t]) + " at " + step_str(t + 1));
  return warnings;
}

std::vector<std::string> validate_example(const ProceduralExample& ex, const ValidateOptions& opt) {
  std::vector<std::string> warnings;
  if (ex.sentences.empty())
    throw ValidationError("E_LENGTH", "example '" + ex.para_id + "': no sentences");
  std::set<std::string> names;
  for (const auto& ent : ex.entities) {
    if (ent.name.empty())
      throw ValidationError("E_ENTITY_NAME", "example '" + ex.para_id + "': empty entity name");
    if (!names.insert(ent.name).second)
      throw ValidationError("E_ENTITY_NAME",
                            "example '" + ex.para_id + "': duplicate entity '" + ent.name + "'");
    if (!ent.annotated) {
      if (!ent.timeline.states.empty() || !ent.timeline.actions.empty())
        throw ValidationError("E_UNANNOTATED", "example '" + ex.para_id + "': unannotated entity '" +
                                                   ent.name + "' carries a timeline");
      continue;
    }
    if (ent.timeline.actions.size() != ex.sentences.size())
      throw ValidationError("E_LENGTH", "example '" + ex.para_id + "': entity '" + ent.name +
                                            "' has " + std::to_string(ent.timeline.actions.size()) +
                                            " actions for " + std::to_string(ex.sentences.size()) +
                                            " sentences");
    auto w = validate_timeline(ent.timeline, opt);
    for (auto& s : w) warnings.push_back("example '" + ex.para_id + "': " + s);
  }
  return warnings;
}

void validate_story_pair(const StoryPair& pair, const std::vector<AttributeDef>& attrs) {
  const std::string who = "pair '" + pair.pair_id + "'";
  const size_t n0 = pair.stories[0].sentences.size();
  const size_t n1 = pair.stories[1].sentences.size();
  if (n0 == 0 || n1 == 0) throw ValidationError("E_LENGTH", who + ": empty story");
  if (pair.plausible_index != 0 && pair.plausible_index != 1)
    throw ValidationError("E_PLAUSIBLE_INDEX", who + ": plausible index must be 0 or 1");
  if (n0 == n1) {
    int differing = 0;
    for (size_t i = 0; i < n0; ++i)
      if (pair.stories[0].sentences[i] != pair.stories[1].sentences[i]) ++differing;
    if (differing != 1)
      throw ValidationError("E_STORY_DIFF", who + ": stories differ in " +
                                                std::to_string(differing) +
                                                " sentences, expected exactly 1");
  } else {
    throw ValidationError("E_STORY_DIFF", who + ": stories have different lengths");
  }
  const int n_impl = static_cast<int>(pair.plausible_index == 0 ? n1 : n0);
  if (!(pair.conflict_c1 >= 1 && pair.conflict_c1 < pair.conflict_c2 &&
        pair.conflict_c2 <= n_impl))
    throw ValidationError("E_CONFLICT_RANGE",
                          who + ": conflict pair (" + std::to_string(pair.conflict_c1) + "," +
                              std::to_string(pair.conflict_c2) + ") invalid for n=" +
                              std::to_string(n_impl));
  const size_t B = attrs.size();
  for (int s = 0; s < 2; ++s) {
    for (const auto& ent : pair.stories[s].entities) {
      if (ent.pre.size() != pair.stories[s].sentences.size() || ent.eff.size() != ent.pre.size())
        throw ValidationError("E_LENGTH", who + ": entity '" + ent.name +
                                              "' state vectors do not cover every step");
      for (size_t t = 0; t < ent.pre.size(); ++t) {
        if (ent.pre[t].size() != B || ent.eff[t].size() != B)
          throw ValidationError("E_LENGTH", who + ": entity '" + ent.name + "' has " +
                                                std::to_string(ent.pre[t].size()) +
                                                " attribute values, expected " + std::to_string(B));
        for (size_t b = 0; b < B; ++b) {
          if (ent.pre[t][b] < 0 || ent.pre[t][b] >= attrs[b].labels ||
              ent.eff[t][b] < 0 || ent.eff[t][b] >= attrs[b].labels)
            throw ValidationError("E_LABEL_RANGE",
                                  who + ": entity '" + ent.name + "' attribute '" + attrs[b].name +
                                      "' value out of range at " + step_str(t + 1));
        }
      }
    }
  }
}

}  // namespace proctrack
