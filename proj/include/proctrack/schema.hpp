// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace proctrack {

// Entity actions. Index order is load-bearing: CRF tie-breaks prefer the
// lower index, and transition matrices are laid out in this order.
enum class Action : int {
  Create = 0,
  Exist = 1,
  Move = 2,
  Destroy = 3,
  OutOfCreate = 4,   // not yet created; reads as NONE at evaluation time
  OutOfDestroy = 5,  // gone after destruction; reads as NONE at evaluation time
};
inline constexpr int kActionCount = 6;

const char* action_name(Action a);
Action action_from_name(const std::string& name);
// OutOfCreate and OutOfDestroy both surface as "no action" in evaluation.
bool is_none_action(Action a);

// Character-offset span into a paragraph plus its surface text.
struct Span {
  int begin = -1;
  int end = -1;  // half-open
  std::string text;
};

std::string fold_case(const std::string& s);
bool same_location_text(const std::string& a, const std::string& b);

enum class StateTag { NonExistence, UnknownLocation, Location };

struct EntityState {
  StateTag tag = StateTag::NonExistence;
  std::optional<Span> span;  // present iff tag == Location

  static EntityState nonexistence() { return {StateTag::NonExistence, std::nullopt}; }
  static EntityState unknown() { return {StateTag::UnknownLocation, std::nullopt}; }
  static EntityState location(Span s) { return {StateTag::Location, std::move(s)}; }

  bool present() const { return tag != StateTag::NonExistence; }
};

// Same state up to case-folded location text (offsets ignored).
bool same_state(const EntityState& a, const EntityState& b);

struct EntityTimeline {
  std::string entity;
  std::vector<EntityState> states;  // n+1: states[t-1] -> step t -> states[t]
  std::vector<Action> actions;      // n
};

struct TrackedEntity {
  std::string name;
  EntityTimeline timeline;  // empty when !annotated
  bool annotated = true;
  bool pseudo = false;  // timeline came from a model, not a human
};

struct ProceduralExample {
  std::string para_id;
  std::vector<std::string> sentences;
  std::vector<TrackedEntity> entities;

  int n_steps() const { return static_cast<int>(sentences.size()); }
};

// ---- story task ----

struct AttributeDef {
  std::string name;
  int labels = 0;  // label ids 0..labels-1; 0 is the default/irrelevant label
};

struct StoryEntityStates {
  std::string name;
  // [step][attribute]: precondition and effect labels per sentence, steps 1..n
  std::vector<std::vector<int>> pre;
  std::vector<std::vector<int>> eff;
};

struct Story {
  std::vector<std::string> sentences;
  std::vector<StoryEntityStates> entities;
};

struct StoryPair {
  std::string pair_id;
  std::array<Story, 2> stories;
  int plausible_index = 0;  // which of the two stories is plausible
  int conflict_c1 = 0;      // 1-based sentence indices in the implausible story
  int conflict_c2 = 0;
};

// ---- action algebra ----

// Hard commonsense adjacency used by validators and test oracles. The trained
// transition prior is data-estimated and may be stricter; re-creation
// (OutOfDestroy -> Create) is deliberately absent here but representable in
// timelines (validators warn by default).
std::vector<Action> legal_successors(Action a);
bool legal_first_action(Action a);  // everything except OutOfDestroy

// Builds the state sequence implied by n actions plus the n+1 decoded spans
// (nullopt = the no-location decode, which maps to UnknownLocation while the
// entity exists). Throws ValidationError naming the step on illegal adjacency.
std::vector<EntityState> derive_states(const std::vector<Action>& actions,
                                       const std::vector<std::optional<Span>>& spans);

// Inverse of derive_states modulo span surface strings; total over well-formed
// state sequences (span present iff Location).
std::vector<Action> derive_actions(const std::vector<EntityState>& states);

struct ValidateOptions {
  bool reject_recreate = false;  // OutOfDestroy -> Create: warn (default) or reject
};

// Throws ValidationError on broken invariants; returns warnings (e.g.,
// re-creation) otherwise.
std::vector<std::string> validate_timeline(const EntityTimeline& tl,
                                           const ValidateOptions& opt = {});
std::vector<std::string> validate_example(const ProceduralExample& ex,
                                          const ValidateOptions& opt = {});
void validate_story_pair(const StoryPair& pair, const std::vector<AttributeDef>& attrs);

}  // namespace proctrack
