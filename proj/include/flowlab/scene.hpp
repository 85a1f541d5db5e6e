#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "flowlab/common.hpp"
#include "flowlab/io.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

// Tabletop workspace; matches the object position randomization ranges.
struct Workspace {
  static constexpr double kXLo = 0.2;
  static constexpr double kXHi = 0.4;
  static constexpr double kYLo = -0.15;
  static constexpr double kYHi = 0.15;
};

enum class Relation { kOn, kIn };

inline const char* relation_name(Relation r) { return r == Relation::kOn ? "on" : "in"; }

inline Relation relation_from_name(const std::string& s) {
  if (s == "on") return Relation::kOn;
  if (s == "in") return Relation::kIn;
  throw ConfigError("unknown relation: " + s);
}

struct Rect {
  double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
  double cx() const { return 0.5 * (x_lo + x_hi); }
  double cy() const { return 0.5 * (y_lo + y_hi); }
  double half_x() const { return 0.5 * (x_hi - x_lo); }
  double half_y() const { return 0.5 * (y_hi - y_lo); }
  double half_diagonal() const { return std::hypot(half_x(), half_y()); }
};

// ---------------------------------------------------------------------------
// Object vocabulary
// ---------------------------------------------------------------------------

struct ObjectClass {
  std::string name;
  double radius_lo, radius_hi;  // footprint radius (m)
  double height_lo, height_hi;  // (m)
  bool graspable;               // may play the manipulation target
  bool surface;                 // may be an ON destination
  bool container;               // may be an IN destination
};

inline const std::vector<ObjectClass>& object_class_pool() {
  static const std::vector<ObjectClass> pool = {
      {"apple", 0.018, 0.030, 0.035, 0.060, true, false, false},
      {"banana", 0.015, 0.025, 0.030, 0.040, true, false, false},
      {"orange", 0.020, 0.032, 0.040, 0.060, true, false, false},
      {"pear", 0.018, 0.030, 0.045, 0.070, true, false, false},
      {"lemon", 0.015, 0.025, 0.030, 0.050, true, false, false},
      {"strawberry", 0.010, 0.018, 0.020, 0.035, true, false, false},
      {"tomato", 0.018, 0.030, 0.035, 0.055, true, false, false},
      {"carrot", 0.012, 0.020, 0.020, 0.030, true, false, false},
      {"cucumber", 0.014, 0.022, 0.025, 0.035, true, false, false},
      {"broccoli", 0.020, 0.032, 0.040, 0.060, true, false, false},
      {"mushroom", 0.012, 0.022, 0.025, 0.045, true, false, false},
      {"potato", 0.016, 0.028, 0.030, 0.050, true, false, false},
      {"cup", 0.020, 0.045, 0.060, 0.090, true, false, true},
      {"mug", 0.022, 0.042, 0.070, 0.100, true, false, true},
      {"teacup", 0.020, 0.035, 0.045, 0.065, true, false, true},
      {"teapot", 0.030, 0.052, 0.090, 0.130, true, false, false},
      {"water bottle", 0.022, 0.050, 0.120, 0.200, true, false, false},
      {"spoon", 0.010, 0.016, 0.010, 0.015, true, false, false},
      {"fork", 0.010, 0.016, 0.010, 0.015, true, false, false},
      {"knife", 0.010, 0.016, 0.010, 0.015, true, false, false},
      {"pen", 0.008, 0.014, 0.010, 0.015, true, false, false},
      {"marker", 0.009, 0.015, 0.012, 0.018, true, false, false},
      {"eraser", 0.010, 0.020, 0.012, 0.020, true, false, false},
      {"sponge", 0.015, 0.028, 0.020, 0.035, true, false, false},
      {"tennis ball", 0.018, 0.024, 0.036, 0.048, true, false, false},
      {"plate", 0.040, 0.055, 0.010, 0.020, false, true, false},
      {"saucer", 0.030, 0.045, 0.008, 0.015, false, true, false},
      {"tray", 0.045, 0.055, 0.010, 0.020, false, true, false},
      {"napkin", 0.035, 0.050, 0.002, 0.005, false, true, false},
      {"cutting board", 0.040, 0.055, 0.008, 0.015, false, true, false},
      {"notebook", 0.038, 0.050, 0.005, 0.012, false, true, false},
      {"book", 0.038, 0.050, 0.015, 0.030, false, true, false},
      {"mouse pad", 0.040, 0.055, 0.002, 0.004, false, true, false},
      {"bowl", 0.032, 0.048, 0.035, 0.060, false, false, true},
      {"basket", 0.040, 0.055, 0.050, 0.090, false, false, true},
      {"pot", 0.038, 0.052, 0.060, 0.100, false, false, true},
      {"saucepan", 0.036, 0.050, 0.050, 0.080, false, false, true},
      {"jar", 0.025, 0.040, 0.060, 0.110, false, false, true},
      {"round container", 0.030, 0.048, 0.040, 0.080, false, false, true},
      {"pen holder", 0.020, 0.035, 0.070, 0.110, false, false, true},
      {"colander", 0.036, 0.050, 0.040, 0.070, false, false, true},
      {"box", 0.035, 0.052, 0.040, 0.090, false, false, true},
      {"bin", 0.038, 0.055, 0.060, 0.110, false, false, true},
  };
  return pool;
}

inline const std::vector<std::string>& adjective_pool() {
  static const std::vector<std::string> pool = {
      "red", "green", "blue", "yellow", "white", "black", "purple", "pink", "wooden", "metal"};
  return pool;
}

inline const ObjectClass& find_object_class(const std::string& base_class) {
  for (const auto& c : object_class_pool()) {
    if (c.name == base_class) return c;
  }
  throw ConfigError("unknown object class: " + base_class);
}

// Strips a leading adjective from a noun phrase, when present.
inline std::string base_class_of_phrase(const std::string& phrase) {
  for (const auto& adj : adjective_pool()) {
    if (phrase.size() > adj.size() + 1 && phrase.compare(0, adj.size(), adj) == 0 &&
        phrase[adj.size()] == ' ') {
      return phrase.substr(adj.size() + 1);
    }
  }
  return phrase;
}

// ---------------------------------------------------------------------------
// Task grammar
// ---------------------------------------------------------------------------

// Symbolic layout: manipulation target A, destination B, their goal relation,
// and the instruction that produced them. Distractors are sampled later by
// design_scene.
struct SceneGraph {
  std::string target_phrase;
  std::string destination_phrase;
  Relation relation = Relation::kOn;
  std::string instruction_text;
};

// Grammar: "put the [adjective]? NOUN (on|in) the [adjective]? NOUN",
// case-insensitive, optional trailing period. Noun phrases may be multiword
// ("pen holder").
inline SceneGraph parse_task(const std::string& original) {
  std::string text = original;
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  while (!text.empty() && (text.back() == ' ' || text.back() == '.')) text.pop_back();

  const std::string prefix = "put the ";
  if (text.compare(0, prefix.size(), prefix) != 0) {
    std::size_t at = 0;
    while (at < text.size() && at < prefix.size() && text[at] == prefix[at]) ++at;
    throw TaskParseError("expected instruction to start with \"put the\"", at);
  }
  const std::size_t body_at = prefix.size();
  const std::size_t on_at = text.find(" on the ", body_at);
  const std::size_t in_at = text.find(" in the ", body_at);
  if (on_at == std::string::npos && in_at == std::string::npos) {
    throw TaskParseError("expected \"on the\" or \"in the\"", text.size());
  }
  const std::size_t sep_at = std::min(on_at == std::string::npos ? text.size() : on_at,
                                      in_at == std::string::npos ? text.size() : in_at);
  SceneGraph graph;
  graph.relation = (sep_at == on_at) ? Relation::kOn : Relation::kIn;
  graph.target_phrase = text.substr(body_at, sep_at - body_at);
  graph.destination_phrase = text.substr(sep_at + 8);
  if (graph.target_phrase.empty()) throw TaskParseError("empty target noun phrase", body_at);
  if (graph.destination_phrase.empty()) {
    throw TaskParseError("empty destination noun phrase", sep_at + 8);
  }
  graph.instruction_text = text;
  return graph;
}

inline std::string render_instruction(const SceneGraph& graph) {
  return "put the " + graph.target_phrase +
         (graph.relation == Relation::kOn ? " on the " : " in the ") + graph.destination_phrase;
}

// Draws an instruction from the template grammar: a graspable target, a
// destination matching the relation, and optional color/material adjectives.
inline std::string sample_instruction(Rng& rng) {
  const auto& pool = object_class_pool();
  std::vector<const ObjectClass*> graspable, surfaces, containers;
  for (const auto& c : pool) {
    if (c.graspable) graspable.push_back(&c);
    if (c.surface) surfaces.push_back(&c);
    if (c.container) containers.push_back(&c);
  }
  const Relation relation = rng.uniform() < 0.5 ? Relation::kOn : Relation::kIn;
  const auto& dest_pool = relation == Relation::kOn ? surfaces : containers;
  const ObjectClass* target = graspable[rng.uniform_int(static_cast<int>(graspable.size()))];
  const ObjectClass* dest = dest_pool[rng.uniform_int(static_cast<int>(dest_pool.size()))];

  const auto maybe_adjective = [&](const std::string& noun) {
    if (rng.uniform() < 0.35) {
      const auto& adjs = adjective_pool();
      return adjs[rng.uniform_int(static_cast<int>(adjs.size()))] + " " + noun;
    }
    return noun;
  };
  SceneGraph graph;
  graph.target_phrase = maybe_adjective(target->name);
  graph.destination_phrase = maybe_adjective(dest->name);
  graph.relation = relation;
  return render_instruction(graph);
}

// ---------------------------------------------------------------------------
// Scene specs
// ---------------------------------------------------------------------------

struct SceneObjectSpec {
  std::string phrase;      // full noun phrase; keys the per-scene descriptor
  std::string base_class;  // vocabulary entry
  Eigen::VectorXd descriptor;
  double footprint_radius = 0.0;
  double height = 0.0;
  Rect region;  // placement region for the object center
};

struct SceneSpec {
  int scene_id = -1;
  std::string instruction_text;
  Relation relation = Relation::kOn;
  int target_index = 0;
  int destination_index = 1;
  std::vector<SceneObjectSpec> objects;  // [0] = A, [1] = B, then distractors
  Eigen::VectorXd appearance_bias;       // scene-level visual bias, 4 entries

  const SceneObjectSpec& target() const { return objects[target_index]; }
  const SceneObjectSpec& destination() const { return objects[destination_index]; }

  Eigen::VectorXd instruction_embedding() const {
    const auto& a = objects[target_index].descriptor;
    const auto& b = objects[destination_index].descriptor;
    Eigen::VectorXd e(a.size() + b.size());
    e << a, b;
    return e;
  }
};

struct SceneDesignConfig {
  int descriptor_dim = 8;
  int max_distractors = 4;
  double region_half_lo = 0.010;
  double region_half_hi = 0.020;
};

inline Eigen::VectorXd unit_descriptor(std::uint64_t seed, int dim) {
  Rng rng(seed);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  const double n = v.norm();
  return n > 0 ? Eigen::VectorXd(v / n) : Eigen::VectorXd::Unit(dim, 0);
}

// Instantiates a scene graph into numbers: distractor classes, sizes from
// class ranges, per-(phrase, scene) unit descriptors, placement regions
// inside the workspace, and the scene appearance bias. Deterministic in
// (graph, seed); validity is QA's job.
inline SceneSpec design_scene(const SceneGraph& graph, std::uint64_t seed,
                              const SceneDesignConfig& config = {}) {
  Rng rng(seed);
  const std::uint64_t descriptor_space = rng.derive("descriptors").seed();

  SceneSpec spec;
  spec.instruction_text = graph.instruction_text.empty() ? render_instruction(graph)
                                                         : graph.instruction_text;
  spec.relation = graph.relation;

  std::vector<std::string> phrases = {graph.target_phrase, graph.destination_phrase};
  const int n_distractors = rng.uniform_int(config.max_distractors + 1);
  const auto& pool = object_class_pool();
  for (int i = 0; i < n_distractors; ++i) {
    const ObjectClass& cls = pool[rng.uniform_int(static_cast<int>(pool.size()))];
    std::string phrase = cls.name;
    if (rng.uniform() < 0.35) {
      const auto& adjs = adjective_pool();
      phrase = adjs[rng.uniform_int(static_cast<int>(adjs.size()))] + " " + phrase;
    }
    phrases.push_back(phrase);
  }

  for (const auto& phrase : phrases) {
    const ObjectClass& cls = find_object_class(base_class_of_phrase(phrase));
    SceneObjectSpec obj;
    obj.phrase = phrase;
    obj.base_class = cls.name;
    obj.descriptor = unit_descriptor(mix_seed(descriptor_space, hash_tag(phrase)),
                                     config.descriptor_dim);
    obj.footprint_radius = rng.uniform(cls.radius_lo, cls.radius_hi);
    obj.height = rng.uniform(cls.height_lo, cls.height_hi);
    const double hx = rng.uniform(config.region_half_lo, config.region_half_hi);
    const double hy = rng.uniform(config.region_half_lo, config.region_half_hi);
    const double margin_x = hx + obj.footprint_radius;
    const double margin_y = hy + obj.footprint_radius;
    const double cx = rng.uniform(Workspace::kXLo + margin_x, Workspace::kXHi - margin_x);
    const double cy = rng.uniform(Workspace::kYLo + margin_y, Workspace::kYHi - margin_y);
    obj.region = Rect{cx - hx, cx + hx, cy - hy, cy + hy};
    spec.objects.push_back(std::move(obj));
  }

  spec.appearance_bias = Eigen::VectorXd(4);
  for (int i = 0; i < 4; ++i) spec.appearance_bias(i) = rng.uniform();
  return spec;
}

// ---------------------------------------------------------------------------
// Quality assurance
// ---------------------------------------------------------------------------

struct QaRules {
  double gripper_max_width = 0.074;  // largest graspable target diameter
  // The auto-scale repair handles modest size mismatches; anything needing
  // more than a 2x scale-down is rejected as implausible.
  double min_autoscale = 0.5;
};

struct CheckResult {
  bool pass = true;
  std::string message;
};

struct QaReport {
  bool accept = false;
  CheckResult bounds;
  CheckResult overlap;
  CheckResult graspability;
  CheckResult reference_resolution;
  int attempts_used = 1;

  std::string failed_checker() const {
    if (!bounds.pass) return "bounds";
    if (!overlap.pass) return "overlap";
    if (!graspability.pass) return "graspability";
    if (!reference_resolution.pass) return "reference_resolution";
    return "";
  }
};

// Runs the four checkers in order (bounds, overlap, graspability with one
// auto-scale repair, reference resolution) and returns the report plus the
// possibly-repaired spec. Rejection is a verdict, not an error.
inline std::pair<QaReport, SceneSpec> qa_check(const SceneSpec& input, const QaRules& rules = {}) {
  QaReport report;
  SceneSpec spec = input;

  for (std::size_t i = 0; i < spec.objects.size() && report.bounds.pass; ++i) {
    const auto& o = spec.objects[i];
    const double fp = o.footprint_radius;
    if (o.region.x_lo - fp < Workspace::kXLo - 1e-12 ||
        o.region.x_hi + fp > Workspace::kXHi + 1e-12 ||
        o.region.y_lo - fp < Workspace::kYLo - 1e-12 ||
        o.region.y_hi + fp > Workspace::kYHi + 1e-12) {
      report.bounds = {false, "object " + std::to_string(i) + " (" + o.phrase +
                                  ") can leave the workspace"};
    }
  }

  for (std::size_t i = 0; i < spec.objects.size() && report.overlap.pass; ++i) {
    for (std::size_t j = i + 1; j < spec.objects.size() && report.overlap.pass; ++j) {
      const auto& a = spec.objects[i];
      const auto& b = spec.objects[j];
      const double ra = a.footprint_radius + a.region.half_diagonal();
      const double rb = b.footprint_radius + b.region.half_diagonal();
      const double d = std::hypot(a.region.cx() - b.region.cx(), a.region.cy() - b.region.cy());
      if (d <= ra + rb) {
        report.overlap = {false, "objects " + std::to_string(i) + " and " + std::to_string(j) +
                                     " can collide"};
      }
    }
  }

  {
    auto& target = spec.objects[spec.target_index];
    const double diameter = 2.0 * target.footprint_radius;
    if (diameter > rules.gripper_max_width) {
      const double scale = rules.gripper_max_width / diameter;
      if (scale >= rules.min_autoscale) {
        target.footprint_radius *= scale;
        target.height *= scale;
        report.graspability = {true, "auto-scaled target by " + std::to_string(scale)};
      } else {
        report.graspability = {false, "target diameter " + std::to_string(diameter) +
                                          " m is beyond the auto-scale repair"};
      }
    }
  }

  {
    const Eigen::VectorXd embedding = spec.instruction_embedding();
    const int d = static_cast<int>(spec.objects[0].descriptor.size());
    const auto unique_nearest = [&](const Eigen::VectorXd& query, int expected) {
      int best = -1;
      double best_sim = -2.0, second = -2.0;
      for (std::size_t i = 0; i < spec.objects.size(); ++i) {
        const double sim = query.dot(spec.objects[i].descriptor);
        if (sim > best_sim) {
          second = best_sim;
          best_sim = sim;
          best = static_cast<int>(i);
        } else {
          second = std::max(second, sim);
        }
      }
      return best == expected && best_sim > second + 1e-9;
    };
    if (!unique_nearest(embedding.segment(0, d), spec.target_index)) {
      report.reference_resolution = {false, "target referent is ambiguous"};
    } else if (!unique_nearest(embedding.segment(d, d), spec.destination_index)) {
      report.reference_resolution = {false, "destination referent is ambiguous"};
    }
  }

  report.accept = report.bounds.pass && report.overlap.pass && report.graspability.pass &&
                  report.reference_resolution.pass;
  return {report, spec};
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

struct CorpusMetrics {
  int total_attempts = 0;
  double avg_attempts = 0.0;
  // Stage-wise single-attempt pass rates over all QA attempts.
  double bounds_pass_rate = 0.0;
  double overlap_pass_rate = 0.0;
  double graspability_pass_rate = 0.0;
  double reference_pass_rate = 0.0;
};

struct SceneCorpus {
  int version = 1;
  std::uint64_t seed = 0;
  CorpusMetrics metrics;
  std::vector<SceneSpec> scenes;  // canonical ordering: by scene index
};

inline constexpr int kMaxSceneAttempts = 50;

// Repeats (sample instruction -> parse -> design -> QA) with a fresh design
// seed per attempt until n scenes are accepted.
inline SceneCorpus generate_corpus(int n, std::uint64_t seed,
                                   const SceneDesignConfig& design = {},
                                   const QaRules& rules = {}) {
  if (n < 1) throw ConfigError("generate_corpus: n must be >= 1");
  SceneCorpus corpus;
  corpus.seed = seed;
  int bounds_pass = 0, overlap_pass = 0, grasp_pass = 0, reference_pass = 0;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t scene_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    bool accepted = false;
    for (int attempt = 1; attempt <= kMaxSceneAttempts; ++attempt) {
      const std::uint64_t attempt_seed = mix_seed(scene_seed, static_cast<std::uint64_t>(attempt));
      Rng instruction_rng(mix_seed(attempt_seed, 1));
      const std::string text = sample_instruction(instruction_rng);
      const SceneGraph graph = parse_task(text);
      const SceneSpec candidate = design_scene(graph, mix_seed(attempt_seed, 2), design);
      auto [report, repaired] = qa_check(candidate, rules);
      corpus.metrics.total_attempts += 1;
      bounds_pass += report.bounds.pass ? 1 : 0;
      overlap_pass += report.overlap.pass ? 1 : 0;
      grasp_pass += report.graspability.pass ? 1 : 0;
      reference_pass += report.reference_resolution.pass ? 1 : 0;
      if (report.accept) {
        repaired.scene_id = i;
        corpus.scenes.push_back(std::move(repaired));
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw WorldError("scene generation stalled: scene " + std::to_string(i) + " exceeded " +
                       std::to_string(kMaxSceneAttempts) + " attempts");
    }
  }
  const double attempts = corpus.metrics.total_attempts;
  corpus.metrics.avg_attempts = attempts / n;
  corpus.metrics.bounds_pass_rate = bounds_pass / attempts;
  corpus.metrics.overlap_pass_rate = overlap_pass / attempts;
  corpus.metrics.graspability_pass_rate = grasp_pass / attempts;
  corpus.metrics.reference_pass_rate = reference_pass / attempts;
  return corpus;
}

// ---------------------------------------------------------------------------
// Subsets for the diversity ablation
// ---------------------------------------------------------------------------

struct SubsetSplit {
  std::vector<int> subset;      // sampled scene ids, fixed internal ordering
  std::vector<int> complement;  // corpus order
};

inline std::vector<SubsetSplit> sample_subsets(const SceneCorpus& corpus, int subset_size,
                                               int count, std::uint64_t seed) {
  const int n = static_cast<int>(corpus.scenes.size());
  if (subset_size > n) throw ConfigError("sample_subsets: subset larger than corpus");
  std::vector<SubsetSplit> splits;
  for (int j = 0; j < count; ++j) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(j)));
    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) ids[i] = i;
    // Partial Fisher-Yates: the first subset_size draws are the subset, in
    // draw order (prefixes of this ordering form the N-scene training sets).
    for (int i = 0; i < subset_size; ++i) {
      const int pick = i + rng.uniform_int(n - i);
      std::swap(ids[i], ids[pick]);
    }
    SubsetSplit split;
    split.subset.assign(ids.begin(), ids.begin() + subset_size);
    split.complement.assign(ids.begin() + subset_size, ids.end());
    std::sort(split.complement.begin(), split.complement.end());
    splits.push_back(std::move(split));
  }
  return splits;
}

// ---------------------------------------------------------------------------
// Corpus file format (versioned JSON document)
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json scene_to_json(const SceneSpec& spec) {
  nlohmann::ordered_json j;
  j["scene_id"] = spec.scene_id;
  j["instruction"] = spec.instruction_text;
  j["relation"] = relation_name(spec.relation);
  j["target_index"] = spec.target_index;
  j["destination_index"] = spec.destination_index;
  j["appearance_bias"] = std::vector<double>(spec.appearance_bias.data(),
                                             spec.appearance_bias.data() + spec.appearance_bias.size());
  j["objects"] = nlohmann::ordered_json::array();
  for (const auto& o : spec.objects) {
    nlohmann::ordered_json jo;
    jo["phrase"] = o.phrase;
    jo["base_class"] = o.base_class;
    jo["descriptor"] =
        std::vector<double>(o.descriptor.data(), o.descriptor.data() + o.descriptor.size());
    jo["footprint_radius"] = o.footprint_radius;
    jo["height"] = o.height;
    jo["region"] = {{"x_lo", o.region.x_lo},
                    {"x_hi", o.region.x_hi},
                    {"y_lo", o.region.y_lo},
                    {"y_hi", o.region.y_hi}};
    j["objects"].push_back(std::move(jo));
  }
  return j;
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec spec;
  spec.scene_id = j.at("scene_id").get<int>();
  spec.instruction_text = j.at("instruction").get<std::string>();
  spec.relation = relation_from_name(j.at("relation").get<std::string>());
  spec.target_index = j.at("target_index").get<int>();
  spec.destination_index = j.at("destination_index").get<int>();
  const auto bias = j.at("appearance_bias").get<std::vector<double>>();
  spec.appearance_bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), bias.size());
  for (const auto& jo : j.at("objects")) {
    SceneObjectSpec o;
    o.phrase = jo.at("phrase").get<std::string>();
    o.base_class = jo.at("base_class").get<std::string>();
    const auto d = jo.at("descriptor").get<std::vector<double>>();
    o.descriptor = Eigen::Map<const Eigen::VectorXd>(d.data(), d.size());
    o.footprint_radius = jo.at("footprint_radius").get<double>();
    o.height = jo.at("height").get<double>();
    o.region = Rect{jo.at("region").at("x_lo").get<double>(),
                    jo.at("region").at("x_hi").get<double>(),
                    jo.at("region").at("y_lo").get<double>(),
                    jo.at("region").at("y_hi").get<double>()};
    spec.objects.push_back(std::move(o));
  }
  return spec;
}

inline std::string corpus_to_string(const SceneCorpus& corpus) {
  nlohmann::ordered_json j;
  j["format"] = "flowlab-scene-corpus";
  j["version"] = corpus.version;
  j["seed"] = corpus.seed;
  j["metrics"] = {{"total_attempts", corpus.metrics.total_attempts},
                  {"avg_attempts", corpus.metrics.avg_attempts},
                  {"pass_rates",
                   {{"bounds", corpus.metrics.bounds_pass_rate},
                    {"overlap", corpus.metrics.overlap_pass_rate},
                    {"graspability", corpus.metrics.graspability_pass_rate},
                    {"reference_resolution", corpus.metrics.reference_pass_rate}}}};
  j["scenes"] = nlohmann::ordered_json::array();
  for (const auto& s : corpus.scenes) j["scenes"].push_back(scene_to_json(s));
  return j.dump(2) + "\n";
}

inline void save_corpus(const SceneCorpus& corpus, const std::string& path) {
  atomic_write_file(path, corpus_to_string(corpus));
}

inline SceneCorpus load_corpus(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("corpus " + path + ": " + e.what());
  }
  if (j.value("format", "") != "flowlab-scene-corpus") {
    throw IoError("corpus " + path + ": unrecognized format");
  }
  SceneCorpus corpus;
  corpus.version = j.at("version").get<int>();
  corpus.seed = j.at("seed").get<std::uint64_t>();
  corpus.metrics.total_attempts = j.at("metrics").at("total_attempts").get<int>();
  corpus.metrics.avg_attempts = j.at("metrics").at("avg_attempts").get<double>();
  const auto& rates = j.at("metrics").at("pass_rates");
  corpus.metrics.bounds_pass_rate = rates.at("bounds").get<double>();
  corpus.metrics.overlap_pass_rate = rates.at("overlap").get<double>();
  corpus.metrics.graspability_pass_rate = rates.at("graspability").get<double>();
  corpus.metrics.reference_pass_rate = rates.at("reference_resolution").get<double>();
  for (const auto& js : j.at("scenes")) corpus.scenes.push_back(scene_from_json(js));
  return corpus;
}

}  // namespace flowlab
