#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "grpl/common.hpp"
#include "grpl/hash.hpp"
#include "grpl/rng.hpp"
#include "grpl/textcodec.hpp"

namespace grpl {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Micro-world palette
// ---------------------------------------------------------------------------
//
// Scenes live on a fixed rail of 8 slots. Reference scenes draw from the
// normal kinds plus an optional plug/jack pair occupying adjacent slots (the
// "link"). Alien kinds appear only through existence anomalies.

inline constexpr int kNumSlots = 8;

inline const std::vector<std::string>& normal_kinds() {
    static const std::vector<std::string> v = {"pin", "screw", "clip", "cap"};
    return v;
}
inline const std::string& plug_kind() {
    static const std::string s = "plug";
    return s;
}
inline const std::string& jack_kind() {
    static const std::string s = "jack";
    return s;
}
inline const std::vector<std::string>& alien_kinds() {
    static const std::vector<std::string> v = {"bolt", "washer"};
    return v;
}
inline const std::vector<std::string>& colors() {
    static const std::vector<std::string> v = {"red", "green", "blue", "yellow"};
    return v;
}

// Tokens used by prompts and gold traces beyond kinds and colors: slot/count
// digits and the trace vocabulary.
inline std::vector<std::string> default_scene_alphabet() {
    std::vector<std::string> a;
    for (const auto& k : normal_kinds()) a.push_back(k);
    a.push_back(plug_kind());
    a.push_back(jack_kind());
    for (const auto& k : alien_kinds()) a.push_back(k);
    for (const auto& c : colors()) a.push_back(c);
    for (int d = 0; d <= kNumSlots; ++d) a.push_back(std::to_string(d));
    for (const char* w : {"same", "differs", "count", "color", "kind", "slot", "link", "mixed"}) {
        a.push_back(w);
    }
    return a;
}

// Kept verbatim from the task formulation; the token stream the policy sees
// encodes it as the REF/QRY/SEP structure around the two scene descriptions.
inline const std::string kUnifiedPromptText =
    "Can you find any anomaly in the query image compared to the reference?";

// ---------------------------------------------------------------------------
// Scenes and sample pairs
// ---------------------------------------------------------------------------

struct SceneObject {
    std::string kind;
    std::string color;
    int slot = 0;

    bool operator==(const SceneObject&) const = default;
};

struct Scene {
    std::vector<SceneObject> objects;  // canonical form: ascending slot order

    bool operator==(const Scene&) const = default;

    void canonicalize() {
        std::sort(objects.begin(), objects.end(),
                  [](const SceneObject& a, const SceneObject& b) { return a.slot < b.slot; });
    }

    const SceneObject* at_slot(int slot) const {
        for (const auto& o : objects) {
            if (o.slot == slot) return &o;
        }
        return nullptr;
    }

    std::vector<int> empty_slots() const {
        std::vector<int> free;
        for (int s = 0; s < kNumSlots; ++s) {
            if (!at_slot(s)) free.push_back(s);
        }
        return free;
    }

    void validate() const {
        if (objects.empty() || objects.size() > kNumSlots) {
            throw ValidationError("scene must hold between 1 and 8 objects");
        }
        std::set<int> seen;
        for (const auto& o : objects) {
            if (o.slot < 0 || o.slot >= kNumSlots) {
                throw ValidationError("object slot out of range: " + std::to_string(o.slot));
            }
            if (!seen.insert(o.slot).second) {
                throw ValidationError("two objects share slot " + std::to_string(o.slot));
            }
        }
    }
};

enum class Category { number, color, existence, position, functional };

inline const std::vector<Category>& all_categories() {
    static const std::vector<Category> v = {Category::number, Category::color,
                                            Category::existence, Category::position,
                                            Category::functional};
    return v;
}

inline const char* to_string(Category c) {
    switch (c) {
        case Category::number: return "number";
        case Category::color: return "color";
        case Category::existence: return "existence";
        case Category::position: return "position";
        case Category::functional: return "functional";
    }
    return "number";
}

inline Category category_from_string(const std::string& s) {
    for (Category c : all_categories()) {
        if (s == to_string(c)) return c;
    }
    throw ValidationError("unknown anomaly category: \"" + s + "\"");
}

struct SamplePair {
    std::string id;
    Category category = Category::number;
    Scene reference;
    Scene query;
    bool label = false;  // true = anomalous
    std::optional<std::string> gold_trace;

    bool operator==(const SamplePair&) const = default;
};

enum class Difficulty { easy, full };

inline const char* to_string(Difficulty d) { return d == Difficulty::easy ? "easy" : "full"; }

inline Difficulty difficulty_from_string(const std::string& s) {
    if (s == "easy") return Difficulty::easy;
    if (s == "full") return Difficulty::full;
    throw ValidationError("unknown difficulty: \"" + s + "\" (expected easy or full)");
}

// ---------------------------------------------------------------------------
// Link integrity
// ---------------------------------------------------------------------------

inline bool is_link_kind(const std::string& kind) {
    return kind == plug_kind() || kind == jack_kind();
}

// Every plug must have an adjacent jack and vice versa.
inline bool link_ok(const Scene& scene) {
    for (const auto& o : scene.objects) {
        if (!is_link_kind(o.kind)) continue;
        const std::string& partner = o.kind == plug_kind() ? jack_kind() : plug_kind();
        bool attached = false;
        for (int d : {-1, 1}) {
            const SceneObject* n = scene.at_slot(o.slot + d);
            if (n && n->kind == partner) attached = true;
        }
        if (!attached) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int> draw_slots(Rng& rng, int n, const std::vector<int>& from) {
    std::vector<int> pool = from;
    rng.shuffle(pool);
    pool.resize(static_cast<size_t>(n));
    std::sort(pool.begin(), pool.end());
    return pool;
}

inline std::vector<int> all_slots() {
    std::vector<int> v(kNumSlots);
    for (int i = 0; i < kNumSlots; ++i) v[i] = i;
    return v;
}

}  // namespace detail

inline Scene gen_reference(uint64_t rng_seed, Difficulty difficulty) {
    Rng rng(derive_seed(rng_seed, 0x5ce11e));
    Scene scene;
    if (difficulty == Difficulty::easy) {
        int n = 2 + static_cast<int>(rng.below(3));  // 2..4 objects
        const std::string kind = rng.pick(normal_kinds());
        const std::string color = rng.pick(colors());
        for (int slot : detail::draw_slots(rng, n, detail::all_slots())) {
            scene.objects.push_back({kind, color, slot});
        }
        return scene;
    }

    int n = 2 + static_cast<int>(rng.below(5));  // 2..6 objects
    std::vector<int> free = detail::all_slots();
    if (rng.coin(0.5)) {
        // Linked plug/jack pair on adjacent slots.
        int base = static_cast<int>(rng.below(kNumSlots - 1));
        scene.objects.push_back({plug_kind(), rng.pick(colors()), base});
        scene.objects.push_back({jack_kind(), rng.pick(colors()), base + 1});
        std::erase(free, base);
        std::erase(free, base + 1);
        n -= 2;
        if (n == 0) {
            scene.canonicalize();
            return scene;
        }
    }
    for (int slot : detail::draw_slots(rng, n, free)) {
        scene.objects.push_back({rng.pick(normal_kinds()), rng.pick(colors()), slot});
    }
    scene.canonicalize();
    return scene;
}

namespace detail {

inline std::vector<size_t> movable_indices(const Scene& s) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < s.objects.size(); ++i) {
        if (!is_link_kind(s.objects[i].kind)) idx.push_back(i);
    }
    return idx;
}

// (plug index, jack index) for each adjacent linked pair.
inline std::vector<std::pair<size_t, size_t>> linked_pairs(const Scene& s) {
    std::vector<std::pair<size_t, size_t>> pairs;
    for (size_t i = 0; i < s.objects.size(); ++i) {
        if (s.objects[i].kind != plug_kind()) continue;
        for (size_t j = 0; j < s.objects.size(); ++j) {
            if (s.objects[j].kind != jack_kind()) continue;
            if (std::abs(s.objects[i].slot - s.objects[j].slot) == 1) pairs.push_back({i, j});
        }
    }
    return pairs;
}

// Empty slots where placing the moved link member leaves it with no
// complementary neighbour, so the move genuinely severs the link. `s` must
// already have the moved object removed.
inline std::vector<int> link_breaking_slots(const Scene& s, const std::string& moved_kind) {
    const std::string& partner = moved_kind == plug_kind() ? jack_kind() : plug_kind();
    std::vector<int> out;
    for (int slot : s.empty_slots()) {
        bool near_partner = false;
        for (int d : {-1, 1}) {
            const SceneObject* n = s.at_slot(slot + d);
            if (n && n->kind == partner) near_partner = true;
        }
        if (!near_partner) out.push_back(slot);
    }
    return out;
}

}  // namespace detail

inline bool admits(const Scene& reference, Category category) {
    const size_t n = reference.objects.size();
    const auto movable = detail::movable_indices(reference);
    switch (category) {
        case Category::number: {
            const bool can_add = n < kNumSlots;
            const bool can_remove = n >= 2 && !movable.empty();
            return can_add || can_remove;
        }
        case Category::color:
            return n >= 1;
        case Category::existence:
            return !movable.empty();
        case Category::position:
            return !movable.empty() && n < kNumSlots;
        case Category::functional: {
            for (auto [pi, ji] : detail::linked_pairs(reference)) {
                for (size_t m : {pi, ji}) {
                    const auto& obj = reference.objects[m];
                    Scene without = reference;
                    without.objects.erase(without.objects.begin() +
                                          static_cast<std::ptrdiff_t>(m));
                    if (!detail::link_breaking_slots(without, obj.kind).empty()) return true;
                }
            }
            return false;
        }
    }
    return false;
}

// Returns a query scene differing from the reference by exactly one edit of
// the requested category. Throws when the reference does not admit it.
inline Scene inject_anomaly(const Scene& reference, Category category, uint64_t rng_seed) {
    reference.validate();
    if (!admits(reference, category)) {
        throw ValidationError(std::string("reference does not admit anomaly category \"") +
                              to_string(category) + "\"");
    }
    Rng rng(derive_seed(rng_seed, 0xa30'0a17));
    Scene query = reference;
    const auto movable = detail::movable_indices(reference);

    switch (category) {
        case Category::number: {
            const bool can_add = reference.objects.size() < kNumSlots;
            const bool can_remove = reference.objects.size() >= 2 && !movable.empty();
            const bool add = can_add && (!can_remove || rng.coin(0.5));
            if (add) {
                // Duplicate an existing non-link object so easy scenes stay
                // one kind / one color; fall back to a plain pin.
                SceneObject tmpl{normal_kinds()[0], rng.pick(colors()), 0};
                if (!movable.empty()) {
                    const auto& src = reference.objects[rng.pick(movable)];
                    tmpl.kind = src.kind;
                    tmpl.color = src.color;
                }
                tmpl.slot = rng.pick(query.empty_slots());
                query.objects.push_back(tmpl);
            } else {
                size_t victim = rng.pick(movable);
                query.objects.erase(query.objects.begin() + static_cast<std::ptrdiff_t>(victim));
            }
            break;
        }
        case Category::color: {
            auto& obj = query.objects[rng.below(query.objects.size())];
            std::vector<std::string> others;
            for (const auto& c : colors()) {
                if (c != obj.color) others.push_back(c);
            }
            obj.color = rng.pick(others);
            break;
        }
        case Category::existence: {
            auto& obj = query.objects[rng.pick(movable)];
            obj.kind = rng.pick(alien_kinds());
            break;
        }
        case Category::position: {
            auto& obj = query.objects[rng.pick(movable)];
            obj.slot = rng.pick(query.empty_slots());
            break;
        }
        case Category::functional: {
            auto pairs = detail::linked_pairs(reference);
            rng.shuffle(pairs);
            bool broken = false;
            for (auto [pi, ji] : pairs) {
                if (broken) break;
                std::vector<size_t> members = {pi, ji};
                rng.shuffle(members);
                for (size_t m : members) {
                    Scene candidate = reference;
                    auto& obj = candidate.objects[m];
                    Scene without = reference;
                    without.objects.erase(without.objects.begin() +
                                          static_cast<std::ptrdiff_t>(m));
                    auto slots = detail::link_breaking_slots(without, obj.kind);
                    if (slots.empty()) continue;
                    obj.slot = slots[rng.below(slots.size())];
                    query = candidate;
                    broken = true;
                    break;
                }
            }
            if (!broken) {
                throw ValidationError(
                    "reference does not admit anomaly category \"functional\"");
            }
            break;
        }
    }
    query.canonicalize();
    query.validate();
    return query;
}

// ---------------------------------------------------------------------------
// Ground-truth oracle
// ---------------------------------------------------------------------------

// Recomputed from the scenes alone; never reads pair.label. Slot-wise object
// comparison plus the link-integrity check.
inline bool oracle_label(const SamplePair& pair) {
    bool slots_equal = true;
    for (int s = 0; s < kNumSlots; ++s) {
        const SceneObject* a = pair.reference.at_slot(s);
        const SceneObject* b = pair.query.at_slot(s);
        if ((a == nullptr) != (b == nullptr)) slots_equal = false;
        else if (a && b && !(*a == *b)) slots_equal = false;
    }
    const bool link_drift = link_ok(pair.reference) != link_ok(pair.query);
    return !slots_equal || link_drift;
}

// ---------------------------------------------------------------------------
// Prompt encoding and gold traces
// ---------------------------------------------------------------------------

// One object -> "<slot> <color> <kind>", scene listed in slot order.
inline std::vector<std::string> scene_tokens(const Scene& scene) {
    Scene canon = scene;
    canon.canonicalize();
    std::vector<std::string> out;
    for (const auto& o : canon.objects) {
        out.push_back(std::to_string(o.slot));
        out.push_back(o.color);
        out.push_back(o.kind);
    }
    return out;
}

// <bos> REF <ref tokens> QRY <qry tokens> <sep>
inline std::vector<TokenId> pair_prompt_ids(const SamplePair& pair, const Vocab& v) {
    std::vector<TokenId> ids;
    ids.push_back(kBos);
    ids.push_back(kRef);
    for (const auto& t : scene_tokens(pair.reference)) ids.push_back(v.id(t));
    ids.push_back(kQry);
    for (const auto& t : scene_tokens(pair.query)) ids.push_back(v.id(t));
    ids.push_back(kSep);
    return ids;
}

namespace detail {

// Kind palette in a fixed order so trace summaries are deterministic.
inline const std::vector<std::string>& kind_palette() {
    static const std::vector<std::string> v = [] {
        std::vector<std::string> k = normal_kinds();
        k.push_back(plug_kind());
        k.push_back(jack_kind());
        for (const auto& a : alien_kinds()) k.push_back(a);
        return k;
    }();
    return v;
}

// "<count> <color|mixed> <kind>" per kind present, palette order.
inline std::string scene_summary(const Scene& scene) {
    std::string out;
    for (const auto& kind : kind_palette()) {
        int count = 0;
        std::string color;
        bool mixed = false;
        for (const auto& o : scene.objects) {
            if (o.kind != kind) continue;
            ++count;
            if (color.empty()) color = o.color;
            else if (color != o.color) mixed = true;
        }
        if (count == 0) continue;
        if (!out.empty()) out += ' ';
        out += std::to_string(count);
        out += ' ';
        out += mixed ? "mixed" : color;
        out += ' ';
        out += kind;
    }
    return out;
}

inline std::string verdict_words(const SamplePair& pair) {
    if (!pair.label) return "same";
    switch (pair.category) {
        case Category::number: return "count differs";
        case Category::color: return "color differs";
        case Category::existence: return "kind differs";
        case Category::position: return "slot differs";
        case Category::functional: return "link differs";
    }
    return "differs";
}

}  // namespace detail

// Scripted well-formed reasoning trace: think block summarises both scenes
// and names the differing attribute; the answer matches the label.
inline std::string gold_trace(const SamplePair& pair) {
    std::string out = "<think> REF ";
    out += detail::scene_summary(pair.reference);
    out += " QRY ";
    out += detail::scene_summary(pair.query);
    out += ' ';
    out += detail::verdict_words(pair);
    out += " </think> <answer> ";
    out += pair.label ? "yes" : "no";
    out += " </answer>";
    return out;
}

// ---------------------------------------------------------------------------
// Pair construction
// ---------------------------------------------------------------------------

inline SamplePair make_pair(uint64_t rng_seed, Category category, bool anomalous,
                            bool with_trace, Difficulty difficulty = Difficulty::full) {
    // Resample the reference until it admits the requested category; every
    // attempt derives its own stream so the loop stays deterministic.
    Scene reference;
    bool found = false;
    for (uint64_t attempt = 0; attempt < 64; ++attempt) {
        reference = gen_reference(derive_seed(rng_seed, 1, attempt), difficulty);
        if (!anomalous || admits(reference, category)) {
            found = true;
            break;
        }
    }
    if (!found) {
        throw ValidationError(std::string("no admissible reference for category \"") +
                              to_string(category) + "\" at difficulty " + to_string(difficulty));
    }

    SamplePair pair;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "pair-%016llx",
                  static_cast<unsigned long long>(rng_seed));
    pair.id = idbuf;
    pair.category = category;
    pair.reference = reference;
    pair.label = anomalous;
    pair.query = anomalous ? inject_anomaly(reference, category, derive_seed(rng_seed, 2))
                           : reference;
    if (with_trace) pair.gold_trace = gold_trace(pair);
    return pair;
}

// ---------------------------------------------------------------------------
// Dataset manifest and JSONL round trip
// ---------------------------------------------------------------------------

inline constexpr int kDatasetSchemaVersion = 1;

struct DatasetManifest {
    int schema = kDatasetSchemaVersion;
    uint64_t seed = 0;
    Difficulty difficulty = Difficulty::full;
    std::map<std::string, double> mix;  // category name -> ratio, sums to 1
    size_t sft_size = 2731;
    size_t grpo_train_size = 984;
    size_t grpo_test_size = 500;
    double anomaly_rate = 0.5;
    std::vector<std::string> scene_alphabet = default_scene_alphabet();

    static std::map<std::string, double> uniform_mix() {
        std::map<std::string, double> m;
        for (Category c : all_categories()) m[to_string(c)] = 0.2;
        return m;
    }

    void validate() const {
        if (schema != kDatasetSchemaVersion) {
            throw ValidationError("unsupported dataset schema version " + std::to_string(schema));
        }
        double total = 0.0;
        for (const auto& [name, ratio] : mix) {
            category_from_string(name);
            if (ratio < 0.0) throw ValidationError("negative mix ratio for " + name);
            total += ratio;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw ValidationError("mix ratios must sum to 1 +- 1e-9 (got " +
                                  std::to_string(total) + ")");
        }
        if (difficulty == Difficulty::easy) {
            auto it = mix.find(to_string(Category::functional));
            if (it != mix.end() && it->second > 0.0) {
                throw ValidationError(
                    "difficulty easy generates no linked pairs; functional mix ratio must be 0");
            }
        }
        if (anomaly_rate < 0.0 || anomaly_rate > 1.0) {
            throw ValidationError("anomaly_rate must lie in [0,1]");
        }
    }
};

inline ordered_json manifest_to_json(const DatasetManifest& m) {
    ordered_json j;
    j["schema"] = m.schema;
    j["seed"] = m.seed;
    j["difficulty"] = to_string(m.difficulty);
    j["mix"] = m.mix;
    j["splits"] = {{"sft", m.sft_size}, {"grpo_train", m.grpo_train_size},
                   {"grpo_test", m.grpo_test_size}};
    j["anomaly_rate"] = m.anomaly_rate;
    j["scene_alphabet"] = m.scene_alphabet;
    return j;
}

inline DatasetManifest manifest_from_json(const ordered_json& j) {
    DatasetManifest m;
    m.schema = j.at("schema").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.difficulty = difficulty_from_string(j.at("difficulty").get<std::string>());
    m.mix = j.at("mix").get<std::map<std::string, double>>();
    m.sft_size = j.at("splits").at("sft").get<size_t>();
    m.grpo_train_size = j.at("splits").at("grpo_train").get<size_t>();
    m.grpo_test_size = j.at("splits").at("grpo_test").get<size_t>();
    m.anomaly_rate = j.at("anomaly_rate").get<double>();
    m.scene_alphabet = j.at("scene_alphabet").get<std::vector<std::string>>();
    m.validate();
    return m;
}

namespace detail {

inline ordered_json scene_to_json(const Scene& s) {
    ordered_json arr = ordered_json::array();
    for (const auto& o : s.objects) {
        arr.push_back(ordered_json::array({o.kind, o.color, o.slot}));
    }
    return arr;
}

inline Scene scene_from_json(const ordered_json& arr) {
    Scene s;
    for (const auto& item : arr) {
        s.objects.push_back({item.at(0).get<std::string>(), item.at(1).get<std::string>(),
                             item.at(2).get<int>()});
    }
    s.canonicalize();
    s.validate();
    return s;
}

}  // namespace detail

inline ordered_json pair_to_json(const SamplePair& p) {
    ordered_json j;
    j["id"] = p.id;
    j["category"] = to_string(p.category);
    j["label"] = p.label;
    j["ref"] = detail::scene_to_json(p.reference);
    j["qry"] = detail::scene_to_json(p.query);
    j["trace"] = p.gold_trace ? ordered_json(*p.gold_trace) : ordered_json(nullptr);
    j["schema"] = kDatasetSchemaVersion;
    return j;
}

inline SamplePair pair_from_json(const ordered_json& j) {
    SamplePair p;
    p.id = j.at("id").get<std::string>();
    p.category = category_from_string(j.at("category").get<std::string>());
    p.label = j.at("label").get<bool>();
    p.reference = detail::scene_from_json(j.at("ref"));
    p.query = detail::scene_from_json(j.at("qry"));
    if (!j.at("trace").is_null()) p.gold_trace = j.at("trace").get<std::string>();
    int schema = j.at("schema").get<int>();
    if (schema != kDatasetSchemaVersion) {
        throw ValidationError("unsupported sample schema version " + std::to_string(schema));
    }
    return p;
}

// Deterministic split generation: sample i of a split draws its category and
// label from a stream derived from (manifest seed, split tag, i).
inline std::vector<SamplePair> generate_split(const DatasetManifest& m, const std::string& split,
                                              size_t count, bool with_trace) {
    m.validate();
    std::vector<Category> cats;
    std::vector<double> weights;
    for (const auto& [name, ratio] : m.mix) {
        if (ratio > 0.0) {
            cats.push_back(category_from_string(name));
            weights.push_back(ratio);
        }
    }
    if (cats.empty()) throw ValidationError("category mix selects no categories");

    const uint64_t split_tag = hash_string(split);
    std::vector<SamplePair> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        Rng pick(derive_seed(m.seed, split_tag, i));
        Category category = cats[pick.categorical(weights)];
        bool anomalous = pick.coin(m.anomaly_rate);
        uint64_t pair_seed = derive_seed(m.seed, split_tag ^ 0x70a1, i);
        SamplePair p = make_pair(pair_seed, category, anomalous, with_trace, m.difficulty);
        char idbuf[48];
        std::snprintf(idbuf, sizeof(idbuf), "%s-%06zu", split.c_str(), i);
        p.id = idbuf;
        out.push_back(std::move(p));
    }
    return out;
}

inline void write_jsonl(const std::vector<SamplePair>& pairs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write dataset file: " + path);
    for (const auto& p : pairs) {
        out << pair_to_json(p).dump() << '\n';
    }
    if (!out) throw RuntimeFailure("write failed: " + path);
}

inline std::vector<SamplePair> read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open dataset file: " + path);
    std::vector<SamplePair> pairs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            pairs.push_back(pair_from_json(ordered_json::parse(line)));
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception& e) {
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": malformed dataset line (" + e.what() + ")");
        }
    }
    return pairs;
}

struct DatasetFiles {
    std::string sft;
    std::string grpo_train;
    std::string grpo_test;
    std::string manifest;
};

// Writes sft.jsonl / grpo_train.jsonl / grpo_test.jsonl / manifest.json.
// Regenerating from the same manifest reproduces byte-identical files.
inline DatasetFiles write_dataset(const DatasetManifest& m, const std::string& out_dir) {
    m.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    auto sft = generate_split(m, "sft", m.sft_size, /*with_trace=*/true);
    auto train = generate_split(m, "grpo_train", m.grpo_train_size, /*with_trace=*/false);
    auto test = generate_split(m, "grpo_test", m.grpo_test_size, /*with_trace=*/false);

    std::set<std::string> ids;
    for (const auto* split : {&sft, &train, &test}) {
        for (const auto& p : *split) {
            if (!ids.insert(p.id).second) {
                throw RuntimeFailure("duplicate sample id across splits: " + p.id);
            }
        }
    }

    DatasetFiles files;
    files.sft = (fs::path(out_dir) / "sft.jsonl").string();
    files.grpo_train = (fs::path(out_dir) / "grpo_train.jsonl").string();
    files.grpo_test = (fs::path(out_dir) / "grpo_test.jsonl").string();
    files.manifest = (fs::path(out_dir) / "manifest.json").string();
    write_jsonl(sft, files.sft);
    write_jsonl(train, files.grpo_train);
    write_jsonl(test, files.grpo_test);
    std::ofstream mf(files.manifest, std::ios::binary);
    if (!mf) throw ValidationError("cannot write manifest: " + files.manifest);
    mf << manifest_to_json(m).dump(2) << '\n';
    return files;
}

inline DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open manifest: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError(path + ": malformed manifest (" + std::string(e.what()) + ")");
    }
    return manifest_from_json(j);
}

}  // namespace grpl
