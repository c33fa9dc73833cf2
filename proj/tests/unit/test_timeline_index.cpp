#include <doctest.h>

#include <random>

#include "esvforge/timeline_index.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace esvforge;
using fixture::code_of;

namespace {

const TaxonomyRegistry& reg() { return TaxonomyRegistry::builtin(); }

Triplet label(const char* dotted) { return reg().parse_triplet(dotted); }

std::vector<Triplet> valid_triplets() {
    std::vector<Triplet> out;
    for (int p = 0; p < static_cast<int>(reg().size(Level::Phase)); ++p)
        for (int t = 0; t < static_cast<int>(reg().size(Level::Task)); ++t)
            for (int a = 0; a < static_cast<int>(reg().size(Level::Action)); ++a)
                if (Triplet x{{p}, {t}, {a}}; reg().is_valid(x)) out.push_back(x);
    return out;
}

// Sticky random walk over valid triplets sampled at jittered times.
std::vector<LabelSample> random_samples(std::mt19937_64& rng, int surgeries) {
    static const auto all = valid_triplets();
    std::vector<LabelSample> out;
    for (int s = 0; s < surgeries; ++s) {
        const std::string id = "s" + std::to_string(s);
        double t = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
        Triplet cur = all[rng() % all.size()];
        const int n = 1 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) {
            if (rng() % 4 == 0) cur = all[rng() % all.size()];
            out.push_back({id, t, cur});
            t += 0.5 + static_cast<double>(rng() % 8) * 0.25;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("midpoint boundaries and terminal half-extent") {
    const auto a = label("setup.scope_setup.scope_insertion");
    const auto b = label("dissection.landmarking.marking");
    const std::vector<LabelSample> samples{{"x", 0.0, a}, {"x", 1.0, a}, {"x", 2.0, b}};
    const auto index = TimelineIndex::build(samples, SegmentSource::Annotation);
    const auto& phases = index.find("x")->segments(Level::Phase);
    REQUIRE(phases.size() == 2);
    CHECK(phases[0].start_s == 0.0);
    CHECK(phases[0].end_s == 1.5);
    CHECK(phases[0].label == a.phase.ordinal);
    CHECK(phases[1].start_s == 1.5);
    CHECK(phases[1].end_s == 2.5);
    CHECK(index.find("x")->duration_s == 2.5);
    CHECK(index.find("y") == nullptr);
}

TEST_CASE("terminal runs are clipped to the duration and a single sample gets a fixed extent") {
    const auto a = label("setup.scope_setup.scope_insertion");
    const std::vector<LabelSample> two{{"x", 0.0, a}, {"x", 4.0, a}};
    const auto clipped = TimelineIndex::build(two, SegmentSource::Annotation, {{"x", 5.0}});
    CHECK(clipped.find("x")->segments(Level::Task).front().end_s == 5.0);
    CHECK(clipped.find("x")->duration_s == 5.0);
    const std::vector<LabelSample> one{{"y", 3.0, a}};
    const auto single = TimelineIndex::build(one, SegmentSource::Prediction);
    const auto& seg = single.find("y")->segments(Level::Action).front();
    CHECK(seg.start_s == 3.0 - kSingleSampleHalfExtent);
    CHECK(seg.end_s == 3.0 + kSingleSampleHalfExtent);
    CHECK(seg.source == SegmentSource::Prediction);
}

TEST_CASE("build rejects unordered and negative timestamps") {
    const auto a = label("setup.scope_setup.scope_insertion");
    const std::vector<LabelSample> back{{"x", 2.0, a}, {"x", 1.0, a}};
    CHECK(code_of([&] { TimelineIndex::build(back, SegmentSource::Annotation); }) == ErrorCode::UnorderedInput);
    const std::vector<LabelSample> neg{{"x", -1.0, a}};
    CHECK(code_of([&] { TimelineIndex::build(neg, SegmentSource::Annotation); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("each level partitions the surgery span") {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 50; ++round) {
        const auto samples = random_samples(rng, 3);
        const auto index = TimelineIndex::build(samples, SegmentSource::Annotation);
        for (const auto& e : index.surgeries()) {
            for (auto level : kAllLevels) {
                const auto& segs = e.segments(level);
                REQUIRE_FALSE(segs.empty());
                CHECK(segs.back().end_s == e.duration_s);
                for (std::size_t i = 0; i < segs.size(); ++i) {
                    CHECK(segs[i].start_s < segs[i].end_s);
                    if (i > 0) {
                        CHECK(segs[i].start_s == segs[i - 1].end_s);
                        CHECK(segs[i].label != segs[i - 1].label);
                    }
                }
            }
            // Every sample lies inside the segment carrying its label.
            for (const auto& s : samples) {
                if (s.surgery_id != e.id) continue;
                for (auto level : kAllLevels) {
                    int hits = 0;
                    for (const auto& seg : e.segments(level))
                        if (seg.start_s <= s.timestamp_s && s.timestamp_s < seg.end_s) {
                            ++hits;
                            CHECK(seg.label == s.label.ordinal(level));
                        }
                    CHECK(hits == 1);
                }
            }
        }
    }
}

TEST_CASE("search agrees with a linear scan") {
    std::mt19937_64 rng(12);
    const auto& r = reg();
    for (int round = 0; round < 300; ++round) {
        const auto samples = random_samples(rng, 1 + static_cast<int>(rng() % 3));
        const auto index = TimelineIndex::build(samples, SegmentSource::Annotation);
        SearchQuery q;
        const auto& pick = samples[rng() % samples.size()].label;
        if (rng() % 2) q.phase = r.name(Level::Phase, pick.phase.ordinal);
        if (rng() % 2) q.task = r.slug(Level::Task, pick.task.ordinal);
        if (rng() % 3 == 0) q.action = r.name(Level::Action, pick.action.ordinal);
        if (rng() % 3 == 0) q.surgery = "s" + std::to_string(rng() % 3);
        if (rng() % 2) {
            q.from_s = static_cast<double>(rng() % 40);
            q.to_s = *q.from_s + 1.0 + static_cast<double>(rng() % 40);
        }
        if (rng() % 3 == 0) q.min_duration_s = static_cast<double>(rng() % 6) * 0.5;
        if (!q.has_criterion()) q.min_duration_s = 0.0;
        CHECK(index.search(q) == oracle::linear_search(index, q, r));
    }
}

TEST_CASE("search clips to coarser criteria and spans surgeries") {
    const auto bleed = label("dissection.mucosal_dissection.bleeding");
    const auto other = label("dissection.mucosal_dissection.dissection");
    std::vector<LabelSample> samples;
    for (const char* id : {"b", "a"}) {
        samples.push_back({id, 0.0, other});
        samples.push_back({id, 1.0, bleed});
        samples.push_back({id, 2.0, bleed});
        samples.push_back({id, 3.0, other});
    }
    const auto index = TimelineIndex::build(samples, SegmentSource::Annotation);
    SearchQuery q;
    q.action = "Bleeding";
    const auto hits = index.search(q);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].surgery_id == "a");
    CHECK(hits[1].surgery_id == "b");
    CHECK(hits[0].start_s == 0.5);
    CHECK(hits[0].end_s == 2.5);
    CHECK(hits[0].level == Level::Action);

    q.min_duration_s = 2.5;
    CHECK(index.search(q).empty());
    q.min_duration_s.reset();
    q.from_s = 1.0;
    q.to_s = 1.25;
    q.surgery = "b";
    const auto window = index.search(q);
    REQUIRE(window.size() == 1);
    CHECK(window[0].duration() == 0.25);

    SearchQuery unknown;
    unknown.phase = "Nope";
    CHECK(code_of([&] { index.search(unknown); }) == ErrorCode::UnknownLabelName);
    CHECK(code_of([&] { index.search(SearchQuery{}); }) == ErrorCode::InvalidArgument);
    SearchQuery backwards;
    backwards.from_s = 3.0;
    backwards.to_s = 1.0;
    CHECK(code_of([&] { index.search(backwards); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("query parameters") {
    const auto q = query_from_params({{"phase", "setup"}, {"from", "1.5"}, {"min_duration", "2"}});
    CHECK(q.phase == "setup");
    CHECK(q.from_s == 1.5);
    CHECK(q.min_duration_s == 2.0);
    CHECK(code_of([] { query_from_params({{"from", "abc"}}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { query_from_params({{"colour", "red"}}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("persisted index round trips") {
    fixture::TempDir dir("index");
    std::mt19937_64 rng(13);
    const auto index = TimelineIndex::build(random_samples(rng, 4), SegmentSource::Prediction);
    persist(index, dir / "index.json");
    CHECK_FALSE(std::filesystem::exists(dir / "index.json.tmp"));
    CHECK(load_index(dir / "index.json") == index);
    CHECK(TimelineIndex::from_json(index.to_json()) == index);
}

TEST_CASE("corrupt and foreign index files are rejected") {
    fixture::TempDir dir("index");
    const auto path = dir / "index.json";
    CHECK(code_of([&] { load_index(path); }) == ErrorCode::IoFailure);
    fixture::spill(path, "{\"schema\": \"esv-forge.timeline-index\", \"vers");
    CHECK(code_of([&] { load_index(path); }) == ErrorCode::IoFailure);
    fixture::spill(path, R"({"schema": "esv-forge.timeline-index", "version": 2, "source": "annotation", "surgeries": []})");
    CHECK(code_of([&] { load_index(path); }) == ErrorCode::VersionMismatch);
    fixture::spill(path, R"({"schema": "something-else", "version": 1})");
    CHECK(code_of([&] { load_index(path); }) == ErrorCode::VersionMismatch);
    fixture::spill(path, R"({"schema": "esv-forge.timeline-index", "version": 1, "source": "annotation",
        "surgeries": [{"id": "x", "duration_s": 2, "phase": [[0, 2, "setup"]], "task": [[1, 0.5, "scope_setup"]], "action": []}]})");
    CHECK(code_of([&] { load_index(path); }) == ErrorCode::SchemaError);
}
