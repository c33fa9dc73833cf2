#include <doctest.h>

#include <json.hpp>

#include "esvforge/index_service.hpp"
#include "fixtures.hpp"

using namespace esvforge;
using nlohmann::json;

namespace {

std::shared_ptr<const TimelineIndex> small_index() {
    const auto& reg = TaxonomyRegistry::builtin();
    const auto a = reg.parse_triplet("setup.scope_setup.scope_insertion");
    const auto b = reg.parse_triplet("dissection.landmarking.marking");
    const std::vector<LabelSample> samples{{"p1", 0.0, a}, {"p1", 1.0, a}, {"p1", 2.0, b}, {"p2", 0.0, b}};
    return std::make_shared<const TimelineIndex>(TimelineIndex::build(samples, SegmentSource::Annotation));
}

}  // namespace

TEST_CASE("surgery listing") {
    IndexService svc(small_index());
    const auto r = svc.surgeries();
    CHECK(r.status == 200);
    const auto doc = json::parse(r.body);
    REQUIRE(doc["surgeries"].size() == 2);
    CHECK(doc["surgeries"][0]["id"] == "p1");
    CHECK(doc["surgeries"][0]["duration_s"] == 2.5);
    CHECK(doc["source"] == "annotation");
}

TEST_CASE("timeline of one surgery") {
    IndexService svc(small_index());
    const auto r = svc.timeline("p1");
    CHECK(r.status == 200);
    const auto doc = json::parse(r.body);
    CHECK(doc["surgery"] == "p1");
    REQUIRE(doc["phase"].size() == 2);
    CHECK(doc["phase"][1]["label"] == "dissection");
    CHECK(doc["phase"][1]["name"] == "Dissection");
    CHECK(doc["phase"][1]["start"] == 1.5);
    const auto missing = svc.timeline("nope");
    CHECK(missing.status == 404);
    CHECK(json::parse(missing.body)["error"] == "UnknownName");
}

TEST_CASE("search handler") {
    IndexService svc(small_index());
    const auto ok = svc.search({{"phase", "dissection"}});
    CHECK(ok.status == 200);
    const auto rows = json::parse(ok.body)["results"];
    REQUIRE(rows.size() == 2);
    CHECK(rows[0]["surgery"] == "p1");
    CHECK(rows[1]["surgery"] == "p2");
    CHECK(rows[1]["end"] == 0.5);

    const auto bad_name = svc.search({{"task", "Juggling"}});
    CHECK(bad_name.status == 400);
    CHECK(json::parse(bad_name.body)["error"] == "UnknownLabelName");
    CHECK(svc.search({}).status == 400);
    CHECK(svc.search({{"from", "x"}}).status == 400);
}

TEST_CASE("swapping the index leaves old snapshots intact") {
    IndexService svc(small_index());
    const auto before = svc.snapshot();
    svc.swap(std::make_shared<const TimelineIndex>());
    CHECK(before->surgeries().size() == 2);
    CHECK(json::parse(svc.surgeries().body)["surgeries"].empty());
    CHECK(fixture::code_of([&] { svc.swap(nullptr); }) == ErrorCode::InvalidArgument);
}
