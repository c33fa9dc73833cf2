#include <doctest.h>

#include "esvforge/dataset.hpp"
#include "fixtures.hpp"

using namespace esvforge;
using fixture::code_of;

namespace {

SurgeryTimeline two_segment_timeline() {
    const auto& reg = TaxonomyRegistry::builtin();
    SurgeryTimeline t;
    t.surgery_id = "surg-001";
    t.total_duration_s = 100.0;
    t.clip_offsets = {{"clipA", 0.0}, {"clipB", 60.0}};
    // Gap over [40, 50).
    t.segments = {{0, 40, reg.parse_triplet("setup.scope_setup.scope_insertion")},
                  {50, 100, reg.parse_triplet("dissection.mucosal_dissection.dissection")}};
    return t;
}

KeyframeRecord kf(const std::string& clip, std::int64_t index, double ts) {
    return {"surg-001", clip, index, ts, FrameSignature{std::vector<double>(16, 0.25)}};
}

}  // namespace

TEST_CASE("remaining time") {
    CHECK(remaining_time(3600, 1200) == 2400);
    CHECK(remaining_time(3600, 3600) == 0);
    CHECK(code_of([] { remaining_time(3600, 3700); }) == ErrorCode::OutOfRange);
    CHECK(code_of([] { remaining_time(3600, -1); }) == ErrorCode::OutOfRange);
}

TEST_CASE("frame filename encode/decode") {
    const auto name = encode_frame_filename("surg-001", "clipA", 42, 12.345);
    CHECK(name == "surg-001/clipA_frame_000042_ts_000012345.png");
    const auto back = decode_frame_filename(name);
    CHECK(back == FrameName{"surg-001", "clipA", 42, 12345});
    CHECK(back.timestamp_s() == 12.345);
    CHECK(code_of([] { decode_frame_filename("nonsense.png"); }) == ErrorCode::MalformedFilename);
    CHECK(code_of([] { encode_frame_filename("a/b", "c", 0, 0.0); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { encode_frame_filename("a", "c", 1'000'000, 0.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("fixed-width names sort in (surgery, clip, frame) order") {
    std::vector<std::string> names;
    for (const char* s : {"surg-002", "surg-001"})
        for (const char* c : {"clip02", "clip01"})
            for (int i : {100, 7, 30}) names.push_back(encode_frame_filename(s, c, i, i * 1.0));
    auto sorted = names;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        const auto a = decode_frame_filename(sorted[i - 1]), b = decode_frame_filename(sorted[i]);
        CHECK(std::tie(a.surgery_id, a.clip_id, a.frame_index) < std::tie(b.surgery_id, b.clip_id, b.frame_index));
    }
}

TEST_CASE("rows CSV round trip") {
    const auto& reg = TaxonomyRegistry::builtin();
    const std::vector<DatasetRow> rows{
        make_row("s/c_frame_000001_ts_000001000.png", reg.parse_triplet("closure.suturing.stitching"), 12.5),
        make_row("s/c_frame_000002_ts_000002000.png", reg.parse_triplet("setup.scope_setup.scope_insertion"), 0)};
    CHECK(rows[0].timeline_label == "closure.suturing.stitching");
    CHECK(rows[0].timeline_task_label == "suturing");
    const auto text = format_rows_csv(rows);
    CHECK(text.rfind(std::string(kCsvHeader) + "\n", 0) == 0);
    CHECK(parse_rows_csv(text) == rows);
    CHECK(code_of([] { parse_rows_csv("a,b\n"); }) == ErrorCode::SchemaError);
}

TEST_CASE("emit: three labelled keyframes give three rows") {
    fixture::TempDir dir("emit");
    const auto m = emit_dataset(two_segment_timeline(), {kf("clipA", 0, 0.0), kf("clipA", 5, 5.0), kf("clipB", 1, 1.0)},
                                dir.path());
    CHECK(m.rows == 3);
    CHECK(m.dropped == 0);
    CHECK(m.cutouts == 3);
    const auto rows = read_rows_csv(dir / "labels/surg-001.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[2].filename == "surg-001/clipB_frame_000001_ts_000001000.png");
    CHECK(rows[2].timeline_phase_label == "dissection");
    CHECK(rows[2].time_to_finish == doctest::Approx(39.0));
    for (const auto& r : rows) CHECK(std::filesystem::exists(dir.path() / "frames" / r.filename));
    CHECK(std::filesystem::exists(dir / "cutouts/surg-001/cutout_plan.csv"));
}

TEST_CASE("emit: one keyframe of four in a gap is dropped") {
    fixture::TempDir dir("emit");
    const auto m = emit_dataset(two_segment_timeline(),
                                {kf("clipA", 0, 0.0), kf("clipA", 45, 45.0), kf("clipA", 55, 55.0), kf("clipB", 3, 3.0)},
                                dir.path());
    CHECK(m.rows == 3);
    CHECK(m.dropped == 1);
    merge_dataset(dir.path(), m);
    CHECK(read_rows_csv(dir.path() / std::string(kLabelsCsvName)).size() == 3);
    const auto manifest = fixture::slurp(dir / "manifest.json");
    CHECK(manifest.find("\"dropped\": 1") != std::string::npos);
}

TEST_CASE("emit: no keyframes gives a header-only CSV") {
    fixture::TempDir dir("emit");
    const auto m = emit_dataset(two_segment_timeline(), {}, dir.path());
    CHECK(m.rows == 0);
    CHECK(fixture::slurp(dir / "labels/surg-001.csv") == std::string(kCsvHeader) + "\n");
}

TEST_CASE("emit: cutout plan follows the window law") {
    fixture::TempDir dir("emit");
    emit_dataset(two_segment_timeline(), {kf("clipA", 10, 10.0), kf("clipB", 35, 35.0)}, dir.path());
    const auto plan = fixture::slurp(dir / "cutouts/surg-001/cutout_plan.csv");
    CHECK(plan.find(",clipA,0.000,10.000\n") != std::string::npos);
    CHECK(plan.find(",clipB,5.000,30.000\n") != std::string::npos);
}

TEST_CASE("emit: millisecond collisions within a clip are rejected") {
    fixture::TempDir dir("emit");
    CHECK(code_of([&] { emit_dataset(two_segment_timeline(), {kf("clipA", 0, 1.0), kf("clipA", 1, 1.0004)}, dir.path()); }) ==
          ErrorCode::UnorderedInput);
}
