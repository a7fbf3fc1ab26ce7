#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "vqasynth/emitter.hpp"
#include "vqasynth/hash.hpp"
#include "vqasynth/jsonl.hpp"

using namespace vqasynth;
using namespace vqasynth::emit;

namespace {

std::vector<std::string> ids(const std::vector<TrainingSample>& s) {
    std::vector<std::string> out;
    for (const auto& x : s) out.push_back(x.sample_id);
    return out;
}

bool is_ordered_subsequence(const std::vector<TrainingSample>& sub, const std::vector<TrainingSample>& all) {
    std::size_t j = 0;
    for (const auto& s : sub) {
        while (j < all.size() && !(all[j] == s)) ++j;
        if (j == all.size()) return false;
        ++j;
    }
    return true;
}

}  // namespace

TEST(SampleId, MatchesIndependentDigest) {
    // hashlib.sha256(b"qbp\0NExT-QA\0file:///v.mp4\0A narrative.")
    EXPECT_EQ(sample_id_for(Origin::Qbp, "NExT-QA", "file:///v.mp4", "A narrative."),
              "d7bfb833beb4f974722b596a7d27c3e32807ea80ee9c622324181cef4649bbb2");
    EXPECT_NE(sample_id_for(Origin::Qbc, "NExT-QA", "file:///v.mp4", "A narrative."),
              sample_id_for(Origin::Qbp, "NExT-QA", "file:///v.mp4", "A narrative."));
}

TEST(Assemble, NarrativesFirstAndExactDuplicatesDropped) {
    std::vector<synth::NarrativeRecord> n = {{"D", "v1", "u1", "Same text.", {"q1"}, "m", "h", "t"},
                                             {"D", "v2", "u2", "Other text.", {"q1"}, "m", "h", "t"},
                                             {"D", "v1", "u1", "Same text.", {"q2"}, "m", "h", "t"}};
    std::vector<synth::RationaleRecord> r = {{"D", "v1", "u1", "q1", "Q", "A", "Same text.", "m", "h", "t"}};
    const auto out = assemble(n, r);
    ASSERT_EQ(out.samples.size(), 3u);
    EXPECT_EQ(out.duplicates.size(), 1u);
    EXPECT_EQ(out.samples[0].origin, Origin::Qbp);
    EXPECT_EQ(out.samples[2].origin, Origin::Qbc);
    EXPECT_EQ(out.samples[2].source_ids, std::vector<std::string>{"q1"});
    const auto all_ids = ids(out.samples);
    std::set<std::string> unique(all_ids.begin(), all_ids.end());
    EXPECT_EQ(unique.size(), out.samples.size());
}

TEST(Assemble, EmptyTextRejected) {
    std::vector<synth::NarrativeRecord> n = {{"D", "v1", "u1", "", {}, "m", "h", "t"}};
    EXPECT_THROW(assemble(n, {}), Error);
}

TEST(Subset, DeterministicSizedAndOrdered) {
    const auto all = fixtures::synthetic_samples(2000);
    for (std::size_t size : {0u, 1u, 350u, 1999u}) {
        const auto a = subset(all, size, 42);
        const auto b = subset(all, size, 42);
        EXPECT_EQ(a.size(), size);
        EXPECT_EQ(ids(a), ids(b));
        EXPECT_TRUE(is_ordered_subsequence(a, all));
    }
    EXPECT_NE(ids(subset(all, 350, 1)), ids(subset(all, 350, 2)));
    EXPECT_EQ(ids(subset(all, all.size(), 9)), ids(all));
    EXPECT_THROW(subset(all, 2001, 1), Error);
}

TEST(Subset, RoughlyUniformInclusion) {
    const auto all = fixtures::synthetic_samples(100);
    std::vector<int> hits(100, 0);
    for (std::uint64_t seed = 0; seed < 2000; ++seed)
        for (const auto& s : subset(all, 10, seed)) {
            const auto i = std::stoul(s.source_ids[0].substr(1));
            ++hits[i];
        }
    // Expected 200 per element; 5 sigma is about 67.
    for (int h : hits) {
        EXPECT_GT(h, 130);
        EXPECT_LT(h, 270);
    }
}

TEST(Mix, RecipeOrderShuffleAndErrors) {
    const auto all = fixtures::synthetic_samples(30);
    std::map<std::string, std::vector<TrainingSample>> sources = {
        {"a", {all.begin(), all.begin() + 10}}, {"b", {all.begin() + 10, all.end()}}};
    const std::vector<std::string> recipe = {"a", "b"};
    const auto m1 = mix(sources, recipe, 3);
    const auto m2 = mix(sources, recipe, 3);
    EXPECT_EQ(ids(m1), ids(m2));
    EXPECT_EQ(m1.size(), 30u);
    auto sorted1 = ids(m1), sorted_all = ids(all);
    std::sort(sorted1.begin(), sorted1.end());
    std::sort(sorted_all.begin(), sorted_all.end());
    EXPECT_EQ(sorted1, sorted_all);
    EXPECT_NE(ids(m1), ids(all));
    const std::vector<std::string> unknown = {"a", "c"};
    EXPECT_THROW(mix(sources, unknown, 1), Error);
    const std::vector<std::string> twice = {"a", "a"};
    EXPECT_THROW(mix(sources, twice, 1), Error);
}

TEST(TrainingFile, LineFormatAndManifest) {
    fixtures::TempDir dir;
    const auto samples = fixtures::synthetic_samples(5);
    const auto path = dir / "train.jsonl";
    const auto m = write_training_file(samples, path, {{"subset", 7}});
    EXPECT_EQ(m.count, 5u);
    EXPECT_EQ(m.per_origin.at("qbp"), 3u);
    EXPECT_EQ(m.per_origin.at("qbc"), 2u);
    EXPECT_EQ(m.file_sha256, sha256_file_hex(path));
    EXPECT_TRUE(std::filesystem::exists(path.string() + ".manifest.json"));

    const auto lines = jsonl::read_lines(path);
    ASSERT_EQ(lines.size(), 5u);
    const auto j = nlohmann::json::parse(lines[1].text);
    EXPECT_EQ(j["id"], samples[1].sample_id);
    EXPECT_EQ(j["video"], samples[1].video_uri);
    EXPECT_EQ(j["conversations"][0]["role"], "user");
    EXPECT_EQ(j["conversations"][0]["content"], "<video>\nDescribe the visual evidence in the video.");
    EXPECT_EQ(j["conversations"][1]["content"], samples[1].target_text);
    EXPECT_EQ(nlohmann::json::parse(lines[0].text)["conversations"][0]["content"], "<video>\nDescribe the video.");
}

TEST(Samples, RoundTrip) {
    fixtures::TempDir dir;
    const auto samples = fixtures::synthetic_samples(12);
    write_samples(dir / "s.jsonl", samples);
    EXPECT_EQ(read_samples(dir / "s.jsonl"), samples);
    EXPECT_THROW(origin_from_name("xyz"), Error);
}
