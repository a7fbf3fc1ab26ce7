#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "vqasynth/jsonl.hpp"
#include "vqasynth/qualitygate.hpp"

using namespace vqasynth;
using namespace vqasynth::qc;

namespace {

corpus::QuestionGroup kite_group() {
    return {"D",
            "v1",
            "u",
            {{"D", "v1", "u", "q1", "What is the boy holding?", "a red kite", {}, {}, {}},
             {"D", "v1", "u", "q2", "Where is he?", "on a beach", {}, {}, {}}}};
}

synth::NarrativeRecord narrative(const std::string& text) {
    return {"D", "v1", "u", text, {"q1", "q2"}, "m", "h", "t"};
}

synth::RationaleRecord rationale(const std::string& answer, const std::string& text,
                                 const std::string& question = "What is the boy holding?") {
    return {"D", "v1", "u", "q1", question, answer, text, "m", "h", "t"};
}

const std::string kClean =
    "On a beach a boy runs along the wet sand holding a red kite above his head while gulls circle the shore.";

}  // namespace

TEST(QbpChecks, CleanNarrativePasses) {
    const auto r = check_qbp(narrative(kClean), kite_group());
    EXPECT_EQ(r.overall, Status::Pass);
    EXPECT_EQ(r.checks.size(), 5u);
    EXPECT_EQ(r.record_id, "D/v1");
}

TEST(QbpChecks, SpeculativeTermsFail) {
    for (const char* word : {"probably", "might", "seems", "Probably"}) {
        const auto r = check_qbp(narrative(kClean + " The kite " + word + " fly away."), kite_group());
        EXPECT_EQ(r.find("speculative_terms")->status, Status::Fail) << word;
        EXPECT_EQ(r.overall, Status::Fail);
    }
    // Whole-word match only.
    const auto r = check_qbp(narrative(kClean + " The kite is mighty."), kite_group());
    EXPECT_EQ(r.find("speculative_terms")->status, Status::Pass);
}

TEST(QbpChecks, FillerPhraseFails) {
    const auto r = check_qbp(narrative("The questions ask about " + kClean), kite_group());
    EXPECT_EQ(r.find("filler_phrase")->status, Status::Fail);
}

TEST(QbpChecks, MissingAnswersWarn) {
    const auto r = check_qbp(
        narrative("A boy runs along the wet sand holding something colorful above his head while gulls circle."),
        kite_group());
    EXPECT_EQ(r.find("answer_coverage")->status, Status::Warn);
    EXPECT_NE(r.find("answer_coverage")->detail.find("missing"), std::string::npos);
}

TEST(QbpChecks, CoverageToleratesInflection) {
    EXPECT_TRUE(answer_appears("pose", "The skiers posed for a photo."));
    EXPECT_TRUE(answer_appears("red kite", "he flew red kites"));
    EXPECT_TRUE(answer_appears("posing", "They pose."));
    EXPECT_FALSE(answer_appears("red kite", "a kite that is red"));
}

TEST(QbpChecks, LengthBoundsWarn) {
    const auto r = check_qbp(narrative("On a beach, a red kite."), kite_group());
    EXPECT_EQ(r.find("length_bounds")->status, Status::Warn);
}

TEST(QbpChecks, DuplicateSentenceWarns) {
    const auto r = check_qbp(narrative(kClean + " " + kClean), kite_group());
    EXPECT_EQ(r.find("duplicate_sentence")->status, Status::Warn);
    EXPECT_EQ(r.overall, Status::Warn);
}

TEST(QbpChecks, WrongGroupRejected) {
    auto g = kite_group();
    g.video_id = "other";
    EXPECT_THROW(check_qbp(narrative(kClean), g), Error);
}

TEST(QbcChecks, EvidenceRationalePasses) {
    const auto r = check_qbc(rationale(
        "a red kite", "The boy grips a diamond of bright red fabric on a string that lifts in the wind above him."));
    EXPECT_EQ(r.overall, Status::Pass);
}

TEST(QbcChecks, RestatementFails) {
    EXPECT_EQ(check_qbc(rationale("a red kite", "A red kite.")).find("answer_restatement")->status, Status::Fail);
    EXPECT_EQ(check_qbc(rationale("a red kite", "It is a red kite.")).find("answer_restatement")->status,
              Status::Fail);
    const auto thin = check_qbc(rationale("a red kite", "The answer here is clearly a red kite in the clip."));
    EXPECT_EQ(thin.find("answer_restatement")->status, Status::Warn);
}

TEST(QbcChecks, EmptyFails) {
    const auto r = check_qbc(rationale("a red kite", "   "));
    EXPECT_EQ(r.find("nonempty")->status, Status::Fail);
}

TEST(QbcChecks, QuestionEchoWarns) {
    const auto r = check_qbc(rationale("a red kite",
                                       "What is the boy holding? He clutches a bright red diamond of fabric that "
                                       "trails a long tail in the wind."));
    EXPECT_EQ(r.find("question_echo")->status, Status::Warn);
}

TEST(Helpers, SentencesAndJaccard) {
    EXPECT_EQ(split_sentences("One. Two! Three? tail"), (std::vector<std::string>{"One.", "Two!", "Three?", "tail"}));
    EXPECT_EQ(split_sentences("..."), std::vector<std::string>{});
    EXPECT_DOUBLE_EQ(jaccard("a b c", "a b d"), 0.5);
    EXPECT_DOUBLE_EQ(jaccard("", ""), 1.0);
}

TEST(Filter, PoliciesAndSummary) {
    std::vector<synth::NarrativeRecord> recs = {narrative(kClean), narrative(kClean + " " + kClean),
                                                narrative("probably " + kClean)};
    recs[1].video_id = "v2";
    recs[2].video_id = "v3";
    std::vector<QcReport> reports;
    for (auto rec : recs) {
        auto g = kite_group();
        g.video_id = rec.video_id;
        reports.push_back(check_qbp(rec, g));
    }
    EXPECT_EQ(filter<synth::NarrativeRecord>(recs, reports, Policy::KeepAll).records.size(), 3u);
    EXPECT_EQ(filter<synth::NarrativeRecord>(recs, reports, Policy::DropFail).records.size(), 2u);
    const auto strict = filter<synth::NarrativeRecord>(recs, reports, Policy::DropFailAndWarn);
    EXPECT_EQ(strict.records.size(), 1u);
    EXPECT_EQ(strict.summary.dropped, 2u);
    EXPECT_EQ(strict.summary.by_check.at("speculative_terms").at("fail"), 1u);
    reports.pop_back();
    EXPECT_THROW(filter<synth::NarrativeRecord>(recs, reports, Policy::KeepAll), Error);
}

TEST(Filter, KeptIsSubsetAndMonotoneInStrictness) {
    const auto dir = fixtures::data_dir() / "qc";
    const auto rats = synth::read_rationales(dir / "rationales.jsonl");
    std::vector<QcReport> reports;
    for (const auto& r : rats) reports.push_back(check_qbc(r));
    const auto all = filter<synth::RationaleRecord>(rats, reports, Policy::KeepAll);
    const auto mid = filter<synth::RationaleRecord>(rats, reports, Policy::DropFail);
    const auto strict = filter<synth::RationaleRecord>(rats, reports, Policy::DropFailAndWarn);
    EXPECT_EQ(all.records.size(), rats.size());
    EXPECT_LE(strict.records.size(), mid.records.size());
    EXPECT_LE(mid.records.size(), all.records.size());
    EXPECT_EQ(mid.summary.kept + mid.summary.dropped, mid.summary.input);
}

TEST(Reports, JsonRoundTrip) {
    const auto r = check_qbp(narrative("probably " + kClean), kite_group());
    const auto back = qc_report_from_json(to_json(r));
    EXPECT_EQ(back.record_id, r.record_id);
    EXPECT_EQ(back.overall, Status::Fail);
    EXPECT_EQ(back.checks.size(), r.checks.size());
    EXPECT_THROW(status_from_name("bad"), Error);
    EXPECT_THROW(policy_from_name("drop_everything"), Error);
}

TEST(Fixture, PlantedViolationsFoundExactly) {
    const auto s = fixtures::score_qc_fixture();
    EXPECT_EQ(s.records, 100u);
    EXPECT_EQ(s.planted, 7u);
    EXPECT_TRUE(s.false_positives.empty()) << ::testing::PrintToString(s.false_positives);
    EXPECT_TRUE(s.misses.empty()) << ::testing::PrintToString(s.misses);
    EXPECT_DOUBLE_EQ(s.precision, 1.0);
    EXPECT_DOUBLE_EQ(s.recall, 1.0);
}
