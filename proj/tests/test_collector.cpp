#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace w4s;

namespace {

CandidateRecord candidate(int k, std::optional<double> score) {
    CandidateRecord c;
    c.index = k;
    c.raw_response = "response " + std::to_string(k);
    if (score) {
        Feedback f;
        f.score = *score;
        c.feedback = f;
    }
    return c;
}

// N iterations of m candidates each, scored and selected like collect mode.
std::vector<IterationRecord> synthetic_run(int n, const std::vector<std::vector<std::optional<double>>>& scores,
                                           std::optional<double> threshold = 0.05) {
    std::vector<IterationRecord> its;
    double best = kNoScore;
    std::optional<double> prev;
    for (int it = 1; it <= n; ++it) {
        IterationRecord r;
        r.iteration = it;
        r.window = (it - 1) / 2;
        r.turn = (it - 1) % 2 + 1;
        if (r.turn == 1) best = kNoScore;
        r.context = "state " + std::to_string(it);
        r.v_prev = prev;
        r.v_max = best;
        const auto& row = scores[static_cast<std::size_t>(it - 1) % scores.size()];
        for (std::size_t k = 0; k < row.size(); ++k) r.candidates.push_back(candidate(static_cast<int>(k), row[k]));
        score_candidates(r.candidates, r.v_prev, r.v_max, threshold);
        for (const auto& c : r.candidates) {
            if (c.selected) {
                r.selected = c.index;
                prev = c.score();
                best = std::max(best, c.score());
            }
        }
        its.push_back(std::move(r));
    }
    return its;
}

double oracle_reward(double v, std::optional<double> prev, double best) {
    const bool beats_best = v > best;
    const bool beats_prev = prev.has_value() && v > *prev;
    static const std::map<std::pair<bool, bool>, double> table = {
        {{true, true}, 1.0}, {{true, false}, 1.0}, {{false, true}, 0.5}, {{false, false}, 0.0}};
    return table.at({beats_best, beats_prev});
}

}  // namespace

TEST(Reward, Examples) {
    EXPECT_EQ(compute_reward(0.8, 0.5, 0.7), 1.0);
    EXPECT_EQ(compute_reward(0.6, 0.5, 0.7), 0.5);
    EXPECT_EQ(compute_reward(0.4, 0.5, 0.7), 0.0);
    EXPECT_EQ(compute_reward(0.7, 0.5, 0.7), 0.5);  // ties the best: not an improvement on it
    EXPECT_EQ(compute_reward(0.5, 0.5, 0.7), 0.0);
    EXPECT_EQ(compute_reward(0.0, std::nullopt, kNoScore), 1.0);
    EXPECT_EQ(compute_reward(0.3, std::nullopt, 0.3), 0.0);
}

TEST(Reward, MatchesOracleOnRandomCases) {
    std::mt19937_64 rng(1234);
    std::uniform_int_distribution<int> grid(0, 10);  // coarse grid so ties are frequent
    std::bernoulli_distribution coin(0.2);
    for (int i = 0; i < 20000; ++i) {
        const double v = grid(rng) / 10.0;
        const std::optional<double> prev = coin(rng) ? std::nullopt : std::optional<double>(grid(rng) / 10.0);
        const double best = coin(rng) ? kNoScore : grid(rng) / 10.0;
        const double r = compute_reward(v, prev, best);
        ASSERT_EQ(r, oracle_reward(v, prev, best)) << v << " " << prev.value_or(-1) << " " << best;
        // Never decreases as v grows.
        ASSERT_LE(r, compute_reward(v + 0.1, prev, best));
    }
}

TEST(Reward, WeightIsExponential) {
    EXPECT_NEAR(rwr_weight(1.0, 0.4), 12.182494, 1e-6);
    EXPECT_NEAR(rwr_weight(0.5, 0.4), 3.490343, 1e-6);
    EXPECT_EQ(rwr_weight(0.0, 0.4), 1.0);
    for (double r : {0.0, 0.5, 1.0}) EXPECT_NEAR(std::log(rwr_weight(r, 0.4)) * 0.4, r, 1e-12);
    EXPECT_THROW(rwr_weight(1.0, 0.0), Error);
    EXPECT_THROW(rwr_weight(1.0, -1.0), Error);
}

TEST(SelectBest, ArgmaxWithLowestIndexTies) {
    std::vector<CandidateRecord> c = {candidate(0, 0.4), candidate(1, 0.9), candidate(2, 0.9), candidate(3, std::nullopt)};
    EXPECT_EQ(select_best(c), 1);
    c[1].filtered = true;
    EXPECT_EQ(select_best(c), 2);
    std::vector<CandidateRecord> none = {candidate(0, std::nullopt)};
    try {
        select_best(none);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NoViableCandidate);
    }
}

TEST(ScoreCandidates, RewardsShareTheIterationBaseline) {
    std::vector<CandidateRecord> c = {candidate(0, 0.3), candidate(1, 0.8), candidate(2, 0.9), candidate(3, 0.7),
                                      candidate(4, 0.5)};
    score_candidates(c, 0.7, 0.7, 0.05);
    std::vector<double> rewards;
    for (const auto& x : c) rewards.push_back(*x.reward);
    EXPECT_EQ(rewards, (std::vector<double>{0, 1, 1, 0, 0}));
    EXPECT_TRUE(c[2].selected);
    EXPECT_EQ(std::count_if(c.begin(), c.end(), [](const auto& x) { return x.selected; }), 1);
}

TEST(ScoreCandidates, FilterAndSkip) {
    std::vector<CandidateRecord> c = {candidate(0, 0.04), candidate(1, std::nullopt), candidate(2, 0.05)};
    score_candidates(c, std::nullopt, kNoScore, 0.05);
    EXPECT_TRUE(c[0].filtered);
    EXPECT_FALSE(c[1].reward.has_value());
    EXPECT_FALSE(c[2].filtered);
    EXPECT_TRUE(c[2].selected);
    std::vector<CandidateRecord> low = {candidate(0, 0.01)};
    score_candidates(low, std::nullopt, kNoScore, 0.05);
    EXPECT_FALSE(low[0].selected);
    score_candidates(low, std::nullopt, kNoScore, std::nullopt);
    EXPECT_TRUE(low[0].selected);
}

TEST(Trajectories, OneWindowGivesNine) {
    const auto its = synthetic_run(2, {{0.2, 0.4, 0.6, 0.3, 0.5}});
    const auto t = assemble_trajectories(its, "gsm");
    ASSERT_EQ(t.size(), 9u);
    int pairs = 0;
    for (const auto& x : t) {
        EXPECT_NO_THROW(x.validate());
        if (x.provenance == Provenance::selected_pair) {
            ++pairs;
            EXPECT_EQ(x.id, "gsm/w0/pair");
            EXPECT_EQ(x.steps[0].state_render, "state 1");
            EXPECT_EQ(x.steps[1].state_render, "state 2");
            EXPECT_EQ(x.steps[0].candidate, 2);
        } else {
            EXPECT_EQ(x.steps.size(), 1u);
        }
    }
    EXPECT_EQ(pairs, 1);
}

TEST(Trajectories, TenIterationsGiveFortyFiveAndFiftyRecords) {
    const auto its = synthetic_run(10, {{0.2, 0.4, 0.6, 0.3, 0.5}, {0.1, 0.7, 0.2, 0.3, 0.5}});
    const auto t = assemble_trajectories(its, "gsm");
    EXPECT_EQ(t.size(), 45u);
    EXPECT_EQ(rwr_records(t, 0.4).size(), 50u);
}

TEST(Trajectories, FilteredAndSkippedAreExcluded) {
    // Candidate 0 is below the floor and candidate 4 was skipped in every iteration.
    const auto its = synthetic_run(2, {{0.01, 0.4, 0.6, 0.3, std::nullopt}});
    const auto t = assemble_trajectories(its, "gsm");
    EXPECT_EQ(t.size(), 2u + 2u + 1u);
    for (const auto& x : t)
        for (const auto& s : x.steps) {
            EXPECT_NE(s.candidate, 0);
            EXPECT_NE(s.candidate, 4);
        }
}

TEST(Trajectories, LoneSelectionIsDropped) {
    // Odd N: the last window has only turn 1.
    const auto its = synthetic_run(3, {{0.2, 0.4, 0.6}});
    const auto t = assemble_trajectories(its, "gsm");
    EXPECT_EQ(t.size(), 4u + 1u + 2u);
    for (const auto& x : t) {
        if (x.provenance == Provenance::selected_pair) {
            EXPECT_EQ(x.id, "gsm/w0/pair");
        }
    }
}

TEST(Export, HeaderRecordsAndByteIdentity) {
    const auto its = synthetic_run(10, {{0.2, 0.4, 0.6, 0.3, 0.5}, {0.1, 0.7, 0.2, 0.3, 0.5}});
    const auto t = assemble_trajectories(its, "gsm");
    ScratchDir dir("w4s-export");
    const auto a = dir.path() / "a.jsonl";
    const auto b = dir.path() / "b.jsonl";
    const auto ds = export_dataset(t, 0.4, "abc", "sys", a);
    export_dataset(t, 0.4, "abc", "sys", b);
    EXPECT_EQ(read_text_file(a), read_text_file(b));
    const auto lines = read_lines(a);
    EXPECT_EQ(std::count_if(lines.begin(), lines.end(), [](const auto& l) { return !trim(l).empty(); }), 51);
    const auto back = load_rwr_dataset(a);
    EXPECT_EQ(back.header["counts"]["records"], 50);
    EXPECT_EQ(back.header["counts"]["two_turn"], 5);
    EXPECT_EQ(back.header["counts"]["one_turn"], 40);
    ASSERT_EQ(back.records.size(), 50u);
    for (const auto& r : back.records) {
        EXPECT_NEAR(std::log(r.weight) * 0.4, r.reward, 1e-9);
        EXPECT_FALSE(r.context.empty());
    }
    for (std::size_t i = 1; i < back.records.size(); ++i) {
        const auto& p = back.records[i - 1];
        const auto& q = back.records[i];
        EXPECT_LE(std::tie(p.iteration, p.candidate, p.turn), std::tie(q.iteration, q.candidate, q.turn));
    }
    try {
        export_dataset({}, 0.4, "abc", "sys", dir.path() / "c.jsonl");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyDataset);
    }
    EXPECT_FALSE(std::filesystem::exists(dir.path() / "c.jsonl"));
}

TEST(IterationRecord, JsonRoundTrip) {
    const auto its = synthetic_run(2, {{0.2, std::nullopt, 0.6}});
    for (const auto& it : its) {
        const Json j = it;
        EXPECT_EQ(Json(Json::parse(j.dump()).get<IterationRecord>()), j);
    }
}
