#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace precondlasso;

namespace {

std::filesystem::path tmp(const std::string& leaf) {
    auto p = std::filesystem::path(PRECONDLASSO_TEST_TMP) / leaf;
    std::filesystem::remove_all(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::size_t count(const std::string& s, const std::string& what) {
    std::size_t c = 0;
    for (std::size_t at = s.find(what); at != std::string::npos; at = s.find(what, at + 1)) ++c;
    return c;
}

ExperimentConfig small_fig1() {
    ExperimentConfig c = fig1_defaults();
    c.n = 256;
    c.m_grid = {10, 30};
    c.trials = 2;
    c.seed = 17;
    return c;
}

}  // namespace

TEST(Config, ValidationAndRoundTrip) {
    ExperimentConfig c = small_fig1();
    c.extra["t_list"] = {1, 2};
    ExperimentConfig back = config_from_json(config_to_json(c));
    EXPECT_EQ(back.m_grid, c.m_grid);
    EXPECT_EQ(back.solvers, c.solvers);
    EXPECT_EQ(back.extra["t_list"], c.extra["t_list"]);
    EXPECT_NO_THROW(back.validate());
    c.m_grid = {10, 10};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.m_grid = {};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.m_grid = {1};
    c.trials = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Streams, DistinctPerTrialKey) {
    std::set<std::uint64_t> ids;
    for (const char* s : {"a", "b"})
        for (Index m : {1, 2})
            for (Index t : {0, 1}) ids.insert(trial_stream_id("fig1", s, m, t));
    EXPECT_EQ(ids.size(), 8u);
    EXPECT_EQ(trial_stream_id("x", "y", 3, 4), trial_stream_id("x", "y", 3, 4));
}

TEST(Fig1, ByteIdenticalRerun) {
    ExperimentConfig c = small_fig1();
    auto da = tmp("fig1_a"), db = tmp("fig1_b");
    c.output_dir = da.string();
    run_fig1(c);
    c.output_dir = db.string();
    run_fig1(c);
    for (const char* f : {"fig1_trials.csv", "fig1_summary.csv", "fig1.svg"}) {
        std::string a = slurp(da / f);
        EXPECT_FALSE(a.empty()) << f;
        EXPECT_EQ(a, slurp(db / f)) << f;
    }
}

TEST(Fig1, RecordShapeAndRecoveryFlag) {
    ExperimentResult r = run_fig1(small_fig1());
    EXPECT_EQ(r.records.size(), 3u * 2u * 2u);
    std::set<std::tuple<std::string, Index, Index>> keys;
    const double wnorm = 3.0 * std::sqrt(2.0);
    for (const auto& rec : r.records) {
        keys.insert({rec.solver, rec.m, rec.trial});
        ASSERT_EQ(rec.status, "ok");
        EXPECT_EQ(rec.exact_recovery, rec.l2_error <= 1e-6 * wnorm);
    }
    EXPECT_EQ(keys.size(), r.records.size());
    EXPECT_EQ(r.summary.size(), 6u);
}

TEST(Fig1, FullRankInterpolationRecoversForAllSolvers) {
    ExperimentConfig c = fig1_defaults();
    c.n = 256;
    c.m_grid = {256};
    c.trials = 1;
    ExperimentResult r = run_fig1(c);
    for (const auto& rec : r.records) EXPECT_TRUE(rec.exact_recovery) << rec.solver << " " << rec.l2_error;
}

TEST(Fig1, RejectsBadSize) {
    ExperimentConfig c = small_fig1();
    c.n = 300;
    EXPECT_THROW(run_fig1(c), std::invalid_argument);
}

TEST(Plot, ThreeSeriesFromFigureOneCsv) {
    ExperimentResult r = run_fig1(small_fig1());
    std::string svg = emit_plot(summary_csv(r.summary));
    EXPECT_EQ(count(svg, "<polyline"), 3u);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_EQ(emit_plot(records_csv(r.records)), emit_plot(records_csv(r.records)));
}

TEST(Plot, EmptySeriesIsAxisOnly) {
    std::string svg = emit_plot("solver,m,mean_l2_error\n");
    EXPECT_EQ(count(svg, "<polyline"), 0u);
    EXPECT_GE(count(svg, "<line"), 2u);
}

TEST(Plot, Malformed) {
    EXPECT_THROW(emit_plot(""), MalformedCSV);
    EXPECT_THROW(emit_plot("a,b\n1,2\n"), MalformedCSV);
    EXPECT_THROW(emit_plot("solver,m,l2_error\nx,1\n"), MalformedCSV);
    EXPECT_THROW(emit_plot("solver,m,l2_error\nx,one,2\n"), MalformedCSV);
    EXPECT_THROW(emit_plot("solver,m,l2_error\n\"x,1,2\n"), MalformedCSV);
}

TEST(Csv, QuotedFieldsRoundTrip) {
    TrialRecord r;
    r.experiment = "e";
    r.solver = "a,b";
    r.m = 3;
    r.status = "say \"hi\"";
    CsvTable t = parse_csv(records_csv({r}));
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0][t.column("solver")], "a,b");
    EXPECT_EQ(t.rows[0][t.column("status")], "say \"hi\"");
}

TEST(LbDemo, IdentityInstanceRecovers) {
    ExperimentConfig c = lbdemo_defaults();
    c.n = 64;
    c.k = 2;
    c.m_grid = {static_cast<Index>(std::ceil(4.0 * 2 * std::log(64.0)))};
    c.trials = 20;
    ExperimentResult r = run_lb_demo(c);
    EXPECT_GE(r.summary.at(0).recovery_rate, 0.9);
    for (const auto& rec : r.records) EXPECT_TRUE(rec.extra.count("witness_beats"));
}

TEST(LbDemo, GridInstanceWithExplicitSignal) {
    RngStream s(21, 0);
    GridOptions o;
    o.mode = GridMode::Compact;
    HardInstance h = grid_instance(2, s, o);
    auto dir = tmp("lb_grid");
    write_instance(dir, h);
    ExperimentConfig c = lbdemo_defaults();
    c.extra["instance_dir"] = dir.string();
    c.extra["signal"] = {{(*h.X_set)[0], 1.0}, {(*h.Y_set)[0], -1.0}};
    c.solvers = {"identity"};
    c.m_grid = {2};
    c.trials = 10;
    c.output_dir = tmp("lb_grid_out").string();
    ExperimentResult r = run_lb_demo(c);
    const SummaryRow* id = r.row("identity", 2);
    ASSERT_NE(id, nullptr);
    EXPECT_EQ(id->failures, 0);
    EXPECT_LE(id->recovery_rate, 0.2);
    EXPECT_EQ(r.report["signal_kind"], "explicit");
    EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(c.output_dir) / "lbdemo_trials.csv"));
}

TEST(TwScaling, ErrorDecreasesInM) {
    ExperimentConfig c = twscale_defaults();
    c.n = 64;
    c.k = 2;
    c.m_grid = {100, 400, 1600};
    c.trials = 4;
    c.sigma = 0.5;
    c.extra["t_list"] = {1, 2};
    ExperimentResult r = run_tw_scaling(c);
    EXPECT_TRUE(error_trend_decreasing(r));
    EXPECT_EQ(r.summary.size(), 2u * 2u * 3u);
    EXPECT_TRUE(r.report["error_times_m_vs_t_loglog_slope"].contains("lasso"));
}

TEST(TwScaling, NoiselessRecoversExactly) {
    ExperimentConfig c = twscale_defaults();
    c.n = 64;
    c.k = 2;
    c.m_grid = {300};
    c.trials = 5;
    c.sigma = 0.0;
    c.extra["t_list"] = {1, 2};
    ExperimentResult r = run_tw_scaling(c);
    for (const auto& s : r.summary) EXPECT_GE(s.recovery_rate, 0.8) << s.solver;
}
