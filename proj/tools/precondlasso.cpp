#include "precondlasso/precondlasso.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace pl = precondlasso;

namespace {

struct Common {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    bool check = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>("--seed", [&c](const std::uint64_t& s) { c.seed = s; c.seed_set = true; },
                                            "master seed");
    sub->add_option("--out", c.out, "output directory");
    sub->add_flag("--assert", c.check, "exit 2 when the run's acceptance check fails");
}

pl::ExperimentConfig load(const Common& c, pl::ExperimentConfig defaults) {
    pl::ExperimentConfig cfg = defaults;
    if (!c.config_path.empty()) {
        std::ifstream is(c.config_path);
        cfg = pl::config_from_json(nlohmann::json::parse(is), cfg);
    }
    if (c.seed_set) cfg.seed = c.seed;
    if (!c.out.empty()) cfg.output_dir = c.out;
    return cfg;
}

// "expect": [{"solver": s, "m": m, "min_rate": r} | {"max_rate": r}] checked against the summary.
bool expectations_hold(const pl::ExperimentConfig& cfg, const pl::ExperimentResult& r) {
    if (!cfg.extra.contains("expect")) return true;
    bool ok = true;
    for (const auto& e : cfg.extra["expect"]) {
        const std::string solver = e.at("solver").get<std::string>();
        const pl::Index m = e.at("m").get<pl::Index>();
        const pl::SummaryRow* row = r.row(solver, m);
        if (!row) {
            std::cerr << "expect: no summary row for " << solver << " m=" << m << "\n";
            ok = false;
            continue;
        }
        if (e.contains("min_rate") && row->recovery_rate < e["min_rate"].get<double>()) ok = false;
        if (e.contains("max_rate") && row->recovery_rate > e["max_rate"].get<double>()) ok = false;
    }
    return ok;
}

void print_summary(const pl::ExperimentResult& r) { std::cout << pl::summary_csv(r.summary); }

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Preconditioned sparse regression experiments"};
    app.require_subcommand(1);

    Common c_fig1, c_lb, c_tw;
    auto* fig1 = app.add_subcommand("fig1", "random-walk separation experiment");
    add_common(fig1, c_fig1);
    auto* lb = app.add_subcommand("lbdemo", "lower-bound demonstration on a hard instance");
    add_common(lb, c_lb);
    auto* tw = app.add_subcommand("twscale", "treewidth scaling of lasso and IHT");
    add_common(tw, c_tw);

    auto* compat = app.add_subcommand("compat", "compatibility diagnostics for a model");
    std::string c_model = "random-walk", c_pre = "identity", c_out;
    pl::Index c_n = 64, c_m = 4, c_k = 2;
    compat->add_option("--model", c_model, "random-walk|standardized-walk|identity|banded:<t>|dir:<path>");
    compat->add_option("--preconditioner", c_pre, "identity|cholesky|graphical|<dir>");
    compat->add_option("--n", c_n);
    compat->add_option("--m", c_m);
    compat->add_option("--k", c_k);
    compat->add_option("--out", c_out, "write JSON here instead of stdout");

    auto* gen = app.add_subcommand("gen", "generate a hard instance");
    std::string g_kind = "grid", g_mode = "compact", g_out;
    pl::Index g_p = 2, g_n = 512;
    std::uint64_t g_seed = 1;
    gen->add_option("--kind", g_kind, "grid|expander")->check(CLI::IsMember({"grid", "expander"}));
    gen->add_option("--mode", g_mode, "compact|faithful")->check(CLI::IsMember({"compact", "faithful"}));
    gen->add_option("--p", g_p);
    gen->add_option("--n", g_n);
    gen->add_option("--seed", g_seed);
    gen->add_option("--out", g_out)->required();

    auto* plot = app.add_subcommand("plot", "render a CSV as SVG");
    std::string p_csv, p_out, p_title;
    plot->add_option("--csv", p_csv)->required()->check(CLI::ExistingFile);
    plot->add_option("--out", p_out)->required();
    plot->add_option("--title", p_title);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fig1) {
            auto cfg = load(c_fig1, pl::fig1_defaults());
            auto r = pl::run_fig1(cfg);
            print_summary(r);
            std::cout << r.report["minimal_m_90"].dump() << "\n";
            if (c_fig1.check && !(pl::fig1_separation_holds(r, cfg.m_grid.back()) && expectations_hold(cfg, r)))
                return 2;
        } else if (*lb) {
            auto cfg = load(c_lb, pl::lbdemo_defaults());
            auto r = pl::run_lb_demo(cfg);
            print_summary(r);
            if (c_lb.check && !expectations_hold(cfg, r)) return 2;
        } else if (*tw) {
            auto cfg = load(c_tw, pl::twscale_defaults());
            auto r = pl::run_tw_scaling(cfg);
            print_summary(r);
            std::cout << r.report["error_times_m_vs_t_loglog_slope"].dump() << "\n";
            if (c_tw.check && !(pl::error_trend_decreasing(r) && expectations_hold(cfg, r))) return 2;
        } else if (*compat) {
            pl::PrecisionModel model = pl::model_from_name(c_model, c_n);
            pl::CovariateLaw law = pl::law_from_model(model);
            pl::SparseMatrix S;
            if (c_pre == "identity")
                S = pl::sparse_identity(model.n());
            else if (c_pre == "cholesky")
                S = pl::DenseMatrix(pl::cholesky_spd(law.sigma)).sparseView();
            else if (c_pre == "graphical")
                S = pl::preconditioner_from_sigma(law.sigma, model.support).S;
            else
                S = pl::read_preconditioner(c_pre).S;
            auto j = pl::compat_json(pl::compat_report(law.sigma, S, c_m, c_k));
            if (c_out.empty())
                std::cout << j.dump(2) << "\n";
            else
                pl::write_text(c_out, j.dump(2) + "\n");
        } else if (*gen) {
            pl::RngStream rng(g_seed, pl::hash_string("gen/" + g_kind));
            pl::HardInstance h;
            if (g_kind == "grid") {
                pl::GridOptions o;
                o.mode = g_mode == "compact" ? pl::GridMode::Compact : pl::GridMode::Faithful;
                h = pl::grid_instance(g_p, rng, o);
            } else {
                h = pl::expander_instance(g_n, rng);
            }
            pl::write_instance(g_out, h);
            std::cout << h.certificate.dump(2) << "\n";
        } else if (*plot) {
            pl::write_text(p_out, pl::emit_plot(slurp(p_csv), p_title));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
