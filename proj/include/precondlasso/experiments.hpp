#pragma once

#include "precondlasso/hard_instances.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

namespace precondlasso {

struct ExperimentConfig {
    std::string name = "experiment";
    std::string model = "random-walk";
    Index n = 256;
    std::vector<std::string> solvers;
    std::vector<Index> m_grid;
    Index trials = 20;
    std::uint64_t seed = 1;
    Index k = 2;
    double sigma = 0.0;
    std::string output_dir;
    nlohmann::json extra = nlohmann::json::object();

    void validate() const {
        if (trials < 1) throw std::invalid_argument("config: trials < 1");
        if (m_grid.empty()) throw std::invalid_argument("config: empty m-grid");
        for (std::size_t i = 1; i < m_grid.size(); ++i)
            if (m_grid[i] <= m_grid[i - 1]) throw std::invalid_argument("config: m-grid not ascending");
        for (Index m : m_grid)
            if (m < 1) throw std::invalid_argument("config: m < 1");
    }
};

inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
    c.name = j.value("name", c.name);
    c.model = j.value("model", c.model);
    c.n = j.value("n", c.n);
    if (j.contains("solvers")) c.solvers = j["solvers"].get<std::vector<std::string>>();
    if (j.contains("m_grid")) c.m_grid = j["m_grid"].get<std::vector<Index>>();
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    c.k = j.value("k", c.k);
    c.sigma = j.value("sigma", c.sigma);
    c.output_dir = j.value("output_dir", c.output_dir);
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::set<std::string> known{"name", "model", "n", "solvers", "m_grid", "trials",
                                                 "seed", "k", "sigma", "output_dir"};
        if (!known.count(it.key())) c.extra[it.key()] = it.value();
    }
    return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j = c.extra;
    j["name"] = c.name;
    j["model"] = c.model;
    j["n"] = c.n;
    j["solvers"] = c.solvers;
    j["m_grid"] = c.m_grid;
    j["trials"] = c.trials;
    j["seed"] = c.seed;
    j["k"] = c.k;
    j["sigma"] = c.sigma;
    j["output_dir"] = c.output_dir;
    return j;
}

inline std::uint64_t trial_stream_id(const std::string& experiment, const std::string& solver, Index m, Index trial) {
    std::uint64_t h = hash_string(experiment);
    h = hash_combine(h, hash_string(solver));
    h = hash_combine(h, static_cast<std::uint64_t>(m));
    return hash_combine(h, static_cast<std::uint64_t>(trial));
}

struct TrialRecord {
    std::string experiment, solver;
    Index m = 0, trial = 0;
    double l2_error = std::numeric_limits<double>::quiet_NaN();
    double mahalanobis_error = std::numeric_limits<double>::quiet_NaN();
    bool exact_recovery = false;
    double seconds = 0.0;
    std::string status = "ok";
    std::map<std::string, double> extra;
};

struct SummaryRow {
    std::string solver;
    Index m = 0;
    Index trials = 0, failures = 0;
    double mean_l2 = 0.0, mean_mahalanobis = 0.0, recovery_rate = 0.0;
};

struct ExperimentResult {
    std::vector<TrialRecord> records;
    std::vector<SummaryRow> summary;
    nlohmann::json report = nlohmann::json::object();

    // Smallest grid m with recovery rate ≥ rate; -1 if none.
    Index minimal_m(const std::string& solver, double rate = 0.9) const {
        for (const auto& s : summary)
            if (s.solver == solver && s.recovery_rate >= rate) return s.m;
        return -1;
    }
    const SummaryRow* row(const std::string& solver, Index m) const {
        for (const auto& s : summary)
            if (s.solver == solver && s.m == m) return &s;
        return nullptr;
    }
};

namespace detail {

inline std::string fmt_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

}  // namespace detail

inline std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& records) {
    std::vector<SummaryRow> out;
    std::map<std::pair<std::string, Index>, std::size_t> index;
    std::vector<Index> counted;
    for (const auto& r : records) {
        auto key = std::make_pair(r.solver, r.m);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, out.size()).first;
            out.push_back({r.solver, r.m});
            counted.push_back(0);
        }
        SummaryRow& s = out[it->second];
        ++s.trials;
        if (r.status != "ok") {
            ++s.failures;
            continue;
        }
        ++counted[it->second];
        s.mean_l2 += r.l2_error;
        s.mean_mahalanobis += r.mahalanobis_error;
        s.recovery_rate += r.exact_recovery ? 1.0 : 0.0;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        double c = static_cast<double>(counted[i]);
        out[i].mean_l2 = c > 0 ? out[i].mean_l2 / c : std::numeric_limits<double>::quiet_NaN();
        out[i].mean_mahalanobis = c > 0 ? out[i].mean_mahalanobis / c : std::numeric_limits<double>::quiet_NaN();
        out[i].recovery_rate /= static_cast<double>(out[i].trials);
    }
    return out;
}

inline std::string records_csv(const std::vector<TrialRecord>& records) {
    std::set<std::string> extra;
    for (const auto& r : records)
        for (const auto& [k, v] : r.extra) extra.insert(k);
    std::ostringstream os;
    os << "experiment,solver,m,trial,l2_error,mahalanobis_error,exact_recovery,status";
    for (const auto& k : extra) os << ',' << k;
    os << '\n';
    for (const auto& r : records) {
        os << detail::csv_escape(r.experiment) << ',' << detail::csv_escape(r.solver) << ',' << r.m << ',' << r.trial
           << ',' << detail::fmt_double(r.l2_error) << ',' << detail::fmt_double(r.mahalanobis_error) << ','
           << (r.exact_recovery ? 1 : 0) << ',' << detail::csv_escape(r.status);
        for (const auto& k : extra) {
            auto it = r.extra.find(k);
            os << ',' << (it == r.extra.end() ? std::string() : detail::fmt_double(it->second));
        }
        os << '\n';
    }
    return os.str();
}

inline std::string timings_csv(const std::vector<TrialRecord>& records) {
    std::ostringstream os;
    os << "solver,m,trial,seconds\n";
    for (const auto& r : records)
        os << detail::csv_escape(r.solver) << ',' << r.m << ',' << r.trial << ',' << detail::fmt_double(r.seconds) << '\n';
    return os.str();
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::ostringstream os;
    os << "solver,m,trials,failures,mean_l2_error,mean_mahalanobis_error,recovery_rate\n";
    for (const auto& s : rows)
        os << detail::csv_escape(s.solver) << ',' << s.m << ',' << s.trials << ',' << s.failures << ','
           << detail::fmt_double(s.mean_l2) << ',' << detail::fmt_double(s.mean_mahalanobis) << ','
           << detail::fmt_double(s.recovery_rate) << '\n';
    return os.str();
}

// CSV reading and SVG plotting -------------------------------------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    Index column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<Index>(i);
        return -1;
    }
};

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false, any = false;
    auto end_row = [&] {
        fields.push_back(cur);
        cur.clear();
        if (t.header.empty())
            t.header = fields;
        else if (!(fields.size() == 1 && fields[0].empty()))
            t.rows.push_back(fields);
        fields.clear();
        any = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        any = true;
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c == '\n') {
            end_row();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (quoted) throw MalformedCSV("unterminated quote");
    if (any) end_row();
    if (t.header.empty()) throw MalformedCSV("missing header");
    for (const auto& r : t.rows)
        if (r.size() != t.header.size()) throw MalformedCSV("row width differs from header");
    return t;
}

inline double parse_number(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw MalformedCSV("bad number '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        throw MalformedCSV("bad number '" + s + "'");
    }
}

// One series per solver of mean error against m; log-x, log-y.
inline std::string emit_plot(const std::string& csv_text, const std::string& title = "") {
    CsvTable t = parse_csv(csv_text);
    Index cs = t.column("solver"), cm = t.column("m");
    Index cy = t.column("mean_l2_error");
    if (cy < 0) cy = t.column("l2_error");
    if (cy < 0) cy = t.column("mean_mahalanobis_error");
    if (cs < 0 || cm < 0 || cy < 0) throw MalformedCSV("need solver, m and an error column");
    std::map<std::string, std::map<double, std::pair<double, Index>>> series;
    std::vector<std::string> order;
    for (const auto& r : t.rows) {
        double m = parse_number(r[cm]), y = parse_number(r[cy]);
        if (!series.count(r[cs])) order.push_back(r[cs]);
        auto& pt = series[r[cs]][m];
        if (std::isfinite(y)) {
            pt.first += y;
            pt.second += 1;
        }
    }
    const double W = 640, H = 420, L = 70, R = 160, T = 40, B = 50;
    double xmin = 1, xmax = 10, ymin = 1e-6, ymax = 1;
    bool first = true;
    for (auto& [name, pts] : series)
        for (auto& [m, acc] : pts) {
            if (acc.second == 0 || !(m > 0)) continue;
            double y = std::max(acc.first / static_cast<double>(acc.second), 1e-12);
            if (first) {
                xmin = xmax = m;
                ymin = ymax = y;
                first = false;
            }
            xmin = std::min(xmin, m);
            xmax = std::max(xmax, m);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    double lx0 = std::floor(std::log10(xmin)), lx1 = std::ceil(std::log10(xmax));
    double ly0 = std::floor(std::log10(ymin)), ly1 = std::ceil(std::log10(ymax));
    if (lx1 <= lx0) lx1 = lx0 + 1;
    if (ly1 <= ly0) ly1 = ly0 + 1;
    auto px = [&](double m) { return L + (std::log10(m) - lx0) / (lx1 - lx0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (std::log10(std::max(y, 1e-12)) - ly0) / (ly1 - ly0) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream os;
    char buf[256];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
       << ' ' << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty()) os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L, H - B,
                  W - R, H - B);
    os << buf;
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L, T, L,
                  H - B);
    os << buf;
    for (double e = lx0; e <= lx1; e += 1) {
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"11\">1e%d</text>\n",
                      px(std::pow(10.0, e)), H - B + 16, static_cast<int>(e));
        os << buf;
    }
    for (double e = ly0; e <= ly1; e += 1) {
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-size=\"11\">1e%d</text>\n",
                      L - 6, py(std::pow(10.0, e)) + 4, static_cast<int>(e));
        os << buf;
    }
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">m</text>\n";
    os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 " << (T + H - B) / 2
       << ")\" text-anchor=\"middle\">error</text>\n";
    std::size_t ci = 0;
    for (const auto& name : order) {
        const char* color = colors[ci % 6];
        std::string pts;
        for (const auto& [m, acc] : series[name]) {
            if (acc.second == 0 || !(m > 0)) continue;
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(m), py(acc.first / static_cast<double>(acc.second)));
            pts += buf;
        }
        if (!pts.empty()) {
            pts.pop_back();
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
        }
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" fill=\"%s\">%s</text>\n", W - R + 10,
                      T + 16.0 * static_cast<double>(ci + 1), color, name.c_str());
        os << buf;
        ++ci;
    }
    os << "</svg>\n";
    return os.str();
}

// Harness -------------------------------------------------------------------------------------------

struct TrialData {
    DenseMatrix X;
    Vector Y;
    Vector w_star;
};

using DataFn = std::function<TrialData(RngStream&, Index m)>;
using SolveFn = std::function<SolverReport(const TrialData&)>;
using ExtraFn = std::function<void(const TrialData&, const SolverReport*, TrialRecord&)>;

struct SolverEntry {
    std::string name;
    SolveFn solve;
    ExtraFn extra;
};

inline std::vector<TrialRecord> run_trials(const std::string& experiment, const std::vector<SolverEntry>& solvers,
                                           const std::vector<Index>& m_grid, Index trials, std::uint64_t seed,
                                           const DataFn& data, const DenseMatrix* sigma) {
    std::vector<TrialRecord> out;
    for (const auto& s : solvers)
        for (Index m : m_grid)
            for (Index t = 0; t < trials; ++t) {
                TrialRecord rec;
                rec.experiment = experiment;
                rec.solver = s.name;
                rec.m = m;
                rec.trial = t;
                try {
                    RngStream stream(seed, trial_stream_id(experiment, s.name, m, t));
                    TrialData d = data(stream, m);
                    SolverReport rep = s.solve(d);
                    attach_errors(rep, d.w_star, sigma);
                    rec.l2_error = rep.l2_error.value_or(std::numeric_limits<double>::quiet_NaN());
                    rec.mahalanobis_error = rep.mahalanobis_error.value_or(std::numeric_limits<double>::quiet_NaN());
                    rec.exact_recovery = exact_recovery(rec.l2_error, d.w_star);
                    rec.seconds = rep.seconds;
                    if (s.extra) s.extra(d, &rep, rec);
                } catch (const Error& e) {
                    rec.status = e.what();
                }
                out.push_back(std::move(rec));
            }
    return out;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << text;
}

inline void write_outputs(const std::filesystem::path& dir, const std::string& stem, const ExperimentResult& r) {
    if (dir.empty()) return;
    std::string trials = records_csv(r.records), summary = summary_csv(r.summary);
    write_text(dir / (stem + "_trials.csv"), trials);
    write_text(dir / (stem + "_summary.csv"), summary);
    write_text(dir / (stem + "_timings.csv"), timings_csv(r.records));
    write_text(dir / (stem + ".svg"), emit_plot(summary, stem));
    write_text(dir / (stem + "_report.json"), r.report.dump(2) + "\n");
}

// Figure-1 separation --------------------------------------------------------------------------------

inline ExperimentConfig fig1_defaults() {
    ExperimentConfig c;
    c.name = "fig1";
    c.model = "random-walk";
    c.n = 4096;
    c.solvers = {"preconditioned-bp", "plain-bp", "standardized-bp"};
    c.m_grid = {5, 10, 15, 20, 25, 30, 40, 50, 75, 100, 125, 150, 175, 200, 225, 250, 275, 300, 350, 400, 450, 500};
    c.trials = 20;
    c.k = 2;
    return c;
}

inline ExperimentResult run_fig1(const ExperimentConfig& cfg) {
    cfg.validate();
    const Index n = cfg.n;
    if (n < 256 || (n & (n - 1)) != 0) throw std::invalid_argument("run_fig1: n must be a power of two >= 256");
    PrecisionModel model = make_random_walk(n);
    StandardizedWalk sw = make_standardized_walk(n);
    CovariateSampler sampler(model.theta);
    Vector w = Vector::Zero(n);
    w(n - 2) = -3.0;
    w(n - 1) = 3.0;
    DataFn data = [&](RngStream& s, Index m) {
        TrialData d;
        d.X = sampler.sample(m, s);
        d.Y = d.X * w;
        d.w_star = w;
        return d;
    };
    std::optional<Preconditioner> pre;
    std::vector<SolverEntry> solvers;
    for (const auto& name : cfg.solvers) {
        if (name == "plain-bp") {
            SparseMatrix I = sparse_identity(n);
            solvers.push_back({name, [I](const TrialData& d) { return basis_pursuit(d.X, d.Y, I); }, {}});
        } else if (name == "standardized-bp") {
            solvers.push_back({name, [&sw](const TrialData& d) { return basis_pursuit(d.X, d.Y, sw.S); }, {}});
        } else if (name == "preconditioned-bp") {
            if (!pre) pre = preconditioner_from_sigma(*model.sigma, model.support);
            solvers.push_back({name, [&pre](const TrialData& d) { return basis_pursuit(d.X, d.Y, *pre); }, {}});
        } else {
            throw std::invalid_argument("run_fig1: unknown solver " + name);
        }
    }
    const DenseMatrix* sigma = model.sigma ? &*model.sigma : nullptr;
    ExperimentResult r;
    r.records = run_trials(cfg.name, solvers, cfg.m_grid, cfg.trials, cfg.seed, data, sigma);
    r.summary = summarize(r.records);
    r.report["config"] = config_to_json(cfg);
    for (const auto& name : cfg.solvers) r.report["minimal_m_90"][name] = r.minimal_m(name, 0.9);
    write_outputs(cfg.output_dir, cfg.name, r);
    return r;
}

// Separation check: m(pre) ≤ m(plain)/3 and m(pre) ≤ m(std)/2; unreached m counts as beyond the grid.
inline bool fig1_separation_holds(const ExperimentResult& r, Index grid_max) {
    auto mm = [&](const std::string& s) {
        Index v = r.minimal_m(s, 0.9);
        return v < 0 ? 2 * grid_max + 1 : v;
    };
    Index pre = r.minimal_m("preconditioned-bp", 0.9);
    if (pre < 0) return false;
    return 3 * pre <= mm("plain-bp") && 2 * pre <= mm("standardized-bp");
}

// Lower-bound demo -------------------------------------------------------------------------------

// Design sampler and covariance for the demo's covariate law.
struct CovariateLaw {
    std::function<DenseMatrix(Index, RngStream&)> sample;
    DenseMatrix sigma;
    SparseMatrix theta;
    Graph support;
    std::string kind;
};

inline CovariateLaw law_from_model(const PrecisionModel& m) {
    CovariateLaw law;
    auto sampler = std::make_shared<CovariateSampler>(m.theta);
    law.sample = [sampler](Index rows, RngStream& s) { return sampler->sample(rows, s); };
    if (m.sigma)
        law.sigma = *m.sigma;
    else {
        Eigen::SimplicialLLT<SparseMatrix> llt(m.theta);
        law.sigma = llt.solve(DenseMatrix::Identity(m.n(), m.n()));
    }
    law.theta = m.theta;
    law.support = m.support;
    law.kind = m.label;
    return law;
}

// Spectral law for near-singular Θ̃: x = U·diag((λ+ε)^{-1/2})·z.
inline CovariateLaw law_from_instance(const HardInstance& h) {
    if (h.n() > 2048) throw TooLarge("spectral sampler limited to n <= 2048");
    CovariateLaw law;
    DenseMatrix T(h.theta0);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (T + T.transpose()));
    Vector scale = (es.eigenvalues().array().max(0.0) + h.epsilon).rsqrt();
    auto U = std::make_shared<DenseMatrix>(es.eigenvectors());
    auto sc = std::make_shared<Vector>(scale);
    law.sample = [U, sc](Index rows, RngStream& s) {
        DenseMatrix z = gaussian_draw(s, rows, U->cols());
        return DenseMatrix((z * sc->asDiagonal()) * U->transpose());
    };
    law.sigma = es.eigenvectors() * scale.array().square().matrix().asDiagonal() * es.eigenvectors().transpose();
    law.theta = h.theta_tilde;
    law.support = h.support;
    law.kind = h.label;
    return law;
}

inline PrecisionModel model_from_name(const std::string& name, Index n) {
    if (name == "random-walk") return make_random_walk(n);
    if (name == "standardized-walk") return make_standardized_walk(n).model;
    if (name == "identity") return make_identity_model(n);
    if (name.rfind("banded:", 0) == 0) return make_banded_walk(n, std::stoll(name.substr(7)));
    if (name.rfind("dir:", 0) == 0) return read_model(name.substr(4));
    throw std::invalid_argument("unknown model " + name);
}

inline ExperimentConfig lbdemo_defaults() {
    ExperimentConfig c;
    c.name = "lbdemo";
    c.model = "identity";
    c.n = 256;
    c.solvers = {"identity"};
    c.m_grid = {2};
    c.trials = 20;
    c.k = 2;
    return c;
}

// extra keys: instance_dir, signal ("alpha" or [[i, v], …]), alpha_guard, witness_subspace ("spaced"|"top-eigen").
inline ExperimentResult run_lb_demo(const ExperimentConfig& cfg) {
    cfg.validate();
    CovariateLaw law;
    bool from_instance = cfg.extra.contains("instance_dir");
    if (from_instance)
        law = law_from_instance(read_instance(cfg.extra["instance_dir"].get<std::string>()));
    else
        law = law_from_model(model_from_name(cfg.model, cfg.n));
    const Index n = law.sigma.rows();

    Vector w = Vector::Zero(n);
    nlohmann::json signal = cfg.extra.value("signal", nlohmann::json("alpha"));
    std::string signal_kind = "explicit";
    if (signal.is_string() && signal.get<std::string>() == "alpha") {
        AlphaOptions ao;
        ao.support_guard = cfg.extra.value("alpha_guard", 1e5);
        AlphaResult a;
        try {
            a = alpha_l1(law.sigma, sparse_identity(n), cfg.k, AlphaMode::Exact, ao);
            signal_kind = "alpha-exact";
        } catch (const TooLarge&) {
            a = alpha_l1(law.sigma, sparse_identity(n), cfg.k, AlphaMode::Multistart, ao);
            signal_kind = "alpha-multistart";
        }
        w = a.w / a.w.cwiseAbs().maxCoeff();
    } else {
        for (const auto& e : signal) w(e.at(0).get<Index>()) = e.at(1).get<double>();
    }

    std::string wsub = cfg.extra.value("witness_subspace", from_instance ? "top-eigen" : "spaced");
    Eigen::SelfAdjointEigenSolver<DenseMatrix> ses;
    if (wsub == "top-eigen") ses.compute(law.sigma);

    DataFn data = [&](RngStream& s, Index m) {
        TrialData d;
        d.X = law.sample(m, s);
        double scale = d.X.cwiseAbs().maxCoeff();
        if (scale > 0) d.X /= scale;   // BP is invariant to a common rescaling of (X, Y)
        d.Y = d.X * w;
        d.w_star = w;
        return d;
    };

    std::vector<SolverEntry> solvers;
    std::vector<std::shared_ptr<SparseMatrix>> mats;
    for (const auto& name : cfg.solvers) {
        auto S = std::make_shared<SparseMatrix>();
        if (name == "identity")
            *S = sparse_identity(n);
        else if (name == "cholesky")
            *S = DenseMatrix(cholesky_spd(law.sigma)).sparseView();
        else
            *S = read_preconditioner(name).S;
        mats.push_back(S);
        ExtraFn extra = [&, S](const TrialData& d, const SolverReport*, TrialRecord& rec) {
            const Index m = d.X.rows();
            const Index dim = std::min<Index>(n, 2 * m);
            DenseMatrix V = wsub == "top-eigen" ? DenseMatrix(ses.eigenvectors().rightCols(dim))
                                                : spaced_coordinate_span(n, m);
            try {
                FailureWitness f = failure_witness(d.X, law.sigma, *S, w, V);
                rec.extra["witness_beats"] = f.beats ? 1.0 : 0.0;
            } catch (const Error&) {
                rec.extra["witness_beats"] = std::numeric_limits<double>::quiet_NaN();
            }
        };
        solvers.push_back({name, [S](const TrialData& d) { return basis_pursuit(d.X, d.Y, *S); }, extra});
    }
    ExperimentResult r;
    r.records = run_trials(cfg.name, solvers, cfg.m_grid, cfg.trials, cfg.seed, data, &law.sigma);
    r.summary = summarize(r.records);
    r.report["config"] = config_to_json(cfg);
    r.report["signal_kind"] = signal_kind;
    nlohmann::json sj = nlohmann::json::array();
    for (Index i = 0; i < n; ++i)
        if (w(i) != 0.0) sj.push_back({i, w(i)});
    r.report["signal"] = sj;
    write_outputs(cfg.output_dir, cfg.name, r);
    return r;
}

// Treewidth scaling -------------------------------------------------------------------------------

inline ExperimentConfig twscale_defaults() {
    ExperimentConfig c;
    c.name = "twscale";
    c.model = "banded";
    c.n = 256;
    c.solvers = {"lasso", "iht"};
    c.m_grid = {200, 400, 800, 1600};
    c.trials = 10;
    c.k = 4;
    c.sigma = 0.5;
    c.extra["t_list"] = {1, 2, 4, 8};
    return c;
}

inline ExperimentResult run_tw_scaling(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<Index> ts = cfg.extra.value("t_list", std::vector<Index>{1, 2, 4});
    const bool empirical = cfg.extra.value("preconditioner", std::string("empirical")) == "empirical";
    ExperimentResult r;
    nlohmann::json fits;
    for (Index t : ts) {
        PrecisionModel model = make_banded_walk(cfg.n, t);
        const Index n = model.n();
        CovariateSampler sampler(model.theta);
        TreeDecomposition td = min_fill_tree_decomposition(model.support);
        CentroidTree tree = build_centroid_tree(model.support, td);
        Preconditioner known = graphical_cholesky(*model.sigma, tree, CovarianceMode::Known);
        RngStream sig(cfg.seed, hash_combine(hash_string(cfg.name + "/signal"), static_cast<std::uint64_t>(t)));
        Vector w = Vector::Zero(n);
        for (Index i : random_subset(sig, n, std::min(cfg.k, n))) w(i) = sig.bernoulli(0.5) ? 1.0 : -1.0;
        DataFn data = [&](RngStream& s, Index m) {
            TrialData d;
            d.X = sampler.sample(m, s);
            d.w_star = w;
            d.Y = d.X * w;
            for (Index i = 0; i < m; ++i) d.Y(i) += cfg.sigma * s.normal();
            return d;
        };
        auto precond = [&](const TrialData& d) {
            return empirical ? graphical_cholesky(empirical_covariance(d.X), tree, CovarianceMode::Empirical) : known;
        };
        std::vector<SolverEntry> solvers;
        for (const auto& name : cfg.solvers) {
            std::string label = name + "-t" + std::to_string(t);
            if (name == "lasso") {
                solvers.push_back({label, [&](const TrialData& d) {
                                      Preconditioner p = precond(d);
                                      if (cfg.sigma == 0.0) return basis_pursuit(d.X, d.Y, p);
                                      DenseMatrix Z = p.precondition_design(d.X);
                                      double lam = default_lasso_lambda(ridge_sigma_estimate(Z, d.Y), n, d.X.rows());
                                      return lasso_preconditioned(d.X, d.Y, p, lam);
                                  },
                                   {}});
            } else if (name == "iht") {
                solvers.push_back({label, [&](const TrialData& d) {
                                      IhtOptions o;
                                      o.sigma_eff = cfg.sigma;
                                      return iht_model_based(d.X, d.Y, precond(d), cfg.k, o);
                                  },
                                   {}});
            } else {
                throw std::invalid_argument("run_tw_scaling: unknown solver " + name);
            }
        }
        auto recs = run_trials(cfg.name, solvers, cfg.m_grid, cfg.trials, cfg.seed, data, &*model.sigma);
        r.records.insert(r.records.end(), recs.begin(), recs.end());
    }
    r.summary = summarize(r.records);
    // Slope of log(mean over m of error·m) against log t, per solver.
    for (const auto& name : cfg.solvers) {
        std::vector<double> lx, ly;
        for (Index t : ts) {
            double acc = 0.0;
            Index c = 0;
            for (Index m : cfg.m_grid)
                if (const SummaryRow* s = r.row(name + "-t" + std::to_string(t), m); s && std::isfinite(s->mean_mahalanobis)) {
                    acc += s->mean_mahalanobis * static_cast<double>(m);
                    ++c;
                }
            if (c > 0 && acc > 0) {
                lx.push_back(std::log(static_cast<double>(t)));
                ly.push_back(std::log(acc / static_cast<double>(c)));
            }
        }
        double slope = std::numeric_limits<double>::quiet_NaN();
        if (lx.size() >= 2) {
            double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
            double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
            double sxy = 0, sxx = 0;
            for (std::size_t i = 0; i < lx.size(); ++i) {
                sxy += (lx[i] - mx) * (ly[i] - my);
                sxx += (lx[i] - mx) * (lx[i] - mx);
            }
            if (sxx > 0) slope = sxy / sxx;
        }
        fits[name] = slope;
    }
    r.report["config"] = config_to_json(cfg);
    r.report["error_times_m_vs_t_loglog_slope"] = fits;
    write_outputs(cfg.output_dir, cfg.name, r);
    return r;
}

// Mean error decreases from the first to the last grid m for every series.
inline bool error_trend_decreasing(const ExperimentResult& r) {
    std::map<std::string, std::vector<double>> by;
    for (const auto& s : r.summary) by[s.solver].push_back(s.mean_mahalanobis);
    for (const auto& [name, v] : by)
        if (v.size() >= 2 && !(v.back() < v.front())) return false;
    return true;
}

}  // namespace precondlasso
