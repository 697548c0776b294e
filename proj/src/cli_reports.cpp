#include "holokit/cli_reports.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace holokit {

namespace {

const cplx I(0.0, 1.0);

[[noreturn]] void schema_error(const std::string& field, const std::string& what) {
    throw Error(ErrorKind::schema, "invalid-config", field + ": " + what);
}

cplx parse_cplx(const Json& j, const std::string& field) {
    if (j.is_number()) return j.get<double>();
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
        return {j[0].get<double>(), j[1].get<double>()};
    }
    schema_error(field, "expected a number or [re, im]");
}

CPoint parse_point(const Json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) schema_error(field, "expected a non-empty array of complex entries");
    CPoint z(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        z[static_cast<Eigen::Index>(i)] = parse_cplx(j[i], field + "[" + std::to_string(i) + "]");
    }
    return z;
}

Json to_json(cplx c) { return Json::array({c.real(), c.imag()}); }

Json to_json(const CPoint& z) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < z.size(); ++i) a.push_back(to_json(z[i]));
    return a;
}

Json to_json(const CMatrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(CPoint(m.row(i).transpose())));
    return rows;
}

Json to_json(const ConvergenceReport& c) {
    Json j;
    j["converged"] = c.converged;
    j["limit"] = c.limit ? Json(*c.limit) : Json(nullptr);
    j["window"] = c.window;
    j["tol"] = c.tol;
    j["count"] = c.values.size();
    const std::size_t start = c.values.size() > static_cast<std::size_t>(c.window)
                                  ? c.values.size() - static_cast<std::size_t>(c.window)
                                  : 0;
    j["tail"] = std::vector<double>(c.values.begin() + static_cast<std::ptrdiff_t>(start), c.values.end());
    return j;
}

Json to_json(const ball::BallAutomorphism& t) {
    return Json{{"a", to_json(t.a)}, {"U", to_json(t.U)}};
}

Json to_json(const NormalForm& nf) {
    Json j;
    j["kind"] = to_string(nf.kind);
    j["lambda"] = nf.lambda;
    j["angles"] = nf.angles;
    j["sign"] = nf.sign;
    j["attracting"] = to_json(nf.attracting);
    j["repelling"] = nf.repelling ? to_json(*nf.repelling) : Json(nullptr);
    j["conjugation_error"] = nf.conjugation_error;
    return j;
}

/// Tracks which keys of a JSON object were read; unread keys are schema errors.
class Fields {
public:
    Fields(const Json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_null() && !j_.is_object()) schema_error(prefix_, "expected a table");
    }

    [[nodiscard]] bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

    const Json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const Json& v = raw(key);
        if (!v.is_number()) schema_error(field(key), "expected a number");
        return v.get<double>();
    }
    double number(const std::string& key) {
        require(key);
        return number(key, 0.0);
    }
    std::optional<double> maybe_number(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return number(key, 0.0);
    }
    int integer(const std::string& key, int fallback) {
        if (!has(key)) return fallback;
        const Json& v = raw(key);
        if (!v.is_number_integer()) schema_error(field(key), "expected an integer");
        return v.get<int>();
    }
    std::string text(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        const Json& v = raw(key);
        if (!v.is_string()) schema_error(field(key), "expected a string");
        return v.get<std::string>();
    }
    cplx complex(const std::string& key, cplx fallback) {
        if (!has(key)) return fallback;
        return parse_cplx(raw(key), field(key));
    }
    CPoint point(const std::string& key) {
        require(key);
        return parse_point(raw(key), field(key));
    }
    CPoint point(const std::string& key, const CPoint& fallback) {
        if (!has(key)) return fallback;
        return point(key);
    }
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
        if (!has(key)) return fallback;
        const Json& v = raw(key);
        if (!v.is_array()) schema_error(field(key), "expected an array of numbers");
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number()) schema_error(field(key), "expected an array of numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }
    std::vector<cplx> complexes(const std::string& key) {
        require(key);
        const Json& v = raw(key);
        if (!v.is_array()) schema_error(field(key), "expected an array");
        std::vector<cplx> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(parse_cplx(v[i], field(key) + "[" + std::to_string(i) + "]"));
        }
        return out;
    }

    void require(const std::string& key) const {
        if (!has(key)) schema_error(field(key), "required field missing");
    }
    [[nodiscard]] std::string field(const std::string& key) const { return prefix_ + "." + key; }

    /// Throws on the first key that no one asked for.
    void finish() const {
        if (!j_.is_object()) return;
        for (const auto& [k, v] : j_.items()) {
            if (!used_.count(k)) schema_error(field(k), "unknown field");
        }
    }

private:
    const Json& j_;
    std::string prefix_;
    std::set<std::string> used_;
};

void require_same_domain(const DomainSpec& map_domain, const DomainSpec& declared, const std::string& name) {
    if (map_domain.kind != declared.kind || map_domain.q != declared.q) {
        schema_error("map", name + " acts on " + to_string(map_domain.kind) + " of dimension " +
                                std::to_string(map_domain.q) + " but [domain] declares " +
                                to_string(declared.kind) + " of dimension " + std::to_string(declared.q));
    }
}

HoloMap map_from_fields(Fields& f, const std::string& prefix, const DomainSpec& declared, bool check_domain) {
    const std::string kind = f.text("kind", "");
    if (kind.empty()) schema_error(prefix + ".kind", "required field missing");
    HoloMap m;
    if (kind == "identity") {
        m = identity_map(declared);
    } else if (kind == "ball_translation") {
        m = ball_translation(f.point("a"));
    } else if (kind == "siegel_affine") {
        m = siegel_affine(f.complexes("d"), f.complex("b", 0.0));
    } else if (kind == "siegel_parabolic_shear") {
        m = siegel_parabolic_shear(f.integer("q", declared.q));
    } else if (kind == "egg_automorphism") {
        m = egg_automorphism(f.number("a"));
    } else if (kind == "linear") {
        f.require("matrix");
        const Json& rows = f.raw("matrix");
        if (!rows.is_array() || rows.size() != static_cast<std::size_t>(declared.q)) {
            schema_error(prefix + ".matrix", "expected q rows");
        }
        CMatrix A(declared.q, declared.q);
        for (int i = 0; i < declared.q; ++i) {
            const CPoint r = parse_point(rows[static_cast<std::size_t>(i)], prefix + ".matrix");
            if (r.size() != declared.q) schema_error(prefix + ".matrix", "expected q columns");
            A.row(i) = r.transpose();
        }
        m = linear_map(declared, A);
    } else if (kind == "polynomial") {
        f.require("coordinates");
        const Json& coords = f.raw("coordinates");
        if (!coords.is_array()) schema_error(prefix + ".coordinates", "expected an array of term lists");
        std::vector<std::vector<PolyTerm>> cs;
        for (std::size_t i = 0; i < coords.size(); ++i) {
            std::vector<PolyTerm> terms;
            for (std::size_t t = 0; t < coords[i].size(); ++t) {
                const std::string fld = prefix + ".coordinates[" + std::to_string(i) + "][" + std::to_string(t) + "]";
                Fields term(coords[i][t], fld);
                PolyTerm pt;
                pt.coeff = term.complex("coeff", 1.0);
                for (double e : term.numbers("exponents", {})) pt.exponents.push_back(static_cast<int>(e));
                term.finish();
                terms.push_back(pt);
            }
            cs.push_back(terms);
        }
        m = polynomial_map(declared, cs);
    } else if (kind == "cayley_conjugate") {
        f.require("inner");
        Fields inner(f.raw("inner"), prefix + ".inner");
        const HoloMap s = map_from_fields(inner, prefix + ".inner", make_siegel(declared.q), false);
        inner.finish();
        m = cayley_conjugate(s);
    } else if (kind == "compose") {
        f.require("outer");
        f.require("inner");
        Fields outer(f.raw("outer"), prefix + ".outer");
        Fields inner(f.raw("inner"), prefix + ".inner");
        const HoloMap a = map_from_fields(outer, prefix + ".outer", declared, false);
        const HoloMap b = map_from_fields(inner, prefix + ".inner", declared, false);
        outer.finish();
        inner.finish();
        m = compose(a, b);
    } else {
        schema_error(prefix + ".kind", "unknown map kind '" + kind + "'");
    }
    if (check_domain) require_same_domain(m.domain, declared, kind);
    return m;
}

CPoint default_base(const DomainSpec& d) {
    if (d.kind == DomainKind::siegel) return unit_vector(d.q, 0) * I;
    if (d.center.size() == d.q) return d.center;
    return CPoint::Zero(d.q);
}

// ---------------------------------------------------------------------------
// Verbs. Each fills result / evidence / violations and may set a table.

struct Context {
    const ExperimentConfig& cfg;
    Fields& run;
    Fields& tol;
    Report& report;
    Json& result;
    Json& evidence;
    Json& violations;
};

HoloMap need_map(const Context& c) {
    if (c.cfg.map.is_null()) schema_error("map", "verb '" + c.cfg.verb + "' needs a [map] table");
    return map_from_json(c.cfg.map, c.cfg.domain);
}

void mark_violations(Context& c, int count) {
    if (count > 0 && c.report.exit_code == 0) {
        c.report.exit_code = static_cast<int>(ErrorKind::invariant_violation);
        c.report.body["status"] = "invariant-violation";
    }
}

void verb_kobayashi(Context& c) {
    const CPoint z = c.run.point("z");
    const CPoint w = c.run.point("w");
    const DomainMetric metric(c.cfg.domain);
    c.result["distance"] = metric.distance(z, w);
    c.result["exact"] = metric.exact();
    if (metric.exact()) {
        c.evidence["method"] = "closed form";
        c.evidence["gap"] = 0.0;
    } else {
        const auto s = kobayashi_sandwich(metric.geometry(), z, w);
        c.result["lower"] = s.lower;
        c.result["upper"] = s.upper;
        c.evidence["method"] = "sandwich midpoint";
        c.evidence["gap"] = s.gap();
        c.evidence["lower_witness"] = s.lower_witness;
        c.evidence["upper_witness"] = s.upper_witness;
    }
}

SqueezeBudget squeeze_budget(Context& c) {
    SqueezeBudget b;
    b.iterations = c.tol.integer("squeeze_iterations", b.iterations);
    b.boundary_samples = c.tol.integer("boundary_samples", b.boundary_samples);
    b.verification_samples = c.tol.integer("verification_samples", b.verification_samples);
    b.seed = c.cfg.seed;
    return b;
}

void verb_squeeze(Context& c) {
    const SqueezeBudget budget = squeeze_budget(c);
    c.evidence["verification_samples"] = budget.verification_samples;
    if (c.run.has("point")) {
        const auto s = squeeze_lower(c.cfg.domain, c.run.point("point"), budget);
        c.result["inner_radius"] = s.inner_radius;
        c.result["baseline"] = s.baseline;
        c.result["improved"] = s.improved;
        c.evidence["verified_samples"] = s.verified_samples;
        c.evidence["max_image_norm"] = s.max_image_norm;
    }
    if (c.run.has("trend_zeta")) {
        const CPoint zeta = c.run.point("trend_zeta");
        const CPoint inward = c.run.point("trend_inward", CPoint(-zeta));
        const auto t = squeeze_trend(c.cfg.domain, zeta, inward, c.run.integer("trend_points", 5),
                                     c.run.number("trend_r0", 0.5), budget);
        Json pts = Json::array();
        c.report.table.header = {"distance", "squeeze", "baseline"};
        for (const auto& p : t.points) {
            pts.push_back({{"distance", p.distance}, {"squeeze", p.squeeze}, {"baseline", p.baseline}});
            c.report.table.rows.push_back({p.distance, p.squeeze, p.baseline});
        }
        c.result["trend"] = pts;
        c.result["weakly_convex_center"] = t.weakly_convex_center;
        c.result["non_decreasing"] = t.non_decreasing;
        c.evidence["monotonicity_tol"] = 1e-3;
    }
    if (!c.result.contains("inner_radius") && !c.result.contains("trend")) {
        schema_error("run.point", "squeeze needs run.point or run.trend_zeta");
    }
}

Json classification_json(const ClassificationResult& r) {
    Json j;
    j["type"] = to_string(r.type);
    j["denjoy_wolff"] = to_json(r.denjoy_wolff);
    j["boundary"] = r.boundary;
    j["dilation"] = r.dilation;
    j["divergence_rate"] = r.divergence_rate;
    j["s1"] = r.s1;
    j["rate_dilation_gap"] = r.rate_dilation_gap;
    j["iterations"] = r.iterations;
    return j;
}

void verb_classify(Context& c) {
    const HoloMap f = need_map(c);
    ClassifyBudget b;
    b.max_iter = c.run.integer("max_iter", b.max_iter);
    b.m_max = c.run.integer("m_max", b.m_max);
    b.boundary_tol = c.tol.number("boundary_tol", b.boundary_tol);
    b.decision_tol = c.tol.number("decision_tol", b.decision_tol);
    const auto r = classify(f, c.run.point("x", default_base(f.domain)), b);
    c.result = classification_json(r);
    c.evidence["decision_tol"] = b.decision_tol;
    c.evidence["boundary_tol"] = b.boundary_tol;
    c.evidence["step"] = to_json(r.step_evidence);
    c.evidence["rate"] = to_json(r.rate_evidence.trend);
    c.evidence["rate_m_used"] = r.rate_evidence.m_used;
}

void verb_dilation(Context& c) {
    const HoloMap f = need_map(c);
    const CPoint zeta = c.run.point("zeta");
    const CPoint pole = c.run.point("pole", default_base(f.domain));
    const std::string method = c.run.text("method", "liminf");
    DilationMethod m = DilationMethod::liminf;
    if (method == "geodesic_step") {
        m = DilationMethod::geodesic_step;
    } else if (method != "liminf") {
        schema_error("run.method", "expected liminf or geodesic_step");
    }
    const auto r = dilation(f, zeta, pole, m);
    c.result["value"] = r.value;
    c.result["liminf_value"] = r.liminf_value;
    c.result["geodesic_step_value"] = r.geodesic_step_value;
    c.result["method"] = method;
    c.evidence["trace_count"] = r.trace.size();
    c.report.table.header = {"index", "k(p,z)-k(p,f(z))"};
    for (std::size_t i = 0; i < r.trace.size(); ++i) c.report.table.rows.push_back({double(i), r.trace[i]});
    const std::size_t start = r.trace.size() > 8 ? r.trace.size() - 8 : 0;
    c.evidence["trace_tail"] = std::vector<double>(r.trace.begin() + static_cast<std::ptrdiff_t>(start), r.trace.end());
}

void verb_divergence(Context& c) {
    const HoloMap f = need_map(c);
    std::optional<CPoint> second;
    if (c.run.has("second_base")) second = c.run.point("second_base");
    const auto r = divergence_rate(f, c.run.point("x", default_base(f.domain)), c.run.integer("m_max", 200), second);
    c.result["rate"] = r.rate;
    c.result["m_used"] = r.m_used;
    c.result["second_base_rate"] = r.second_base_rate ? Json(*r.second_base_rate) : Json(nullptr);
    c.evidence["trend"] = to_json(r.trend);
    c.report.table.header = {"m", "k(f^m x, x)/m"};
    for (std::size_t i = 0; i < r.trend.values.size(); ++i) c.report.table.rows.push_back({double(i + 1), r.trend.values[i]});
}

void verb_julia(Context& c) {
    const HoloMap f = need_map(c);
    const CPoint zeta = c.run.point("zeta");
    const CPoint pole = c.run.point("pole", default_base(f.domain));
    const auto lam = c.run.maybe_number("lambda");
    const double lambda = lam ? *lam : dilation(f, zeta, pole).value;
    const auto r = julia_check(f, zeta, pole, lambda, c.run.numbers("R_values", {0.5, 1.0, 2.0}),
                               c.run.integer("samples", 1000), c.cfg.seed);
    c.result["lambda"] = r.lambda;
    c.result["lambda_source"] = lam ? "config" : "dilation estimate";
    c.result["samples"] = r.samples;
    c.result["worst_ratio"] = r.worst_ratio;
    c.evidence["relative_tol"] = 1e-6;
    c.violations.push_back({{"check", "h(f z) <= lambda h(z)"}, {"count", r.violations}});
    mark_violations(c, r.violations);
}

void verb_model_forward(Context& c) {
    const HoloMap f = need_map(c);
    ForwardConfig fc;
    fc.m_max = c.run.integer("m_max", fc.m_max);
    fc.window = c.run.integer("window", fc.window);
    fc.samples_per_radius = c.run.integer("samples_per_radius", fc.samples_per_radius);
    fc.radii = c.run.numbers("radii", fc.radii);
    fc.fit_starts = c.run.integer("fit_starts", fc.fit_starts);
    fc.fit_iterations = c.run.integer("fit_iterations", fc.fit_iterations);
    fc.seed = c.cfg.seed;
    fc.tol = c.tol.number("tol", fc.tol);
    fc.rank_rel = c.tol.number("rank_rel", fc.rank_rel);
    fc.rank_gap = c.tol.number("rank_gap", fc.rank_gap);
    fc.squeeze_floor = c.tol.number("squeeze_floor", fc.squeeze_floor);
    const auto m = extract_forward_model(f, c.run.point("base", default_base(f.domain)), fc);
    c.result["k"] = m.k;
    c.result["type"] = m.type;
    c.result["dilation"] = m.dilation;
    c.result["angles"] = m.angles;
    c.result["normal_form"] = to_json(m.normal);
    c.result["tau"] = to_json(m.tau);
    c.result["slice"] = to_json(m.slice);
    c.result["label"] = m.experimental ? "experimental" : "model";
    c.result["residual"] = m.residual;
    c.result["tolerance"] = m.tolerance;
    c.evidence["singular_values"] = m.singular_values;
    c.evidence["rank_rel"] = fc.rank_rel;
    c.evidence["rank_gap"] = fc.rank_gap;
    c.evidence["metric_agreement"] = m.metric_agreement;
    c.evidence["pullback_trend"] = m.pullback_trend;
    c.evidence["retract_defect"] = m.retract_defect;
    c.evidence["stages"] = m.stages;
    c.evidence["stage_spread"] = m.stage_spread;
    c.evidence["inner_radius"] = m.inner_radius;
    c.evidence["fit_cost"] = m.fit.cost;
    Json table = Json::array();
    for (const auto& s : m.intertwiner) {
        table.push_back({{"x", to_json(s.x)}, {"h", to_json(s.h)}, {"h_f", to_json(s.hf)}});
    }
    c.result["intertwiner"] = table;
    if (m.residual > m.tolerance) {
        c.violations.push_back({{"check", "semi-conjugacy residual"}, {"count", 1}});
        mark_violations(c, 1);
    }
}

BackwardConfig backward_config(Context& c, const HoloMap& f) {
    BackwardConfig b;
    b.zeta = c.run.point("zeta");
    b.lambda = c.run.maybe_number("lambda");
    b.R0 = c.run.number("R0", b.R0);
    b.t_seq = c.run.numbers("t_seq", {});
    b.phase = c.run.number("phase", b.phase);
    b.max_iter = c.run.integer("max_iter", b.max_iter);
    b.trail_length = c.run.integer("trail_length", b.trail_length);
    b.n_max = c.run.integer("n_max", b.n_max);
    b.k_max = c.run.integer("k_max", b.k_max);
    b.cauchy_tol = c.tol.number("cauchy_tol", b.cauchy_tol);
    b.cauchy_run = c.tol.integer("cauchy_run", b.cauchy_run);
    b.hysteresis = c.tol.number("hysteresis", b.hysteresis);
    b.step_tol = c.tol.number("step_tol", b.step_tol);
    b.compat_tol = c.tol.number("compat_tol", b.compat_tol);
    const DomainKind k = f.domain.kind;
    if (k != DomainKind::ball && k != DomainKind::siegel) {
        // Ball picture from the localized boundary chart at zeta.
        const auto chart = normal_form_chart(f.domain, b.zeta);
        const double R = c.run.number("frame_R", chart.D > 0.0 ? std::min(1.0, 0.5 / chart.D) : 1.0);
        b.frame = localized_chart(chart, R).frame;
    }
    return b;
}

void backward_json(Context& c, const BackwardOrbitResult& r) {
    c.result["lambda"] = r.lambda;
    c.result["lambda_source"] = r.lambda_source;
    c.result["n_used"] = r.n_used;
    c.result["R_n"] = r.R_n;
    c.result["r_n"] = r.r_n;
    c.result["epsilon_n"] = r.epsilon_n;
    c.result["z_n"] = to_json(r.z_n);
    c.result["steps"] = r.orbit.steps;
    c.result["step_limit"] = r.step_limit;
    c.result["log_lambda"] = std::log(r.lambda);
    Json pts = Json::array();
    for (const auto& p : r.orbit.points) pts.push_back(to_json(p));
    c.result["orbit"] = pts;
    c.evidence["step_gap"] = r.step_gap;
    c.evidence["compat_error"] = r.compat_error;
    c.evidence["koranyi_max"] = r.koranyi_max;
    Json trails = Json::array();
    for (const auto& t : r.trails) {
        trails.push_back({{"t", t.t}, {"exit_time", t.exit_time}, {"seed_margin", t.seed_margin}, {"diff", t.diff}});
    }
    c.evidence["trails"] = trails;
    c.evidence["diagnostics"] = r.diagnostics;

    const int q = r.orbit.points.empty() ? 0 : static_cast<int>(r.orbit.points.front().size());
    c.report.table.header = {"n"};
    for (int i = 1; i <= q; ++i) {
        c.report.table.header.push_back("re_z" + std::to_string(i));
        c.report.table.header.push_back("im_z" + std::to_string(i));
    }
    c.report.table.header.push_back("step");
    for (std::size_t n = 0; n < r.orbit.points.size(); ++n) {
        std::vector<double> row{double(n)};
        for (int i = 0; i < q; ++i) {
            row.push_back(r.orbit.points[n][i].real());
            row.push_back(r.orbit.points[n][i].imag());
        }
        row.push_back(n < r.orbit.steps.size() ? r.orbit.steps[n] : std::nan(""));
        c.report.table.rows.push_back(row);
    }
}

void verb_backward(Context& c) {
    const HoloMap f = need_map(c);
    const auto r = backward_orbit(f, backward_config(c, f));
    backward_json(c, r);
}

void verb_pre_model(Context& c) {
    const HoloMap f = need_map(c);
    const auto orbit = backward_orbit(f, backward_config(c, f));
    PreModelConfig p;
    p.radii = c.run.numbers("radii", p.radii);
    p.samples_per_radius = c.run.integer("samples_per_radius", p.samples_per_radius);
    p.window = c.run.integer("window", p.window);
    p.fit_starts = c.run.integer("fit_starts", p.fit_starts);
    p.fit_iterations = c.run.integer("fit_iterations", p.fit_iterations);
    p.ray_points = c.run.integer("ray_points", p.ray_points);
    p.seed = c.cfg.seed;
    p.stage_tol = c.tol.number("stage_tol", p.stage_tol);
    p.rank_rel = c.tol.number("rank_rel", p.rank_rel);
    p.rank_gap = c.tol.number("rank_gap", p.rank_gap);
    p.c_tol = c.tol.number("c_tol", p.c_tol);
    const auto m = extract_pre_model(f, orbit.orbit, p);
    c.result["k"] = m.k;
    c.result["type"] = m.type;
    c.result["dilation"] = m.dilation;
    c.result["lambda_zeta"] = orbit.lambda;
    c.result["angles"] = m.angles;
    c.result["normal_form"] = to_json(m.normal);
    c.result["tau"] = to_json(m.tau);
    c.result["slice"] = to_json(m.slice);
    c.result["residual"] = m.residual;
    c.result["c_tau"] = m.c_tau;
    c.result["c_orbit_inf"] = m.c_orbit_inf;
    c.result["c_orbit_lim"] = m.c_orbit_lim;
    c.result["c_consistent"] = m.c_consistent;
    c.result["ray_koranyi_max"] = m.ray_koranyi_max;
    c.evidence["c_tol"] = p.c_tol;
    c.evidence["singular_values"] = m.singular_values;
    c.evidence["stages"] = m.stages;
    c.evidence["stage_spread"] = m.stage_spread;
    c.evidence["s_over_m"] = m.s_over_m;
    c.evidence["ray_koranyi"] = m.ray_koranyi;
    c.evidence["ray_distance"] = m.ray_distance;
    c.evidence["orbit_points"] = orbit.orbit.points.size();
    Json table = Json::array();
    for (const auto& s : m.stable_samples) {
        table.push_back({{"w", to_json(s.w)}, {"ell", to_json(s.ell)}, {"f_ell", to_json(s.f_ell)}});
    }
    c.result["stable_samples"] = table;
    if (!m.c_consistent) {
        c.violations.push_back({{"check", "c(tau) = inf s_m / m"}, {"count", 1}});
        mark_violations(c, 1);
    }
}

void verb_gromov(Context& c) {
    if (c.cfg.domain.kind != DomainKind::ball) schema_error("domain.kind", "gromov runs on the ball");
    const int q = c.cfg.domain.q;
    const int triangles = c.run.integer("triangles", 1000);
    const int points = c.run.integer("points", 10000);
    const int density = c.run.integer("density", 256);
    const double M = c.run.number("M", 2.0);
    const CPoint pole = c.run.point("pole", CPoint::Zero(q));
    const CPoint center = c.run.point("center", unit_vector(q, 0));
    const double delta = ball::empirical_delta(q, triangles, c.cfg.seed, density);
    c.result["delta_emp"] = delta;
    c.evidence["delta_label"] = "delta_emp: max slimness over the seeded triangle set";
    c.evidence["triangles"] = triangles;
    c.evidence["density"] = density;

    SeededSampler rng(c.cfg.seed + 1, q);
    int bad = 0;
    double min_slack = std::numeric_limits<double>::infinity();
    for (int i = 0; i < triangles; ++i) {
        const auto gamma = ball::geodesic(rng.ball(q, 0.99), rng.sphere(q), ball::GeodesicKind::ray);
        const double t0 = rng.uniform(-3.0, 3.0);
        const auto r = ball::line_projection_check(gamma, t0, rng.ball(q, 0.999), delta);
        if (!r.holds) ++bad;
        min_slack = std::min(min_slack, r.slack);
    }
    c.result["projection_checks"] = triangles;
    c.result["projection_min_slack"] = min_slack;
    c.violations.push_back({{"check", "projection onto a geodesic line, 6 delta"}, {"count", bad}});

    std::vector<CPoint> sample;
    for (int i = 0; i < points; ++i) sample.push_back(rng.ball(q, 0.9999));
    const auto inc = ball::region_A_vs_koranyi(pole, center, M, delta, sample);
    c.result["inclusion"] = {{"samples", inc.samples}, {"M", inc.M}, {"in_A", inc.in_A},
                             {"in_K", inc.in_K}, {"in_A_wide", inc.in_A_wide}};
    c.violations.push_back({{"check", "A(gamma, M) in K(p, zeta, M)"}, {"count", inc.violations_A_in_K}});
    c.violations.push_back({{"check", "K(p, zeta, M) in A(gamma, M e^{6 delta})"}, {"count", inc.violations_K_in_Awide}});
    mark_violations(c, bad + inc.violations());
}

ChartOptions chart_options(Context& c) {
    ChartOptions o;
    o.directions = c.run.integer("directions", o.directions);
    o.convexity = c.run.number("convexity", o.convexity);
    o.seed = c.cfg.seed;
    o.coefficient_tol = c.tol.number("coefficient_tol", o.coefficient_tol);
    o.safety = c.tol.number("safety", o.safety);
    return o;
}

Json chart_json(const NormalFormChart& ch) {
    Json j;
    j["zeta"] = to_json(ch.zeta);
    j["exact"] = ch.exact;
    j["normal_form_error"] = ch.normal_form_error;
    j["p4_min"] = ch.p4_min;
    j["p4_max"] = ch.p4_max;
    j["C"] = ch.C;
    j["D"] = ch.D;
    j["convexity"] = ch.convexity;
    j["linear_condition"] = ch.linear_condition;
    j["remainder_estimate"] = ch.remainder_estimate;
    j["direction_samples"] = ch.direction_samples;
    j["discarded_terms"] = ch.discarded_terms;
    Json terms = Json::array();
    for (const auto& [e, v] : ch.p4.terms()) terms.push_back({{"exponent", e}, {"coeff", to_json(v)}});
    j["p4_terms"] = terms;
    j["p4_variables"] = "Re w1, Im w1, w_2..w_q, conj w_2..conj w_q";
    return j;
}

double default_radius(const NormalFormChart& ch) { return ch.D > 0.0 ? std::min(1.0, 0.5 / ch.D) : 1.0; }

void verb_localize(Context& c) {
    const auto ch = normal_form_chart(c.cfg.domain, c.run.point("zeta"), chart_options(c));
    const double R = c.run.number("R", default_radius(ch));
    const double rho = c.run.number("rho", 0.5);
    const int n = c.run.integer("samples", 10000);
    const auto lc = localized_chart(ch, R);
    c.result["chart"] = chart_json(ch);
    const int sv = sandwich_violations(ch, ch.direction_samples, c.cfg.seed + 1);
    c.evidence["coefficient_tol"] = c.tol.number("coefficient_tol", ChartOptions{}.coefficient_tol);
    c.evidence["sandwich_fresh_directions"] = ch.direction_samples;
    c.violations.push_back({{"check", "C |.|^4 <= P4 <= D/2 |.|^4"}, {"count", sv}});
    c.result["localized"] = {{"R", R}, {"series_error", lc.series_error}, {"im_dependence", lc.im_dependence}};
    const auto cert = verify_inclusions(c.cfg.domain, lc.frame, R, rho, n, c.cfg.seed + 2);
    Json w = Json::array();
    for (const auto& p : cert.witnesses) w.push_back(to_json(p));
    c.result["inclusions"] = {{"R", cert.R},
                              {"rho", cert.rho},
                              {"horosphere_samples", cert.horosphere_samples},
                              {"horosphere_violations", cert.horosphere_violations},
                              {"neighborhood_samples", cert.neighborhood_samples},
                              {"neighborhood_violations", cert.neighborhood_violations},
                              {"R_admissible", cert.R_admissible},
                              {"rho_admissible", cert.rho_admissible},
                              {"witnesses", w}};
    c.evidence["inclusion_note"] = "violations at the requested radii are diagnostic; admissible radii are clean on all samples";
    mark_violations(c, sv);
}

void verb_compare(Context& c) {
    const std::string frame_kind = c.run.text("frame", "chart");
    BallFrame frame;
    if (frame_kind == "identity") {
        if (c.cfg.domain.kind != DomainKind::ball) schema_error("run.frame", "identity frame needs the ball");
        frame = identity_frame();
    } else if (frame_kind == "chart") {
        const auto ch = normal_form_chart(c.cfg.domain, c.run.point("zeta"), chart_options(c));
        const double R = c.run.number("R", default_radius(ch));
        frame = localized_chart(ch, R).frame;
        c.result["chart"] = chart_json(ch);
        c.result["R"] = R;
    } else {
        schema_error("run.frame", "expected chart or identity");
    }
    const auto d = distance_comparison(c.cfg.domain, frame, c.run.number("epsilon", 0.05),
                                       c.run.number("R_max", 1.0), c.run.integer("pairs", 1000), c.cfg.seed);
    c.result["epsilon"] = d.epsilon;
    c.result["R_eps"] = d.R_eps;
    c.result["pairs"] = d.pairs;
    c.result["min_margin"] = d.min_margin;
    c.evidence["max_sandwich_gap"] = d.max_gap;
    c.violations.push_back({{"check", "|k_Omega - k_B| <= eps on E(0, e1, R_eps)"}, {"count", d.violations}});
    c.report.table.header = {"pair", "margin"};
    for (std::size_t i = 0; i < d.margins.size(); ++i) c.report.table.rows.push_back({double(i), d.margins[i]});
    mark_violations(c, d.violations);
}

using VerbFn = void (*)(Context&);

const std::vector<std::pair<std::string, VerbFn>>& verb_table() {
    static const std::vector<std::pair<std::string, VerbFn>> t{
        {"kobayashi", verb_kobayashi},     {"squeeze", verb_squeeze},
        {"classify", verb_classify},       {"dilation", verb_dilation},
        {"divergence-rate", verb_divergence}, {"julia", verb_julia},
        {"model-forward", verb_model_forward}, {"backward-orbit", verb_backward},
        {"pre-model", verb_pre_model},     {"gromov", verb_gromov},
        {"localize", verb_localize},       {"compare-distance", verb_compare},
    };
    return t;
}

Json normalization_banner() {
    Json j;
    j["id"] = "D1";
    j["distance"] = "k(0, t) = log((1 + t) / (1 - t)) on the disc; curvature -1 in complex directions";
    j["horosphere"] = "E(0, e1, R) = { |1 - z1|^2 / (1 - |z|^2) < R }";
    j["koranyi"] = "K(0, e1, M) = { log h + k(0, z) < 2 log M }";
    j["siegel"] = "H^q = { Im z1 > ||z'||^2 }, Cayley transform sends e1 to infinity";
    return j;
}

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

Json skeleton(const Json& source) {
    Json b;
    b["schema"] = kReportSchema;
    b["normalization"] = normalization_banner();
    b["config"] = source;
    b["status"] = "ok";
    b["exit_code"] = 0;
    return b;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

const std::vector<std::string>& report_verbs() {
    static const std::vector<std::string> v = [] {
        std::vector<std::string> out;
        for (const auto& [name, fn] : verb_table()) out.push_back(name);
        return out;
    }();
    return v;
}

DomainSpec domain_from_json(const Json& j) {
    Fields f(j, "domain");
    const std::string kind = f.text("kind", "");
    if (kind.empty()) schema_error("domain.kind", "required field missing");
    DomainSpec d;
    if (kind == "ball") {
        d = make_ball(f.integer("q", 2));
    } else if (kind == "siegel") {
        d = make_siegel(f.integer("q", 2));
    } else if (kind == "egg") {
        d = make_egg();
    } else if (kind == "ellipsoid") {
        const auto a = f.numbers("coefficients", {});
        if (a.empty()) schema_error("domain.coefficients", "ellipsoid needs its weights");
        d = make_ellipsoid(a);
    } else if (kind == "custom") {
        f.require("terms");
        const Json& terms = f.raw("terms");
        if (!terms.is_array()) schema_error("domain.terms", "expected an array");
        std::vector<Monomial> ms;
        for (std::size_t i = 0; i < terms.size(); ++i) {
            Fields t(terms[i], "domain.terms[" + std::to_string(i) + "]");
            Monomial m;
            m.coeff = t.complex("coeff", 1.0);
            for (double e : t.numbers("a", {})) m.a.push_back(static_cast<int>(e));
            for (double e : t.numbers("b", {})) m.b.push_back(static_cast<int>(e));
            t.finish();
            ms.push_back(m);
        }
        const CPoint center = f.point("center");
        d = make_custom(static_cast<int>(center.size()), ms, center, f.number("circumradius"));
    } else {
        schema_error("domain.kind", "unknown domain kind '" + kind + "'");
    }
    if (kind == "egg" || kind == "ellipsoid" || kind == "custom") {
        if (f.has("q") && f.integer("q", d.q) != d.q) schema_error("domain.q", "does not match the declaration");
    }
    f.finish();
    return d;
}

HoloMap map_from_json(const Json& j, const DomainSpec& declared) {
    Fields f(j, "map");
    HoloMap m = map_from_fields(f, "map", declared, true);
    f.finish();
    return m;
}

ExperimentConfig parse_config(const Json& source) {
    if (!source.is_object()) schema_error("config", "expected a table at the top level");
    for (const auto& [k, v] : source.items()) {
        if (k != "domain" && k != "map" && k != "run" && k != "tolerances" && k != "output") {
            schema_error(k, "unknown top-level table");
        }
    }
    ExperimentConfig c;
    c.source = source;
    if (!source.contains("domain")) schema_error("domain", "required table missing");
    if (!source.contains("run")) schema_error("run", "required table missing");
    c.domain = domain_from_json(source.at("domain"));
    if (source.contains("map")) {
        c.map = source.at("map");
        (void)map_from_json(c.map, c.domain);  // validates early
    }
    const Json& run = source.at("run");
    if (!run.is_object()) schema_error("run", "expected a table");
    if (!run.contains("verb") || !run.at("verb").is_string()) schema_error("run.verb", "required string missing");
    c.verb = run.at("verb").get<std::string>();
    const auto& verbs = report_verbs();
    if (std::find(verbs.begin(), verbs.end(), c.verb) == verbs.end()) {
        std::string list;
        for (const auto& v : verbs) list += (list.empty() ? "" : " | ") + v;
        throw Error(ErrorKind::schema, "unknown-verb", "run.verb: '" + c.verb + "' is not one of " + list);
    }
    if (run.contains("seed")) {
        const Json& s = run.at("seed");
        if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<std::int64_t>() < 0)) {
            schema_error("run.seed", "expected a non-negative integer");
        }
        c.seed = s.get<std::uint64_t>();
    }
    c.run = run;
    c.run.erase("verb");
    c.run.erase("seed");
    c.tolerances = source.contains("tolerances") ? source.at("tolerances") : Json::object();
    if (!c.tolerances.is_object()) schema_error("tolerances", "expected a table");
    if (source.contains("output")) {
        Fields o(source.at("output"), "output");
        c.output = o.text("path", "");
        c.csv = o.text("csv", "");
        o.finish();
    }
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::schema, "invalid-config", "cannot read config file " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::schema, "invalid-config", std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

Report error_report(const Json& source, const Error& e) {
    Report r;
    r.body = skeleton(source);
    r.exit_code = static_cast<int>(e.kind());
    r.body["status"] = "error";
    r.body["exit_code"] = r.exit_code;
    r.body["error"] = {{"kind", r.exit_code}, {"code", e.code()}, {"message", e.what()}};
    return r;
}

Report run_experiment(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string started = utc_timestamp();
    Report report;
    report.body = skeleton(config.source);
    Json result = Json::object();
    Json evidence = Json::object();
    Json violations = Json::array();
    Fields run(config.run, "run");
    Fields tol(config.tolerances, "tolerances");
    Context ctx{config, run, tol, report, result, evidence, violations};
    try {
        const auto& table = verb_table();
        const auto it = std::find_if(table.begin(), table.end(), [&](const auto& p) { return p.first == config.verb; });
        it->second(ctx);
        run.finish();
        tol.finish();
        report.body["result"] = result;
        report.body["evidence"] = evidence;
        report.body["violations"] = violations;
    } catch (const Error& e) {
        report = error_report(config.source, e);
    } catch (const std::exception& e) {
        report = error_report(config.source, Error(ErrorKind::invariant_violation, "internal", e.what()));
    }
    report.body["exit_code"] = report.exit_code;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.body["timing"] = {{"started", started}, {"wall_seconds", secs}};
    return report;
}

std::string canonical_text(const Report& r) {
    Json b = r.body;
    b.erase("timing");
    return b.dump(2);
}

std::string report_text(const Report& r) { return r.body.dump(2) + "\n"; }

std::string csv_text(const CsvTable& t) {
    std::ostringstream os;
    for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
    os << "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_double(row[i]);
        os << "\n";
    }
    return os.str();
}

}  // namespace holokit
