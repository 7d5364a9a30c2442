// deltavar: solve, verify, scan and refine variational problems on time scales.
//
// Exit codes: 0 success, 2 parse or validation error, 3 no stationary point,
// 4 denominator vanished at every restart. verify exits 1 when the residuals
// exceed --tol.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "deltavar/bundled_fixtures.hpp"
#include "deltavar/error.hpp"
#include "deltavar/oracle.hpp"
#include "deltavar/problem_file.hpp"
#include "deltavar/report.hpp"
#include "deltavar/solver.hpp"

namespace dv = deltavar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNone = 3;
constexpr int kExitSingular = 4;

int exit_code_for(dv::ErrorCode code) {
    switch (code) {
        case dv::ErrorCode::NoStationaryPointFound:
        case dv::ErrorCode::ConstraintInfeasible: return kExitNone;
        case dv::ErrorCode::DenominatorVanished: return kExitSingular;
        default: return kExitUsage;
    }
}

/// A path, or the name of a bundled fixture when no such file exists.
dv::ProblemFile load_problem(const std::string& arg) {
    if (std::filesystem::exists(arg)) return dv::ProblemFile::load(arg);
    for (const auto& [name, text] : dv::bundled::fixtures) {
        if (arg == name) return dv::ProblemFile::parse(text, std::string(name) + ".dvp");
    }
    throw dv::Error(dv::ErrorCode::ProblemFileError, arg + ": no such file or bundled fixture");
}

std::string fmt(double v, const char* spec = "%.10g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string fmt_list(const std::vector<double>& v) {
    std::string s = "(";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
    return s + ")";
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw dv::Error(dv::ErrorCode::InvalidArgument, what + ": '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw dv::Error(dv::ErrorCode::InvalidArgument, what + " is empty");
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dv::Error(dv::ErrorCode::InvalidArgument, "cannot write " + path);
    out << content;
}

void print_point(std::size_t k, const dv::StationaryPoint& p, const dv::SolveOptions& opts) {
    const auto& ts = p.trajectory.scale();
    std::cout << "[" << k + 1 << "] value = " << fmt(p.value, "%.15g") << "   classification: "
              << dv::to_string(p.classification) << " (advisory)\n";
    std::cout << "    F = " << fmt_list(p.inner) << "\n";
    if (!p.constraint_inner.empty()) std::cout << "    G = " << fmt_list(p.constraint_inner) << "\n";
    std::cout << "    lambda0 = " << p.lambda0 << (p.normal() ? " (normal)" : " (abnormal)")
              << ", lambda = " << fmt(p.lambda, "%.12g") << "\n";
    std::cout << "    EL residual max = " << fmt(p.report.el_max, "%.3e");
    if (p.report.nat_left) std::cout << ", natural BC left = " << fmt(*p.report.nat_left, "%.3e");
    if (p.report.nat_right) std::cout << ", natural BC right = " << fmt(*p.report.nat_right, "%.3e");
    if (p.report.constraint_violation) {
        std::cout << ", constraint violation = " << fmt(*p.report.constraint_violation, "%.3e");
    }
    std::cout << "\n    DR spread = " << fmt(p.report.dr_constancy_spread, "%.3e") << ", basins = " << p.basin_count
              << "/" << opts.restarts << "\n";
    if (ts.size() <= 12) {
        std::cout << "    x = " << fmt_list(p.trajectory.x()) << "\n";
    }
}

struct SolveArgs {
    std::string file;
    dv::SolveOptions opts;
    std::optional<double> h_override;
    std::string csv, svg, json;
};

int run_solve(const SolveArgs& a) {
    const auto pf = load_problem(a.file);
    const auto spec = pf.build(a.h_override);
    a.opts.validate();
    const auto& ts = spec.scale();
    std::cout << "problem: " << pf.name << "\n"
              << "time scale: " << ts.size() << " points on [" << fmt(ts.a()) << ", " << fmt(ts.b()) << "], "
              << spec.decision_count() << " decision variables"
              << (spec.constraint() ? ", isoperimetric constraint K = " + fmt(spec.constraint()->level) : "")
              << "\n";
    std::vector<dv::StationaryPoint> points;
    try {
        points = dv::solve(spec, a.opts);
    } catch (const dv::Error& e) {
        if (!a.json.empty()) {
            write_file(a.json, dv::report::failure_json(pf.name, std::string(dv::to_string(e.code())), e.what()));
        }
        throw;
    }
    std::cout << "stationary points: " << points.size() << "\n";
    for (std::size_t k = 0; k < points.size(); ++k) print_point(k, points[k], a.opts);
    for (std::size_t k = 0; k < points.size(); ++k) {
        if (!a.csv.empty()) {
            std::ostringstream s;
            dv::report::write_csv(s, points[k].trajectory);
            write_file(dv::report::indexed_path(a.csv, k, points.size()), s.str());
        }
        if (!a.svg.empty()) {
            std::ostringstream s;
            dv::report::write_svg(s, points[k].trajectory,
                                  pf.name + ": point " + std::to_string(k + 1) + ", value " + fmt(points[k].value));
            write_file(dv::report::indexed_path(a.svg, k, points.size()), s.str());
        }
    }
    if (!a.json.empty()) write_file(a.json, dv::report::summary_json(pf.name, points));
    return kExitOk;
}

struct VerifyArgs {
    std::string file;
    std::string solution;
    double tol = 1e-9;
    std::optional<double> h_override;
};

int run_verify(const VerifyArgs& a) {
    const auto pf = load_problem(a.file);
    const auto spec = pf.build(a.h_override);
    std::ifstream in(a.solution);
    if (!in) throw dv::Error(dv::ErrorCode::InvalidArgument, "cannot open " + a.solution);
    const auto x = dv::report::read_csv(in, spec.scale());
    const dv::Trajectory tr(spec.scale_ptr(), x);
    const double lambda = dv::fit_multiplier(spec, tr);
    const auto rep = dv::residual_report(spec, tr, 1.0, lambda);
    const double val = dv::value(spec.functional(), tr);

    bool ok = true;
    auto line = [&](const std::string& label, double v, bool checked = true) {
        const bool pass = !checked || std::abs(v) <= a.tol;
        ok = ok && pass;
        std::cout << "  " << label << " = " << fmt(v, "%.6e") << (checked ? (pass ? "  ok" : "  FAIL") : "") << "\n";
    };
    std::cout << "problem: " << pf.name << "\nsolution: " << a.solution << " (" << x.size() << " samples)\n";
    line("EL residual max", rep.el_max);
    if (rep.nat_left) line("natural BC left", *rep.nat_left);
    if (rep.nat_right) line("natural BC right", *rep.nat_right);
    if (rep.constraint_violation) line("constraint violation", *rep.constraint_violation);
    line("DR spread", rep.dr_constancy_spread);
    if (spec.constraint()) std::cout << "  fitted lambda = " << fmt(lambda, "%.12g") << "\n";
    std::cout << "  functional value = " << fmt(val, "%.17g") << "\n"
              << "  F = " << fmt_list(dv::inner_values(spec.functional(), tr)) << "\n"
              << (ok ? "PASS" : "FAIL") << " at tol " << fmt(a.tol, "%g") << "\n";
    return ok ? kExitOk : kExitVerifyFailed;
}

struct ScanArgs {
    std::string file;
    std::vector<std::string> vars;
    std::vector<std::string> ranges;
    std::size_t resolution = 401;
    std::optional<double> h_override;
    std::string csv;
};

int run_scan(const ScanArgs& a) {
    const auto pf = load_problem(a.file);
    const auto spec = pf.build(a.h_override);
    const auto& ts = spec.scale();
    const std::size_t D = spec.decision_count();
    if (D > 2 || (spec.constraint() && D > 1)) {
        throw dv::Error(dv::ErrorCode::TooManyDecisionVariables,
                        "scan needs at most 2 decision variables (1 with a constraint); " + pf.name + " has " +
                            std::to_string(D));
    }

    // --var names the decision samples in scan order; default is all of them.
    std::vector<std::size_t> order;
    for (const auto& v : a.vars) {
        if (v.rfind("x@", 0) != 0) throw dv::Error(dv::ErrorCode::InvalidArgument, "--var expects x@<t>, got " + v);
        const double t = parse_list(v.substr(2), "--var")[0];
        const auto idx = ts.index_of(t);
        if (!idx) throw dv::Error(dv::ErrorCode::ScaleMismatch, "t = " + fmt(t) + " is not a point of the time scale");
        if (*idx < spec.decision_begin() || *idx >= spec.decision_end()) {
            throw dv::Error(dv::ErrorCode::InvalidArgument, v + " is fixed by the boundary conditions");
        }
        order.push_back(*idx - spec.decision_begin());
    }
    if (order.empty()) {
        for (std::size_t j = 0; j < D; ++j) order.push_back(j);
    }
    if (order.size() != D) {
        throw dv::Error(dv::ErrorCode::InvalidArgument,
                        "--var must name all " + std::to_string(D) + " decision samples");
    }
    std::vector<dv::oracle::Range> by_var(D, dv::oracle::Range{-10.0, 10.0});
    if (!a.ranges.empty()) {
        if (a.ranges.size() != 1 && a.ranges.size() != D) {
            throw dv::Error(dv::ErrorCode::InvalidArgument, "give one --range, or one per --var");
        }
        for (std::size_t k = 0; k < D; ++k) {
            const auto r = parse_list(a.ranges[a.ranges.size() == 1 ? 0 : k], "--range");
            if (r.size() != 2 || !(r[0] < r[1])) {
                throw dv::Error(dv::ErrorCode::InvalidArgument, "--range expects lo,hi with lo < hi");
            }
            by_var[order[k]] = {r[0], r[1]};
        }
    }
    const auto rep = dv::oracle::scan_low_dim(spec, by_var, a.resolution);

    std::cout << "problem: " << pf.name << "\nscanning";
    for (std::size_t j = 0; j < D; ++j) {
        std::cout << " x@" << fmt(ts[rep.indices[j]]) << " in [" << fmt(by_var[j].lo) << ", " << fmt(by_var[j].hi)
                  << "]";
    }
    std::cout << ", " << a.resolution << " nodes per axis"
              << (rep.constrained ? ", along the constraint (roots of K - k)" : "") << "\n";
    std::cout << "sign-change brackets: " << rep.brackets.size() << "\n";
    if (rep.no_roots()) {
        std::cout << "no roots in range\n";
    } else {
        std::cout << "roots: " << rep.roots.size() << "\n";
        for (const auto& r : rep.roots) {
            std::cout << " ";
            for (std::size_t j = 0; j < r.size(); ++j) {
                std::cout << " x@" << fmt(ts[rep.indices[j]]) << " = " << fmt(r[j], "%.15g");
            }
            std::cout << "\n";
        }
    }
    if (!a.csv.empty()) {
        std::ostringstream s;
        for (std::size_t j = 0; j < D; ++j) s << "x@" << fmt(ts[rep.indices[j]]) << ",";
        const std::size_t comps = rep.values.empty() ? 0 : rep.values.front().size();
        for (std::size_t c = 0; c < comps; ++c) s << (rep.constrained ? "constraint_gap" : "g" + std::to_string(c + 1)) << ",";
        s << "signs\n";
        for (std::size_t n = 0; n < rep.values.size(); ++n) {
            std::size_t rest = n;
            std::vector<double> node(D);
            for (std::size_t j = D; j-- > 0;) {
                node[j] = rep.grid[j][rest % rep.grid[j].size()];
                rest /= rep.grid[j].size();
            }
            for (double v : node) s << dv::report::number(v) << ",";
            for (double v : rep.values[n]) s << dv::report::number(v) << ",";
            s << rep.signs[n] << "\n";
        }
        write_file(a.csv, s.str());
    }
    return kExitOk;
}

struct RefineArgs {
    std::string file;
    std::string h_list;
    std::string reference;
    std::string targets;
    dv::SolveOptions opts;
};

int run_refine(const RefineArgs& a) {
    const auto pf = load_problem(a.file);
    if (!pf.timescale.has_step()) {
        throw dv::Error(dv::ErrorCode::InvalidArgument, "refine needs a uniform or interval time scale");
    }
    const auto hs = parse_list(a.h_list, "--h-list");
    dv::RefineTargets targets;
    if (!a.reference.empty()) {
        const dv::VarSet vars{"t"};
        const auto ref = dv::Expr::parse(a.reference, vars);
        targets.reference = [ref](double t) { return ref.eval(std::span<const double>(&t, 1)); };
    }
    if (!a.targets.empty()) targets.values = parse_list(a.targets, "--target");
    const auto rows = dv::refine_study([&](double h) { return pf.build(h); }, hs, a.opts, targets);

    std::cout << "problem: " << pf.name << "\n";
    std::size_t width = 0;
    for (const auto& r : rows) width = std::max(width, r.points.size());
    std::printf("%-10s", "h");
    for (std::size_t k = 0; k < width; ++k) {
        std::printf("  %-18s  %-8s", ("Q[" + std::to_string(k + 1) + "]").c_str(), "order");
        if (!targets.values.empty()) std::printf("  %-10s", "error");
        if (targets.reference) std::printf("  %-10s", "max|x-ref|");
    }
    std::printf("\n");
    bool any = false;
    for (const auto& r : rows) {
        std::printf("%-10s", fmt(r.h, "%g").c_str());
        if (r.failure) {
            std::printf("  %s\n", r.failure->c_str());
            continue;
        }
        any = true;
        for (const auto& p : r.points) {
            std::printf("  %-18s  %-8s", fmt(p.value, "%.12g").c_str(), p.order ? fmt(*p.order, "%.3f").c_str() : "-");
            if (!targets.values.empty()) std::printf("  %-10s", p.value_error ? fmt(*p.value_error, "%.3e").c_str() : "-");
            if (targets.reference) {
                std::printf("  %-10s", p.reference_distance ? fmt(*p.reference_distance, "%.3e").c_str() : "-");
            }
        }
        std::printf("\n");
        for (std::size_t k = 0; k < r.points.size(); ++k) {
            std::printf("%-10s  F[%zu] = %s\n", "", k + 1, fmt_list(r.points[k].inner).c_str());
        }
    }
    std::fflush(stdout);
    return any ? kExitOk : kExitNone;
}

std::string fixture_summary(std::string_view text) {
    std::string s;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line) && line.rfind("#", 0) == 0) {
        auto body = line.substr(1);
        body.erase(0, body.find_first_not_of(' '));
        s += (s.empty() ? "" : " ") + body;
    }
    return s;
}

int run_examples(const std::string& show) {
    if (!show.empty()) {
        for (const auto& [name, text] : dv::bundled::fixtures) {
            if (show == name) {
                std::cout << text;
                return kExitOk;
            }
        }
        throw dv::Error(dv::ErrorCode::InvalidArgument, "no bundled fixture named " + show);
    }
    for (const auto& [name, text] : dv::bundled::fixtures) {
        std::printf("%-16s %s\n", std::string(name).c_str(), fixture_summary(text).c_str());
    }
    return kExitOk;
}

void add_solver_flags(CLI::App* cmd, dv::SolveOptions& opts) {
    cmd->add_option("--restarts", opts.restarts, "Number of restarts")->capture_default_str();
    cmd->add_option("--seed", opts.seed, "Seed for the restart perturbations")->capture_default_str();
    cmd->add_option("--tol", opts.tol_residual, "Residual tolerance")->capture_default_str();
    cmd->add_option("--max-iters", opts.max_iters, "Newton iterations per restart")->capture_default_str();
    cmd->add_option("--threads", opts.threads, "Worker threads for restarts")->capture_default_str();
    cmd->add_flag("!--no-classify", opts.classify, "Skip second-variation classification");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deltavar: stationary points of composite functionals on time scales"};
    app.require_subcommand(1);

    SolveArgs solve_args;
    auto* solve = app.add_subcommand("solve", "Find stationary points");
    solve->add_option("file", solve_args.file, "Problem file or bundled fixture name")->required();
    add_solver_flags(solve, solve_args.opts);
    solve->add_option("--h-override", solve_args.h_override, "Replace the step of a uniform or interval scale");
    solve->add_option("--csv", solve_args.csv, "Write t,x samples (suffix _k per point when several)");
    solve->add_option("--svg", solve_args.svg, "Write a polyline plot per point");
    solve->add_option("--json", solve_args.json, "Write the machine summary");

    VerifyArgs verify_args;
    auto* verify = app.add_subcommand("verify", "Check stationarity residuals of given samples");
    verify->add_option("file", verify_args.file, "Problem file or bundled fixture name")->required();
    verify->add_option("--solution", verify_args.solution, "CSV with header t,x")->required();
    verify->add_option("--tol", verify_args.tol, "Pass threshold for every residual")->capture_default_str();
    verify->add_option("--h-override", verify_args.h_override, "Replace the step of a uniform or interval scale");

    ScanArgs scan_args;
    auto* scan = app.add_subcommand("scan", "Sign scan of the gradient over one or two decision samples");
    scan->add_option("file", scan_args.file, "Problem file or bundled fixture name")->required();
    scan->add_option("--var", scan_args.vars, "Decision sample x@<t>, repeatable");
    scan->add_option("--range", scan_args.ranges, "lo,hi per --var (one range applies to all)");
    scan->add_option("--resolution", scan_args.resolution, "Nodes per axis")->capture_default_str()->check(
        CLI::Range(std::size_t{3}, std::size_t{100000}));
    scan->add_option("--h-override", scan_args.h_override, "Replace the step of a uniform or interval scale");
    scan->add_option("--csv", scan_args.csv, "Write the scanned grid");

    RefineArgs refine_args;
    auto* refine = app.add_subcommand("refine", "Stationary values over a decreasing list of steps");
    refine->add_option("file", refine_args.file, "Problem file or bundled fixture name")->required();
    refine->add_option("--h-list", refine_args.h_list, "Comma-separated decreasing steps")->required();
    refine->add_option("--reference", refine_args.reference, "Closed-form x(t) to measure the distance to");
    refine->add_option("--target", refine_args.targets, "Expected limits of the values, ascending");
    add_solver_flags(refine, refine_args.opts);

    std::string show;
    auto* examples = app.add_subcommand("examples", "List bundled fixtures");
    examples->add_option("--show", show, "Print the named fixture");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*solve) return run_solve(solve_args);
        if (*verify) return run_verify(verify_args);
        if (*scan) return run_scan(scan_args);
        if (*refine) return run_refine(refine_args);
        if (*examples) return run_examples(show);
    } catch (const dv::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
