#pragma once

// Output formats: (t, x) CSV, static SVG polylines, and a JSON summary of
// stationary points with every float at 17 significant digits.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "deltavar/error.hpp"
#include "deltavar/functional.hpp"
#include "deltavar/solver.hpp"
#include "deltavar/timescale.hpp"

namespace deltavar::report {

/// Shortest text is not stable across formatters; 17 significant digits is.
inline std::string number(double v) {
    if (std::isnan(v)) return "null";
    if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& out, const Trajectory& tr) {
    out << "t,x\n";
    for (std::size_t i = 0; i < tr.size(); ++i) out << number(tr.scale()[i]) << ',' << number(tr.x()[i]) << '\n';
}

/// Samples aligned to `ts`; every point must appear exactly once.
inline GridSamples read_csv(std::istream& in, const TimeScale& ts) {
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw Error(ErrorCode::ScaleMismatch, "line " + std::to_string(line_no) + ": " + msg, line_no);
    };
    auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t\r"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
    };
    GridSamples x(ts.size(), 0.0);
    std::vector<bool> seen(ts.size(), false);
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        if (!header) {
            if (line != "t,x") fail("expected header 't,x'");
            header = true;
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) fail("expected two columns");
        auto parse = [&](std::string s) {
            s = trim(s);
            double v = 0.0;
            const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
            if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("not a number: '" + s + "'");
            return v;
        };
        const double t = parse(line.substr(0, comma));
        const double v = parse(line.substr(comma + 1));
        const auto idx = ts.index_of(t);
        if (!idx) fail("t = " + number(t) + " is not a point of the time scale");
        if (seen[*idx]) fail("t = " + number(t) + " appears twice");
        seen[*idx] = true;
        x[*idx] = v;
    }
    if (!header) throw Error(ErrorCode::ScaleMismatch, "empty solution file");
    const auto missing = std::count(seen.begin(), seen.end(), false);
    if (missing > 0) {
        throw Error(ErrorCode::ScaleMismatch, std::to_string(missing) + " time scale points have no sample");
    }
    return x;
}

/// One polyline of x against t, with axes and the value range labelled.
inline void write_svg(std::ostream& out, const Trajectory& tr, const std::string& title) {
    constexpr double W = 640, Hh = 400, M = 50;
    const TimeScale& ts = tr.scale();
    const auto [lo_it, hi_it] = std::minmax_element(tr.x().begin(), tr.x().end());
    double lo = *lo_it, hi = *hi_it;
    if (hi - lo < 1e-12) {
        lo -= 1.0;
        hi += 1.0;
    }
    auto px = [&](double t) { return M + (t - ts.a()) / (ts.b() - ts.a()) * (W - 2 * M); };
    auto py = [&](double v) { return Hh - M - (v - lo) / (hi - lo) * (Hh - 2 * M); };
    auto esc = [](const std::string& s) {
        std::string o;
        for (char c : s) {
            if (c == '<') o += "&lt;";
            else if (c == '>') o += "&gt;";
            else if (c == '&') o += "&amp;";
            else o += c;
        }
        return o;
    };
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << Hh << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
        << esc(title) << "</text>\n"
        << "<line x1=\"" << M << "\" y1=\"" << Hh - M << "\" x2=\"" << W - M << "\" y2=\"" << Hh - M
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\"" << Hh - M << "\" stroke=\"black\"/>\n";
    auto label = [&](double x, double y, const std::string& s, const char* anchor) {
        out << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << esc(s) << "</text>\n";
    };
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", ts.a());
    label(M, Hh - M + 16, buf, "middle");
    std::snprintf(buf, sizeof buf, "%.4g", ts.b());
    label(W - M, Hh - M + 16, buf, "middle");
    std::snprintf(buf, sizeof buf, "%.4g", lo);
    label(M - 6, Hh - M, buf, "end");
    std::snprintf(buf, sizeof buf, "%.4g", hi);
    label(M - 6, M + 4, buf, "end");
    label(W / 2, Hh - 12, "t", "middle");
    label(16, Hh / 2, "x", "middle");
    out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < tr.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(ts[i]), py(tr.x()[i]));
        out << buf;
    }
    out << "\"/>\n";
    if (tr.size() <= 50) {
        for (std::size_t i = 0; i < tr.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.2f", px(ts[i]));
            out << "<circle cx=\"" << buf;
            std::snprintf(buf, sizeof buf, "%.2f", py(tr.x()[i]));
            out << "\" cy=\"" << buf << "\" r=\"3\" fill=\"steelblue\"/>\n";
        }
    }
    out << "</svg>\n";
}

/// `path` for a single point, `stem_k.ext` (k from 1) for several.
inline std::string indexed_path(const std::string& path, std::size_t k, std::size_t count) {
    if (count <= 1) return path;
    const auto slash = path.find_last_of('/');
    const auto dot = path.find_last_of('.');
    const std::string suffix = "_" + std::to_string(k + 1);
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + suffix;
    return path.substr(0, dot) + suffix + path.substr(dot);
}

inline std::string json_string(const std::string& s) {
    std::string o = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') {
            o += '\\';
            o += c;
        } else if (static_cast<unsigned char>(c) < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\u%04x", c);
            o += buf;
        } else {
            o += c;
        }
    }
    return o + "\"";
}

inline std::string json_array(std::span<const double> v) {
    std::string o = "[";
    for (std::size_t i = 0; i < v.size(); ++i) o += (i ? ", " : "") + number(v[i]);
    return o + "]";
}

/// Machine summary. Keys: problem, status, points[] with F, G (constrained),
/// value, lambda, lambda0, normal, residual, el_max, nat_left, nat_right,
/// constraint_violation, dr_spread, classification (advisory), basin_count, t, x.
inline std::string summary_json(const std::string& problem, const std::vector<StationaryPoint>& points) {
    std::ostringstream o;
    o << "{\n  \"problem\": " << json_string(problem) << ",\n  \"status\": \"found\",\n  \"points\": [";
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& p = points[k];
        o << (k ? ",\n" : "\n") << "    {\n";
        o << "      \"F\": " << json_array(p.inner) << ",\n";
        if (!p.constraint_inner.empty()) o << "      \"G\": " << json_array(p.constraint_inner) << ",\n";
        o << "      \"value\": " << number(p.value) << ",\n";
        o << "      \"lambda\": " << number(p.lambda) << ",\n";
        o << "      \"lambda0\": " << p.lambda0 << ",\n";
        o << "      \"normal\": " << (p.normal() ? "true" : "false") << ",\n";
        o << "      \"residual\": " << number(p.residual) << ",\n";
        o << "      \"el_max\": " << number(p.report.el_max) << ",\n";
        o << "      \"nat_left\": " << (p.report.nat_left ? number(*p.report.nat_left) : "null") << ",\n";
        o << "      \"nat_right\": " << (p.report.nat_right ? number(*p.report.nat_right) : "null") << ",\n";
        o << "      \"constraint_violation\": "
          << (p.report.constraint_violation ? number(*p.report.constraint_violation) : "null") << ",\n";
        o << "      \"dr_spread\": " << number(p.report.dr_constancy_spread) << ",\n";
        o << "      \"classification\": " << json_string(to_string(p.classification)) << ",\n";
        o << "      \"classification_advisory\": true,\n";
        o << "      \"basin_count\": " << p.basin_count << ",\n";
        o << "      \"t\": " << json_array(p.trajectory.scale().points()) << ",\n";
        o << "      \"x\": " << json_array(p.trajectory.x()) << "\n";
        o << "    }";
    }
    o << "\n  ]\n}\n";
    return o.str();
}

inline std::string failure_json(const std::string& problem, const std::string& status, const std::string& message) {
    return "{\n  \"problem\": " + json_string(problem) + ",\n  \"status\": " + json_string(status) +
           ",\n  \"message\": " + json_string(message) + ",\n  \"points\": []\n}\n";
}

}  // namespace deltavar::report
