#pragma once

// Reader for .dvp problem files:
//
//   [timescale]   kind = uniform | interval | points | qscale | union, plus parameters
//   [functional]  H = "...", f1 = "...", ...
//   [boundary]    left = fixed <value> | free, right = ...
//   [constraint]  P = "...", g1 = "...", ..., k = <value>      (optional)
//
// Expressions are quoted; '#' starts a comment. Every error names the line.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "deltavar/error.hpp"
#include "deltavar/euler_lagrange.hpp"
#include "deltavar/expr.hpp"
#include "deltavar/functional.hpp"
#include "deltavar/timescale.hpp"

namespace deltavar {

struct TimeScaleSpec {
    std::string kind;
    std::map<std::string, double> params;  // a, b, h, q, k_min, k_max
    std::vector<double> points;
    std::vector<TimeScaleSpec> parts;  // union members
    std::size_t line = 0;

    bool has_step() const { return kind == "uniform" || kind == "interval"; }

    TimeScale build(std::optional<double> h_override = std::nullopt) const {
        if (h_override && !has_step()) {
            throw Error(ErrorCode::InvalidArgument, "h override needs a uniform or interval time scale, not " + kind);
        }
        auto p = [&](const std::string& key) { return params.at(key); };
        if (kind == "uniform") return TimeScale::uniform(p("a"), p("b"), h_override.value_or(p("h")));
        if (kind == "interval") return TimeScale::interval(p("a"), p("b"), h_override.value_or(p("h")));
        if (kind == "points") return TimeScale::from_points(points);
        if (kind == "qscale") {
            return TimeScale::qscale(p("q"), static_cast<int>(p("k_min")), static_cast<int>(p("k_max")));
        }
        std::vector<TimeScale> built;
        for (const auto& part : parts) built.push_back(part.build());
        return TimeScale::merge(built);
    }
};

struct ProblemFile {
    std::string name;
    TimeScaleSpec timescale;
    std::string outer;
    std::vector<std::string> inner;
    BoundarySpec boundary;
    std::optional<std::string> constraint_outer;
    std::vector<std::string> constraint_inner;
    double constraint_level = 0.0;

    ProblemSpec build(std::optional<double> h_override = std::nullopt) const {
        auto ts = std::make_shared<const TimeScale>(timescale.build(h_override));
        CompositeFunctional L = CompositeFunctional::parse(outer, inner);
        std::optional<Constraint> c;
        if (constraint_outer) {
            c = Constraint{CompositeFunctional::parse(*constraint_outer, constraint_inner), constraint_level};
        }
        return ProblemSpec(ts, std::move(L), boundary, std::move(c));
    }

    static ProblemFile parse(std::string_view text, const std::string& name = "<input>");

    static ProblemFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::ProblemFileError, path + ": cannot open file");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }
};

namespace detail {

class ProblemFileParser {
public:
    ProblemFileParser(std::string_view text, std::string name) : text_(text), name_(std::move(name)) {}

    ProblemFile run() {
        ProblemFile pf;
        pf.name = name_;
        std::size_t pos = 0;
        std::size_t line_no = 0;
        while (pos <= text_.size()) {
            const std::size_t end = std::min(text_.find('\n', pos), text_.size());
            ++line_no;
            line_ = line_no;
            handle(strip(strip_comment(text_.substr(pos, end - pos))));
            if (end == text_.size()) break;
            pos = end + 1;
        }
        finish(pf);
        return pf;
    }

private:
    struct Entry {
        std::string value;
        bool quoted = false;
        std::size_t line = 0;
    };

    [[noreturn]] void fail(const std::string& msg, std::size_t line) const {
        throw Error(ErrorCode::ProblemFileError, name_ + ":" + std::to_string(line) + ": " + msg, line);
    }
    [[noreturn]] void fail(const std::string& msg) const { fail(msg, line_); }

    static std::string_view strip(std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    }

    // '#' inside a quoted expression is not a comment.
    static std::string_view strip_comment(std::string_view s) {
        bool quoted = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') quoted = !quoted;
            if (s[i] == '#' && !quoted) return s.substr(0, i);
        }
        return s;
    }

    void handle(std::string_view line) {
        if (line.empty()) return;
        if (line.front() == '[') {
            if (line.back() != ']') fail("unterminated section header");
            section_ = std::string(strip(line.substr(1, line.size() - 2)));
            if (section_ != "timescale" && section_ != "functional" && section_ != "boundary" &&
                section_ != "constraint") {
                fail("unknown section [" + section_ + "]");
            }
            if (!seen_sections_.insert(section_).second) fail("section [" + section_ + "] appears twice");
            return;
        }
        if (section_.empty()) fail("entry outside of any section");
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail("expected key = value");
        const std::string key(strip(line.substr(0, eq)));
        std::string_view raw = strip(line.substr(eq + 1));
        if (key.empty()) fail("missing key before '='");
        Entry e;
        e.line = line_;
        if (!raw.empty() && raw.front() == '"') {
            if (raw.size() < 2 || raw.back() != '"') fail("unterminated quoted expression for " + key);
            e.value = std::string(raw.substr(1, raw.size() - 2));
            e.quoted = true;
        } else {
            e.value = std::string(raw);
        }
        if (e.value.empty()) fail("empty value for " + key);
        auto& sec = entries_[section_];
        if (key == "part" && section_ == "timescale") {
            parts_.push_back(e);
            return;
        }
        if (sec.count(key)) fail("duplicate key " + key + " in [" + section_ + "]");
        sec[key] = e;
    }

    double number(const Entry& e, const std::string& what) const {
        return parse_number(e.value, what, e.line);
    }

    double parse_number(std::string_view s, const std::string& what, std::size_t line) const {
        s = strip(s);
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
            fail(what + ": expected a number, got '" + std::string(s) + "'", line);
        }
        return v;
    }

    std::vector<double> number_list(std::string_view s, const std::string& what, std::size_t line) const {
        std::vector<double> out;
        std::size_t start = 0;
        while (true) {
            const auto comma = s.find(',', start);
            out.push_back(parse_number(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start),
                                       what, line));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return out;
    }

    const Entry& require(const std::string& section, const std::string& key) const {
        const auto s = entries_.find(section);
        if (s == entries_.end()) fail("missing section [" + section + "]", line_);
        const auto e = s->second.find(key);
        if (e == s->second.end()) fail("missing key " + key + " in [" + section + "]", line_);
        return e->second;
    }

    void check_keys(const std::string& section, std::initializer_list<std::string_view> allowed) const {
        const auto s = entries_.find(section);
        if (s == entries_.end()) return;
        for (const auto& [key, e] : s->second) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                fail("unexpected key " + key + " in [" + section + "]", e.line);
            }
        }
    }

    /// Parameters of one time scale kind, from key/value pairs or positional
    /// words (union parts).
    TimeScaleSpec scale_from(const std::string& kind, const std::map<std::string, Entry>& kv, std::size_t line) const {
        TimeScaleSpec ts;
        ts.kind = kind;
        ts.line = line;
        auto need = [&](const std::string& key) {
            const auto it = kv.find(key);
            if (it == kv.end()) fail("time scale kind " + kind + " needs " + key, line);
            ts.params[key] = number(it->second, key);
        };
        if (kind == "uniform" || kind == "interval") {
            need("a");
            need("b");
            need("h");
        } else if (kind == "qscale") {
            need("q");
            need("k_min");
            need("k_max");
            for (const char* k : {"k_min", "k_max"}) {
                if (ts.params[k] != std::floor(ts.params[k])) fail(std::string(k) + " must be an integer", line);
            }
        } else if (kind == "points") {
            const auto it = kv.find("points");
            if (it == kv.end()) fail("time scale kind points needs points", line);
            ts.points = number_list(it->second.value, "points", it->second.line);
        } else {
            fail("unknown time scale kind '" + kind + "'", line);
        }
        return ts;
    }

    TimeScaleSpec union_part(const Entry& e) const {
        std::istringstream words(e.value);
        std::string kind;
        words >> kind;
        std::string rest;
        std::getline(words, rest);
        std::map<std::string, Entry> kv;
        if (kind == "points") {
            kv["points"] = Entry{rest, false, e.line};
        } else {
            std::vector<std::string> keys;
            if (kind == "uniform" || kind == "interval") keys = {"a", "b", "h"};
            if (kind == "qscale") keys = {"q", "k_min", "k_max"};
            std::istringstream ws(rest);
            std::string w;
            std::size_t i = 0;
            while (ws >> w) {
                if (i >= keys.size()) fail("too many parameters for union part " + kind, e.line);
                kv[keys[i++]] = Entry{w, false, e.line};
            }
        }
        return scale_from(kind, kv, e.line);
    }

    Endpoint endpoint(const Entry& e, const std::string& side) const {
        std::string_view v = strip(e.value);
        if (v == "free") return Endpoint::free_end();
        if (v.substr(0, 5) == "fixed") {
            return Endpoint::fixed_at(parse_number(v.substr(5), side, e.line));
        }
        fail(side + " must be 'fixed <value>' or 'free'", e.line);
    }

    /// Expression entries named prefix1..prefixN where N is the highest u-index in the outer map.
    std::vector<std::string> integrands(const std::string& section, const std::string& outer_key,
                                        const std::string& prefix) const {
        const Entry& outer = require(section, outer_key);
        if (!outer.quoted) fail(outer_key + " must be a quoted expression", outer.line);
        std::size_t n = 0;
        const std::string& s = outer.value;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const bool starts = s[i] == 'u' && (i == 0 || !(std::isalnum(static_cast<unsigned char>(s[i - 1])) ||
                                                             s[i - 1] == '_'));
            if (!starts) continue;
            std::size_t j = i + 1;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
            if (j == i + 1 || (j < s.size() && (std::isalpha(static_cast<unsigned char>(s[j])) || s[j] == '_'))) {
                continue;
            }
            n = std::max<std::size_t>(n, std::stoul(s.substr(i + 1, j - i - 1)));
        }
        if (n == 0) fail(outer_key + " does not reference any of u1, u2, ...", outer.line);
        std::vector<std::string> out;
        const auto& sec = entries_.at(section);
        for (std::size_t k = 1; k <= n; ++k) {
            const auto it = sec.find(prefix + std::to_string(k));
            if (it == sec.end()) {
                fail(outer_key + " references u" + std::to_string(n) + " but " + prefix + std::to_string(k) +
                         " is missing",
                     outer.line);
            }
            if (!it->second.quoted) fail(prefix + std::to_string(k) + " must be a quoted expression", it->second.line);
            out.push_back(it->second.value);
        }
        for (const auto& [key, e] : sec) {
            if (key.size() > prefix.size() && key.compare(0, prefix.size(), prefix) == 0) {
                const std::string idx = key.substr(prefix.size());
                if (!idx.empty() && std::all_of(idx.begin(), idx.end(), ::isdigit) && std::stoul(idx) > n) {
                    fail(key + " is not referenced: " + outer_key + " uses only u1..u" + std::to_string(n), e.line);
                }
            }
        }
        // Parse now so syntax errors point at the right line.
        try {
            Expr::parse(outer.value, VarSet::numbered("u", n));
        } catch (const Error& err) {
            fail(outer_key + ": " + err.what(), outer.line);
        }
        for (std::size_t k = 1; k <= n; ++k) {
            const Entry& e = sec.at(prefix + std::to_string(k));
            try {
                Expr::parse(e.value, integrand_vars());
            } catch (const Error& err) {
                fail(prefix + std::to_string(k) + ": " + err.what(), e.line);
            }
        }
        return out;
    }

    void finish(ProblemFile& pf) {
        line_ = 0;
        for (const char* s : {"timescale", "functional", "boundary"}) {
            if (!entries_.count(s) && !(std::string(s) == "timescale" && !parts_.empty())) {
                fail(std::string("missing section [") + s + "]", 0);
            }
        }
        // timescale
        const Entry& kind = require("timescale", "kind");
        if (kind.value == "union") {
            check_keys("timescale", {"kind"});
            if (parts_.empty()) fail("union time scale needs at least one part", kind.line);
            pf.timescale.kind = "union";
            pf.timescale.line = kind.line;
            for (const auto& p : parts_) pf.timescale.parts.push_back(union_part(p));
        } else {
            if (!parts_.empty()) fail("part entries are only allowed for kind = union", parts_.front().line);
            if (kind.value == "uniform" || kind.value == "interval") check_keys("timescale", {"kind", "a", "b", "h"});
            if (kind.value == "qscale") check_keys("timescale", {"kind", "q", "k_min", "k_max"});
            if (kind.value == "points") check_keys("timescale", {"kind", "points"});
            pf.timescale = scale_from(kind.value, entries_.at("timescale"), kind.line);
        }
        try {
            pf.timescale.build();
        } catch (const Error& err) {
            fail(std::string("invalid time scale: ") + err.what(), kind.line);
        }

        pf.outer = require("functional", "H").value;
        pf.inner = integrands("functional", "H", "f");
        pf.boundary.left = endpoint(require("boundary", "left"), "left");
        pf.boundary.right = endpoint(require("boundary", "right"), "right");
        check_keys("boundary", {"left", "right"});

        if (entries_.count("constraint")) {
            pf.constraint_outer = require("constraint", "P").value;
            pf.constraint_inner = integrands("constraint", "P", "g");
            pf.constraint_level = number(require("constraint", "k"), "k");
            if (pf.boundary.left.is_free() || pf.boundary.right.is_free()) {
                fail("a constraint requires both endpoints fixed", require("constraint", "P").line);
            }
        }
        for (const char* s : {"functional", "constraint"}) {
            const auto it = entries_.find(s);
            if (it == entries_.end()) continue;
            const std::string outer = std::string(s) == "functional" ? "H" : "P";
            const std::string prefix = std::string(s) == "functional" ? "f" : "g";
            for (const auto& [key, e] : it->second) {
                const bool indexed = key.size() > prefix.size() && key.compare(0, prefix.size(), prefix) == 0 &&
                                     std::all_of(key.begin() + static_cast<std::ptrdiff_t>(prefix.size()), key.end(),
                                                 ::isdigit);
                if (key != outer && !indexed && !(key == "k" && outer == "P")) {
                    fail("unexpected key " + key + " in [" + s + "]", e.line);
                }
            }
        }
    }

    std::string_view text_;
    std::string name_;
    std::string section_;
    std::size_t line_ = 0;
    std::set<std::string> seen_sections_;
    std::map<std::string, std::map<std::string, Entry>> entries_;
    std::vector<Entry> parts_;
};

}  // namespace detail

inline ProblemFile ProblemFile::parse(std::string_view text, const std::string& name) {
    return detail::ProblemFileParser(text, name).run();
}

}  // namespace deltavar
