#include "qlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace qlab {

namespace {

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string f4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

ScalarEstimate component_value(const TurnpikeRow& r, GapComponent c) {
    switch (c) {
        case GapComponent::Myopic: return r.myopic;
        case GapComponent::Hedging: return r.hedging;
        case GapComponent::WealthGap: return r.wealth;
        case GapComponent::Proportions: return r.proportion;
    }
    return {};
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<')
            out += "&lt;";
        else if (c == '>')
            out += "&gt;";
        else if (c == '&')
            out += "&amp;";
        else
            out += c;
    }
    return out;
}

}  // namespace

std::string fmt17(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string hex64(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string report_csv(const TurnpikeReport& rep) {
    std::ostringstream os;
    os << "T,component,EH,gap,se,above_noise,lambda1,lambda2,argmax_x\n";
    for (const auto& r : rep.rows)
        for (const auto& f : rep.fits) {
            const auto v = component_value(r, f.component);
            os << fmt17(r.T) << ',' << component_name(f.component) << ',' << fmt17(r.EH) << ',' << fmt17(v.value)
               << ',' << fmt17(v.se) << ',' << (v.value > 3.0 * v.se ? 1 : 0) << ',' << fmt17(r.lambda1) << ','
               << fmt17(r.lambda2) << ','
               << (f.component == GapComponent::Proportions ? fmt17(r.proportion_argmax_x) : std::string()) << '\n';
        }
    return os.str();
}

std::string rates_csv(const TurnpikeReport& rep) {
    std::ostringstream os;
    os << "component,slope,half_width,intercept,used,dropped,theory,theory_supremum,verdict,note\n";
    for (const auto& f : rep.fits) {
        os << component_name(f.component) << ',';
        if (f.fit)
            os << fmt17(f.fit->slope) << ',' << fmt17(f.fit->half_width) << ',' << fmt17(f.fit->intercept) << ','
               << f.fit->used << ',' << f.fit->dropped << ',';
        else
            os << ",,,,,";
        os << fmt17(rep.theory.exponent) << ',' << (rep.theory.supremum ? 1 : 0) << ',' << f.verdict << ','
           << csv_quote(f.note) << '\n';
    }
    return os.str();
}

std::string svg_plot(const TurnpikeReport& rep, GapComponent c) {
    struct P {
        double x, y, lo, hi;
        bool used;
    };
    std::vector<P> pts;
    for (const auto& r : rep.rows) {
        const auto v = component_value(r, c);
        if (!(v.value > 0.0) || !(r.EH > 0.0)) continue;
        const double lo = v.value - v.se > 0.0 ? std::log10(v.value - v.se) : std::log10(v.value) - 1.0;
        pts.push_back({std::log10(r.EH), std::log10(v.value), lo, std::log10(v.value + v.se), v.value > 3.0 * v.se});
    }
    const double W = 640, Hh = 480, ml = 70, mr = 20, mt = 40, mb = 55;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh << "\" viewBox=\"0 0 "
       << W << ' ' << Hh << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
       << xml_escape(rep.pair_id + ": " + component_name(c) + " gap") << "</text>\n";
    if (pts.empty()) {
        os << "<text x=\"" << W / 2 << "\" y=\"" << Hh / 2
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\">no positive gaps</text>\n</svg>\n";
        return os.str();
    }
    double x0 = pts[0].x, x1 = pts[0].x, y0 = pts[0].lo, y1 = pts[0].hi;
    for (const auto& p : pts) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.lo);
        y1 = std::max(y1, p.hi);
    }
    const double padx = std::max(0.05, 0.05 * (x1 - x0)), pady = std::max(0.05, 0.05 * (y1 - y0));
    x0 -= padx;
    x1 += padx;
    y0 -= pady;
    y1 += pady;
    const auto sx = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
    const auto sy = [&](double y) { return Hh - mb - (y - y0) / (y1 - y0) * (Hh - mt - mb); };
    os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\"" << Hh - mt - mb
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
        os << "<text x=\"" << f4(sx(xv)) << "\" y=\"" << Hh - mb + 16
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << f4(xv).substr(0, 6)
           << "</text>\n";
        os << "<text x=\"" << ml - 6 << "\" y=\"" << f4(sy(yv) + 4)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << f4(yv).substr(0, 6)
           << "</text>\n";
    }
    os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << Hh - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">log10 E[H_T]</text>\n";
    os << "<text x=\"16\" y=\"" << (mt + Hh - mb) / 2 << "\" transform=\"rotate(-90 16 " << (mt + Hh - mb) / 2
       << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">log10 gap</text>\n";
    for (const auto& p : pts) {
        os << "<line x1=\"" << f4(sx(p.x)) << "\" y1=\"" << f4(sy(p.lo)) << "\" x2=\"" << f4(sx(p.x)) << "\" y2=\""
           << f4(sy(p.hi)) << "\" stroke=\"gray\"/>\n";
        os << "<circle cx=\"" << f4(sx(p.x)) << "\" cy=\"" << f4(sy(p.y)) << "\" r=\"4\" fill=\""
           << (p.used ? "steelblue" : "none") << "\" stroke=\"steelblue\"/>\n";
    }
    const ComponentFit* fit = rep.fit_for(c);
    if (fit && fit->fit) {
        const auto& f = *fit->fit;
        // Regression is in natural logs; the slope is base-independent.
        const double b = f.intercept / std::log(10.0);
        os << "<line x1=\"" << f4(sx(x0)) << "\" y1=\"" << f4(sy(b + f.slope * x0)) << "\" x2=\"" << f4(sx(x1))
           << "\" y2=\"" << f4(sy(b + f.slope * x1)) << "\" stroke=\"crimson\" stroke-width=\"1.5\"/>\n";
        double cx = 0.0, cy = 0.0;
        int nu = 0;
        for (const auto& p : pts)
            if (p.used) {
                cx += p.x;
                cy += p.y;
                ++nu;
            }
        if (nu) {
            cx /= nu;
            cy /= nu;
            const double s = rep.theory.exponent;
            os << "<line x1=\"" << f4(sx(x0)) << "\" y1=\"" << f4(sy(cy + s * (x0 - cx))) << "\" x2=\"" << f4(sx(x1))
               << "\" y2=\"" << f4(sy(cy + s * (x1 - cx)))
               << "\" stroke=\"darkgreen\" stroke-dasharray=\"6 4\" stroke-width=\"1.5\"/>\n";
        }
        os << "<text x=\"" << ml + 8 << "\" y=\"" << mt + 16
           << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"crimson\">fit slope " << f4(f.slope) << " +/- "
           << f4(f.half_width) << "</text>\n";
        os << "<text x=\"" << ml + 8 << "\" y=\"" << mt + 32
           << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"darkgreen\">theory " << f4(rep.theory.exponent)
           << (rep.theory.supremum ? " (supremum)" : "") << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

Json RunManifest::to_json() const {
    Json j;
    j["version"] = kArtifactVersion;
    j["command"] = command;
    j["config_hash"] = hex64(fnv1a(effective_config.dump()));
    j["seed"] = seed;
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["files"] = Json::array();
    for (const auto& f : files) j["files"].push_back({{"name", f.name}, {"fnv1a", hex64(f.hash)}, {"bytes", f.bytes}});
    j["effective_config"] = effective_config;
    return j;
}

void write_output(RunManifest& manifest, const std::string& dir, const std::string& name, const std::string& content) {
    std::filesystem::create_directories(dir);
    const auto path = std::filesystem::path(dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
    manifest.files.push_back({name, fnv1a(content), content.size()});
}

void write_manifest(const RunManifest& manifest, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const auto path = std::filesystem::path(dir) / "manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << manifest.to_json().dump(2) << '\n';
}

}  // namespace qlab
