#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "cflab/core.hpp"
#include "cflab/diagnostics.hpp"

namespace cflab {

/// Shortest round-trippable decimal form; keeps CSV artifacts deterministic.
inline std::string fmt_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error("fmt_double: conversion failed");
    return std::string(buf, ptr);
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    return out;
}

namespace detail {

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

/// Horizontal bar chart, one bar per labeled value.
inline void write_bar_chart_svg(const std::string& path, const std::string& title,
                                const std::vector<std::string>& labels,
                                const std::vector<double>& values) {
    if (labels.size() != values.size()) throw Error("bar chart: label/value count mismatch");
    const double vmax = values.empty() ? 1.0 : std::max(1e-12, *std::max_element(values.begin(), values.end()));
    const int bar_h = 22, gap = 8, left = 240, top = 48;
    const int plot_w = 420;
    const int width = left + plot_w + 100;
    const int height = top + static_cast<int>(labels.size()) * (bar_h + gap) + 24;

    auto out = open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
    out << "<text x=\"12\" y=\"24\" font-size=\"16\">" << detail::svg_escape(title) << "</text>\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = top + static_cast<int>(i) * (bar_h + gap);
        const int w = static_cast<int>(plot_w * values[i] / vmax);
        out << "<text x=\"" << left - 8 << "\" y=\"" << y + bar_h - 6
            << "\" text-anchor=\"end\">" << detail::svg_escape(labels[i]) << "</text>\n";
        out << "<rect x=\"" << left << "\" y=\"" << y << "\" width=\"" << std::max(1, w)
            << "\" height=\"" << bar_h << "\" fill=\"#4878a8\"/>\n";
        out << "<text x=\"" << left + std::max(1, w) + 6 << "\" y=\"" << y + bar_h - 6 << "\">"
            << fmt_double(values[i]) << "</text>\n";
    }
    out << "</svg>\n";
}

/// Vertical histogram over precomputed bins.
inline void write_histogram_svg(const std::string& path, const std::string& title,
                                const Histogram& hist) {
    const std::size_t nbins = hist.counts.size();
    const double cmax =
        std::max<double>(1.0, static_cast<double>(*std::max_element(hist.counts.begin(), hist.counts.end())));
    const int left = 52, top = 44, plot_w = 560, plot_h = 260;
    const int width = left + plot_w + 24;
    const int height = top + plot_h + 48;
    const double bw = static_cast<double>(plot_w) / static_cast<double>(nbins);

    auto out = open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<text x=\"12\" y=\"24\" font-size=\"16\">" << detail::svg_escape(title) << "</text>\n";
    for (std::size_t b = 0; b < nbins; ++b) {
        const double frac = static_cast<double>(hist.counts[b]) / cmax;
        const int h = static_cast<int>(plot_h * frac);
        const int x = left + static_cast<int>(static_cast<double>(b) * bw);
        out << "<rect x=\"" << x << "\" y=\"" << top + plot_h - h << "\" width=\""
            << std::max(1, static_cast<int>(bw) - 1) << "\" height=\"" << h
            << "\" fill=\"#4878a8\"/>\n";
    }
    out << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
        << "\" y2=\"" << top + plot_h << "\" stroke=\"#333\"/>\n";
    // a few x-axis ticks
    for (std::size_t b = 0; b <= nbins; b += std::max<std::size_t>(1, nbins / 8)) {
        const int x = left + static_cast<int>(static_cast<double>(b) * bw);
        out << "<text x=\"" << x << "\" y=\"" << top + plot_h + 16
            << "\" text-anchor=\"middle\">" << fmt_double(hist.edges[b]) << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace cflab
