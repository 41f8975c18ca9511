#pragma once

// Just enough SVG to draw the reproduction figures: scatter points with
// optional whiskers in both axes, polylines, heatmap cells, linear axes
// with rounded tick labels. No external tooling.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace ficlab {

class SvgPlot {
  public:
    SvgPlot(double x_min, double x_max, double y_min, double y_max, int width = 640,
            int height = 480)
        : x0_(x_min), x1_(x_max), y0_(y_min), y1_(y_max), w_(width), h_(height) {
        if (!(x1_ > x0_)) x1_ = x0_ + 1.0;
        if (!(y1_ > y0_)) y1_ = y0_ + 1.0;
    }

    void title(const std::string& t) { title_ = t; }
    void labels(const std::string& x, const std::string& y) {
        xlabel_ = x;
        ylabel_ = y;
    }

    void point(double x, double y, const std::string& color = "#1f6fb2", double r = 3.0) {
        body_ += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"" + num(r) +
                 "\" fill=\"" + color + "\"/>\n";
    }

    void hwhisker(double x_lo, double x_hi, double y, const std::string& color = "#888") {
        segment(px(x_lo), py(y), px(x_hi), py(y), color);
        segment(px(x_lo), py(y) - 3, px(x_lo), py(y) + 3, color);
        segment(px(x_hi), py(y) - 3, px(x_hi), py(y) + 3, color);
    }

    void vwhisker(double x, double y_lo, double y_hi, const std::string& color = "#888") {
        segment(px(x), py(y_lo), px(x), py(y_hi), color);
        segment(px(x) - 3, py(y_lo), px(x) + 3, py(y_lo), color);
        segment(px(x) - 3, py(y_hi), px(x) + 3, py(y_hi), color);
    }

    void polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                  const std::string& color = "#1f6fb2", double width = 1.5) {
        if (xs.size() != ys.size() || xs.empty()) return;
        std::string pts;
        for (std::size_t i = 0; i < xs.size(); ++i)
            pts += num(px(xs[i])) + "," + num(py(ys[i])) + " ";
        body_ += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
                 "\" stroke-width=\"" + num(width) + "\"/>\n";
    }

    // axis-aligned filled cell, for heatmaps; (x,y) is the cell center
    void cell(double x, double y, double dx, double dy, const std::string& color) {
        double left = px(x - dx / 2), right = px(x + dx / 2);
        double top = py(y + dy / 2), bottom = py(y - dy / 2);
        body_ += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" +
                 num(right - left) + "\" height=\"" + num(bottom - top) + "\" fill=\"" + color +
                 "\"/>\n";
    }

    void text(double x, double y, const std::string& s, const std::string& color = "#333") {
        body_ += "<text x=\"" + num(px(x)) + "\" y=\"" + num(py(y)) +
                 "\" font-size=\"11\" fill=\"" + color + "\">" + escape(s) + "</text>\n";
    }

    void legend(const std::vector<std::pair<std::string, std::string>>& entries) {
        double y = margin_ + 14;
        for (const auto& [label, color] : entries) {
            body_ += "<rect x=\"" + num(w_ - margin_ - 130) + "\" y=\"" + num(y - 9) +
                     "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
            body_ += "<text x=\"" + num(w_ - margin_ - 115) + "\" y=\"" + num(y) +
                     "\" font-size=\"11\" fill=\"#333\">" + escape(label) + "</text>\n";
            y += 16;
        }
    }

    std::string render() const {
        std::string out;
        out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w_) + "\" height=\"" +
               num(h_) + "\" viewBox=\"0 0 " + num(w_) + " " + num(h_) + "\">\n";
        out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out += axes();
        out += body_;
        if (!title_.empty())
            out += "<text x=\"" + num(w_ / 2.0) + "\" y=\"16\" font-size=\"13\" fill=\"#111\" "
                   "text-anchor=\"middle\">" +
                   escape(title_) + "</text>\n";
        out += "</svg>\n";
        return out;
    }

  private:
    double x0_, x1_, y0_, y1_;
    double w_, h_;
    double margin_ = 48.0;
    std::string body_, title_, xlabel_, ylabel_;

    double px(double x) const { return margin_ + (x - x0_) / (x1_ - x0_) * (w_ - 2 * margin_); }
    double py(double y) const {
        return h_ - margin_ - (y - y0_) / (y1_ - y0_) * (h_ - 2 * margin_);
    }

    static std::string num(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return buf;
    }

    static std::string escape(const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '&') out += "&amp;";
            else if (c == '<') out += "&lt;";
            else if (c == '>') out += "&gt;";
            else out += c;
        }
        return out;
    }

    void segment(double ax, double ay, double bx, double by, const std::string& color) {
        body_ += "<line x1=\"" + num(ax) + "\" y1=\"" + num(ay) + "\" x2=\"" + num(bx) +
                 "\" y2=\"" + num(by) + "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
    }

    // about five round-valued ticks per axis
    static std::vector<double> ticks(double lo, double hi) {
        double span = hi - lo;
        double step = std::pow(10.0, std::floor(std::log10(span / 5.0)));
        if (span / step > 10.0) step *= 2.0;
        if (span / step > 10.0) step *= 2.5;
        std::vector<double> out;
        double t = std::ceil(lo / step) * step;
        for (; t <= hi + 1e-9 * span; t += step) out.push_back(t);
        return out;
    }

    std::string axes() const {
        std::string out;
        char buf[32];
        // frame
        out += "<rect x=\"" + num(margin_) + "\" y=\"" + num(margin_) + "\" width=\"" +
               num(w_ - 2 * margin_) + "\" height=\"" + num(h_ - 2 * margin_) +
               "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
        for (double t : ticks(x0_, x1_)) {
            double x = px(t);
            out += "<line x1=\"" + num(x) + "\" y1=\"" + num(h_ - margin_) + "\" x2=\"" + num(x) +
                   "\" y2=\"" + num(h_ - margin_ + 4) + "\" stroke=\"#333\"/>\n";
            std::snprintf(buf, sizeof buf, "%g", t + 0.0);
            out += "<text x=\"" + num(x) + "\" y=\"" + num(h_ - margin_ + 16) +
                   "\" font-size=\"10\" fill=\"#333\" text-anchor=\"middle\">" + buf + "</text>\n";
        }
        for (double t : ticks(y0_, y1_)) {
            double y = py(t);
            out += "<line x1=\"" + num(margin_ - 4) + "\" y1=\"" + num(y) + "\" x2=\"" +
                   num(margin_) + "\" y2=\"" + num(y) + "\" stroke=\"#333\"/>\n";
            std::snprintf(buf, sizeof buf, "%g", t + 0.0);
            out += "<text x=\"" + num(margin_ - 6) + "\" y=\"" + num(y + 3) +
                   "\" font-size=\"10\" fill=\"#333\" text-anchor=\"end\">" + buf + "</text>\n";
        }
        if (!xlabel_.empty())
            out += "<text x=\"" + num(w_ / 2.0) + "\" y=\"" + num(h_ - 8.0) +
                   "\" font-size=\"12\" fill=\"#111\" text-anchor=\"middle\">" + escape(xlabel_) +
                   "</text>\n";
        if (!ylabel_.empty())
            out += "<text x=\"14\" y=\"" + num(h_ / 2.0) +
                   "\" font-size=\"12\" fill=\"#111\" text-anchor=\"middle\" transform=\"rotate(-90 "
                   "14 " +
                   num(h_ / 2.0) + ")\">" + escape(ylabel_) + "</text>\n";
        return out;
    }
};

} // namespace ficlab
