#include "ville/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "ville/io.hpp"

namespace ville {

using nlohmann::json;

std::string format_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void MetricsTable::add_row(std::vector<std::string> cells) {
    if (cells.size() != columns.size())
        throw ArgumentError("metrics table: row width " + std::to_string(cells.size()) +
                            " != " + std::to_string(columns.size()) + " columns");
    rows.push_back(std::move(cells));
}

void write_table_csv(const MetricsTable& t, const std::string& path) {
    std::string out;
    for (size_t i = 0; i < t.columns.size(); ++i) {
        if (i) out += ',';
        out += t.columns[i];
    }
    out += '\n';
    for (const auto& row : t.rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += row[i];
        }
        out += '\n';
    }
    write_text_file_atomic(path, out);
}

Raster::Raster(int w, int h) : w_(w), h_(h), px_(static_cast<size_t>(w) * h * 3, 255) {
    if (w < 1 || h < 1) throw ArgumentError("raster: bad size");
}

void Raster::fill(uint8_t r, uint8_t g, uint8_t b) {
    for (size_t i = 0; i < px_.size(); i += 3) {
        px_[i] = r;
        px_[i + 1] = g;
        px_[i + 2] = b;
    }
}

void Raster::rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
    x0 = std::clamp(x0, 0, w_ - 1);
    x1 = std::clamp(x1, 0, w_ - 1);
    y0 = std::clamp(y0, 0, h_ - 1);
    y1 = std::clamp(y1, 0, h_ - 1);
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
        for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) {
            size_t i = (static_cast<size_t>(y) * w_ + x) * 3;
            px_[i] = r;
            px_[i + 1] = g;
            px_[i + 2] = b;
        }
}

void Raster::line(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        if (x0 >= 0 && x0 < w_ && y0 >= 0 && y0 < h_) {
            size_t i = (static_cast<size_t>(y0) * w_ + x0) * 3;
            px_[i] = r;
            px_[i + 1] = g;
            px_[i + 2] = b;
        }
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void Raster::save_ppm(const std::string& path) const {
    std::string header = "P6\n" + std::to_string(w_) + " " + std::to_string(h_) + "\n255\n";
    std::string body(header);
    body.append(reinterpret_cast<const char*>(px_.data()), px_.size());
    write_text_file_atomic(path, body);
}

namespace {

const uint8_t kPalette[6][3] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                                {214, 39, 40},  {148, 103, 189}, {140, 86, 75}};

}  // namespace

void plot_series(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                 const std::string& path) {
    Raster img(640, 360);
    img.fill(255, 255, 255);
    img.rect(40, 10, 630, 330, 250, 250, 250);

    double lo = 0, hi = 1;
    bool any = false;
    size_t max_len = 0;
    for (const auto& [name, ys] : series)
        for (double y : ys) {
            if (!std::isfinite(y)) continue;
            if (!any) {
                lo = hi = y;
                any = true;
            }
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
    for (const auto& [name, ys] : series) max_len = std::max(max_len, ys.size());
    if (!any || max_len < 2) {
        img.save_ppm(path);
        return;
    }
    if (hi - lo < 1e-12) hi = lo + 1;

    auto sx = [&](size_t i) {
        return 40 + static_cast<int>(590.0 * static_cast<double>(i) /
                                     static_cast<double>(max_len - 1));
    };
    auto sy = [&](double v) { return 330 - static_cast<int>(320.0 * (v - lo) / (hi - lo)); };

    for (size_t s = 0; s < series.size(); ++s) {
        const auto& ys = series[s].second;
        const uint8_t* c = kPalette[s % 6];
        for (size_t i = 1; i < ys.size(); ++i) {
            if (!std::isfinite(ys[i - 1]) || !std::isfinite(ys[i])) continue;
            img.line(sx(i - 1), sy(ys[i - 1]), sx(i), sy(ys[i]), c[0], c[1], c[2]);
        }
        // legend swatch
        img.rect(45, 15 + static_cast<int>(s) * 12, 55, 23 + static_cast<int>(s) * 12, c[0], c[1],
                 c[2]);
    }
    img.save_ppm(path);
}

void plot_bars(const std::vector<std::pair<std::string, double>>& bars, const std::string& path) {
    Raster img(640, 360);
    img.fill(255, 255, 255);
    if (bars.empty()) {
        img.save_ppm(path);
        return;
    }
    double hi = 0;
    for (const auto& [name, v] : bars)
        if (std::isfinite(v)) hi = std::max(hi, v);
    if (hi <= 0) hi = 1;
    int n = static_cast<int>(bars.size());
    int slot = 600 / n;
    for (int i = 0; i < n; ++i) {
        double v = bars[static_cast<size_t>(i)].second;
        if (!std::isfinite(v)) v = 0;
        int h = static_cast<int>(300.0 * v / hi);
        const uint8_t* c = kPalette[i % 6];
        img.rect(30 + i * slot + slot / 6, 330 - h, 30 + i * slot + slot - slot / 6, 330, c[0],
                 c[1], c[2]);
    }
    img.save_ppm(path);
}

void plot_histogram(const std::vector<int64_t>& values, const std::string& path) {
    Raster img(640, 360);
    img.fill(255, 255, 255);
    if (values.empty()) {
        img.save_ppm(path);
        return;
    }
    std::map<int64_t, int64_t> bins;
    for (int64_t v : values) ++bins[v];
    int64_t peak = 0;
    for (const auto& [v, c] : bins) peak = std::max(peak, c);
    int n = static_cast<int>(bins.size());
    int slot = std::max(1, 600 / n);
    int i = 0;
    for (const auto& [v, c] : bins) {
        int h = static_cast<int>(300.0 * static_cast<double>(c) / static_cast<double>(peak));
        img.rect(30 + i * slot + 1, 330 - h, 30 + i * slot + slot - 1, 330, 31, 119, 180);
        ++i;
    }
    img.save_ppm(path);
}

ReportResult emit_report(const ReportInputs& in, const std::string& out_dir) {
    ensure_dir(out_dir);
    ReportResult res;

    MetricsTable mt;
    mt.columns = {"metric", "value"};
    for (const auto& [name, v] : in.metrics) mt.add_row({name, format_metric(v)});
    std::string metrics_csv = out_dir + "/metrics.csv";
    write_table_csv(mt, metrics_csv);
    res.files.push_back(metrics_csv);

    std::vector<std::pair<std::string, std::vector<double>>> series;
    if (!in.train_log_jsonl.empty()) {
        std::ifstream f(in.train_log_jsonl);
        if (!f) throw IoError("cannot read " + in.train_log_jsonl);
        std::map<std::string, std::vector<double>> cols;
        std::vector<std::string> order;
        std::string line;
        size_t n_rows = 0;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            json row = json::parse(line, nullptr, false);
            if (row.is_discarded()) throw DataError(in.train_log_jsonl + ": bad JSONL line");
            for (const char* key : {"cap", "qa", "ret", "match", "loc", "total"}) {
                if (!row.contains(key)) continue;
                auto& col = cols[key];
                if (col.empty() && n_rows > 0) col.resize(n_rows, std::nan(""));
                if (std::find(order.begin(), order.end(), key) == order.end())
                    order.push_back(key);
                col.push_back(row[key].get<double>());
            }
            ++n_rows;
            for (auto& [k, col] : cols)
                if (col.size() < n_rows) col.resize(n_rows, std::nan(""));
        }
        MetricsTable curve;
        curve.columns.push_back("step");
        for (const auto& k : order) curve.columns.push_back(k);
        for (size_t r = 0; r < n_rows; ++r) {
            std::vector<std::string> cells{std::to_string(r)};
            for (const auto& k : order) cells.push_back(format_metric(cols[k][r]));
            curve.add_row(std::move(cells));
        }
        std::string curve_csv = out_dir + "/loss_curve.csv";
        write_table_csv(curve, curve_csv);
        res.files.push_back(curve_csv);
        for (const auto& k : order) series.emplace_back(k, cols[k]);
    }

    auto try_plot = [&](const std::string& path, const std::function<void()>& fn) {
        try {
            fn();
            res.files.push_back(path);
        } catch (const std::exception& e) {
            ++res.plot_warnings;
            std::cerr << "warning: plot " << path << " failed (" << e.what()
                      << "); report degrades to CSV only\n";
        }
    };
    if (!series.empty())
        try_plot(out_dir + "/loss_curves.ppm",
                 [&] { plot_series(series, out_dir + "/loss_curves.ppm"); });
    if (!in.metrics.empty())
        try_plot(out_dir + "/metric_bars.ppm",
                 [&] { plot_bars(in.metrics, out_dir + "/metric_bars.ppm"); });
    if (!in.token_counts.empty())
        try_plot(out_dir + "/token_hist.ppm",
                 [&] { plot_histogram(in.token_counts, out_dir + "/token_hist.ppm"); });
    return res;
}

}  // namespace ville
