#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ville/errors.hpp"

namespace ville {

// Fixed 6-decimal formatting shared by every CSV cell, so identical inputs
// always produce identical bytes.
std::string format_metric(double v);

struct MetricsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;  // cells pre-formatted

    void add_row(std::vector<std::string> cells);
};

void write_table_csv(const MetricsTable& t, const std::string& path);

// Minimal P6 raster canvas for the static plots.
class Raster {
public:
    Raster(int w, int h);
    void fill(uint8_t r, uint8_t g, uint8_t b);
    void rect(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b);
    void line(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b);
    void save_ppm(const std::string& path) const;
    int width() const { return w_; }
    int height() const { return h_; }

private:
    int w_, h_;
    std::vector<uint8_t> px_;
};

void plot_series(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                 const std::string& path);
void plot_bars(const std::vector<std::pair<std::string, double>>& bars, const std::string& path);
void plot_histogram(const std::vector<int64_t>& values, const std::string& path);

struct ReportInputs {
    std::string train_log_jsonl;                           // optional loss curve source
    std::vector<std::pair<std::string, double>> metrics;   // ordered name -> value
    std::vector<int64_t> token_counts;                     // optional histogram source
};

struct ReportResult {
    std::vector<std::string> files;
    int64_t plot_warnings = 0;  // plot failures degrade to CSV-only
};

ReportResult emit_report(const ReportInputs& in, const std::string& out_dir);

}  // namespace ville
